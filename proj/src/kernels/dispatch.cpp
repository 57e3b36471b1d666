#include <cstdlib>
#include <string_view>

#include "scenecond/kernels.hpp"

namespace scenecond::kernels {

#if !defined(SCENECOND_HAVE_AVX2)
const KernelTable* avx2_kernels() { return nullptr; }
#endif

std::string_view to_string(Backend backend) {
    switch (backend) {
        case Backend::Scalar: return "scalar";
        case Backend::Avx2: return "avx2";
    }
    return "unknown";
}

bool cpu_supports_avx2() {
#if defined(SCENECOND_HAVE_AVX2) && (defined(__GNUC__) || defined(__clang__))
    return __builtin_cpu_supports("avx2");
#else
    return false;
#endif
}

const KernelTable& active() {
    static const KernelTable& chosen = [&]() -> const KernelTable& {
        const char* forced = std::getenv("SCENECOND_KERNELS");
        if (forced != nullptr && std::string_view(forced) == "scalar") return scalar_kernels();
        if (const auto* avx2 = avx2_kernels(); avx2 != nullptr && cpu_supports_avx2()) return *avx2;
        return scalar_kernels();
    }();
    return chosen;
}

}  // namespace scenecond::kernels
