#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>

namespace scenecond::kernels {

enum class Backend { Scalar, Avx2 };

std::string_view to_string(Backend backend);

// Affine function of pixel-center coordinates: a * px + (b * py + c).
struct Affine2 {
    double a = 0.0;
    double b = 0.0;
    double c = 0.0;
};

// Screen-space triangle prepared for span rasterization. A pixel center is
// covered when all three edge functions are >= 0; inverse depth is affine in
// screen space for a planar triangle.
struct TriangleSetup {
    Affine2 edge[3];
    Affine2 inv_depth;
};

struct KernelTable {
    Backend backend;

    // out[i] = z[i] - t * v[i]
    void (*predict_clean)(std::span<const double> z, std::span<const double> v, double t, std::span<double> out);

    // Z-buffer update of row `py` (pixel-center y) over columns [x_begin, x_end).
    void (*raster_span)(const TriangleSetup& tri, double py, int x_begin, int x_end, float* row);

    // gray = floor(65535 * clamp((far - d) / (far - near), 0, 1) + 0.5); +inf maps to 0.
    void (*depth_to_gray16)(std::span<const float> depth, double near_plane, double far_plane,
                            std::span<std::uint16_t> out);
};

const KernelTable& scalar_kernels();
/// nullptr when the AVX2 variant was not compiled in.
const KernelTable* avx2_kernels();

bool cpu_supports_avx2();

/// Chosen once per process: AVX2 when compiled in and supported by the CPU,
/// unless SCENECOND_KERNELS=scalar is set in the environment.
const KernelTable& active();

}  // namespace scenecond::kernels
