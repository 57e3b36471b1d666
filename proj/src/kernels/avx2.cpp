#include <immintrin.h>

#include <algorithm>
#include <cmath>

#include "scenecond/kernels.hpp"

namespace scenecond::kernels {

namespace {

// Operation order mirrors the scalar kernels (separate mul and add, no FMA) so
// both backends produce bit-identical results.

void predict_clean_avx2(std::span<const double> z, std::span<const double> v, double t, std::span<double> out) {
    const std::size_t n = out.size();
    const __m256d tv = _mm256_set1_pd(t);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        const __m256d zv = _mm256_loadu_pd(z.data() + i);
        const __m256d vv = _mm256_loadu_pd(v.data() + i);
        _mm256_storeu_pd(out.data() + i, _mm256_sub_pd(zv, _mm256_mul_pd(tv, vv)));
    }
    for (; i < n; ++i) out[i] = z[i] - t * v[i];
}

void raster_span_avx2(const TriangleSetup& tri, double py, int x_begin, int x_end, float* row) {
    const double r0 = tri.edge[0].b * py + tri.edge[0].c;
    const double r1 = tri.edge[1].b * py + tri.edge[1].c;
    const double r2 = tri.edge[2].b * py + tri.edge[2].c;
    const double rz = tri.inv_depth.b * py + tri.inv_depth.c;

    const __m256d a0 = _mm256_set1_pd(tri.edge[0].a);
    const __m256d a1 = _mm256_set1_pd(tri.edge[1].a);
    const __m256d a2 = _mm256_set1_pd(tri.edge[2].a);
    const __m256d az = _mm256_set1_pd(tri.inv_depth.a);
    const __m256d vr0 = _mm256_set1_pd(r0);
    const __m256d vr1 = _mm256_set1_pd(r1);
    const __m256d vr2 = _mm256_set1_pd(r2);
    const __m256d vrz = _mm256_set1_pd(rz);
    const __m256d zero = _mm256_setzero_pd();
    const __m256d one = _mm256_set1_pd(1.0);
    const __m256d lane = _mm256_set_pd(3.5, 2.5, 1.5, 0.5);

    int x = x_begin;
    for (; x + 4 <= x_end; x += 4) {
        const __m256d px = _mm256_add_pd(_mm256_set1_pd(static_cast<double>(x)), lane);
        const __m256d e0 = _mm256_add_pd(_mm256_mul_pd(a0, px), vr0);
        const __m256d e1 = _mm256_add_pd(_mm256_mul_pd(a1, px), vr1);
        const __m256d e2 = _mm256_add_pd(_mm256_mul_pd(a2, px), vr2);
        const __m256d iz = _mm256_add_pd(_mm256_mul_pd(az, px), vrz);
        __m256d inside = _mm256_and_pd(_mm256_cmp_pd(e0, zero, _CMP_GE_OQ), _mm256_cmp_pd(e1, zero, _CMP_GE_OQ));
        inside = _mm256_and_pd(inside, _mm256_cmp_pd(e2, zero, _CMP_GE_OQ));
        inside = _mm256_and_pd(inside, _mm256_cmp_pd(iz, zero, _CMP_GT_OQ));
        const int lanes = _mm256_movemask_pd(inside);
        if (lanes == 0) continue;

        const __m128 d = _mm256_cvtpd_ps(_mm256_div_pd(one, iz));
        const __m128 current = _mm_loadu_ps(row + x);
        const __m128 lane_mask = _mm_castsi128_ps(
            _mm_set_epi32(-((lanes >> 3) & 1), -((lanes >> 2) & 1), -((lanes >> 1) & 1), -(lanes & 1)));
        const __m128 closer = _mm_and_ps(_mm_cmplt_ps(d, current), lane_mask);
        _mm_storeu_ps(row + x, _mm_blendv_ps(current, d, closer));
    }
    for (; x < x_end; ++x) {
        const double px = x + 0.5;
        const double e0 = tri.edge[0].a * px + r0;
        const double e1 = tri.edge[1].a * px + r1;
        const double e2 = tri.edge[2].a * px + r2;
        const double iz = tri.inv_depth.a * px + rz;
        if (e0 >= 0.0 && e1 >= 0.0 && e2 >= 0.0 && iz > 0.0) {
            const float d = static_cast<float>(1.0 / iz);
            if (d < row[x]) row[x] = d;
        }
    }
}

void depth_to_gray16_avx2(std::span<const float> depth, double near_plane, double far_plane,
                          std::span<std::uint16_t> out) {
    const double range = far_plane - near_plane;
    const __m256d vfar = _mm256_set1_pd(far_plane);
    const __m256d vrange = _mm256_set1_pd(range);
    const __m256d zero = _mm256_setzero_pd();
    const __m256d one = _mm256_set1_pd(1.0);
    const __m256d scale = _mm256_set1_pd(65535.0);
    const __m256d half = _mm256_set1_pd(0.5);

    auto quantize = [&](__m128 d4) {
        __m256d x = _mm256_div_pd(_mm256_sub_pd(vfar, _mm256_cvtps_pd(d4)), vrange);
        x = _mm256_min_pd(_mm256_max_pd(x, zero), one);
        return _mm256_cvttpd_epi32(_mm256_floor_pd(_mm256_add_pd(_mm256_mul_pd(x, scale), half)));
    };

    const std::size_t n = depth.size();
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        const __m128i lo = quantize(_mm_loadu_ps(depth.data() + i));
        const __m128i hi = quantize(_mm_loadu_ps(depth.data() + i + 4));
        _mm_storeu_si128(reinterpret_cast<__m128i*>(out.data() + i), _mm_packus_epi32(lo, hi));
    }
    for (; i < n; ++i) {
        double x = (far_plane - static_cast<double>(depth[i])) / range;
        x = std::min(std::max(x, 0.0), 1.0);
        out[i] = static_cast<std::uint16_t>(std::floor(x * 65535.0 + 0.5));
    }
}

}  // namespace

const KernelTable* avx2_kernels() {
    static const KernelTable table{Backend::Avx2, predict_clean_avx2, raster_span_avx2, depth_to_gray16_avx2};
    return &table;
}

}  // namespace scenecond::kernels
