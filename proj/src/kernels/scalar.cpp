#include <algorithm>
#include <cmath>

#include "scenecond/kernels.hpp"

namespace scenecond::kernels {

namespace {

void predict_clean_scalar(std::span<const double> z, std::span<const double> v, double t, std::span<double> out) {
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = z[i] - t * v[i];
}

void raster_span_scalar(const TriangleSetup& tri, double py, int x_begin, int x_end, float* row) {
    const double r0 = tri.edge[0].b * py + tri.edge[0].c;
    const double r1 = tri.edge[1].b * py + tri.edge[1].c;
    const double r2 = tri.edge[2].b * py + tri.edge[2].c;
    const double rz = tri.inv_depth.b * py + tri.inv_depth.c;
    for (int x = x_begin; x < x_end; ++x) {
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

void depth_to_gray16_scalar(std::span<const float> depth, double near_plane, double far_plane,
                            std::span<std::uint16_t> out) {
    const double range = far_plane - near_plane;
    for (std::size_t i = 0; i < depth.size(); ++i) {
        double x = (far_plane - static_cast<double>(depth[i])) / range;
        x = std::min(std::max(x, 0.0), 1.0);
        out[i] = static_cast<std::uint16_t>(std::floor(x * 65535.0 + 0.5));
    }
}

}  // namespace

const KernelTable& scalar_kernels() {
    static const KernelTable table{Backend::Scalar, predict_clean_scalar, raster_span_scalar,
                                   depth_to_gray16_scalar};
    return table;
}

}  // namespace scenecond::kernels
