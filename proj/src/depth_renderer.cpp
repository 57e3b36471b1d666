#include "scenecond/depth_renderer.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>

#include "scenecond/error.hpp"
#include "scenecond/kernels.hpp"

namespace scenecond {

namespace {

constexpr std::array<std::array<int, 4>, 6> kFaces{{
    {0, 1, 2, 3},  // bottom
    {4, 5, 6, 7},  // top
    {0, 1, 5, 4},
    {1, 2, 6, 5},
    {2, 3, 7, 6},
    {3, 0, 4, 7},
}};

struct ScreenVertex {
    double u;
    double v;
    double inv_depth;
};

// Edge i->j as an affine function; c is formed so that the reversed edge is
// the exact negation, which keeps shared triangle edges gap-free.
kernels::Affine2 edge_function(const ScreenVertex& i, const ScreenVertex& j) {
    return {-(j.v - i.v), j.u - i.u, i.u * j.v - j.u * i.v};
}

kernels::Affine2 negate(kernels::Affine2 e) { return {-e.a, -e.b, -e.c}; }

void rasterize_triangle(const CameraModel& cam, const std::array<ScreenVertex, 3>& tri,
                        const kernels::KernelTable& kt, DepthMap& out) {
    kernels::TriangleSetup setup;
    setup.edge[0] = edge_function(tri[1], tri[2]);
    setup.edge[1] = edge_function(tri[2], tri[0]);
    setup.edge[2] = edge_function(tri[0], tri[1]);
    double area = setup.edge[2].a * tri[2].u + setup.edge[2].b * tri[2].v + setup.edge[2].c;
    if (!(std::abs(area) > 1e-12) || !std::isfinite(area)) return;
    if (area < 0.0) {
        for (auto& e : setup.edge) e = negate(e);
        area = -area;
    }
    setup.inv_depth = {
        (setup.edge[0].a * tri[0].inv_depth + setup.edge[1].a * tri[1].inv_depth +
         setup.edge[2].a * tri[2].inv_depth) / area,
        (setup.edge[0].b * tri[0].inv_depth + setup.edge[1].b * tri[1].inv_depth +
         setup.edge[2].b * tri[2].inv_depth) / area,
        (setup.edge[0].c * tri[0].inv_depth + setup.edge[1].c * tri[1].inv_depth +
         setup.edge[2].c * tri[2].inv_depth) / area,
    };

    double umin = tri[0].u, umax = tri[0].u, vmin = tri[0].v, vmax = tri[0].v;
    for (const auto& p : tri) {
        umin = std::min(umin, p.u);
        umax = std::max(umax, p.u);
        vmin = std::min(vmin, p.v);
        vmax = std::max(vmax, p.v);
    }
    const double w = cam.image_width();
    const double h = cam.image_height();
    const int col_begin = static_cast<int>(std::clamp(std::ceil(umin - 0.5), 0.0, w));
    const int col_end = static_cast<int>(std::clamp(std::floor(umax - 0.5) + 1.0, 0.0, w));
    const int row_begin = static_cast<int>(std::clamp(std::ceil(vmin - 0.5), 0.0, h));
    const int row_end = static_cast<int>(std::clamp(std::floor(vmax - 0.5) + 1.0, 0.0, h));
    for (int row = row_begin; row < row_end; ++row) {
        float* line = out.values.data() + static_cast<std::size_t>(row) * out.width;
        kt.raster_span(setup, row + 0.5, col_begin, col_end, line);
    }
}

// Sutherland-Hodgman against z >= near in camera space.
std::vector<Vec3> clip_near(const std::array<Vec3, 3>& tri, double near) {
    std::vector<Vec3> out;
    out.reserve(4);
    for (std::size_t i = 0; i < 3; ++i) {
        const Vec3 a = tri[i];
        const Vec3 b = tri[(i + 1) % 3];
        const bool a_in = a.z >= near;
        const bool b_in = b.z >= near;
        if (a_in) out.push_back(a);
        if (a_in != b_in) {
            const double s = (near - a.z) / (b.z - a.z);
            out.push_back({a.x + s * (b.x - a.x), a.y + s * (b.y - a.y), near});
        }
    }
    return out;
}

void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_f32(std::string& out, float v) { put_u32(out, std::bit_cast<std::uint32_t>(v)); }

std::uint32_t get_u32(std::string_view bytes, std::size_t pos) {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[pos + i])) << (8 * i);
    return v;
}

void check_range(double near_plane, double far_plane) {
    if (!(near_plane > 0.0 && far_plane > 0.0 && near_plane < far_plane)) {
        throw Error(ErrorCode::InvalidRange, "need 0 < near < far");
    }
}

}  // namespace

std::size_t DepthMap::finite_count() const {
    return static_cast<std::size_t>(
        std::count_if(values.begin(), values.end(), [](float v) { return std::isfinite(v); }));
}

DepthMap render_depth(const CameraModel& cam, std::span<const Box3D> boxes) {
    DepthMap out(cam.image_width(), cam.image_height());
    const auto& kt = kernels::active();
    const double near = cam.near_plane();
    for (const auto& box : boxes) {
        const auto world = box.corners();
        std::array<Vec3, 8> c;
        for (std::size_t i = 0; i < 8; ++i) c[i] = cam.to_camera(world[i]);
        for (const auto& f : kFaces) {
            const std::array<std::array<Vec3, 3>, 2> tris{{{c[f[0]], c[f[1]], c[f[2]]}, {c[f[0]], c[f[2]], c[f[3]]}}};
            for (const auto& tri : tris) {
                const auto poly = clip_near(tri, near);
                if (poly.size() < 3) continue;
                std::vector<ScreenVertex> screen;
                screen.reserve(poly.size());
                for (const auto& p : poly) {
                    const auto px = project_camera_point(cam, p);
                    screen.push_back({px.u, px.v, 1.0 / p.z});
                }
                for (std::size_t k = 1; k + 1 < screen.size(); ++k) {
                    rasterize_triangle(cam, {screen[0], screen[k], screen[k + 1]}, kt, out);
                }
            }
        }
    }
    return out;
}

DepthRange default_depth_range(const CameraModel& cam, const SceneParameters& params) {
    return {0.1 * params.scene_size, norm(cam.position()) + params.scene_size};
}

std::string encode_dpf1(const DepthMap& depth, double near_plane, double far_plane) {
    check_range(near_plane, far_plane);
    const float far_f = static_cast<float>(far_plane);
    std::string out = "DPF1";
    out.reserve(20 + depth.values.size() * 4);
    put_u32(out, static_cast<std::uint32_t>(depth.width));
    put_u32(out, static_cast<std::uint32_t>(depth.height));
    put_f32(out, static_cast<float>(near_plane));
    put_f32(out, far_f);
    for (float v : depth.values) put_f32(out, std::isfinite(v) ? v : far_f);
    return out;
}

std::string encode_preview_pgm16(const DepthMap& depth, double near_plane, double far_plane) {
    check_range(near_plane, far_plane);
    std::vector<std::uint16_t> gray(depth.values.size());
    kernels::active().depth_to_gray16(depth.values, near_plane, far_plane, gray);
    std::string out = "P5\n" + std::to_string(depth.width) + " " + std::to_string(depth.height) + "\n65535\n";
    out.reserve(out.size() + gray.size() * 2);
    for (auto g : gray) {
        out.push_back(static_cast<char>(g >> 8));
        out.push_back(static_cast<char>(g & 0xFF));
    }
    return out;
}

EncodedDepth encode_depth(const DepthMap& depth, double near_plane, double far_plane) {
    return {encode_dpf1(depth, near_plane, far_plane), encode_preview_pgm16(depth, near_plane, far_plane)};
}

DecodedDepth decode_dpf1(std::string_view bytes) {
    if (bytes.size() < 20 || bytes.substr(0, 4) != "DPF1") throw Error(ErrorCode::TypeMismatch, "not a DPF1 file");
    DecodedDepth out;
    const auto w = get_u32(bytes, 4);
    const auto h = get_u32(bytes, 8);
    out.near_plane = std::bit_cast<float>(get_u32(bytes, 12));
    out.far_plane = std::bit_cast<float>(get_u32(bytes, 16));
    const std::size_t n = static_cast<std::size_t>(w) * h;
    if (bytes.size() != 20 + 4 * n) throw Error(ErrorCode::ShapeMismatch, "DPF1 payload size mismatch");
    out.depth = DepthMap(static_cast<int>(w), static_cast<int>(h));
    for (std::size_t i = 0; i < n; ++i) {
        const float v = std::bit_cast<float>(get_u32(bytes, 20 + 4 * i));
        out.depth.values[i] = v == out.far_plane ? kDepthBackground : v;
    }
    return out;
}

}  // namespace scenecond
