#include "scenecond/obb.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <sstream>

#include "scenecond/error.hpp"
#include "scenecond/json_text.hpp"

namespace scenecond {

PointCloud backproject_masked_depth(const CameraModel& cam, const DepthMap& depth, const EntityMask2D& mask,
                                    BackprojectMode mode) {
    if (depth.width != mask.width || depth.height != mask.height || depth.width != cam.image_width() ||
        depth.height != cam.image_height()) {
        throw Error(ErrorCode::ShapeMismatch, "camera, depth map and mask dimensions differ");
    }
    PointCloud cloud;
    cloud.frame = mode == BackprojectMode::Metric ? CloudFrame::MetricWorld : CloudFrame::PixelSpace;
    for (int row = 0; row < depth.height; ++row) {
        for (int col = 0; col < depth.width; ++col) {
            if (!mask.at(col, row)) continue;
            const float d = depth.at(col, row);
            if (!std::isfinite(d) || !(d > 0.0f)) continue;
            if (mode == BackprojectMode::Metric) {
                cloud.points.push_back(unproject_pixel(cam, col + 0.5, row + 0.5, d));
            } else {
                cloud.points.push_back({static_cast<double>(col), static_cast<double>(row), static_cast<double>(d)});
            }
        }
    }
    if (cloud.points.empty()) throw Error(ErrorCode::EmptySelection, "mask selects no finite-depth pixel");
    return cloud;
}

std::vector<Vec2> convex_hull_xz(const PointCloud& cloud) {
    std::vector<Vec2> xz;
    xz.reserve(cloud.points.size());
    double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin, zmin = xmin, zmax = -xmin;
    for (const auto& p : cloud.points) {
        xz.push_back({p.x, p.z});
        xmin = std::min(xmin, p.x);
        xmax = std::max(xmax, p.x);
        zmin = std::min(zmin, p.z);
        zmax = std::max(zmax, p.z);
    }
    if (xz.empty()) return xz;
    const double diagonal = std::hypot(xmax - xmin, zmax - zmin);
    return convex_hull(std::move(xz), 1e-12 * diagonal);
}

bool OrientedBox3D::contains(Vec3 p, double inflate) const {
    const Vec3 local = rotate_about_y(p - center, -yaw_deg);
    return std::abs(local.x) <= half_extents.x + inflate && std::abs(local.y) <= half_extents.y + inflate &&
           std::abs(local.z) <= half_extents.z + inflate;
}

EntitySpec OrientedBox3D::to_entity(std::string name) const {
    EntitySpec e;
    e.local_prompt = name;
    e.name = std::move(name);
    e.size = {2.0 * half_extents.x, 2.0 * half_extents.z, 2.0 * half_extents.y};
    e.position = {center.x, center.y - half_extents.y, center.z};
    e.yaw_deg = yaw_deg;
    return e;
}

namespace {

struct Rectangle {
    double area;
    double yaw_deg;  // canonical, [0, 90)
    double half_x;
    double half_z;
    double center_x;
    double center_z;
};

// Folds a yaw into [0, 90); every quarter turn swaps the box's local x and z.
void canonicalize(double& yaw_deg, double& half_x, double& half_z) {
    const double turns = std::floor(yaw_deg / 90.0);
    yaw_deg -= 90.0 * turns;
    if (static_cast<long long>(turns) % 2 != 0) std::swap(half_x, half_z);
    if (yaw_deg >= 90.0) {
        yaw_deg -= 90.0;
        std::swap(half_x, half_z);
    }
    if (yaw_deg < 0.0) yaw_deg = 0.0;
}

bool better(const Rectangle& candidate, const Rectangle& best) {
    constexpr double kTieTolerance = 1e-12;
    if (candidate.area < best.area * (1.0 - kTieTolerance)) return true;
    return candidate.area <= best.area * (1.0 + kTieTolerance) && candidate.yaw_deg < best.yaw_deg;
}

std::pair<double, double> y_range(const PointCloud& cloud) {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (const auto& p : cloud.points) {
        lo = std::min(lo, p.y);
        hi = std::max(hi, p.y);
    }
    return {lo, hi};
}

OrientedBox3D to_box(const Rectangle& r, std::pair<double, double> ys) {
    return {{r.center_x, 0.5 * (ys.first + ys.second), r.center_z},
            {r.half_x, 0.5 * (ys.second - ys.first), r.half_z},
            r.yaw_deg};
}

void require_points(const PointCloud& cloud) {
    if (cloud.points.empty()) throw Error(ErrorCode::EmptySelection, "cannot fit a box to an empty cloud");
}

}  // namespace

OrientedBox3D fit_min_volume_obb(const PointCloud& cloud) {
    require_points(cloud);
    const auto ys = y_range(cloud);
    const auto hull = convex_hull_xz(cloud);
    if (hull.size() == 1) return to_box({0.0, 0.0, 0.0, 0.0, hull[0].x, hull[0].y}, ys);

    // The optimal rectangle has a side collinear with some hull edge.
    Rectangle best{std::numeric_limits<double>::infinity(), 90.0, 0, 0, 0, 0};
    const std::size_t edges = hull.size() == 2 ? 1 : hull.size();
    for (std::size_t i = 0; i < edges; ++i) {
        const Vec2 a = hull[i];
        const Vec2 b = hull[(i + 1) % hull.size()];
        const double len = std::hypot(b.x - a.x, b.y - a.y);
        const Vec2 d{(b.x - a.x) / len, (b.y - a.y) / len};
        const Vec2 n{-d.y, d.x};
        double smin = std::numeric_limits<double>::infinity(), smax = -smin, rmin = smin, rmax = -smin;
        for (const auto& p : hull) {
            const double s = p.x * d.x + p.y * d.y;
            const double r = p.x * n.x + p.y * n.y;
            smin = std::min(smin, s);
            smax = std::max(smax, s);
            rmin = std::min(rmin, r);
            rmax = std::max(rmax, r);
        }
        const double smid = 0.5 * (smin + smax);
        const double rmid = 0.5 * (rmin + rmax);
        // Local x runs along d = (cos yaw, -sin yaw) in (X, Z).
        Rectangle cand{(smax - smin) * (rmax - rmin),
                       rad_to_deg(std::atan2(-d.y, d.x)),
                       0.5 * (smax - smin),
                       0.5 * (rmax - rmin),
                       smid * d.x + rmid * n.x,
                       smid * d.y + rmid * n.y};
        canonicalize(cand.yaw_deg, cand.half_x, cand.half_z);
        if (better(cand, best)) best = cand;
    }
    return to_box(best, ys);
}

OrientedBox3D brute_force_obb_oracle(const PointCloud& cloud, double step_deg) {
    require_points(cloud);
    if (!(step_deg > 0.0 && step_deg <= 5.0)) throw Error(ErrorCode::InvalidArgument, "step must lie in (0, 5]");
    const auto ys = y_range(cloud);
    Rectangle best{std::numeric_limits<double>::infinity(), 0, 0, 0, 0, 0};
    for (int k = 0;; ++k) {
        const double yaw = k * step_deg;
        if (yaw >= 90.0) break;
        double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin, zmin = xmin, zmax = -xmin;
        for (const auto& p : cloud.points) {
            const Vec3 local = rotate_about_y(p, -yaw);
            xmin = std::min(xmin, local.x);
            xmax = std::max(xmax, local.x);
            zmin = std::min(zmin, local.z);
            zmax = std::max(zmax, local.z);
        }
        const double area = (xmax - xmin) * (zmax - zmin);
        if (area < best.area) {
            const Vec3 mid = rotate_about_y({0.5 * (xmin + xmax), 0.0, 0.5 * (zmin + zmax)}, yaw);
            best = {area, yaw, 0.5 * (xmax - xmin), 0.5 * (zmax - zmin), mid.x, mid.z};
        }
    }
    return to_box(best, ys);
}

PointCloud read_xyz(std::string_view text) {
    PointCloud cloud;
    std::istringstream in{std::string(text)};
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos || line[first] == '#') continue;
        std::istringstream fields(line);
        Vec3 p;
        if (!(fields >> p.x >> p.y >> p.z)) {
            throw Error(ErrorCode::TypeMismatch, "XYZ line " + std::to_string(line_no) + ": expected 3 numbers");
        }
        cloud.points.push_back(p);
    }
    return cloud;
}

std::string write_xyz(const PointCloud& cloud) {
    std::string out;
    for (const auto& p : cloud.points) {
        out += format_decimal(p.x) + ' ' + format_decimal(p.y) + ' ' + format_decimal(p.z) + '\n';
    }
    return out;
}

PointCloud read_f32_triplets(std::string_view bytes) {
    if (bytes.size() % 12 != 0) throw Error(ErrorCode::ShapeMismatch, "float32 triplet file size not a multiple of 12");
    PointCloud cloud;
    auto read = [&](std::size_t pos) {
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[pos + i])) << (8 * i);
        return static_cast<double>(std::bit_cast<float>(v));
    };
    for (std::size_t pos = 0; pos < bytes.size(); pos += 12) cloud.points.push_back({read(pos), read(pos + 4), read(pos + 8)});
    return cloud;
}

std::string write_f32_triplets(const PointCloud& cloud) {
    std::string out;
    out.reserve(cloud.points.size() * 12);
    auto put = [&](double value) {
        const auto v = std::bit_cast<std::uint32_t>(static_cast<float>(value));
        for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
    };
    for (const auto& p : cloud.points) {
        put(p.x);
        put(p.y);
        put(p.z);
    }
    return out;
}

}  // namespace scenecond
