#include "scenecond/camera.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>
#include <sstream>

#include <nlohmann/json.hpp>

#include "scenecond/error.hpp"

namespace scenecond {

CameraModel::CameraModel(Vec3 position, double pitch_deg, double vfov_deg, int image_width, int image_height,
                         double near_plane)
    : position_(position),
      pitch_deg_(pitch_deg),
      vfov_deg_(vfov_deg),
      width_(image_width),
      height_(image_height),
      near_(near_plane) {
    if (!(vfov_deg > 10.0 && vfov_deg < 120.0)) {
        throw Error(ErrorCode::InvalidCamera, "vfov must lie in (10, 120) degrees");
    }
    if (image_width < 16 || image_height < 16) {
        throw Error(ErrorCode::InvalidCamera, "image dimensions must be >= 16");
    }
    if (!(near_plane > 0.0)) throw Error(ErrorCode::InvalidCamera, "near plane must be > 0");
    const double p = deg_to_rad(pitch_deg);
    forward_ = {0.0, -std::sin(p), std::cos(p)};
    up_ = {0.0, std::cos(p), std::sin(p)};
    focal_ = 0.5 * image_height / std::tan(0.5 * deg_to_rad(vfov_deg));
}

Vec3 CameraModel::to_camera(Vec3 world) const {
    const Vec3 d = world - position_;
    return {dot(d, right_), dot(d, up_), dot(d, forward_)};
}

Vec3 CameraModel::to_world(Vec3 cam) const {
    return position_ + cam.x * right_ + cam.y * up_ + cam.z * forward_;
}

CameraModel derive_camera(const SceneParameters& params, int image_width, int image_height,
                          const CameraConfig& config) {
    const double distance = config.distance_factor * params.scene_size;
    const double height = distance * std::tan(deg_to_rad(params.camera_pitch_deg));
    return CameraModel({0.0, height, -distance}, params.camera_pitch_deg, config.vfov_deg, image_width, image_height,
                       config.near_plane);
}

PixelDepth project_camera_point(const CameraModel& cam, Vec3 c) {
    const double f = cam.focal_px();
    return {0.5 * cam.image_width() + f * c.x / c.z, 0.5 * cam.image_height() - f * c.y / c.z, c.z};
}

std::optional<PixelDepth> project_point(const CameraModel& cam, Vec3 p) {
    const Vec3 c = cam.to_camera(p);
    if (!(c.z > cam.near_plane())) return std::nullopt;
    return project_camera_point(cam, c);
}

Vec3 unproject_pixel(const CameraModel& cam, double u, double v, double depth) {
    if (!(depth > 0.0)) throw Error(ErrorCode::NonPositiveDepth, "depth must be > 0");
    const double f = cam.focal_px();
    const double x = (u - 0.5 * cam.image_width()) * depth / f;
    const double y = -(v - 0.5 * cam.image_height()) * depth / f;
    return cam.to_world({x, y, depth});
}

std::array<Vec3, 8> Box3D::corners() const {
    const double hx = 0.5 * extents.x;
    const double hz = 0.5 * extents.y;
    const double h = extents.z;
    const std::array<Vec3, 4> ring{{{-hx, 0.0, -hz}, {hx, 0.0, -hz}, {hx, 0.0, hz}, {-hx, 0.0, hz}}};
    std::array<Vec3, 8> out;
    for (std::size_t i = 0; i < 4; ++i) {
        out[i] = bottom_center + rotate_about_y(ring[i], yaw_deg);
        out[i + 4] = bottom_center + rotate_about_y({ring[i].x, h, ring[i].z}, yaw_deg);
    }
    return out;
}

bool Box3D::contains(Vec3 p, double inflate) const {
    const Vec3 local = rotate_about_y(p - bottom_center, -yaw_deg);
    return std::abs(local.x) <= 0.5 * extents.x + inflate && std::abs(local.z) <= 0.5 * extents.y + inflate &&
           local.y >= -inflate && local.y <= extents.z + inflate;
}

Box3D box_from_entity(const EntitySpec& e) {
    return {e.position, {e.size.length_x, e.size.width_z, e.size.height_y}, e.yaw_deg};
}

std::vector<Box3D> boxes_from_plan(const ScenePlan& plan) {
    std::vector<Box3D> boxes;
    boxes.reserve(plan.entities.size());
    for (const auto& e : plan.entities) boxes.push_back(box_from_entity(e));
    return boxes;
}

std::size_t EntityMask2D::area() const {
    return static_cast<std::size_t>(std::count(bits.begin(), bits.end(), std::uint8_t{1}));
}

void fill_convex_polygon(EntityMask2D& mask, const std::vector<Vec2>& polygon) {
    if (polygon.size() < 2) return;
    double ymin = polygon[0].y;
    double ymax = polygon[0].y;
    for (const auto& p : polygon) {
        ymin = std::min(ymin, p.y);
        ymax = std::max(ymax, p.y);
    }
    const int row_begin = std::max(0, static_cast<int>(std::ceil(ymin - 0.5)));
    const int row_end = std::min(mask.height - 1, static_cast<int>(std::floor(ymax - 0.5)));
    for (int row = row_begin; row <= row_end; ++row) {
        const double py = row + 0.5;
        double xmin = std::numeric_limits<double>::infinity();
        double xmax = -xmin;
        for (std::size_t i = 0; i < polygon.size(); ++i) {
            const Vec2 a = polygon[i];
            const Vec2 b = polygon[(i + 1) % polygon.size()];
            if (py < std::min(a.y, b.y) || py > std::max(a.y, b.y)) continue;
            if (a.y == b.y) {
                xmin = std::min({xmin, a.x, b.x});
                xmax = std::max({xmax, a.x, b.x});
                continue;
            }
            const double x = a.x + (py - a.y) * (b.x - a.x) / (b.y - a.y);
            xmin = std::min(xmin, x);
            xmax = std::max(xmax, x);
        }
        if (xmin > xmax) continue;
        const double lo = std::max(std::ceil(xmin - 0.5), 0.0);
        const double hi = std::min(std::floor(xmax - 0.5), static_cast<double>(mask.width - 1));
        for (int col = static_cast<int>(lo); col <= static_cast<int>(hi) && lo <= hi; ++col) mask.set(col, row);
    }
}

ProjectedMask project_box_mask(const CameraModel& cam, const Box3D& box) {
    static constexpr std::array<std::array<int, 2>, 12> kEdges{{{0, 1}, {1, 2}, {2, 3}, {3, 0}, {4, 5}, {5, 6},
                                                               {6, 7}, {7, 4}, {0, 4}, {1, 5}, {2, 6}, {3, 7}}};
    ProjectedMask out{EntityMask2D(cam.image_width(), cam.image_height()), false};
    const double near = cam.near_plane();

    std::array<Vec3, 8> cam_corners;
    const auto world = box.corners();
    for (std::size_t i = 0; i < 8; ++i) cam_corners[i] = cam.to_camera(world[i]);

    std::vector<Vec2> projected;
    for (const auto& c : cam_corners) {
        if (c.z > near) {
            const auto px = project_camera_point(cam, c);
            projected.push_back({px.u, px.v});
        }
    }
    if (projected.empty()) {
        out.fully_behind = true;
        return out;
    }
    for (const auto& [ia, ib] : kEdges) {
        const Vec3 a = cam_corners[ia];
        const Vec3 b = cam_corners[ib];
        if ((a.z > near) == (b.z > near)) continue;
        const double s = (near - a.z) / (b.z - a.z);
        const Vec3 hit{a.x + s * (b.x - a.x), a.y + s * (b.y - a.y), near};
        const auto px = project_camera_point(cam, hit);
        projected.push_back({px.u, px.v});
    }
    fill_convex_polygon(out.mask, convex_hull(std::move(projected)));
    return out;
}

std::string encode_pbm(const EntityMask2D& mask) {
    std::string out = "P4\n" + std::to_string(mask.width) + " " + std::to_string(mask.height) + "\n";
    const int row_bytes = (mask.width + 7) / 8;
    for (int y = 0; y < mask.height; ++y) {
        std::string row(static_cast<std::size_t>(row_bytes), '\0');
        for (int x = 0; x < mask.width; ++x) {
            if (mask.at(x, y)) row[x / 8] = static_cast<char>(row[x / 8] | (0x80 >> (x % 8)));
        }
        out += row;
    }
    return out;
}

namespace {

// Reads whitespace-separated header tokens, skipping '#' comments.
std::string next_token(std::string_view bytes, std::size_t& pos) {
    while (pos < bytes.size()) {
        if (bytes[pos] == '#') {
            while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
        } else if (std::isspace(static_cast<unsigned char>(bytes[pos]))) {
            ++pos;
        } else {
            break;
        }
    }
    std::size_t start = pos;
    while (pos < bytes.size() && !std::isspace(static_cast<unsigned char>(bytes[pos]))) ++pos;
    return std::string(bytes.substr(start, pos - start));
}

}  // namespace

EntityMask2D decode_pbm(std::string_view bytes) {
    std::size_t pos = 0;
    if (next_token(bytes, pos) != "P4") throw Error(ErrorCode::TypeMismatch, "not a binary PBM (P4)");
    const int w = std::stoi(next_token(bytes, pos));
    const int h = std::stoi(next_token(bytes, pos));
    ++pos;  // single whitespace before raster
    const std::size_t row_bytes = static_cast<std::size_t>((w + 7) / 8);
    if (w <= 0 || h <= 0 || bytes.size() < pos + row_bytes * h) {
        throw Error(ErrorCode::ShapeMismatch, "truncated PBM raster");
    }
    EntityMask2D mask(w, h);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const auto byte = static_cast<unsigned char>(bytes[pos + y * row_bytes + x / 8]);
            if (byte & (0x80 >> (x % 8))) mask.set(x, y);
        }
    }
    return mask;
}

std::vector<std::uint32_t> run_lengths(const std::vector<std::uint8_t>& bits) {
    std::vector<std::uint32_t> runs;
    std::uint8_t current = 0;
    std::uint32_t count = 0;
    for (auto b : bits) {
        const std::uint8_t bit = b ? 1 : 0;
        if (bit != current) {
            runs.push_back(count);
            current = bit;
            count = 0;
        }
        ++count;
    }
    runs.push_back(count);
    return runs;
}

std::vector<std::uint8_t> expand_runs(const std::vector<std::uint32_t>& runs, std::size_t total) {
    std::vector<std::uint8_t> bits;
    bits.reserve(total);
    std::uint8_t value = 0;
    for (auto r : runs) {
        bits.insert(bits.end(), r, value);
        value ^= 1;
    }
    if (bits.size() != total) throw Error(ErrorCode::LengthMismatch, "run lengths do not sum to the bit count");
    return bits;
}

std::string mask_to_json(const EntityMask2D& mask) {
    nlohmann::ordered_json j;
    j["width"] = mask.width;
    j["height"] = mask.height;
    j["rle"] = run_lengths(mask.bits);
    return j.dump();
}

EntityMask2D mask_from_json(std::string_view text) {
    const auto j = nlohmann::json::parse(text, nullptr, false);
    if (!j.is_object() || !j.contains("width") || !j.contains("height") || !j.contains("rle")) {
        throw Error(ErrorCode::MissingKey, "mask JSON needs width, height and rle");
    }
    EntityMask2D mask(j["width"].get<int>(), j["height"].get<int>());
    mask.bits = expand_runs(j["rle"].get<std::vector<std::uint32_t>>(), mask.bits.size());
    return mask;
}

}  // namespace scenecond
