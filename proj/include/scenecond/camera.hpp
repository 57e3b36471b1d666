#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "scenecond/geometry.hpp"
#include "scenecond/scene_model.hpp"

namespace scenecond {

struct CameraConfig {
    double distance_factor = 1.2;  // horizontal distance = factor * scene_size
    double vfov_deg = 55.0;
    double near_plane = 0.05;  // meters
};

// Pitched pinhole camera on the -Z axis whose optical axis passes through the
// world origin. Pixel (u, v) has +u to the right and +v downward; pixel
// centers sit at half-integer coordinates.
class CameraModel {
public:
    /// Throws Error{InvalidCamera} unless vfov is in (10, 120) and both image
    /// dimensions are at least 16.
    CameraModel(Vec3 position, double pitch_deg, double vfov_deg, int image_width, int image_height,
                double near_plane = 0.05);

    Vec3 position() const { return position_; }
    double pitch_deg() const { return pitch_deg_; }
    double vfov_deg() const { return vfov_deg_; }
    int image_width() const { return width_; }
    int image_height() const { return height_; }
    double focal_px() const { return focal_; }
    double near_plane() const { return near_; }

    Vec3 forward() const { return forward_; }
    Vec3 up() const { return up_; }
    Vec3 right() const { return right_; }

    /// World point expressed in camera axes (right, up, forward).
    Vec3 to_camera(Vec3 world) const;
    Vec3 to_world(Vec3 cam) const;

private:
    Vec3 position_;
    double pitch_deg_;
    double vfov_deg_;
    int width_;
    int height_;
    double near_;
    double focal_;
    Vec3 forward_;
    Vec3 up_;
    Vec3 right_{1.0, 0.0, 0.0};
};

CameraModel derive_camera(const SceneParameters& params, int image_width, int image_height,
                          const CameraConfig& config = {});

struct PixelDepth {
    double u = 0.0;
    double v = 0.0;
    double depth = 0.0;  // camera-frame forward coordinate, meters
};

/// nullopt when the point is at or behind the near plane.
std::optional<PixelDepth> project_point(const CameraModel& cam, Vec3 p);

/// Camera-frame point to pixel; caller guarantees depth > 0.
PixelDepth project_camera_point(const CameraModel& cam, Vec3 cam_point);

/// Throws Error{NonPositiveDepth}.
Vec3 unproject_pixel(const CameraModel& cam, double u, double v, double depth);

struct Box3D {
    Vec3 bottom_center;
    Vec3 extents{1.0, 1.0, 1.0};  // X-length, Z-width, Y-height
    double yaw_deg = 0.0;

    /// Corner order: bottom ring then top ring, each (-x,-z) (+x,-z) (+x,+z) (-x,+z)
    /// in the box's local frame.
    std::array<Vec3, 8> corners() const;
    bool contains(Vec3 p, double inflate = 0.0) const;
};

Box3D box_from_entity(const EntitySpec& entity);
std::vector<Box3D> boxes_from_plan(const ScenePlan& plan);

struct EntityMask2D {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> bits;  // row-major, 0 or 1

    EntityMask2D() = default;
    EntityMask2D(int w, int h) : width(w), height(h), bits(static_cast<std::size_t>(w) * h, 0) {}

    std::uint8_t at(int x, int y) const { return bits[static_cast<std::size_t>(y) * width + x]; }
    void set(int x, int y, std::uint8_t value = 1) { bits[static_cast<std::size_t>(y) * width + x] = value; }
    std::size_t area() const;
    bool empty() const { return area() == 0; }

    friend bool operator==(const EntityMask2D&, const EntityMask2D&) = default;
};

struct ProjectedMask {
    EntityMask2D mask;
    bool fully_behind = false;
};

/// Filled convex hull of the box corners after clipping the box edges to the
/// near plane. A pixel is set when its center lies in the hull.
ProjectedMask project_box_mask(const CameraModel& cam, const Box3D& box);

/// Sets every pixel whose center lies inside the convex polygon (CCW or CW).
void fill_convex_polygon(EntityMask2D& mask, const std::vector<Vec2>& polygon);

// Export: binary PBM (P4) and a run-length JSON form whose first run counts zeros.
std::string encode_pbm(const EntityMask2D& mask);
EntityMask2D decode_pbm(std::string_view bytes);
std::vector<std::uint32_t> run_lengths(const std::vector<std::uint8_t>& bits);
std::vector<std::uint8_t> expand_runs(const std::vector<std::uint32_t>& runs, std::size_t total);
std::string mask_to_json(const EntityMask2D& mask);
EntityMask2D mask_from_json(std::string_view text);

}  // namespace scenecond
