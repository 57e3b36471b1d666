#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "scenecond/camera.hpp"
#include "scenecond/depth_renderer.hpp"
#include "scenecond/scene_model.hpp"

namespace scenecond {

enum class CloudFrame { MetricWorld, PixelSpace };

struct PointCloud {
    std::vector<Vec3> points;
    CloudFrame frame = CloudFrame::MetricWorld;
};

enum class BackprojectMode { Metric, Pixel };

/// Metric: unproject each selected pixel center. Pixel: (column, row, depth)
/// untransformed. Pixels with background depth are skipped.
/// Throws Error{ShapeMismatch | EmptySelection}.
PointCloud backproject_masked_depth(const CameraModel& cam, const DepthMap& depth, const EntityMask2D& mask,
                                    BackprojectMode mode = BackprojectMode::Metric);

/// Counter-clockwise hull of the (X, Z) projection, seen with +X right and +Z
/// up. Collinear input gives the two extreme points; identical input gives one.
std::vector<Vec2> convex_hull_xz(const PointCloud& cloud);

// Box rotated by yaw about +Y; half extents are in the box frame
// (local x, y, local z).
struct OrientedBox3D {
    Vec3 center;
    Vec3 half_extents;
    double yaw_deg = 0.0;  // [0, 90)

    double volume() const { return 8.0 * half_extents.x * half_extents.y * half_extents.z; }
    bool contains(Vec3 p, double inflate = 0.0) const;
    EntitySpec to_entity(std::string name) const;
};

/// Gravity-aligned minimum-volume box: minimum-area rectangle of the XZ hull
/// (rotating calipers over hull edges) times the Y extent.
OrientedBox3D fit_min_volume_obb(const PointCloud& cloud);

/// Independent yaw sweep over [0, 90) at `step_deg`. Throws Error{InvalidArgument}
/// unless step is in (0, 5].
OrientedBox3D brute_force_obb_oracle(const PointCloud& cloud, double step_deg);

// Point cloud files: XYZ text, or headerless little-endian float32 triplets.
PointCloud read_xyz(std::string_view text);
std::string write_xyz(const PointCloud& cloud);
PointCloud read_f32_triplets(std::string_view bytes);
std::string write_f32_triplets(const PointCloud& cloud);

}  // namespace scenecond
