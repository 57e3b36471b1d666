#pragma once

#include <array>
#include <cmath>
#include <numbers>

namespace scenecond {

struct Vec3 {
    double x = 0.0;
    double y = 0.0;
    double z = 0.0;

    friend constexpr Vec3 operator+(Vec3 a, Vec3 b) { return {a.x + b.x, a.y + b.y, a.z + b.z}; }
    friend constexpr Vec3 operator-(Vec3 a, Vec3 b) { return {a.x - b.x, a.y - b.y, a.z - b.z}; }
    friend constexpr Vec3 operator*(double s, Vec3 a) { return {s * a.x, s * a.y, s * a.z}; }
    friend constexpr bool operator==(const Vec3&, const Vec3&) = default;
};

constexpr double dot(Vec3 a, Vec3 b) { return a.x * b.x + a.y * b.y + a.z * b.z; }

inline double norm(Vec3 a) { return std::sqrt(dot(a, a)); }

struct Vec2 {
    double x = 0.0;
    double y = 0.0;

    friend constexpr bool operator==(const Vec2&, const Vec2&) = default;
};

constexpr double deg_to_rad(double deg) { return deg * std::numbers::pi / 180.0; }
constexpr double rad_to_deg(double rad) { return rad * 180.0 / std::numbers::pi; }

// Right-handed rotation about +Y: maps +X to (cos, 0, -sin).
inline Vec3 rotate_about_y(Vec3 p, double yaw_deg) {
    const double a = deg_to_rad(yaw_deg);
    const double c = std::cos(a);
    const double s = std::sin(a);
    return {c * p.x + s * p.z, p.y, -s * p.x + c * p.z};
}

}  // namespace scenecond

#include <vector>

namespace scenecond {

/// Counter-clockwise convex hull (Andrew's monotone chain). Points within
/// `tolerance` (a distance) of a hull edge's supporting line are dropped.
/// Collinear input yields its two extreme points, identical input one point.
std::vector<Vec2> convex_hull(std::vector<Vec2> points, double tolerance = 0.0);

}  // namespace scenecond
