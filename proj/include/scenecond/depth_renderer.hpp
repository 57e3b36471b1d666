#pragma once

#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "scenecond/camera.hpp"

namespace scenecond {

inline constexpr float kDepthBackground = std::numeric_limits<float>::infinity();

struct DepthMap {
    int width = 0;
    int height = 0;
    std::vector<float> values;  // row-major meters; background is +inf

    DepthMap() = default;
    DepthMap(int w, int h)
        : width(w), height(h), values(static_cast<std::size_t>(w) * h, kDepthBackground) {}

    float at(int x, int y) const { return values[static_cast<std::size_t>(y) * width + x]; }
    std::size_t finite_count() const;

    friend bool operator==(const DepthMap&, const DepthMap&) = default;
};

/// Z-buffer rasterization of every box face (two triangles per face) with
/// near-plane clipping and perspective-correct depth. Depth is the camera
/// forward coordinate, sampled at pixel centers.
DepthMap render_depth(const CameraModel& cam, std::span<const Box3D> boxes);

struct DepthRange {
    double near_plane = 0.0;
    double far_plane = 0.0;
};

/// near = 0.1 * scene_size, far = camera-to-origin distance + scene_size.
DepthRange default_depth_range(const CameraModel& cam, const SceneParameters& params);

struct EncodedDepth {
    std::string raw;      // DPF1
    std::string preview;  // 16-bit binary PGM
};

/// Throws Error{InvalidRange} unless 0 < near < far.
EncodedDepth encode_depth(const DepthMap& depth, double near_plane, double far_plane);

std::string encode_dpf1(const DepthMap& depth, double near_plane, double far_plane);
std::string encode_preview_pgm16(const DepthMap& depth, double near_plane, double far_plane);

struct DecodedDepth {
    DepthMap depth;
    float near_plane = 0.0f;
    float far_plane = 0.0f;
};

/// Values stored as exactly `far` come back as background.
DecodedDepth decode_dpf1(std::string_view bytes);

}  // namespace scenecond
