#include <gtest/gtest.h>

#include <algorithm>
#include <cstring>
#include <random>

#include "oracles.hpp"
#include "scenecond/depth_renderer.hpp"
#include "scenecond/error.hpp"

using namespace scenecond;

namespace {

SceneParameters params(double size, double pitch) {
    SceneParameters p;
    p.scene_size = size;
    p.camera_pitch_deg = pitch;
    return p;
}

struct OracleComparison {
    std::size_t coverage_mismatch = 0;
    double max_error = 0.0;
    std::size_t finite = 0;
};

OracleComparison compare_with_raycast(double size, double pitch, int w, int h, const std::vector<Box3D>& boxes) {
    const auto cam = derive_camera(params(size, pitch), w, h);
    const oracle::PinholeCamera ref(size, pitch, w, h);
    const DepthMap depth = render_depth(cam, boxes);
    OracleComparison out;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const Vec3 dir = ref.ray(x + 0.5, y + 0.5);
            double best = std::numeric_limits<double>::infinity();
            for (const auto& b : boxes) {
                const auto t = oracle::ray_box_entry(ref.eye, dir, b.bottom_center, b.extents.x, b.extents.y,
                                                     b.extents.z, b.yaw_deg);
                if (t) best = std::min(best, *t);
            }
            const float got = depth.at(x, y);
            if (std::isfinite(best) != std::isfinite(got)) {
                ++out.coverage_mismatch;
            } else if (std::isfinite(best)) {
                ++out.finite;
                out.max_error = std::max(out.max_error, std::abs(best - got));
            }
        }
    }
    return out;
}

std::uint32_t u32_at(const std::string& s, std::size_t off) {
    return static_cast<std::uint32_t>(static_cast<unsigned char>(s[off])) |
           static_cast<std::uint32_t>(static_cast<unsigned char>(s[off + 1])) << 8 |
           static_cast<std::uint32_t>(static_cast<unsigned char>(s[off + 2])) << 16 |
           static_cast<std::uint32_t>(static_cast<unsigned char>(s[off + 3])) << 24;
}

float f32_at(const std::string& s, std::size_t off) {
    const std::uint32_t bits = u32_at(s, off);
    float f;
    std::memcpy(&f, &bits, 4);
    return f;
}

}  // namespace

TEST(RenderDepth, EmptyScene) {
    const auto cam = derive_camera(params(10, 20), 64, 64);
    const DepthMap d = render_depth(cam, {});
    EXPECT_EQ(d.finite_count(), 0u);
    EXPECT_TRUE(std::all_of(d.values.begin(), d.values.end(), [](float v) { return std::isinf(v) && v > 0; }));
}

TEST(RenderDepth, FrontFaceAnalytic) {
    const auto cam = derive_camera(params(10, 0), 128, 128);
    // front face is the plane z = 2; camera sits at z = -12
    const std::vector<Box3D> boxes{{{0, -1, 3}, {2, 2, 2}, 0.0}};
    const DepthMap d = render_depth(cam, boxes);
    std::size_t checked = 0;
    for (int y = 0; y < 128; ++y) {
        for (int x = 0; x < 128; ++x) {
            if (!std::isfinite(d.at(x, y))) continue;
            EXPECT_NEAR(d.at(x, y), 14.0, 1e-4);
            ++checked;
        }
    }
    EXPECT_GT(checked, 200u);
}

TEST(RenderDepth, NearerBoxWins) {
    const auto cam = derive_camera(params(10, 0), 96, 96);
    // surfaces at 5 m and 8 m from the camera
    const Box3D near_box{{0, -0.5, -12 + 5 + 0.5}, {1, 1, 1}, 0.0};
    const Box3D far_box{{0, -1.5, -12 + 8 + 1.5}, {3, 3, 3}, 0.0};
    const std::vector<Box3D> both{far_box, near_box};
    const DepthMap d = render_depth(cam, both);
    EXPECT_NEAR(d.at(48, 48), 5.0, 1e-4);
    const DepthMap only_far = render_depth(cam, std::vector<Box3D>{far_box});
    EXPECT_NEAR(only_far.at(48, 48), 8.0, 1e-4);
}

TEST(RenderDepth, MatchesRaycastOracle) {
    std::mt19937_64 rng(21);
    std::uniform_real_distribution<double> pos(-3.0, 3.0);
    std::uniform_real_distribution<double> ext(0.5, 2.5);
    std::uniform_real_distribution<double> yaw(0.0, 90.0);
    std::uniform_real_distribution<double> pitch(0.0, 70.0);
    for (int scene = 0; scene < 20; ++scene) {
        std::vector<Box3D> boxes;
        const int k = 1 + scene % 4;
        for (int j = 0; j < k; ++j) {
            boxes.push_back({{pos(rng), 0.0, pos(rng)}, {ext(rng), ext(rng), ext(rng)}, j % 2 ? yaw(rng) : 0.0});
        }
        const auto cmp = compare_with_raycast(8, pitch(rng), 64, 64, boxes);
        EXPECT_EQ(cmp.coverage_mismatch, 0u) << "scene " << scene;
        EXPECT_LT(cmp.max_error, 1e-3) << "scene " << scene;
        EXPECT_GT(cmp.finite, 0u);
    }
}

TEST(RenderDepth, NearPlaneClipping) {
    // first box spans z in [-13, -10] beside the eye at z = -12, so it crosses the near plane
    const std::vector<Box3D> boxes{{{2.5, -1, -11.5}, {3, 3, 3}, 0.0}, {{0, 0, 2}, {1, 1, 1}, 0.0}};
    const auto cmp = compare_with_raycast(10, 0, 64, 64, boxes);
    EXPECT_EQ(cmp.coverage_mismatch, 0u);
    EXPECT_LT(cmp.max_error, 1e-3);
}

TEST(RenderDepth, OrderIndependent) {
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> pos(-3.0, 3.0);
    std::uniform_real_distribution<double> ext(0.5, 2.5);
    std::vector<Box3D> boxes;
    for (int j = 0; j < 6; ++j) boxes.push_back({{pos(rng), 0.0, pos(rng)}, {ext(rng), ext(rng), ext(rng)}, 15.0 * j});
    const auto cam = derive_camera(params(8, 30), 128, 96);
    const DepthMap ref = render_depth(cam, boxes);
    std::sort(boxes.begin(), boxes.end(), [](const Box3D& a, const Box3D& b) { return a.yaw_deg > b.yaw_deg; });
    EXPECT_EQ(render_depth(cam, boxes), ref);
    std::shuffle(boxes.begin(), boxes.end(), rng);
    EXPECT_EQ(render_depth(cam, boxes), ref);
}

TEST(DefaultDepthRange, Formula) {
    const auto cam = derive_camera(params(10, 30), 64, 64);
    const auto r = default_depth_range(cam, params(10, 30));
    EXPECT_DOUBLE_EQ(r.near_plane, 1.0);
    EXPECT_NEAR(r.far_plane, 12.0 / std::cos(oracle::rad(30)) + 10.0, 1e-12);
}

TEST(EncodeDepth, Dpf1Layout) {
    DepthMap d(3, 2);
    d.values = {1.0f, 2.5f, kDepthBackground, 4.0f, 9.0f, 0.75f};
    const std::string raw = encode_dpf1(d, 0.5, 10.0);
    ASSERT_EQ(raw.size(), 4u + 4 + 4 + 4 + 4 + 6 * 4);
    EXPECT_EQ(raw.substr(0, 4), "DPF1");
    EXPECT_EQ(u32_at(raw, 4), 3u);
    EXPECT_EQ(u32_at(raw, 8), 2u);
    EXPECT_EQ(f32_at(raw, 12), 0.5f);
    EXPECT_EQ(f32_at(raw, 16), 10.0f);
    EXPECT_EQ(f32_at(raw, 20), 1.0f);
    EXPECT_EQ(f32_at(raw, 24), 2.5f);
    EXPECT_EQ(f32_at(raw, 28), 10.0f);
    EXPECT_EQ(f32_at(raw, 40), 0.75f);
}

TEST(EncodeDepth, DecodeRoundTrip) {
    DepthMap d(4, 4);
    std::mt19937 rng(1);
    std::uniform_real_distribution<float> u(0.5f, 9.5f);
    for (auto& v : d.values) v = u(rng);
    d.values[5] = kDepthBackground;
    const auto back = decode_dpf1(encode_dpf1(d, 0.5, 10.0));
    EXPECT_EQ(back.depth, d);
    EXPECT_EQ(back.near_plane, 0.5f);
    EXPECT_EQ(back.far_plane, 10.0f);
}

TEST(EncodeDepth, PreviewEndpoints) {
    const double near = 1.0, far = 9.0;
    DepthMap d(4, 1);
    d.values = {static_cast<float>(near), static_cast<float>(far), kDepthBackground,
                static_cast<float>(0.5 * (near + far))};
    const std::string pgm = encode_preview_pgm16(d, near, far);
    const std::string header = "P5\n4 1\n65535\n";
    ASSERT_EQ(pgm.substr(0, header.size()), header);
    auto gray = [&](int i) {
        return static_cast<unsigned char>(pgm[header.size() + 2 * i]) << 8 |
               static_cast<unsigned char>(pgm[header.size() + 2 * i + 1]);
    };
    EXPECT_EQ(gray(0), 65535);
    EXPECT_EQ(gray(1), 0);
    EXPECT_EQ(gray(2), 0);
    EXPECT_NEAR(gray(3), 32768, 1);
}

TEST(EncodeDepth, InvalidRange) {
    DepthMap d(2, 2);
    for (auto [n, f] : {std::pair{2.0, 1.0}, std::pair{0.0, 1.0}, std::pair{1.0, 1.0}}) {
        try {
            encode_depth(d, n, f);
            FAIL();
        } catch (const Error& e) {
            EXPECT_EQ(e.code(), ErrorCode::InvalidRange);
        }
    }
}

TEST(EncodeDepth, Deterministic) {
    const auto cam = derive_camera(params(10, 25), 128, 128);
    const std::vector<Box3D> boxes{{{-1, 0, 1}, {1.5, 1, 1.2}, 10.0}, {{2, 0, 3}, {1, 2, 2}, 0.0}};
    const auto r = default_depth_range(cam, params(10, 25));
    const auto a = encode_depth(render_depth(cam, boxes), r.near_plane, r.far_plane);
    const auto b = encode_depth(render_depth(cam, boxes), r.near_plane, r.far_plane);
    EXPECT_EQ(a.raw, b.raw);
    EXPECT_EQ(a.preview, b.preview);
}
