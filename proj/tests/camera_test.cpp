#include <gtest/gtest.h>

#include <random>

#include "oracles.hpp"
#include "scenecond/camera.hpp"
#include "scenecond/error.hpp"

using namespace scenecond;

namespace {

SceneParameters params(double size, double pitch) {
    SceneParameters p;
    p.scene_size = size;
    p.camera_pitch_deg = pitch;
    return p;
}

double centroid_x(const EntityMask2D& m) {
    double sum = 0.0;
    std::size_t n = 0;
    for (int y = 0; y < m.height; ++y) {
        for (int x = 0; x < m.width; ++x) {
            if (m.at(x, y)) {
                sum += x + 0.5;
                ++n;
            }
        }
    }
    return sum / static_cast<double>(n);
}

}  // namespace

TEST(DeriveCamera, Placement) {
    const auto flat = derive_camera(params(10, 0), 256, 256);
    EXPECT_NEAR(flat.position().x, 0.0, 1e-12);
    EXPECT_NEAR(flat.position().y, 0.0, 1e-12);
    EXPECT_NEAR(flat.position().z, -12.0, 1e-12);
    EXPECT_NEAR(flat.forward().z, 1.0, 1e-12);

    const auto tilted = derive_camera(params(10, 45), 256, 256);
    EXPECT_NEAR(tilted.position().y, 12.0, 1e-9);
    EXPECT_NEAR(tilted.position().z, -12.0, 1e-12);
}

TEST(DeriveCamera, OriginAtImageCenter) {
    for (double pitch : {0.0, 10.0, 33.0, 60.0, 89.0}) {
        const auto cam = derive_camera(params(10, pitch), 320, 200);
        const auto p = project_point(cam, {0, 0, 0});
        ASSERT_TRUE(p.has_value());
        EXPECT_NEAR(p->u, 160.0, 1e-9);
        EXPECT_NEAR(p->v, 100.0, 1e-9);
        EXPECT_NEAR(p->depth, 12.0 / std::cos(oracle::rad(pitch)), 1e-9);
    }
}

TEST(DeriveCamera, InvalidConfig) {
    CameraConfig narrow;
    narrow.vfov_deg = 5.0;
    EXPECT_THROW(derive_camera(params(10, 0), 256, 256, narrow), Error);
    EXPECT_THROW(derive_camera(params(10, 0), 8, 256), Error);
}

TEST(ProjectPoint, BehindCamera) {
    const auto cam = derive_camera(params(10, 0), 256, 256);
    EXPECT_FALSE(project_point(cam, {0, 0, -13}).has_value());
    EXPECT_FALSE(project_point(cam, {0, 0, -12}).has_value());
}

TEST(ProjectPoint, MatchesIndependentPinhole) {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(-4.0, 4.0);
    for (double pitch : {0.0, 20.0, 55.0}) {
        const auto cam = derive_camera(params(8, pitch), 512, 384);
        const oracle::PinholeCamera ref(8, pitch, 512, 384);
        EXPECT_NEAR(cam.focal_px(), ref.focal, 1e-9);
        for (int i = 0; i < 200; ++i) {
            const Vec3 p{u(rng), std::abs(u(rng)), u(rng)};
            const auto got = project_point(cam, p);
            const auto want = ref.project(p);
            ASSERT_EQ(got.has_value(), want.has_value());
            if (!got) continue;
            EXPECT_NEAR(got->u, want->x, 1e-8);
            EXPECT_NEAR(got->v, want->y, 1e-8);
            EXPECT_NEAR(got->depth, want->z, 1e-10);
        }
    }
}

TEST(UnprojectPixel, InverseOfCenter) {
    const auto cam = derive_camera(params(10, 30), 256, 256);
    const Vec3 p = unproject_pixel(cam, 128, 128, 12.0 / std::cos(oracle::rad(30)));
    EXPECT_NEAR(p.x, 0.0, 1e-9);
    EXPECT_NEAR(p.y, 0.0, 1e-9);
    EXPECT_NEAR(p.z, 0.0, 1e-9);
}

TEST(UnprojectPixel, NonPositiveDepth) {
    const auto cam = derive_camera(params(10, 30), 256, 256);
    try {
        unproject_pixel(cam, 10, 10, 0.0);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::NonPositiveDepth);
    }
}

TEST(UnprojectPixel, PointsShareARay) {
    const auto cam = derive_camera(params(10, 25), 256, 256);
    const Vec3 eye = cam.position();
    const Vec3 a = unproject_pixel(cam, 40.5, 200.25, 3.0) - eye;
    const Vec3 b = unproject_pixel(cam, 40.5, 200.25, 6.0) - eye;
    EXPECT_NEAR(b.x, 2.0 * a.x, 1e-12);
    EXPECT_NEAR(b.y, 2.0 * a.y, 1e-12);
    EXPECT_NEAR(b.z, 2.0 * a.z, 1e-12);
}

TEST(UnprojectPixel, RoundTripRandom) {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(-5.0, 5.0);
    const auto cam = derive_camera(params(10, 35), 640, 480);
    double worst = 0.0;
    int tested = 0;
    while (tested < 1000) {
        const Vec3 p{u(rng), u(rng), u(rng)};
        const auto px = project_point(cam, p);
        if (!px || px->u < 0 || px->u > 640 || px->v < 0 || px->v > 480) continue;
        const Vec3 back = unproject_pixel(cam, px->u, px->v, px->depth);
        worst = std::max(worst, norm(back - p));
        ++tested;
    }
    EXPECT_LT(worst, 1e-9);
}

TEST(ProjectBoxMask, MatchesHandProjectedHull) {
    const auto cam = derive_camera(params(10, 20), 256, 256);
    const oracle::PinholeCamera ref(10, 20, 256, 256);
    Box3D cube;
    cube.bottom_center = {0, 0, 0};
    cube.extents = {1, 1, 1};

    std::vector<Vec2> pts;
    for (const auto& c : oracle::box_corners({0, 0, 0}, 1, 1, 1)) {
        const auto p = ref.project(c);
        ASSERT_TRUE(p.has_value());
        pts.push_back({p->x, p->y});
    }
    const auto expected = oracle::half_plane_fill(oracle::gift_wrap(pts), 256, 256);
    const auto got = project_box_mask(cam, cube);
    EXPECT_FALSE(got.fully_behind);
    std::size_t area = 0, diff = 0;
    for (std::size_t i = 0; i < expected.size(); ++i) {
        area += expected[i];
        diff += expected[i] != got.mask.bits[i];
    }
    EXPECT_GT(area, 100u);
    EXPECT_EQ(got.mask.area(), area);
    EXPECT_EQ(diff, 0u);
}

TEST(ProjectBoxMask, RandomBoxesMatchOracle) {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> pos(-3.0, 3.0);
    std::uniform_real_distribution<double> ext(0.3, 2.5);
    std::uniform_real_distribution<double> yaw(0.0, 90.0);
    for (int trial = 0; trial < 30; ++trial) {
        const double pitch = 5.0 + 2.0 * trial;
        const auto cam = derive_camera(params(8, pitch), 96, 64);
        const oracle::PinholeCamera ref(8, pitch, 96, 64);
        Box3D box{{pos(rng), 0.0, pos(rng)}, {ext(rng), ext(rng), ext(rng)}, yaw(rng)};
        std::vector<Vec2> pts;
        for (const auto& c : oracle::box_corners(box.bottom_center, box.extents.x, box.extents.y, box.extents.z,
                                                 box.yaw_deg)) {
            const auto p = ref.project(c);
            ASSERT_TRUE(p.has_value());
            pts.push_back({p->x, p->y});
        }
        const auto expected = oracle::half_plane_fill(oracle::gift_wrap(pts), 96, 64);
        const auto got = project_box_mask(cam, box).mask;
        std::size_t diff = 0;
        for (std::size_t i = 0; i < expected.size(); ++i) diff += expected[i] != got.bits[i];
        // pixel centers exactly on an edge may go either way
        EXPECT_LE(diff, 2u) << "trial " << trial;
    }
}

TEST(ProjectBoxMask, SymmetricOnAxis) {
    const auto cam = derive_camera(params(10, 25), 256, 256);
    const Box3D box{{0, 0, 1}, {2, 1.5, 1}, 0.0};
    const auto m = project_box_mask(cam, box).mask;
    for (int y = 0; y < m.height; ++y) {
        int left = 0, right = 0;
        for (int x = 0; x < m.width / 2; ++x) left += m.at(x, y);
        for (int x = m.width / 2; x < m.width; ++x) right += m.at(x, y);
        EXPECT_LE(std::abs(left - right), 1) << "row " << y;
    }
}

TEST(ProjectBoxMask, FullyBehind) {
    const auto cam = derive_camera(params(10, 0), 128, 128);
    const Box3D box{{0, 0, -20}, {1, 1, 1}, 0.0};
    const auto got = project_box_mask(cam, box);
    EXPECT_TRUE(got.fully_behind);
    EXPECT_TRUE(got.mask.empty());
}

TEST(ProjectBoxMask, StraddlingNearPlane) {
    const auto cam = derive_camera(params(10, 0), 128, 128);
    const Box3D box{{0, -0.5, -12}, {1, 1, 1}, 0.0};
    const auto got = project_box_mask(cam, box);
    EXPECT_FALSE(got.fully_behind);
    EXPECT_GT(got.mask.area(), 128u * 64u);
}

TEST(ProjectBoxMask, TranslationMovesCentroidRight) {
    const auto cam = derive_camera(params(10, 30), 256, 256);
    double prev = -1.0;
    for (double x = -3.0; x <= 3.0; x += 0.5) {
        const auto m = project_box_mask(cam, {{x, 0, 1}, {1, 1, 1}, 0.0}).mask;
        const double c = centroid_x(m);
        EXPECT_GT(c, prev);
        prev = c;
    }
}

TEST(ProjectBoxMask, ShrunkBoxIsContained) {
    const auto cam = derive_camera(params(10, 30), 200, 160);
    const Box3D big{{1, 0, 2}, {2, 1.5, 1.2}, 20.0};
    for (double s : {0.9, 0.5, 0.1}) {
        const Box3D small{{1, 0.5 * 1.2 * (1 - s), 2}, {2 * s, 1.5 * s, 1.2 * s}, 20.0};
        const auto a = project_box_mask(cam, big).mask;
        const auto b = project_box_mask(cam, small).mask;
        for (std::size_t i = 0; i < a.bits.size(); ++i) {
            if (b.bits[i]) ASSERT_TRUE(a.bits[i]) << "scale " << s << " pixel " << i;
        }
    }
}

TEST(FillConvexPolygon, MatchesHalfPlanes) {
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> u(-5.0, 45.0);
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<Vec2> pts;
        for (int i = 0; i < 6; ++i) pts.push_back({u(rng), u(rng)});
        const auto hull = oracle::gift_wrap(pts);
        EntityMask2D mask(40, 40);
        fill_convex_polygon(mask, hull);
        const auto expected = oracle::half_plane_fill(hull, 40, 40);
        std::size_t diff = 0;
        for (std::size_t i = 0; i < expected.size(); ++i) diff += expected[i] != mask.bits[i];
        EXPECT_LE(diff, 1u);
    }
}

TEST(MaskExport, PbmRoundTrip) {
    EntityMask2D m(13, 5);
    m.set(0, 0);
    m.set(12, 4);
    m.set(7, 2);
    const std::string pbm = encode_pbm(m);
    EXPECT_EQ(pbm.substr(0, 3), "P4\n");
    // 13 columns pack into 2 bytes per row
    EXPECT_EQ(pbm.size(), std::string("P4\n13 5\n").size() + 10);
    EXPECT_EQ(decode_pbm(pbm), m);
}

TEST(MaskExport, RunLengthsStartWithZeros) {
    const std::vector<std::uint8_t> bits{1, 1, 0, 0, 0, 1};
    const auto runs = run_lengths(bits);
    EXPECT_EQ(runs, (std::vector<std::uint32_t>{0, 2, 3, 1}));
    EXPECT_EQ(expand_runs(runs, bits.size()), bits);

    EntityMask2D m(4, 3);
    m.set(1, 1);
    m.set(2, 1);
    EXPECT_EQ(mask_from_json(mask_to_json(m)), m);
}
