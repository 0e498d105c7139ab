#include <gtest/gtest.h>

#include "stackplay/common.hpp"
#include "stackplay/geometry.hpp"

using namespace stackplay;

TEST(Euler, RoundTripsThroughMatrix) {
    Rng rng(3);
    for (int i = 0; i < 500; ++i) {
        const Vec3 e(rng.uniform(0, kTwoPi), rng.uniform(-1.5, 1.5), rng.uniform(0, kTwoPi));
        const Mat3 r = euler_to_matrix(e);
        const Mat3 back = euler_to_matrix(matrix_to_euler(r));
        EXPECT_LT((r - back).cwiseAbs().maxCoeff(), 1e-12);
        const Vec3 w = matrix_to_euler(r);
        for (int k = 0; k < 3; ++k) {
            EXPECT_GE(w[k], 0.0);
            EXPECT_LT(w[k], kTwoPi);
        }
    }
}

TEST(Euler, GimbalLockStillReconstructs) {
    const Vec3 e(0.3, kPi / 2.0, 0.0);
    const Mat3 r = euler_to_matrix(e);
    EXPECT_LT((euler_to_matrix(matrix_to_euler(r)) - r).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(Euler, UpOffsetOfTiltAboutX) {
    EXPECT_NEAR(up_offset_of_euler(Vec3(0.0, 0.0, 0.0)), 0.0, 1e-12);
    EXPECT_NEAR(up_offset_of_euler(Vec3(kPi / 2.0, 0.0, 0.0)), kPi / 2.0, 1e-12);
    EXPECT_NEAR(up_offset_of_euler(Vec3(kPi, 0.0, 0.0)), kPi, 1e-12);
    EXPECT_NEAR(wrap_angle(-0.5), kTwoPi - 0.5, 1e-15);
}

TEST(Polygon, ClipOfOffsetSquares) {
    const Polygon a = transformed(rectangle(0.5, 0.5), 0.0, Vec2(0.6, 0.0));
    const Polygon clipped = clip_convex(a, rectangle(0.5, 0.5));
    // [0.1, 0.5] x [-0.5, 0.5]
    EXPECT_NEAR(polygon_area(clipped), 0.4, 1e-12);
    EXPECT_FALSE(inside_with_margin(clipped, Vec2(0.6, 0.0), 0.0));
    EXPECT_TRUE(inside_with_margin(clipped, Vec2(0.3, 0.0), 0.1));
    EXPECT_FALSE(inside_with_margin(clipped, Vec2(0.45, 0.0), 0.1));
}

TEST(Polygon, DisjointClipIsEmpty) {
    const Polygon a = transformed(rectangle(0.5, 0.5), 0.0, Vec2(2.0, 0.0));
    EXPECT_LT(polygon_area(clip_convex(a, rectangle(0.5, 0.5))), 1e-12);
}

TEST(Polygon, HullDropsInteriorPoints) {
    const Polygon hull = convex_hull({{0, 0}, {1, 0}, {1, 1}, {0, 1}, {0.5, 0.5}, {0.5, 0}});
    EXPECT_EQ(hull.size(), 4u);
    EXPECT_NEAR(polygon_area(hull), 1.0, 1e-12);
}

TEST(Polygon, RegularPolygonAreaApproachesDisk) {
    EXPECT_NEAR(polygon_area(regular_polygon(1.0, 256)), kPi, 1e-3);
}

TEST(Segment, MeetsBox) {
    EXPECT_TRUE(segment_meets_box({0.2, 0.0}, {1.2, 0.0}, 0.5, 0.5));
    EXPECT_FALSE(segment_meets_box({0.6, 0.0}, {1.2, 0.0}, 0.5, 0.5));
    EXPECT_TRUE(segment_meets_box({0.0, 0.0}, {0.0, 0.0}, 0.5, 0.5));
    EXPECT_FALSE(segment_meets_box({0.7, 0.7}, {0.7, 0.7}, 0.5, 0.5));
}
