#include <gtest/gtest.h>

#include <random>

#include "dplane/scene.hpp"
#include "oracles.hpp"

using namespace dplane;
using oracle::v2;
using oracle::v3;

namespace {

Scene two_unit_disks() {
  return Scene(2, {ConvexBody::ball(v2(-2, 0), 1.0, 0), ConvexBody::ball(v2(2, 0), 1.0, 1)}, {});
}

Mat diag2(double a, double b) {
  Mat m = Mat::Zero(2, 2);
  m(0, 0) = a;
  m(1, 1) = b;
  return m;
}

}  // namespace

TEST(SupportValue, BallAtOffsetCenter) {
  const auto b = ConvexBody::ball(v2(3, 0), 1.0);
  EXPECT_DOUBLE_EQ(support_value(b, v2(1, 0)), 4.0);
  EXPECT_DOUBLE_EQ(support_value(b, v2(0, 1)), 1.0);
}

TEST(SupportValue, EllipseMatchesBoundarySampling) {
  const ConvexBody e(v2(0, 0), diag2(0.25, 1.0));
  const auto [h, arg] = oracle::support_2d(e.center(), e.shape(), v2(1, 0));
  EXPECT_NEAR(support_value(e, v2(1, 0)), h, 1e-9);
  EXPECT_NEAR(support_value(e, v2(1, 0)), 2.0, 1e-12);
}

TEST(SupportValue, RandomEllipsesMatchBoundarySampling) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int i = 0; i < 5; ++i) {
    Mat a(2, 2);
    a << u(rng), u(rng), u(rng), u(rng);
    const Mat q = a * a.transpose() + 0.5 * Mat::Identity(2, 2);
    const ConvexBody e(v2(u(rng), u(rng)), q);
    const Vec w = v2(u(rng), u(rng)).normalized();
    const auto [h, arg] = oracle::support_2d(e.center(), q, w);
    EXPECT_NEAR(support_value(e, w), h, 1e-8);
  }
}

TEST(SupportValue, RejectsNonUnitDirection) {
  const auto b = ConvexBody::ball(v2(0, 0), 1.0);
  EXPECT_THROW(support_value(b, v2(2, 0)), InputError);
}

TEST(BoundaryPoint, BallExamples) {
  auto p = boundary_point_and_normal(ConvexBody::ball(v2(0, 0), 1.0), v2(0, 1));
  EXPECT_NEAR((p.point - v2(0, 1)).norm(), 0.0, 1e-15);
  EXPECT_NEAR((p.normal - v2(0, 1)).norm(), 0.0, 1e-15);
  p = boundary_point_and_normal(ConvexBody::ball(v2(3, 0), 1.0), v2(0, 1));
  EXPECT_NEAR((p.point - v2(3, 1)).norm(), 0.0, 1e-15);
  EXPECT_NEAR((p.normal - v2(0, 1)).norm(), 0.0, 1e-15);
}

TEST(BoundaryPoint, EllipseMatchesSampledArgmax) {
  const ConvexBody e(v2(0, 0), diag2(0.25, 1.0));
  const auto p = boundary_point_and_normal(e, v2(1, 0));
  const auto [h, arg] = oracle::support_2d(e.center(), e.shape(), v2(1, 0));
  EXPECT_NEAR((p.point - arg).norm(), 0.0, 1e-4);
  EXPECT_NEAR((p.point - v2(2, 0)).norm(), 0.0, 1e-12);
  EXPECT_NEAR((p.normal - v2(1, 0)).norm(), 0.0, 1e-12);
}

TEST(BoundaryPoint, RoundTripsWithSupportAndNormalIsGradient) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> nd;
  Mat q(3, 3);
  q << 2.0, 0.3, 0.1, 0.3, 1.0, 0.2, 0.1, 0.2, 1.5;
  const ConvexBody b(v3(0.2, -0.4, 1.0), q);
  for (int i = 0; i < 500; ++i) {
    const Vec w = v3(nd(rng), nd(rng), nd(rng)).normalized();
    const auto p = boundary_point_and_normal(b, w);
    EXPECT_NEAR(w.dot(p.point), support_value(b, w), 1e-9);
    EXPECT_NEAR(b.quadratic_form(p.point), 1.0, 1e-12);
    const Vec grad = (q * (p.point - b.center())).normalized();
    EXPECT_NEAR((grad - p.normal).norm(), 0.0, 1e-12);
  }
}

TEST(Tangency, SupportHyperplaneTouchesSampledBoundary) {
  std::mt19937_64 rng(9);
  std::normal_distribution<double> nd;
  const ConvexBody e(v2(0.5, -0.3), diag2(0.25, 2.0));
  for (int i = 0; i < 50; ++i) {
    const Vec w = v2(nd(rng), nd(rng)).normalized();
    const auto [h, arg] = oracle::support_2d(e.center(), e.shape(), w, 100000);
    const double gap = h - support_value(e, w);
    EXPECT_LE(gap, 1e-6);
    EXPECT_GE(gap, -1e-6);
  }
}

TEST(Indicator, TwoDiskExamples) {
  const Scene s = two_unit_disks();
  EXPECT_EQ(indicator(s, v2(2, 0)), 1.0);
  EXPECT_EQ(indicator(s, v2(0, 0)), 0.0);
  EXPECT_EQ(indicator(s, v2(2.999, 0)), 1.0);
  EXPECT_EQ(indicator(s, v2(3.001, 0)), 0.0);
}

TEST(Indicator, ZeroOutsideInflatedBoundingBox) {
  const Scene s = two_unit_disks();
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-6.0, 6.0);
  for (int i = 0; i < 20000; ++i) {
    const Vec x = v2(u(rng), u(rng));
    const bool outside = x(0) < -3.0 - 1e-9 || x(0) > 3.0 + 1e-9 || std::abs(x(1)) > 1.0 + 1e-9;
    if (outside) {
      EXPECT_EQ(indicator(s, x), 0.0);
    }
  }
}

TEST(BackgroundValue, Examples) {
  const Scene empty(2, {}, {});
  EXPECT_EQ(background_value(empty, v2(0.3, 0.1)), 0.0);
  const Scene bump(2, {}, {GaussianBump(v2(0, 0), Mat::Identity(2, 2), 1.0)});
  EXPECT_DOUBLE_EQ(background_value(bump, v2(0, 0)), 1.0);
  EXPECT_NEAR(background_value(bump, v2(1, 0)), std::exp(-0.5), 1e-15);
  EXPECT_NEAR(background_value(bump, v2(1, 0)), 0.60653, 1e-5);
}

TEST(SceneValidation, RejectsOverlappingAndTouchingBodies) {
  EXPECT_THROW(Scene(2, {ConvexBody::ball(v2(0, 0), 1.0), ConvexBody::ball(v2(1.5, 0), 1.0)}, {}), ConfigError);
  EXPECT_THROW(Scene(2, {ConvexBody::ball(v2(0, 0), 1.0), ConvexBody::ball(v2(2.0, 0), 1.0)}, {}), ConfigError);
  try {
    Scene(2, {ConvexBody::ball(v2(0, 0), 1.0), ConvexBody::ball(v2(1.5, 0), 1.0)}, {});
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("assumption (A) violated"), std::string::npos);
  }
}

TEST(SceneValidation, SeparationIsAssertable) {
  const Scene s = two_unit_disks();
  EXPECT_NEAR(separation(s.bodies()[0], s.bodies()[1]), 2.0, 1e-9);
  EXPECT_THROW(Scene(2, {ConvexBody::ball(v2(-2, 0), 1.0), ConvexBody::ball(v2(2, 0), 1.0)}, {}, 0.0, 2.5),
               ConfigError);
}

TEST(ConvexBodyInvariants, RejectsNonSpdAndAsymmetricShapes) {
  Mat bad(2, 2);
  bad << 1.0, 0.0, 0.0, -1.0;
  EXPECT_THROW(ConvexBody(v2(0, 0), bad), ConfigError);
  Mat asym(2, 2);
  asym << 1.0, 0.5, 0.0, 1.0;
  EXPECT_THROW(ConvexBody(v2(0, 0), asym), ConfigError);
  EXPECT_THROW(ConvexBody::ball(v2(0, 0), -1.0), ConfigError);
}

TEST(ConvexBodyInvariants, BallIsScaledIdentity) {
  const auto b = ConvexBody::ball(v3(0, 0, 0), 2.0);
  EXPECT_NEAR((b.shape() - Mat::Identity(3, 3) / 4.0).norm(), 0.0, 1e-15);
}
