#include <gtest/gtest.h>

#include <numbers>
#include <random>

#include "dplane/microlocal.hpp"
#include "oracles.hpp"

using namespace dplane;
using oracle::v2;
using oracle::v3;

namespace {

Vec random_unit(std::mt19937_64& rng, int n) {
  std::normal_distribution<double> nd;
  Vec v(n);
  for (int i = 0; i < n; ++i) v(i) = nd(rng);
  return v.normalized();
}

ConvexBody random_ellipsoid(std::mt19937_64& rng, int n, const Vec& centre, int label) {
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  Mat a(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) a(i, j) = u(rng);
  return ConvexBody(centre, a * a.transpose() + Mat::Identity(n, n), label);
}

// Distance from a point to the line p + t v (|v| = 1).
double line_distance(const Vec& p, const Vec& v, const Vec& x) {
  const Vec d = x - p;
  return (d - d.dot(v) * v).norm();
}

// Test-side support function of an ellipsoid from its shape matrix.
double support(const ConvexBody& b, const Vec& w) { return w.dot(b.center()) + std::sqrt(w.dot(b.shape().inverse() * w)); }

bool same_flat(const Flat& a, const Flat& b, double tol) {
  if (a.n != b.n || a.d != b.d) return false;
  if ((a.offset - b.offset).norm() > tol) return false;
  for (const Vec& w : a.sigma)
    if ((project_onto_sigma(b, w) - w).norm() > tol) return false;
  return true;
}

}  // namespace

TEST(CanonicalForward, LineChartExample) {
  const auto fcs = canonical_forward({v2(3, 1), v2(0, 1)}, 2, 1);
  ASSERT_EQ(fcs.size(), 1u);
  const FlatCovector& fc = fcs[0];
  EXPECT_NEAR((fc.base.sigma[0].cwiseAbs() - v2(1, 0)).norm(), 0.0, 1e-15);
  EXPECT_NEAR((fc.base.offset - v2(0, 1)).norm(), 0.0, 1e-15);
  EXPECT_NEAR((fc.base.axis - v2(0, 1)).norm(), 0.0, 1e-15);
  EXPECT_NEAR(fc.base.coords(0), 1.0, 1e-15);
  // eta_1 = (y . w_1) eta with w_1 = +-(1, 0).
  EXPECT_NEAR((fc.eta[0] - fc.base.sigma[0].dot(v2(3, 1)) * v2(0, 1)).norm(), 0.0, 1e-15);
  EXPECT_NEAR(fc.eta[0].norm(), 3.0, 1e-15);
  EXPECT_NEAR((fc.xi - v2(0, 1)).norm(), 0.0, 1e-15);
}

TEST(CanonicalForward, OriginBaseHasZeroOffset) {
  std::mt19937_64 rng(1);
  for (int i = 0; i < 20; ++i) {
    const auto fcs = canonical_forward({Vec::Zero(2), random_unit(rng, 2)}, 2, 1);
    EXPECT_NEAR(fcs[0].base.offset.norm(), 0.0, 1e-15);
    EXPECT_NEAR(fcs[0].base.coords(0), 0.0, 1e-15);
  }
}

TEST(CanonicalForward, PlaneChartIsSingleFlat) {
  const auto fcs = canonical_forward({v3(0, 0, 1), v3(0, 0, 1)}, 3, 2);
  ASSERT_EQ(fcs.size(), 1u);
  EXPECT_NEAR((fcs[0].base.axis - v3(0, 0, 1)).norm(), 0.0, 1e-15);
  EXPECT_NEAR(fcs[0].base.coords(0), 1.0, 1e-15);
}

TEST(CanonicalForward, RejectsZeroDirection) {
  EXPECT_THROW(canonical_forward({v2(1, 0), v2(0, 0)}, 2, 1), InputError);
}

TEST(CanonicalAdjoint, InvertsForwardExample) {
  const FlatCovector fc = canonical_forward({v2(3, 1), v2(0, 1)}, 2, 1)[0];
  const auto res = canonical_adjoint(fc);
  ASSERT_TRUE(res.accepted);
  ASSERT_EQ(res.covectors.size(), 1u);
  EXPECT_NEAR((res.covectors[0].base - v2(3, 1)).norm(), 0.0, 1e-14);
  EXPECT_NEAR((res.covectors[0].direction - v2(0, 1)).norm(), 0.0, 1e-15);
}

TEST(CanonicalAdjoint, ZeroFrameComponentsGiveOffset) {
  FlatCovector fc = canonical_forward({v2(0, 0.7), v2(0, 1)}, 2, 1)[0];
  fc.eta[0].setZero();
  const auto res = canonical_adjoint(fc);
  ASSERT_TRUE(res.accepted);
  EXPECT_NEAR((res.covectors[0].base - fc.base.offset).norm(), 0.0, 1e-15);
}

TEST(CanonicalAdjoint, RejectsNonCollinearComponents) {
  FlatCovector fc = canonical_forward({v3(0.2, 0.1, 1.0), v3(0, 0, 1)}, 3, 1)[0];
  fc.eta[0] = fc.base.perp[0] + 0.5 * fc.base.perp[1];
  fc.xi = fc.base.perp[1];
  const auto res = canonical_adjoint(fc);
  EXPECT_FALSE(res.accepted);
  EXPECT_TRUE(res.covectors.empty());
}

TEST(CanonicalRelation, RoundTripOnBoundaryCovectors) {
  std::mt19937_64 rng(2024);
  for (auto [n, d] : {std::pair{2, 1}, {3, 1}, {3, 2}}) {
    const ConvexBody body = random_ellipsoid(rng, n, Vec::Constant(n, 0.4), 0);
    double worst = 0.0;
    for (int i = 0; i < 1000; ++i) {
      const BoundaryPoint bp = boundary_point_and_normal(body, random_unit(rng, n));
      const double scale = 0.5 + 2.0 * std::uniform_real_distribution<double>()(rng);
      const Covector cov{bp.point, scale * bp.normal};
      for (const auto& fc : canonical_forward(cov, n, d, 4)) {
        const auto res = canonical_adjoint(fc);
        ASSERT_TRUE(res.accepted);
        worst = std::max(worst, (res.covectors[0].base - cov.base).norm());
        worst = std::max(worst, (res.covectors[0].direction - cov.direction).norm());
      }
    }
    EXPECT_LT(worst, 1e-9) << "n=" << n << " d=" << d;
  }
}

TEST(CanonicalRelation, ForwardLandsOnSingularLocus) {
  std::mt19937_64 rng(77);
  for (auto [n, d] : {std::pair{2, 1}, {3, 1}, {3, 2}}) {
    const ConvexBody body = random_ellipsoid(rng, n, Vec::Constant(n, -0.3), 0);
    double worst = 0.0;
    for (int i = 0; i < 1000; ++i) {
      const BoundaryPoint bp = boundary_point_and_normal(body, random_unit(rng, n));
      for (const auto& fc : canonical_forward({bp.point, bp.normal}, n, d, 4)) {
        const Flat& f = fc.base;
        if (d == n - 1) {
          const Vec& w = f.perp[0];
          const double s = f.offset.dot(w);
          worst = std::max(worst, std::min(std::abs(s - support(body, w)), std::abs(s + support(body, (-w).eval()))));
        } else {
          // min over the line of the quadratic form equals 1 at tangency.
          const Vec& v = f.sigma[0];
          double lo = 1e300;
          const Vec dp = f.offset - body.center();
          const double t0 = -dp.dot(body.shape() * v) / v.dot(body.shape() * v);
          const Vec x = dp + t0 * v;
          lo = x.dot(body.shape() * x);
          worst = std::max(worst, std::abs(lo - 1.0));
        }
      }
    }
    EXPECT_LT(worst, 1e-8) << "n=" << n << " d=" << d;
  }
}

TEST(CanonicalRelation, ConicHomogeneity) {
  const Covector cov{v3(0.3, -0.2, 0.9), v3(0.1, 0.2, 1.0)};
  for (auto [n, d] : {std::pair{3, 1}, {3, 2}}) {
    const auto a = canonical_forward(cov, n, d, 6);
    const auto b = canonical_forward({cov.base, 2.5 * cov.direction}, n, d, 6);
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
      EXPECT_TRUE(same_flat(a[i].base, b[i].base, 1e-14));
      const Eigen::VectorXd ca = a[i].chart_components();
      EXPECT_LE((b[i].chart_components() - 2.5 * ca).norm(), 1e-14 * ca.norm());
    }
  }
}

TEST(CanonicalRelation, CotangentComponentsAreNormalToSigma) {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 200; ++i) {
    const Covector cov{v3(0.5, 0.1, -0.4) + random_unit(rng, 3), random_unit(rng, 3)};
    for (auto [n, d] : {std::pair{3, 1}, {3, 2}})
      for (const auto& fc : canonical_forward(cov, n, d, 5)) {
        for (const Vec& w : fc.base.sigma) {
          for (const Vec& e : fc.eta) EXPECT_NEAR(e.dot(w), 0.0, 1e-10);
          EXPECT_NEAR(fc.xi.dot(w), 0.0, 1e-10);
        }
        EXPECT_GT(fc.chart_components().norm(), 0.0);
      }
  }
}

TEST(SingularLocus, BallExamples) {
  ChartSpec c;
  c.direction_count = 16;
  c.offset_counts = {32};
  const auto unit = singular_locus(ConvexBody::ball(v2(0, 0), 1.0), c);
  ASSERT_EQ(unit.points.size(), 32u);
  for (const auto& p : unit.points) EXPECT_NEAR(std::abs(p.coords(0)), 1.0, 1e-14);
  const auto shifted = singular_locus(ConvexBody::ball(v2(3, 0), 1.0), c);
  const auto dirs = sample_directions(c);
  for (const auto& p : shifted.points) {
    const double base = dirs[p.direction_index].axis.dot(v2(3, 0));
    EXPECT_NEAR(std::abs(p.coords(0) - base), 1.0, 1e-14);
    if (p.direction_index == 8) {
      EXPECT_NEAR(std::abs(p.coords(0)), 1.0, 1e-14);
    }
  }
  ChartSpec c3 = c;
  c3.n = 3;
  c3.d = 2;
  c3.direction_count = 50;
  for (const auto& p : singular_locus(ConvexBody::ball(v3(0, 0, 0), 1.0), c3).points)
    EXPECT_NEAR(std::abs(p.coords(0)), 1.0, 1e-14);
}

TEST(SingularLocus, SampledFlatsAreTangent) {
  std::mt19937_64 rng(6);
  for (auto [n, d] : {std::pair{2, 1}, {3, 1}, {3, 2}}) {
    ChartSpec c;
    c.n = n;
    c.d = d;
    c.direction_count = 24;
    c.offset_counts.assign(n - d, 16);
    const ConvexBody body = random_ellipsoid(rng, n, Vec::Constant(n, 0.2), 0);
    const auto locus = singular_locus(body, c, 32);
    const auto dirs = sample_directions(c);
    std::vector<int> per_dir(c.direction_count, 0);
    for (const auto& p : locus.points) {
      const Flat f = chart_flat(c, dirs[p.direction_index], p.coords);
      EXPECT_LT(std::abs(tangency_residual(body, f)), 1e-8);
      EXPECT_TRUE(flat_contains(f, p.tangency, 1e-9));
      for (const Vec& w : f.sigma) EXPECT_NEAR(p.normal.dot(w), 0.0, 1e-10);
      ++per_dir[p.direction_index];
    }
    // Codimension one: a point pair per direction on a 1-axis offset grid,
    // a sampled closed curve on a 2-axis offset grid.
    for (int k : per_dir) EXPECT_EQ(k, n - d == 1 ? 2 : 32);
    EXPECT_EQ(c.dimension() - 1, (d + 1) * (n - d) - 1);
  }
}

TEST(CommonTangentHyperplanes, TwoUnitDisks) {
  const auto lines = common_tangent_hyperplanes(ConvexBody::ball(v2(-2, 0), 1.0, 0), ConvexBody::ball(v2(2, 0), 1.0, 1));
  ASSERT_EQ(lines.size(), 4u);
  const double r3 = std::sqrt(3.0) / 2.0;
  const std::vector<std::pair<Vec, double>> expected = {
      {v2(-0.5, r3), 0.0}, {v2(0, 1), -1.0}, {v2(0, 1), 1.0}, {v2(0.5, r3), 0.0}};
  for (const auto& [w, s] : expected) {
    bool found = false;
    for (const auto& t : lines)
      if ((t.normal - w).norm() < 1e-8 && std::abs(t.offset - s) < 1e-8) found = true;
    EXPECT_TRUE(found) << "normal (" << w(0) << ", " << w(1) << ") s=" << s;
  }
  for (const auto& t : lines) {
    EXPECT_EQ(t.kind, 1);
    EXPECT_NEAR(std::abs(t.y_j.dot(t.normal) - t.offset), 0.0, 1e-12);
    EXPECT_NEAR(std::abs(t.y_k.dot(t.normal) - t.offset), 0.0, 1e-12);
  }
}

TEST(CommonTangentHyperplanes, EqualRadiiExternalTangentsAreParallelToCentreLine) {
  std::mt19937_64 rng(10);
  for (int i = 0; i < 10; ++i) {
    const Vec cj = 3.0 * random_unit(rng, 2), ck = -cj + 0.2 * random_unit(rng, 2);
    const ConvexBody a = ConvexBody::ball(cj, 0.8, 0), b = ConvexBody::ball(ck, 0.8, 1);
    const auto lines = common_tangent_hyperplanes(a, b);
    ASSERT_EQ(lines.size(), 4u);
    int external = 0;
    for (const auto& t : lines)
      if (t.eta_j.dot(t.eta_k) > 0.0) {
        ++external;
        EXPECT_NEAR(t.normal.dot(cj - ck), 0.0, 1e-9);
      }
    EXPECT_EQ(external, 2);
  }
}

TEST(CommonTangentHyperplanes, EllipsesAreTangentToBoth) {
  std::mt19937_64 rng(15);
  for (int i = 0; i < 10; ++i) {
    const ConvexBody a = random_ellipsoid(rng, 2, v2(-2.5, 0.3), 0);
    const ConvexBody b = random_ellipsoid(rng, 2, v2(2.2, -0.4), 1);
    const auto lines = common_tangent_hyperplanes(a, b);
    EXPECT_EQ(lines.size(), 4u);
    for (const auto& t : lines) {
      EXPECT_LT(std::abs(tangency_residual(a, t.flat())), 1e-8);
      EXPECT_LT(std::abs(tangency_residual(b, t.flat())), 1e-8);
    }
  }
}

TEST(CommonTangentHyperplanes, ThreeDimensionalExternalFamily) {
  const auto planes = common_tangent_hyperplanes(ConvexBody::ball(v3(-2, 0, 0), 1.0, 0), ConvexBody::ball(v3(2, 0, 0), 1.0, 1), 64);
  int external = 0;
  for (const auto& t : planes) {
    EXPECT_LT(std::abs(std::abs(t.offset - t.normal.dot(v3(-2, 0, 0))) - 1.0), 1e-8);
    EXPECT_LT(std::abs(std::abs(t.offset - t.normal.dot(v3(2, 0, 0))) - 1.0), 1e-8);
    if (t.eta_j.dot(t.eta_k) > 0.0) {
      ++external;
      EXPECT_LT(std::abs(t.normal(0)), 1e-8);
      EXPECT_LT(std::abs(std::abs(t.offset) - 1.0), 1e-8);
    }
  }
  EXPECT_GE(external, 64);
  EXPECT_THROW(common_tangent_hyperplanes(ConvexBody::ball(v3(-2, 0, 0), 1.0), ConvexBody::ball(v3(2, 0, 0), 1.0), 16), InputError);
}

TEST(CommonTangentHyperplanes, OverlappingBodiesRejected) {
  try {
    common_tangent_hyperplanes(ConvexBody::ball(v2(0, 0), 1.0), ConvexBody::ball(v2(1, 0), 1.0));
    FAIL() << "expected a ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("assumption (A) violated"), std::string::npos);
  }
}

TEST(CommonTangentLines, InPlaneLineOfExternalPlane) {
  const ConvexBody a = ConvexBody::ball(v3(-2, 0, 0), 1.0, 0), b = ConvexBody::ball(v3(2, 0, 0), 1.0, 1);
  for (const auto& plane : common_tangent_hyperplanes(a, b, 64)) {
    if (!(std::abs(plane.normal(1) - 1.0) < 1e-12 && std::abs(plane.offset - 1.0) < 1e-12)) continue;
    const TangentFlat line = in_plane_line(plane);
    EXPECT_TRUE(line.in_plane);
    EXPECT_NEAR(line_distance(line.point, line.direction, a.center()), 1.0, 1e-12);
    EXPECT_NEAR(line_distance(line.point, line.direction, b.center()), 1.0, 1e-12);
    EXPECT_NEAR((line.point - v3(0, 1, 0)).norm(), 0.0, 1e-12);
    EXPECT_NEAR((line.eta_j - v3(0, 1, 0)).norm(), 0.0, 1e-12);
    EXPECT_NEAR((line.eta_k - v3(0, 1, 0)).norm(), 0.0, 1e-12);
    EXPECT_EQ(line.allowed_conormals().size(), 1u);
    return;
  }
  FAIL() << "plane y = 1 not in the sampled family";
}

TEST(CommonTangentLines, NewtonSolutionsAreTangentAndIncludeSkewLines) {
  const ConvexBody a = ConvexBody::ball(v3(-2, 0, 0), 1.0, 0), b = ConvexBody::ball(v3(2, 0, 0), 1.0, 1);
  const auto set = common_tangent_codim2_flats(a, b, 64, 5);
  ASSERT_FALSE(set.lines.empty());
  EXPECT_TRUE(set.warnings.empty());
  int skew = 0;
  for (const auto& t : set.lines) {
    EXPECT_EQ(t.kind, 2);
    EXPECT_LT(std::abs(line_distance(t.point, t.direction, a.center()) - 1.0), 1e-8);
    EXPECT_LT(std::abs(line_distance(t.point, t.direction, b.center()) - 1.0), 1e-8);
    EXPECT_NEAR(t.eta_j.dot(t.direction), 0.0, 1e-8);
    EXPECT_NEAR(t.eta_k.dot(t.direction), 0.0, 1e-8);
    EXPECT_NEAR((t.eta_j - (t.y_j - a.center()).normalized()).norm(), 0.0, 1e-8);
    EXPECT_NEAR((t.eta_k - (t.y_k - b.center()).normalized()).norm(), 0.0, 1e-8);
    const bool parallel = t.eta_j.head<3>().cross(t.eta_k.head<3>()).norm() < 1e-6;
    EXPECT_EQ(t.in_plane, parallel);
    EXPECT_EQ(t.allowed_conormals().size(), t.in_plane ? 1u : 2u);
    if (!t.in_plane) ++skew;
  }
  EXPECT_GT(skew, 0);
}

TEST(CommonTangentLines, DeterministicForSeed) {
  const ConvexBody a = ConvexBody::ball(v3(-2, 0, 0), 1.0, 0), b = ConvexBody::ball(v3(2, 0, 0), 1.0, 1);
  const auto x = common_tangent_codim2_flats(a, b, 32, 9), y = common_tangent_codim2_flats(a, b, 32, 9);
  ASSERT_EQ(x.lines.size(), y.lines.size());
  for (std::size_t i = 0; i < x.lines.size(); ++i) {
    EXPECT_EQ(x.lines[i].point, y.lines[i].point);
    EXPECT_EQ(x.lines[i].direction, y.lines[i].direction);
  }
  EXPECT_THROW(common_tangent_codim2_flats(ConvexBody::ball(v2(0, 0), 1.0), ConvexBody::ball(v2(3, 0), 1.0), 8), ConfigError);
}

TEST(IntersectionReport, TwoDisksInLineChart) {
  ChartSpec c;
  c.direction_count = 90;
  c.offset_counts = {64};
  const auto rep = intersection_report(ConvexBody::ball(v2(-2, 0), 1.0, 0), ConvexBody::ball(v2(2, 0), 1.0, 1), c);
  EXPECT_EQ(rep.samples.size(), 4u);
  EXPECT_EQ(rep.type1, 4);
  EXPECT_EQ(rep.type2, 0);
  EXPECT_TRUE(rep.all_transversal);
  EXPECT_TRUE(rep.consistent);
}

TEST(IntersectionReport, BallsInPlaneAndLineCharts) {
  const ConvexBody a = ConvexBody::ball(v3(-2, 0, 0), 1.0, 0), b = ConvexBody::ball(v3(2, 0, 0), 1.0, 1);
  ChartSpec planes;
  planes.n = 3;
  planes.d = 2;
  planes.direction_count = 64;
  planes.offset_counts = {32};
  const auto rp = intersection_report(a, b, planes);
  EXPECT_GT(rp.samples.size(), 0u);
  EXPECT_EQ(rp.type2, 0);
  EXPECT_TRUE(rp.consistent);
  EXPECT_TRUE(rp.all_transversal);
  ChartSpec lines = planes;
  lines.d = 1;
  lines.offset_counts = {16, 16};
  const auto rl = intersection_report(a, b, lines);
  EXPECT_GT(rl.type1, 0);
  EXPECT_GT(rl.type2, 0);
  EXPECT_TRUE(rl.all_transversal);
  for (const auto& s : rl.samples) EXPECT_GT(s.min_singular_value, 1e-6);
}

TEST(IntersectionReport, KindOneFlatsMapOntoBothLoci) {
  const ConvexBody a = ConvexBody::ball(v2(-2, 0), 1.0, 0), b = ConvexBody::ball(v2(2, 0), 1.0, 1);
  for (const auto& t : common_tangent_hyperplanes(a, b)) {
    const Flat target = t.flat();
    const Flat from_j = canonical_forward({t.y_j, t.eta_j}, 2, 1)[0].base;
    const Flat from_k = canonical_forward({t.y_k, t.eta_k}, 2, 1)[0].base;
    EXPECT_TRUE(same_flat(from_j, target, 1e-10));
    EXPECT_TRUE(same_flat(from_k, target, 1e-10));
    EXPECT_LT(std::abs(tangency_residual(a, target)), 1e-8);
    EXPECT_LT(std::abs(tangency_residual(b, target)), 1e-8);
  }
}

TEST(Atlas, LinesOnlyForCodimensionTwo) {
  const Scene s2(2, {ConvexBody::ball(v2(-2, 0), 1.0, 0), ConvexBody::ball(v2(2, 0), 1.0, 1)}, {});
  const Atlas a2 = build_atlas(s2, 1);
  EXPECT_EQ(a2.hyperplanes.size(), 4u);
  EXPECT_TRUE(a2.lines.empty());
  const Scene s3(3, {ConvexBody::ball(v3(-2, 0, 0), 1.0, 0), ConvexBody::ball(v3(2, 0, 0), 1.0, 1)}, {});
  EXPECT_TRUE(build_atlas(s3, 2, 64, 16).lines.empty());
  EXPECT_FALSE(build_atlas(s3, 1, 64, 16).lines.empty());
}
