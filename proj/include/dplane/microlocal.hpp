#pragma once

#include <boost/math/tools/toms748_solve.hpp>

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <tuple>
#include <vector>

#include "dplane/errors.hpp"
#include "dplane/grassmannian.hpp"
#include "dplane/scene.hpp"

namespace dplane {

// (y, eta) in T*R^n \ 0.
struct Covector {
  Vec base;
  Vec direction;
};

// Cotangent data (eta_1..eta_d, xi) at a flat, all in sigma^perp.
struct FlatCovector {
  Flat base;
  std::vector<Vec> eta;
  Vec xi;

  // Components on the perp frame, stacked as (eta_1, .., eta_d, xi).
  Eigen::VectorXd chart_components() const {
    const int axes = base.n - base.d;
    Eigen::VectorXd c((base.d + 1) * axes);
    for (int i = 0; i <= base.d; ++i) {
      const Vec& v = i < base.d ? eta[i] : xi;
      for (int a = 0; a < axes; ++a) c(i * axes + a) = v.dot(base.perp[a]);
    }
    return c;
  }
};

// Cotangent vector of the canonical relation over `flat` for a covector whose
// base lies on the flat and whose direction is normal to sigma:
// eta_i = (y . w_i) eta, xi = eta.
inline FlatCovector cotangent_at(const Flat& flat, const Covector& cov) {
  FlatCovector fc;
  fc.base = flat;
  for (const Vec& w : flat.sigma) fc.eta.push_back(cov.base.dot(w) * cov.direction);
  fc.xi = cov.direction;
  return fc;
}

// Flats sigma subset eta^perp through y with their cotangent data. The family
// is a single flat for hyperplanes and for (2,1); for (3,1) it is the circle
// of line directions in eta^perp, sampled at `family_samples` angles in [0, pi).
inline std::vector<FlatCovector> canonical_forward(const Covector& cov, int n, int d,
                                                   int family_samples = 16) {
  const ChartKind kind = chart_kind(n, d);
  if (cov.base.size() != n || cov.direction.size() != n)
    throw InputError("covector dimension differs from chart");
  if (!(cov.direction.norm() > 0.0)) throw InputError("covector direction must be nonzero");
  const Vec unit = cov.direction.normalized();
  std::vector<FlatCovector> out;
  switch (kind) {
    case ChartKind::kLine2: {
      Vec t(2);
      t << unit(1), -unit(0);
      out.push_back(cotangent_at(Flat::through(cov.base, {t}), cov));
      break;
    }
    case ChartKind::kPlane3: {
      auto [e1, e2] = stable_frame_of_orthocomplement(unit);
      out.push_back(cotangent_at(Flat::through(cov.base, {e1, e2}), cov));
      break;
    }
    case ChartKind::kLine3: {
      if (family_samples < 1) throw InputError("family_samples must be positive");
      auto [e1, e2] = stable_frame_of_orthocomplement(unit);
      for (int m = 0; m < family_samples; ++m) {
        const double phi = std::numbers::pi * m / family_samples;
        const Vec w = std::cos(phi) * e1 + std::sin(phi) * e2;
        out.push_back(cotangent_at(Flat::through(cov.base, {w}), cov));
      }
      break;
    }
  }
  return out;
}

struct AdjointResult {
  std::vector<Covector> covectors;
  bool accepted = false;
};

// Inverse of canonical_forward on the accepted cone eta_i = t_i xi:
// y = x'' + sum_i t_i w_i with direction xi.
inline AdjointResult canonical_adjoint(const FlatCovector& fc, double tol = 1e-8) {
  AdjointResult res;
  const double xi2 = fc.xi.squaredNorm();
  if (!(xi2 > 0.0)) return res;
  Vec y = fc.base.offset;
  for (std::size_t i = 0; i < fc.eta.size(); ++i) {
    const double t = fc.eta[i].dot(fc.xi) / xi2;
    const double scale = std::max({1.0, fc.eta[i].norm(), std::sqrt(xi2)});
    if ((fc.eta[i] - t * fc.xi).norm() > tol * scale) return res;
    y += t * fc.base.sigma[i];
  }
  res.accepted = true;
  res.covectors.push_back({y, fc.xi});
  return res;
}

// Tangency defect of a flat against a body: zero iff the flat touches the
// boundary. Lines: sqrt(min over the line of the quadratic form) - 1;
// planes: |s - w.c| / h(w) - 1.
inline double tangency_residual(const ConvexBody& body, const Flat& flat) {
  if (flat.d == 1) {
    const Vec& v = flat.sigma[0];
    const Vec dp = flat.offset - body.center();
    const Vec qv = body.shape() * v;
    const double a = v.dot(qv);
    const double b = dp.dot(qv);
    const double c = dp.dot(body.shape() * dp);
    return std::sqrt(std::max(0.0, c - b * b / a)) - 1.0;
  }
  const Vec& w = flat.perp[0];
  return std::abs(flat.offset.dot(w) - w.dot(body.center())) / body.centered_support(w) - 1.0;
}

struct LocusPoint {
  int direction_index = 0;
  Vec coords;     // chart offset coordinates
  Vec tangency;   // y on the boundary
  Vec normal;     // outward unit normal at y
};

// Flats tangent to the boundary of one body, sampled over a chart.
struct SingularLocus {
  int label = 0;
  ChartSpec chart;
  std::vector<LocusPoint> points;
};

// Hyperplane charts: the two branches s = w.c +- h(w) for each direction.
// (3,1): for each line direction, the boundary of the body's shadow on
// w^perp sampled at `per_direction` in-plane normals.
inline SingularLocus singular_locus(const ConvexBody& body, const ChartSpec& chart,
                                    int per_direction = 64) {
  chart.validate();
  if (body.dimension() != chart.n) throw ConfigError("body dimension differs from chart");
  SingularLocus locus;
  locus.label = body.label();
  locus.chart = chart;
  const auto dirs = sample_directions(chart);
  for (int k = 0; k < static_cast<int>(dirs.size()); ++k) {
    const DirectionSample& dir = dirs[k];
    if (chart.kind() != ChartKind::kLine3) {
      for (double sign : {1.0, -1.0}) {
        const Vec nu = sign * dir.axis;
        const BoundaryPoint bp = boundary_point_and_normal(body, nu);
        Vec c(1);
        c(0) = bp.point.dot(dir.axis);
        locus.points.push_back({k, c, bp.point, bp.normal});
      }
    } else {
      for (int m = 0; m < per_direction; ++m) {
        const double psi = 2.0 * std::numbers::pi * m / per_direction;
        const Vec nu = std::cos(psi) * dir.perp[0] + std::sin(psi) * dir.perp[1];
        const BoundaryPoint bp = boundary_point_and_normal(body, nu);
        Vec c(2);
        c << bp.point.dot(dir.perp[0]), bp.point.dot(dir.perp[1]);
        locus.points.push_back({k, c, bp.point, bp.normal});
      }
    }
  }
  return locus;
}

// A flat tangent to two bodies: kind 1 is a common tangent hyperplane, kind 2
// a common tangent (n-2)-plane (a line in R^3).
struct TangentFlat {
  int j = 0;
  int k = 1;
  int kind = 1;
  Vec normal;        // kind 1: canonical unit normal
  double offset = 0; // kind 1: s with x . normal = s
  Vec point;         // kind 2: point on the line closest to the origin
  Vec direction;     // kind 2: canonical unit direction
  Vec y_j, y_k;      // tangency points
  Vec eta_j, eta_k;  // outward unit normals at the tangency points
  bool in_plane = false;  // kind 2: eta_j parallel to eta_k

  // Allowed conormal lines: the common normal for kind 1, both tangency
  // normals for kind 2 (one line when in_plane).
  std::vector<Vec> allowed_conormals() const {
    if (kind == 1 || in_plane) return {eta_j};
    return {eta_j, eta_k};
  }

  Flat flat() const {
    if (kind == 1) {
      Vec c(1);
      c(0) = offset;
      return Flat::from_chart(static_cast<int>(normal.size()), static_cast<int>(normal.size()) - 1,
                              normal, c);
    }
    return Flat::through(point, {direction});
  }
};

namespace detail {

inline bool parallel(const Vec& a, const Vec& b, double tol) {
  if (a.size() == 2) return std::abs(a(0) * b(1) - a(1) * b(0)) < tol;
  return a.head<3>().cross(b.head<3>()).norm() < tol;
}

inline void require_disjoint(const ConvexBody& a, const ConvexBody& b) {
  if (a.dimension() != b.dimension()) throw ConfigError("bodies have different dimensions");
  if (!(separation(a, b) > 0.0))
    throw ConfigError("assumption (A) violated: bodies overlap or touch");
}

// Roots of a continuous function on [lo, hi] via a sign-change scan and TOMS 748.
template <class F>
std::vector<double> scan_roots(F&& f, double lo, double hi, int samples) {
  std::vector<double> roots;
  double x0 = lo, f0 = f(lo);
  for (int i = 1; i <= samples; ++i) {
    const double x1 = lo + (hi - lo) * i / samples;
    const double f1 = f(x1);
    if (f0 == 0.0) {
      roots.push_back(x0);
    } else if (f0 * f1 < 0.0) {
      std::uintmax_t iters = 200;
      auto [a, b] = boost::math::tools::toms748_solve(
          f, x0, x1, f0, f1, [](double u, double v) { return std::abs(u - v) < 1e-15; }, iters);
      roots.push_back(0.5 * (a + b));
    }
    x0 = x1;
    f0 = f1;
  }
  return roots;
}

inline TangentFlat make_kind1(const ConvexBody& bj, const ConvexBody& bk, Vec w, double sign_k) {
  TangentFlat t;
  t.j = bj.label();
  t.k = bk.label();
  t.kind = 1;
  const BoundaryPoint pj = boundary_point_and_normal(bj, w);
  const BoundaryPoint pk = boundary_point_and_normal(bk, (sign_k * w).eval());
  t.y_j = pj.point;
  t.y_k = pk.point;
  t.eta_j = pj.normal;
  t.eta_k = pk.normal;
  double s = pj.point.dot(w);
  if (!is_canonical(w)) {
    w = -w;
    s = -s;
  }
  t.normal = w;
  t.offset = s;
  t.in_plane = true;
  return t;
}

}  // namespace detail

// All hyperplanes tangent to both bodies, s = w.c_j + h_j(w) = w.c_k +- h_k(w).
// n = 2: the finite set of common tangent lines. n = 3: per sign choice the
// closed curve of normals, swept over `samples` meridians about the center
// line.
inline std::vector<TangentFlat> common_tangent_hyperplanes(const ConvexBody& bj,
                                                           const ConvexBody& bk,
                                                           int samples = 128) {
  detail::require_disjoint(bj, bk);
  const int n = bj.dimension();
  const Vec dc = bj.center() - bk.center();
  std::vector<TangentFlat> out;
  for (double sign_k : {1.0, -1.0}) {
    auto g = [&](const Vec& w) {
      return w.dot(dc) + bj.centered_support(w) - sign_k * bk.centered_support(w);
    };
    if (n == 2) {
      auto gt = [&](double t) {
        Vec w(2);
        w << std::cos(t), std::sin(t);
        return g(w);
      };
      // Scan a period shifted off the grid so roots at 0 are bracketed.
      const double lo = -0.5 * std::numbers::pi / 1024;
      for (double t : detail::scan_roots(gt, lo, lo + 2.0 * std::numbers::pi, 2048)) {
        Vec w(2);
        w << std::cos(t), std::sin(t);
        out.push_back(detail::make_kind1(bj, bk, w, sign_k));
      }
    } else {
      if (samples < 64) throw InputError("3D tangent-plane traces need >= 64 samples");
      const Vec a = (-dc).normalized();
      auto [p, q] = stable_frame_of_orthocomplement(a);
      for (int m = 0; m < samples; ++m) {
        const double phi = 2.0 * std::numbers::pi * m / samples;
        const Vec side = std::cos(phi) * p + std::sin(phi) * q;
        auto gb = [&](double beta) {
          return g((std::cos(beta) * a + std::sin(beta) * side).eval());
        };
        for (double beta : detail::scan_roots(gb, 1e-9, std::numbers::pi - 1e-9, 512)) {
          const Vec w = std::cos(beta) * a + std::sin(beta) * side;
          out.push_back(detail::make_kind1(bj, bk, w, sign_k));
        }
      }
    }
  }
  if (n == 2) {
    std::sort(out.begin(), out.end(), [](const TangentFlat& x, const TangentFlat& y) {
      return std::make_tuple(x.normal(0), x.normal(1), x.offset) <
             std::make_tuple(y.normal(0), y.normal(1), y.offset);
    });
    std::vector<TangentFlat> unique;
    for (const auto& t : out)
      if (unique.empty() || (unique.back().normal - t.normal).norm() > 1e-9 ||
          std::abs(unique.back().offset - t.offset) > 1e-9)
        unique.push_back(t);
    out = std::move(unique);
  }
  return out;
}

namespace detail {

// Residual sqrt-free tangency defect (min quadratic form - 1) of the line
// p + t v and its gradient in (p, v).
inline double line_defect(const ConvexBody& b, const Vec& p, const Vec& v, Eigen::Matrix<double, 6, 1>* grad) {
  const Eigen::Vector3d dp = (p - b.center()).head<3>();
  const Eigen::Vector3d vv = v.head<3>();
  const Eigen::Matrix3d q = b.shape().topLeftCorner<3, 3>();
  const Eigen::Vector3d qv = q * vv;
  const Eigen::Vector3d qd = q * dp;
  const double a = vv.dot(qv);
  const double bb = dp.dot(qv);
  const double c = dp.dot(qd);
  if (grad) {
    grad->head<3>() = 2.0 * qd - 2.0 * (bb / a) * qv;
    grad->tail<3>() = -2.0 * (bb / a) * qd + 2.0 * (bb * bb / (a * a)) * qv;
  }
  return c - bb * bb / a - 1.0;
}

inline void canonical_line(Vec& p, Vec& v) {
  v.normalize();
  if (!is_canonical(v)) v = -v;
  p -= p.dot(v) * v;
}

}  // namespace detail

// Damped Gauss-Newton (minimal-norm steps) from the line p + t v onto the
// 2-parameter family of lines tangent to both bodies. Returns nothing if the
// defects do not drop below 1e-13 within 100 iterations.
inline std::optional<TangentFlat> refine_tangent_line(const ConvexBody& bj, const ConvexBody& bk,
                                                      Vec p, Vec v) {
  if (bj.dimension() != 3) throw InputError("tangent lines are computed in R^3");
  detail::canonical_line(p, v);
  using Vec6 = Eigen::Matrix<double, 6, 1>;
  auto residual = [&](const Vec& pp, const Vec& vv, Eigen::Matrix<double, 2, 6>* jac) {
    Vec6 gj, gk;
    Eigen::Vector2d r(detail::line_defect(bj, pp, vv, jac ? &gj : nullptr),
                      detail::line_defect(bk, pp, vv, jac ? &gk : nullptr));
    if (jac) {
      jac->row(0) = gj.transpose();
      jac->row(1) = gk.transpose();
    }
    return r;
  };
  bool converged = false;
  for (int iter = 0; iter < 100; ++iter) {
    Eigen::Matrix<double, 2, 6> jac;
    const Eigen::Vector2d r = residual(p, v, &jac);
    if (r.cwiseAbs().maxCoeff() < 1e-13) {
      converged = true;
      break;
    }
    const Eigen::Matrix2d jjt = jac * jac.transpose();
    if (std::abs(jjt.determinant()) < 1e-300) break;
    const Vec6 step = -jac.transpose() * jjt.ldlt().solve(r);
    double lambda = 1.0;
    bool accepted = false;
    for (int ls = 0; ls < 30; ++ls) {
      Vec pn = p + lambda * step.head<3>();
      Vec vn = v + lambda * step.tail<3>();
      detail::canonical_line(pn, vn);
      if (residual(pn, vn, nullptr).norm() < r.norm() * (1.0 - 1e-4 * lambda)) {
        p = pn;
        v = vn;
        accepted = true;
        break;
      }
      lambda *= 0.5;
    }
    if (!accepted) break;
  }
  if (!converged && residual(p, v, nullptr).cwiseAbs().maxCoeff() >= 1e-13) return std::nullopt;

  TangentFlat t;
  t.j = bj.label();
  t.k = bk.label();
  t.kind = 2;
  t.point = p;
  t.direction = v;
  auto touch = [&](const ConvexBody& b, Vec& y, Vec& eta) {
    const Vec qv = b.shape() * v;
    const double tt = -(p - b.center()).dot(qv) / v.dot(qv);
    y = p + tt * v;
    eta = (b.shape() * (y - b.center())).normalized();
  };
  touch(bj, t.y_j, t.eta_j);
  touch(bk, t.y_k, t.eta_k);
  t.in_plane = detail::parallel(t.eta_j, t.eta_k, 1e-6);
  return t;
}

struct TangentLineSet {
  std::vector<TangentFlat> lines;
  int attempts = 0;
  std::vector<std::string> warnings;
};

// Samples lines tangent to both bodies (n = 3) from `count` seeded secants
// through random boundary points of each body. Sorted canonically and
// deduplicated.
inline TangentLineSet common_tangent_codim2_flats(const ConvexBody& bj, const ConvexBody& bk,
                                                  int count, std::uint64_t seed = 1) {
  if (bj.dimension() != 3) throw ConfigError("codimension-2 tangent flats need n = 3");
  detail::require_disjoint(bj, bk);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  auto random_unit = [&] {
    Vec w(3);
    do {
      w << normal(rng), normal(rng), normal(rng);
    } while (w.norm() < 1e-6);
    return Vec(w.normalized());
  };
  TangentLineSet set;
  set.attempts = count;
  std::vector<TangentFlat> found;
  for (int i = 0; i < count; ++i) {
    const Vec a = boundary_point_and_normal(bj, random_unit()).point;
    const Vec b = boundary_point_and_normal(bk, random_unit()).point;
    if (auto t = refine_tangent_line(bj, bk, a, (b - a).normalized())) found.push_back(*t);
  }
  auto key = [](const TangentFlat& t) {
    return std::make_tuple(t.direction(0), t.direction(1), t.direction(2), t.point(0), t.point(1),
                           t.point(2));
  };
  std::sort(found.begin(), found.end(),
            [&](const TangentFlat& x, const TangentFlat& y) { return key(x) < key(y); });
  for (const auto& t : found) {
    bool dup = false;
    for (const auto& u : set.lines)
      if ((u.direction - t.direction).norm() < 1e-7 && (u.point - t.point).norm() < 1e-7) {
        dup = true;
        break;
      }
    if (!dup) set.lines.push_back(t);
  }
  if (static_cast<int>(set.lines.size()) < count / 4)
    set.warnings.push_back("fewer than a quarter of the tangent-line solves survived");
  return set;
}

// The line through the tangency points of a common tangent plane of two
// bodies in R^3; it lies in that plane and is tangent to both bodies.
inline TangentFlat in_plane_line(const TangentFlat& plane) {
  TangentFlat t = plane;
  t.kind = 2;
  Vec p = plane.y_j;
  Vec v = (plane.y_k - plane.y_j).normalized();
  detail::canonical_line(p, v);
  t.point = p;
  t.direction = v;
  t.in_plane = true;
  return t;
}

struct IntersectionSample {
  TangentFlat flat;
  int type = 1;  // 1: tangency normals parallel, 2: not
  Eigen::VectorXd conormal_j;
  Eigen::VectorXd conormal_k;
  double min_singular_value = 0.0;
  bool transversal = false;
};

struct IntersectionReport {
  ChartSpec chart;
  std::vector<IntersectionSample> samples;
  int type1 = 0;
  int type2 = 0;
  bool all_transversal = true;
  // False when a type-2 point shows up in a hyperplane chart.
  bool consistent = true;
};

// Conormals of S_j and S_k at the flat through both tangency points, in the
// cotangent chart components (eta_1..eta_d, xi).
inline IntersectionSample classify_intersection(const TangentFlat& tf, int n, int d) {
  IntersectionSample s;
  s.flat = tf;
  const Flat flat = d == n - 1 ? tf.flat() : Flat::through(tf.point, {tf.direction});
  s.conormal_j = cotangent_at(flat, {tf.y_j, tf.eta_j}).chart_components().normalized();
  s.conormal_k = cotangent_at(flat, {tf.y_k, tf.eta_k}).chart_components().normalized();
  Eigen::MatrixXd m(s.conormal_j.size(), 2);
  m.col(0) = s.conormal_j;
  m.col(1) = s.conormal_k;
  const Eigen::VectorXd sv = m.jacobiSvd().singularValues();
  s.min_singular_value = sv(sv.size() - 1);
  s.transversal = s.min_singular_value > 1e-6;
  s.type = detail::parallel(tf.eta_j, tf.eta_k, 1e-6) ? 1 : 2;
  return s;
}

// Samples S_j cap S_k in the chart and checks transversality and the type
// split. Hyperplane charts use the common tangent hyperplanes; (3,1) uses
// the in-plane lines of sampled common tangent planes plus `line_count`
// Newton-sampled tangent lines.
inline IntersectionReport intersection_report(const ConvexBody& bj, const ConvexBody& bk,
                                              const ChartSpec& chart, int line_count = 64,
                                              std::uint64_t seed = 1) {
  chart.validate();
  IntersectionReport rep;
  rep.chart = chart;
  const auto planes = common_tangent_hyperplanes(bj, bk, 64);
  std::vector<TangentFlat> flats;
  if (chart.d == chart.n - 1) {
    flats = planes;
  } else {
    for (std::size_t i = 0; i < planes.size(); i += 4) flats.push_back(in_plane_line(planes[i]));
    for (auto& t : common_tangent_codim2_flats(bj, bk, line_count, seed).lines) flats.push_back(t);
  }
  for (const auto& tf : flats) {
    IntersectionSample s = classify_intersection(tf, chart.n, chart.d);
    (s.type == 1 ? rep.type1 : rep.type2)++;
    rep.all_transversal = rep.all_transversal && s.transversal;
    rep.samples.push_back(std::move(s));
  }
  if (chart.d == chart.n - 1 && rep.type2 > 0) rep.consistent = false;
  return rep;
}

// Common tangent flats of every body pair. Kind-2 flats only exist for
// d <= n - 2, i.e. the (3,1) chart.
struct Atlas {
  std::vector<TangentFlat> hyperplanes;
  std::vector<TangentFlat> lines;
  std::vector<std::string> warnings;
};

inline Atlas build_atlas(const Scene& scene, int d, int plane_samples = 128, int line_count = 64,
                         std::uint64_t seed = 1) {
  chart_kind(scene.dimension(), d);
  Atlas atlas;
  const auto& bodies = scene.bodies();
  for (std::size_t j = 0; j < bodies.size(); ++j)
    for (std::size_t k = j + 1; k < bodies.size(); ++k) {
      for (auto& t : common_tangent_hyperplanes(bodies[j], bodies[k], plane_samples))
        atlas.hyperplanes.push_back(std::move(t));
      if (d <= scene.dimension() - 2) {
        auto set = common_tangent_codim2_flats(bodies[j], bodies[k], line_count, seed);
        for (auto& t : set.lines) atlas.lines.push_back(std::move(t));
        for (auto& w : set.warnings) atlas.warnings.push_back(std::move(w));
      }
    }
  return atlas;
}

}  // namespace dplane
