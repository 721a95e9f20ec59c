#pragma once

#include <cmath>
#include <numbers>
#include <sstream>
#include <vector>

#include "dplane/errors.hpp"
#include "dplane/scene.hpp"

namespace dplane {

// The three supported (n, d) pairs.
enum class ChartKind { kLine2, kLine3, kPlane3 };

inline bool supported(int n, int d) {
  return (n == 2 && d == 1) || (n == 3 && d == 1) || (n == 3 && d == 2);
}

inline ChartKind chart_kind(int n, int d) {
  if (n == 2 && d == 1) return ChartKind::kLine2;
  if (n == 3 && d == 1) return ChartKind::kLine3;
  if (n == 3 && d == 2) return ChartKind::kPlane3;
  std::ostringstream os;
  os << "unsupported (n, d) = (" << n << ", " << d << ")";
  throw ConfigError(os.str());
}

// dim G(d, n) = d(n-d) + (n-d).
constexpr int grassmannian_dimension(int d, int n) { return (d + 1) * (n - d); }

// Normalization of the back-projection so that R_d^* (-Lap)^{d/2} R_d = Id:
//   C(d, n) = (4 pi)^{d/2} Gamma(n/2) / Gamma((n-d)/2).
// C(1,2) = 2, C(1,3) = pi, C(2,3) = 2 pi.
inline double backprojection_constant(int d, int n) {
  return std::pow(4.0 * std::numbers::pi, 0.5 * d) * std::tgamma(0.5 * n) /
         std::tgamma(0.5 * (n - d));
}

struct ChartSpec {
  int n = 2;
  int d = 1;
  int direction_count = 180;
  std::vector<int> offset_counts{256};  // one entry per axis of sigma^perp
  double offset_extent = 4.0;           // offsets cover [-extent, extent)

  ChartKind kind() const { return chart_kind(n, d); }
  int offset_axes() const { return n - d; }

  void validate() const {
    chart_kind(n, d);
    if (direction_count < 2) throw ConfigError("direction_count must be >= 2");
    if (static_cast<int>(offset_counts.size()) != n - d)
      throw ConfigError("offset_counts must have n - d entries");
    for (int c : offset_counts)
      if (c < 2) throw ConfigError("offset counts must be >= 2");
    if (!(offset_extent > 0.0)) throw ConfigError("offset_extent must be positive");
  }

  double offset_spacing(int axis = 0) const {
    return 2.0 * offset_extent / offset_counts.at(axis);
  }
  double offset_at(int axis, int index) const {
    return -offset_extent + index * offset_spacing(axis);
  }
  std::size_t offset_grid_size() const {
    std::size_t s = 1;
    for (int c : offset_counts) s *= static_cast<std::size_t>(c);
    return s;
  }
  int dimension() const { return grassmannian_dimension(d, n); }
  double constant() const { return backprojection_constant(d, n); }
};

// Orthonormal {e1, e2} spanning w^perp with (e1, e2, w) right-handed and
// e1 along z x w. At the poles e1 = (1, 0, 0).
inline std::pair<Vec, Vec> stable_frame_of_orthocomplement(const Vec& w) {
  require_unit(w, "frame axis");
  Vec e1(3);
  e1 << -w(1), w(0), 0.0;
  const double norm = e1.norm();
  if (norm < 1e-12) {
    e1 << 1.0, 0.0, 0.0;
  } else {
    e1 /= norm;
  }
  Vec e2 = w.head<3>().cross(e1.head<3>());
  e2.normalize();
  return {e1, e2};
}

// Representative of the antipodal class {w, -w}: the last nonzero component
// is positive (exact zeros below 1e-14 are skipped).
inline bool is_canonical(const Vec& w) {
  for (Eigen::Index i = w.size() - 1; i >= 0; --i) {
    if (std::abs(w(i)) > 1e-14) return w(i) > 0.0;
  }
  return true;
}

struct DirectionSample {
  Vec axis;               // hyperplane normal, or line direction for (3,1)
  std::vector<Vec> sigma; // orthonormal frame of sigma
  std::vector<Vec> perp;  // orthonormal frame of sigma^perp (offset axes)
  double weight = 0.0;
  double theta = 0.0;     // (2,1) chart angle; unused otherwise
};

// Frames attached to a canonical axis for the given chart.
inline DirectionSample direction_frame(ChartKind kind, const Vec& axis) {
  DirectionSample s;
  s.axis = axis;
  switch (kind) {
    case ChartKind::kLine2: {
      Vec t(2);
      t << axis(1), -axis(0);
      s.sigma = {t};
      s.perp = {axis};
      s.theta = std::atan2(axis(1), axis(0));
      if (s.theta < 0) s.theta += std::numbers::pi;
      break;
    }
    case ChartKind::kPlane3: {
      auto [e1, e2] = stable_frame_of_orthocomplement(axis);
      s.sigma = {e1, e2};
      s.perp = {axis};
      break;
    }
    case ChartKind::kLine3: {
      auto [e1, e2] = stable_frame_of_orthocomplement(axis);
      s.sigma = {axis};
      s.perp = {e1, e2};
      break;
    }
  }
  return s;
}

// Equal-weight direction samples: theta_k = k pi / K for (2,1), a Fibonacci
// lattice on the upper half-sphere otherwise.
inline std::vector<DirectionSample> sample_directions(const ChartSpec& chart) {
  chart.validate();
  const int count = chart.direction_count;
  const ChartKind kind = chart.kind();
  std::vector<DirectionSample> out;
  out.reserve(count);
  const double weight = 1.0 / count;
  if (kind == ChartKind::kLine2) {
    for (int k = 0; k < count; ++k) {
      const double theta = k * std::numbers::pi / count;
      Vec w(2);
      w << std::cos(theta), std::sin(theta);
      if (k == 0) w << 1.0, 0.0;
      DirectionSample s = direction_frame(kind, w);
      s.theta = theta;
      s.weight = weight;
      out.push_back(std::move(s));
    }
  } else {
    const double golden = std::numbers::pi * (3.0 - std::sqrt(5.0));
    for (int k = 0; k < count; ++k) {
      const double z = (k + 0.5) / count;
      const double r = std::sqrt(1.0 - z * z);
      const double phi = golden * k;
      Vec w(3);
      w << r * std::cos(phi), r * std::sin(phi), z;
      DirectionSample s = direction_frame(kind, w);
      s.weight = weight;
      out.push_back(std::move(s));
    }
  }
  return out;
}

// An affine d-plane x'' + sigma with x'' in sigma^perp, together with its
// chart coordinates (canonical axis, offset coordinates in the perp frame).
struct Flat {
  int n = 2;
  int d = 1;
  Vec axis;
  std::vector<Vec> sigma;
  std::vector<Vec> perp;
  Vec offset;  // x''
  Vec coords;  // s, or (u1, u2) for (3,1)

  ChartKind kind() const { return chart_kind(n, d); }

  // Flat from chart coordinates. A non-canonical axis is flipped, which
  // negates hyperplane offsets; line offsets are re-expressed in the frame of
  // the canonical axis.
  static Flat from_chart(int n, int d, Vec axis, const Vec& coords) {
    const ChartKind kind = chart_kind(n, d);
    require_unit(axis, "chart axis");
    if (coords.size() != n - d) throw InputError("chart coordinate count must be n - d");
    Vec offset;
    if (kind == ChartKind::kLine3) {
      auto [e1, e2] = stable_frame_of_orthocomplement(axis);
      offset = coords(0) * e1 + coords(1) * e2;
    } else {
      offset = coords(0) * axis;
    }
    if (!is_canonical(axis)) axis = -axis;
    return from_frame(kind, axis, offset);
  }

  // Flat with the canonical axis whose offset vector is `offset` (already
  // orthogonal to sigma).
  static Flat from_frame(ChartKind kind, const Vec& canonical_axis, const Vec& offset) {
    DirectionSample frame = direction_frame(kind, canonical_axis);
    Flat f;
    f.n = static_cast<int>(canonical_axis.size());
    f.d = kind == ChartKind::kPlane3 ? 2 : 1;
    f.axis = canonical_axis;
    f.sigma = std::move(frame.sigma);
    f.perp = std::move(frame.perp);
    f.offset = offset;
    f.coords.resize(f.n - f.d);
    for (int i = 0; i < f.n - f.d; ++i) f.coords(i) = offset.dot(f.perp[i]);
    return f;
  }

  // The flat through `point` spanned by `span` (d vectors, not necessarily
  // orthonormal).
  static Flat through(const Vec& point, const std::vector<Vec>& span) {
    const int n = static_cast<int>(point.size());
    const int d = static_cast<int>(span.size());
    const ChartKind kind = chart_kind(n, d);
    Vec axis;
    if (kind == ChartKind::kLine2) {
      axis = Vec(2);
      axis << -span[0](1), span[0](0);
    } else if (kind == ChartKind::kPlane3) {
      axis = span[0].head<3>().cross(span[1].head<3>());
    } else {
      axis = span[0];
    }
    if (axis.norm() < 1e-14) throw InputError("degenerate flat span");
    axis.normalize();
    if (!is_canonical(axis)) axis = -axis;
    Vec offset = point;
    if (kind == ChartKind::kLine3) {
      offset -= point.dot(axis) * axis;
    } else {
      offset = point.dot(axis) * axis;
    }
    return from_frame(kind, axis, offset);
  }
};

inline Flat chart_flat(const ChartSpec& chart, const DirectionSample& dir, const Vec& coords) {
  Vec offset = Vec::Zero(chart.n);
  for (int i = 0; i < chart.n - chart.d; ++i) offset += coords(i) * dir.perp[i];
  Flat f;
  f.n = chart.n;
  f.d = chart.d;
  f.axis = dir.axis;
  f.sigma = dir.sigma;
  f.perp = dir.perp;
  f.offset = offset;
  f.coords = coords;
  return f;
}

// pi_sigma x = sum_i (x . w_i) w_i.
inline Vec project_onto_sigma(const Flat& flat, const Vec& x) {
  Vec p = Vec::Zero(x.size());
  for (const auto& w : flat.sigma) p += x.dot(w) * w;
  return p;
}

inline Flat flat_through(const Vec& point, const Flat& flat) {
  Flat f = flat;
  f.offset = point - project_onto_sigma(flat, point);
  for (int i = 0; i < f.n - f.d; ++i) f.coords(i) = f.offset.dot(f.perp[i]);
  return f;
}

inline bool flat_contains(const Flat& flat, const Vec& x, double tol = 1e-10) {
  return (x - project_onto_sigma(flat, x) - flat.offset).norm() <= tol;
}

}  // namespace dplane
