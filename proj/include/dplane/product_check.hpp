#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "dplane/errors.hpp"
#include "dplane/microlocal.hpp"
#include "dplane/parallel.hpp"
#include "dplane/sinogram.hpp"
#include "dplane/wavefront.hpp"

namespace dplane {

struct ConormalProbe {
  Vec direction;  // unit, chart coordinates
  DecayEstimate estimate;
  DirectionClass cls = DirectionClass::kSmooth;
  double reference_magnitude = 0.0;  // |W| at the middle radius
};

// One probe point in the chart with its conormal probes: two at a point of
// S_jk (conormals of S_j and S_k), one across S_j for a self product, or a
// fan of directions off the loci.
struct ProductProbePoint {
  Vec point;
  std::vector<ConormalProbe> probes;
};

struct ProductProbeReport {
  int j = 0;
  int k = -1;  // -1: self product of body j
  ChartSpec chart;
  double floor = 0.0;
  bool vacuous = false;
  bool flagged = false;
  std::vector<ProductProbePoint> intersections;  // S_jk points, or the S_j point
  std::vector<ProductProbePoint> off_locus;
  std::vector<std::string> notes;

  // Every S_jk probe singular with a reference magnitude above `factor` floors.
  bool non_degenerate(double factor = 10.0) const {
    if (vacuous || intersections.empty()) return false;
    for (const auto& p : intersections)
      for (const auto& c : p.probes)
        if (c.cls != DirectionClass::kSingular || !(c.reference_magnitude > factor * floor)) return false;
    return true;
  }

  bool off_locus_smooth() const {
    for (const auto& p : off_locus)
      for (const auto& c : p.probes)
        if (c.cls != DirectionClass::kSmooth) return false;
    return true;
  }
};

namespace detail {

inline ConormalProbe run_probe(const WindowedField& wf, const Vec& direction) {
  ConormalProbe c;
  c.direction = direction.normalized();
  c.estimate = wf.decay(c.direction);
  c.cls = classify_direction(c.estimate, wf.settings().smooth_threshold);
  const auto& r = c.estimate.radii;
  c.reference_magnitude = wf.magnitude(c.direction, r[r.size() / 2]);
  return c;
}

// Chart-plane conormal of S_j at a (2,1) flat tangent to body j at y:
// the locus is s = y(theta) . omega(theta), whose normal is (y . sigma, 1).
inline Vec chart_conormal(const Flat& flat, const Vec& y) {
  Vec c(2);
  c << y.dot(flat.sigma[0]), 1.0;
  return c.normalized();
}

inline double chart_theta(const Flat& flat) {
  double th = std::atan2(flat.axis(1), flat.axis(0));
  if (th < 0) th += std::numbers::pi;
  if (th >= std::numbers::pi) th -= std::numbers::pi;
  return th;
}

}  // namespace detail

// Squares the sinogram of one body and fits the decay exponent across S_j at
// the outer tangency of direction `direction_index`. A zero sinogram is
// flagged with no claim.
inline ProductProbeReport self_product_order(const Sinogram& sino_j, const ConvexBody& body,
                                             int direction_index = 0,
                                             const ProbeSettings& settings = {}) {
  const ChartSpec& chart = sino_j.chart();
  if (body.dimension() != chart.n) throw ConfigError("body dimension differs from chart");
  if (direction_index < 0 || direction_index >= chart.direction_count)
    throw InputError("direction index out of range");
  ProductProbeReport rep;
  rep.j = body.label();
  rep.chart = chart;
  Sinogram sq = sino_j;
  for (double& v : sq.values()) v *= v;
  const GridView row = view_of_row(sq, direction_index);
  const DirectionSample& dir = sq.directions()[direction_index];

  // Outer tangency along the first perp axis; its normal in offset
  // coordinates is the unit vector of that axis.
  const Vec nu = dir.perp[0];
  const BoundaryPoint bp = boundary_point_and_normal(body, nu);
  Vec point(row.m), normal = Vec::Zero(row.m);
  for (int a = 0; a < row.m; ++a) point(a) = bp.point.dot(dir.perp[a]);
  normal(0) = 1.0;

  if (row.max_abs() == 0.0) {
    rep.flagged = true;
    rep.notes.push_back("zero sinogram row: no claim");
    return rep;
  }
  WindowedField wf(row, point, settings);
  rep.floor = wf.floor();
  ProductProbePoint pp;
  pp.point = point;
  pp.probes.push_back(detail::run_probe(wf, normal));
  const auto& est = pp.probes.back().estimate;
  rep.flagged = est.below_floor || est.poor_fit;
  if (rep.flagged) rep.notes.push_back("fit below floor or r^2 < min_r2");
  rep.intersections.push_back(std::move(pp));
  return rep;
}

struct CrossProbeOptions {
  ProbeSettings settings;
  double off_locus_widths = 5.0;  // minimum distance to S_j u S_k, in window widths
  int off_locus_points = 24;
  int off_locus_directions = 8;
};

// Product u v of two (2,1) sinograms probed at the points of S_jk and at
// points off both loci, over the theta-periodic chart plane.
inline ProductProbeReport cross_product_probe(const Sinogram& sino_j, const Sinogram& sino_k,
                                              const ConvexBody& bj, const ConvexBody& bk,
                                              const CrossProbeOptions& opts = {}) {
  const ChartSpec& chart = sino_j.chart();
  if (chart.kind() != ChartKind::kLine2)
    throw ConfigError("cross-product probes are implemented on the (2,1) chart plane");
  if (sino_k.chart().direction_count != chart.direction_count ||
      sino_k.chart().offset_counts != chart.offset_counts ||
      sino_k.chart().offset_extent != chart.offset_extent)
    throw ConfigError("cross-product sinograms use different charts");
  detail::require_disjoint(bj, bk);

  ProductProbeReport rep;
  rep.j = bj.label();
  rep.k = bk.label();
  rep.chart = chart;

  Sinogram uv = sino_j;
  for (std::size_t i = 0; i < uv.values().size(); ++i) uv.values()[i] *= sino_k.values()[i];
  bool any = false;
  for (double v : uv.values()) any = any || v != 0.0;
  if (!any) {
    rep.vacuous = true;
    rep.notes.push_back("product vanishes on the chart grid");
    return rep;
  }

  const int pad = chart.direction_count / 2;
  const auto field = periodic_chart_field(uv, pad);
  const GridView& f = field->view;
  ProbeSettings settings = opts.settings;
  if (settings.window_width <= 0.0) settings.window_width = detail::default_window(f);
  const double w = settings.window_width;
  const double lo_s = -chart.offset_extent + 2.0 * w;
  const double hi_s = chart.offset_extent - chart.offset_spacing(0) - 2.0 * w;

  const IntersectionReport inter = intersection_report(bj, bk, chart);
  std::vector<std::pair<Vec, std::pair<Vec, Vec>>> sjk;  // point, conormals
  for (const auto& s : inter.samples) {
    const Flat flat = s.flat.flat();
    Vec p(2);
    p << detail::chart_theta(flat), flat.coords(0);
    if (p(1) < lo_s || p(1) > hi_s) {
      rep.notes.push_back("an S_jk point lies outside the probe-able offset window");
      continue;
    }
    sjk.push_back({p, {detail::chart_conormal(flat, s.flat.y_j), detail::chart_conormal(flat, s.flat.y_k)}});
  }
  if (sjk.empty()) {
    rep.vacuous = true;
    rep.notes.push_back("no S_jk point inside the chart window");
    return rep;
  }

  rep.intersections.resize(sjk.size());
  parallel_for(sjk.size(), [&](std::size_t i) {
    WindowedField wf(f, sjk[i].first, settings);
    ProductProbePoint& pp = rep.intersections[i];
    pp.point = sjk[i].first;
    pp.probes.push_back(detail::run_probe(wf, sjk[i].second.first));
    pp.probes.push_back(detail::run_probe(wf, sjk[i].second.second));
  });
  rep.floor = WindowedField(f, sjk.front().first, settings).floor();

  // Loci sampled densely in theta over the padded range; candidate points on
  // a fixed lattice are kept when far enough from every branch.
  const double th0 = f.origin[0], th1 = f.origin[0] + (f.shape[0] - 1) * f.spacing[0];
  std::vector<Vec> locus;
  const int samples = 8 * f.shape[0];
  for (const ConvexBody* b : {&bj, &bk})
    for (int i = 0; i <= samples; ++i) {
      const double th = th0 + (th1 - th0) * i / samples;
      Vec nu(2);
      nu << std::cos(th), std::sin(th);
      for (double sign : {1.0, -1.0}) {
        Vec q(2);
        q << th, sign * support_value(*b, (sign * nu).eval());
        locus.push_back(q);
      }
    }
  const double min_dist = opts.off_locus_widths * w;
  std::vector<Vec> candidates;
  const int lattice = 16 * opts.off_locus_points;
  for (int a = 0; a < lattice && static_cast<int>(candidates.size()) < opts.off_locus_points; ++a) {
    // Low-discrepancy lattice over [2w, pi - 2w] x [lo_s, hi_s].
    const double u = std::fmod(0.5 + a * 0.6180339887498949, 1.0);
    const double v = (a + 0.5) / lattice;
    Vec p(2);
    p << 2.0 * w + u * (std::numbers::pi - 4.0 * w), lo_s + v * (hi_s - lo_s);
    double d = std::numeric_limits<double>::infinity();
    for (const Vec& q : locus) d = std::min(d, (p - q).norm());
    if (d >= min_dist) candidates.push_back(p);
  }
  rep.off_locus.resize(candidates.size());
  parallel_for(candidates.size(), [&](std::size_t i) {
    WindowedField wf(f, candidates[i], settings);
    ProductProbePoint& pp = rep.off_locus[i];
    pp.point = candidates[i];
    for (int m = 0; m < opts.off_locus_directions; ++m) {
      const double a = std::numbers::pi * m / opts.off_locus_directions;
      Vec dir(2);
      dir << std::cos(a), std::sin(a);
      pp.probes.push_back(detail::run_probe(wf, dir));
    }
  });
  if (candidates.empty()) rep.notes.push_back("no lattice point is far enough from the loci");
  for (const auto& p : rep.intersections)
    for (const auto& c : p.probes)
      if (c.estimate.poor_fit) rep.flagged = true;
  return rep;
}

}  // namespace dplane
