#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

#include "dplane/errors.hpp"
#include "dplane/microlocal.hpp"
#include "dplane/scene.hpp"
#include "dplane/sinogram.hpp"

namespace dplane {

// Numerical knobs of the windowed-Fourier decay detector. The window is a
// Gaussian of standard deviation window_width / 2. Radii run geometrically
// from radius_start / sigma to nyquist_fraction of the Nyquist frequency of
// the coarsest axis.
struct ProbeSettings {
  double window_width = 0.0;  // 0 = 12 grid spacings of the coarsest axis
  int radii_count = 8;  // >= 3
  double radius_start = 4.0;
  double nyquist_fraction = 0.5;
  double floor_relative = 1e-12;
  double smooth_threshold = -2.5;
  double min_r2 = 0.9;
};

struct DecayEstimate {
  Vec point;
  Vec direction;
  std::vector<double> radii;
  std::vector<double> log_magnitudes;
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;
  double floor = 0.0;           // absolute noise floor used
  double peak_magnitude = 0.0;  // largest |W(r)| over the radii
  int above_floor = 0;          // radii whose magnitude clears the floor
  bool below_floor = false;     // magnitude reaches the floor inside the band
  bool poor_fit = false;
  bool degenerate = false;  // the windowed field is identically zero
};

enum class DirectionClass { kSingular, kSmooth };

namespace detail {

inline double default_window(const GridView& f) {
  double h = 0.0;
  for (int a = 0; a < f.m; ++a) h = std::max(h, f.spacing[a]);
  return 12.0 * h;
}

}  // namespace detail

// A field multiplied by a Gaussian window at one point, flattened to the
// cells where the window exceeds ~1e-16. Directional transforms of the same
// windowed field reuse it.
class WindowedField {
 public:
  WindowedField(const GridView& field, const Vec& point, const ProbeSettings& settings)
      : point_(point), settings_(settings) {
    if (point.size() != field.m) throw InputError("probe point has wrong dimension");
    if (settings_.window_width <= 0.0) settings_.window_width = detail::default_window(field);
    const double w = settings_.window_width;
    sigma_ = 0.5 * w;
    for (int a = 0; a < field.m; ++a) {
      const double lo = field.origin[a];
      const double hi = field.origin[a] + (field.shape[a] - 1) * field.spacing[a];
      if (point(a) < lo + 2.0 * w || point(a) > hi - 2.0 * w)
        throw InputError("probe point closer than two window widths to the grid boundary");
      h_max_ = std::max(h_max_, field.spacing[a]);
    }
    const double cutoff = 8.6 * sigma_;
    std::array<int, 3> lo{0, 0, 0}, hi{0, 0, 0};
    for (int a = 0; a < field.m; ++a) {
      lo[a] = std::max(0, static_cast<int>(std::floor((point(a) - cutoff - field.origin[a]) / field.spacing[a])));
      hi[a] = std::min(field.shape[a] - 1,
                       static_cast<int>(std::ceil((point(a) + cutoff - field.origin[a]) / field.spacing[a])));
    }
    double cell = 1.0;
    for (int a = 0; a < field.m; ++a) cell *= field.spacing[a];
    double field_max = 0.0;
    std::array<int, 3> idx = lo;
    for (;;) {
      double r2 = 0.0;
      std::size_t flat = 0;
      std::array<double, 3> off{0, 0, 0};
      for (int a = 0; a < field.m; ++a) {
        off[a] = field.origin[a] + idx[a] * field.spacing[a] - point(a);
        r2 += off[a] * off[a];
        flat += static_cast<std::size_t>(idx[a]) * field.stride(a);
      }
      if (r2 <= cutoff * cutoff) {
        const double g = std::exp(-0.5 * r2 / (sigma_ * sigma_)) * cell;
        const double v = field.values[flat];
        field_max = std::max(field_max, std::abs(v));
        mass_ += g;
        if (v != 0.0) {
          weights_.push_back(v * g);
          for (int a = 0; a < field.m; ++a) offsets_.push_back(off[a]);
        }
      }
      int a = field.m - 1;
      while (a >= 0 && ++idx[a] > hi[a]) {
        idx[a] = lo[a];
        --a;
      }
      if (a < 0) break;
    }
    m_ = field.m;
    floor_ = settings_.floor_relative * std::max(field_max, field.max_abs()) * mass_;
  }

  const ProbeSettings& settings() const { return settings_; }
  double floor() const { return floor_; }

  std::vector<double> radii() const {
    const double r0 = settings_.radius_start / sigma_;
    const double r1 = settings_.nyquist_fraction * std::numbers::pi / h_max_;
    std::vector<double> r(settings_.radii_count);
    for (int i = 0; i < settings_.radii_count; ++i)
      r[i] = r0 * std::pow(r1 / r0, settings_.radii_count == 1 ? 0.0 : double(i) / (settings_.radii_count - 1));
    return r;
  }

  // |sum f(x) g(x - p) exp(-i r direction.(x - p))|.
  double magnitude(const Vec& direction, double r) const {
    double re = 0.0, im = 0.0;
    const std::size_t count = weights_.size();
    for (std::size_t i = 0; i < count; ++i) {
      double proj = 0.0;
      for (int a = 0; a < m_; ++a) proj += direction(a) * offsets_[i * m_ + a];
      const double ph = r * proj;
      re += weights_[i] * std::cos(ph);
      im -= weights_[i] * std::sin(ph);
    }
    return std::hypot(re, im);
  }

  DecayEstimate decay(const Vec& direction) const {
    require_unit(direction, "probe direction");
    if (direction.size() != m_) throw InputError("probe direction has wrong dimension");
    if (settings_.radii_count < 3) throw InputError("at least three radii are needed for a fit");
    DecayEstimate est;
    est.point = point_;
    est.direction = direction;
    est.floor = floor_;
    est.radii = radii();
    est.degenerate = weights_.empty();
    // Magnitudes are clamped at the floor so the fit stays finite.
    std::vector<double> xs, ys;
    double last = 0.0;
    for (double r : est.radii) {
      const double mag = magnitude(direction, r);
      last = mag;
      est.peak_magnitude = std::max(est.peak_magnitude, mag);
      est.log_magnitudes.push_back(std::log(std::max(mag, std::numeric_limits<double>::min())));
      if (mag > floor_) ++est.above_floor;
      xs.push_back(std::log(r));
      ys.push_back(std::log(std::max(mag, floor_ > 0.0 ? floor_ : std::numeric_limits<double>::min())));
    }
    // Rapid decay reaches the floor inside the band; a singular direction
    // stays above it up to the top radius.
    est.below_floor = !(last > floor_) || est.above_floor < 3;
    const double n = static_cast<double>(xs.size());
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
      mx += xs[i];
      my += ys[i];
    }
    mx /= n;
    my /= n;
    double sxx = 0, sxy = 0, syy = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
      sxx += (xs[i] - mx) * (xs[i] - mx);
      sxy += (xs[i] - mx) * (ys[i] - my);
      syy += (ys[i] - my) * (ys[i] - my);
    }
    est.slope = sxy / sxx;
    est.intercept = my - est.slope * mx;
    est.r2 = syy > 0.0 ? (sxy * sxy) / (sxx * syy) : 1.0;
    est.poor_fit = est.r2 < settings_.min_r2;
    return est;
  }

 private:
  Vec point_;
  ProbeSettings settings_;
  int m_ = 1;
  double h_max_ = 0.0;
  double sigma_ = 0.0;
  double mass_ = 0.0;
  double floor_ = 0.0;
  std::vector<double> weights_;
  std::vector<double> offsets_;
};

// Fitted log-log slope of the windowed Fourier magnitude along `direction`.
inline DecayEstimate directional_decay(const GridView& field, const Vec& point,
                                       const Vec& direction,
                                       const ProbeSettings& settings = {}) {
  return WindowedField(field, point, settings).decay(direction);
}

inline DirectionClass classify_direction(const DecayEstimate& est, double smooth_threshold = -2.5) {
  if (est.below_floor) return DirectionClass::kSmooth;
  return est.slope > smooth_threshold ? DirectionClass::kSingular : DirectionClass::kSmooth;
}

struct OrderFit {
  double exponent = 0.0;
  double r2 = 0.0;
  bool flagged = false;
  DecayEstimate estimate;
};

// Decay exponent of the field across a locus at `point` along its normal.
inline OrderFit conormal_order_fit(const GridView& field, const Vec& point, const Vec& normal,
                                   const ProbeSettings& settings = {}) {
  OrderFit fit;
  fit.estimate = directional_decay(field, point, normal.normalized(), settings);
  fit.exponent = fit.estimate.slope;
  fit.r2 = fit.estimate.r2;
  fit.flagged = fit.estimate.below_floor || fit.estimate.r2 < settings.min_r2;
  return fit;
}

namespace detail {

// Points along a tangent flat inside the image box, spaced `step`.
inline std::vector<Vec> flat_samples(const ImageGrid& img, const Vec& base,
                                     const std::vector<Vec>& span, double step) {
  const int n = img.n;
  Vec lo(n), hi(n);
  for (int a = 0; a < n; ++a) {
    lo(a) = img.origin[a];
    hi(a) = img.origin[a] + (img.dims[a] - 1) * img.spacing[a];
  }
  const double reach = (hi - lo).norm() + base.norm();
  const long count = static_cast<long>(std::ceil(reach / step));
  std::vector<Vec> out;
  auto inside = [&](const Vec& x) {
    return (x.array() >= lo.array()).all() && (x.array() <= hi.array()).all();
  };
  if (span.size() == 1) {
    for (long i = -count; i <= count; ++i) {
      const Vec x = base + (i * step) * span[0];
      if (inside(x)) out.push_back(x);
    }
  } else {
    for (long i = -count; i <= count; ++i)
      for (long j = -count; j <= count; ++j) {
        const Vec x = base + (i * step) * span[0] + (j * step) * span[1];
        if (inside(x)) out.push_back(x);
      }
  }
  return out;
}

}  // namespace detail

struct StreakMeasurement {
  double ratio = 1.0;
  double on_flat = 0.0;
  double control_median = 0.0;
  std::size_t samples = 0;
};

// Mean |image| along the flat, excluding points within `margin` of a body or
// of a tangency point, relative to the median of the same statistic over 32
// parallel control flats shifted by 3 to 10 window widths to either side.
inline StreakMeasurement streak_contrast(const ImageGrid& image, const Scene& scene,
                                         const TangentFlat& flat, double margin,
                                         double window_width = 0.0) {
  const int n = image.n;
  if (scene.dimension() != n) throw ConfigError("scene and image dimensions differ");
  const double h = *std::min_element(image.spacing.begin(), image.spacing.begin() + n);
  if (window_width <= 0.0) window_width = 12.0 * h;
  const GridView view = view_of(image);

  Vec base;
  std::vector<Vec> span;
  Vec shift_dir;
  if (flat.kind == 1) {
    const Flat f = flat.flat();
    base = f.offset;
    span = f.sigma;
    shift_dir = f.perp[0];
  } else {
    base = flat.point;
    span = {flat.direction};
    shift_dir = flat.in_plane ? flat.eta_j : (flat.eta_j + flat.eta_k);
    if (shift_dir.norm() < 1e-9) shift_dir = flat.eta_j;
    shift_dir -= shift_dir.dot(flat.direction) * flat.direction;
    shift_dir.normalize();
  }
  auto masked = [&](const Vec& x) {
    for (const auto& b : scene.bodies()) {
      const double q = std::sqrt(b.quadratic_form(x));
      if ((q - 1.0) * b.max_radius() < margin) return true;
    }
    return (x - flat.y_j).norm() < margin || (x - flat.y_k).norm() < margin;
  };
  auto mean_abs = [&](const Vec& b, std::size_t* used) {
    double acc = 0.0;
    std::size_t cnt = 0;
    for (const Vec& x : detail::flat_samples(image, b, span, 0.5 * h)) {
      if (masked(x)) continue;
      acc += std::abs(view.interpolate(image_point_to_view(x)));
      ++cnt;
    }
    if (used) *used = cnt;
    return cnt ? acc / cnt : 0.0;
  };
  StreakMeasurement m;
  m.on_flat = mean_abs(base, &m.samples);
  if (m.samples < 16) throw InputError("tangent flat lies mostly outside the image");
  std::vector<double> controls;
  for (int side : {-1, 1})
    for (int i = 0; i < 16; ++i) {
      const double shift = side * (3.0 + 7.0 * i / 15.0) * window_width;
      std::size_t used = 0;
      const double v = mean_abs(base + shift * shift_dir, &used);
      if (used >= 16) controls.push_back(v);
    }
  if (controls.empty()) return m;
  std::nth_element(controls.begin(), controls.begin() + controls.size() / 2, controls.end());
  m.control_median = controls[controls.size() / 2];
  if (m.control_median > 0.0) m.ratio = m.on_flat / m.control_median;
  else m.ratio = m.on_flat > 0.0 ? std::numeric_limits<double>::infinity() : 1.0;
  return m;
}

}  // namespace dplane
