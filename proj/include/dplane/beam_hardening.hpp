#pragma once

#include <cmath>
#include <vector>

#include "dplane/errors.hpp"
#include "dplane/sinogram.hpp"
#include "dplane/transform.hpp"

namespace dplane {

// Uniform spectrum on [E0 - eps, E0 + eps] with metal slope alpha.
struct SpectralModel {
  double e0 = 1.0;
  double epsilon = 0.1;
  double alpha = 1.0;

  // |alpha| eps, the scale of the nonlinear metal term.
  double strength() const { return std::abs(alpha) * epsilon; }

  void validate() const {
    if (!(e0 > 0.0)) throw ConfigError("E0 must be positive");
    if (!(epsilon > 0.0)) throw ConfigError("epsilon must be positive");
    if (e0 - epsilon < 0.0) throw ConfigError("E0 - epsilon must be >= 0");
    if (strength() > 0.2) throw ConfigError("alpha * epsilon must be <= 0.2");
  }
};

// -log(sinh t / t) for t >= 0.
inline double metal_term_closed_form(double t) {
  if (!(t >= 0.0)) throw InputError("metal term needs t >= 0");
  if (t < 1e-2) {
    const double u = t * t;
    return u * (-1.0 / 6.0 + u * (1.0 / 180.0 - u / 2835.0));
  }
  if (t < 1.0) {
    // (sinh t - t) / t summed directly; no cancellation.
    const double u = t * t;
    double term = u / 6.0;
    double excess = term;
    for (int k = 2; k < 20; ++k) {
      term *= u / ((2.0 * k) * (2.0 * k + 1.0));
      excess += term;
      if (term < 1e-18 * excess) break;
    }
    return -std::log1p(excess);
  }
  // log sinh t = t - log 2 + log1p(-e^{-2t}).
  return -(t - std::log(2.0) + std::log1p(-std::exp(-2.0 * t)) - std::log(t));
}

struct BeamSeries {
  std::vector<double> coefficients;  // A_1 .. A_L

  double evaluate(double t, int terms = -1) const {
    if (terms < 0) terms = static_cast<int>(coefficients.size());
    const double u = t * t;
    double acc = 0.0, power = 1.0;
    for (int l = 0; l < terms; ++l) {
      power *= u;
      acc += coefficients[l] * power;
    }
    return acc;
  }
};

// Coefficients of -log(sinh t / t) = sum_l A_l t^{2l}, obtained by composing
// x(u) = sum_{l>=1} u^l / (2l+1)! with -log(1 + x) in u = t^2.
inline BeamSeries series_coefficients(int terms) {
  if (terms < 1 || terms > 8) throw ConfigError("series length must be in [1, 8]");
  const int L = terms;
  // x[l] for l = 0..L.
  std::vector<double> x(L + 1, 0.0);
  double fact = 1.0;  // (2l+1)!
  for (int l = 1; l <= L; ++l) {
    fact *= (2.0 * l) * (2.0 * l + 1.0);
    x[l] = 1.0 / fact;
  }
  std::vector<double> result(L + 1, 0.0);
  std::vector<double> power(L + 1, 0.0);  // x^m truncated
  power[0] = 1.0;
  for (int m = 1; m <= L; ++m) {
    std::vector<double> next(L + 1, 0.0);
    for (int i = 0; i <= L; ++i)
      for (int j = 1; i + j <= L; ++j) next[i + j] += power[i] * x[j];
    power = std::move(next);
    const double sign = (m % 2 == 1) ? -1.0 : 1.0;  // -log(1+x) = sum (-1)^m x^m / m
    for (int l = 0; l <= L; ++l) result[l] += sign * power[l] / m;
  }
  return BeamSeries{std::vector<double>(result.begin() + 1, result.end())};
}

struct Measurement {
  Sinogram total;       // P_d = R_d f_E0 + P_MA
  Sinogram metal_part;  // P_MA
};

// Polychromatic measurement of the scene on the chart grid.
inline Measurement synthesize_measurement(const Scene& scene, const ChartSpec& chart,
                                          const SpectralModel& model) {
  model.validate();
  Sinogram metal = forward_sinogram(scene.metal_only(), chart, false);
  Sinogram tissue = forward_sinogram(scene.background_only(), chart, true);
  const double scale = model.strength();
  metal.set_role(SinogramRole::kMetalPart);
  for (double& v : metal.values()) v = metal_term_closed_form(scale * v);
  tissue.set_role(SinogramRole::kMeasurement);
  for (std::size_t i = 0; i < tissue.values().size(); ++i) tissue.values()[i] += metal.values()[i];
  return {std::move(tissue), std::move(metal)};
}

// f_MA = R_d^* (-Lap)^{d/2} P_MA.
inline ImageGrid reconstruct_artifact(const Sinogram& metal_part, const ImageGrid& grid,
                                      OperationReport* report = nullptr) {
  return fbp_reconstruct(metal_part, grid, report);
}

// Pointwise square of a sinogram, the leading-order metal term up to A_1.
inline Sinogram squared(const Sinogram& sino) {
  Sinogram out = sino;
  for (double& v : out.values()) v *= v;
  return out;
}

// FBP of (R_d chi_D)^2.
inline ImageGrid reconstruct_squared_transform(const Sinogram& metal_transform,
                                               const ImageGrid& grid,
                                               OperationReport* report = nullptr) {
  return fbp_reconstruct(squared(metal_transform), grid, report);
}

}  // namespace dplane
