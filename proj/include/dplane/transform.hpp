#pragma once

#include <fftw3.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstddef>
#include <memory>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "dplane/errors.hpp"
#include "dplane/grassmannian.hpp"
#include "dplane/parallel.hpp"
#include "dplane/scene.hpp"
#include "dplane/sinogram.hpp"

namespace dplane {

struct OperationReport {
  std::size_t lookups = 0;
  std::size_t out_of_range = 0;
  std::vector<std::string> warnings;

  double out_of_range_fraction() const {
    return lookups == 0 ? 0.0 : static_cast<double>(out_of_range) / lookups;
  }
};

namespace detail {

// Integral of chi_body along p + t v, |v| = 1.
inline double chord_length(const ConvexBody& body, const Vec& p, const Vec& v) {
  const Vec dp = p - body.center();
  const Vec qv = body.shape() * v;
  const double a = v.dot(qv);
  const double b = dp.dot(qv);
  const double c = dp.dot(body.shape() * dp) - 1.0;
  const double disc = b * b - a * c;
  return disc > 0.0 ? 2.0 * std::sqrt(disc) / a : 0.0;
}

inline double gaussian_line_integral(const GaussianBump& g, const Vec& p, const Vec& v) {
  const Vec dp = p - g.center();
  const Vec pv = g.precision() * v;
  const double a = v.dot(pv);
  const double b = dp.dot(pv);
  const double c = dp.dot(g.precision() * dp);
  return g.amplitude() * std::sqrt(2.0 * std::numbers::pi / a) * std::exp(-0.5 * (c - b * b / a));
}

// Area of the section {x . w = s} of the ellipsoid, |w| = 1.
inline double section_area(const ConvexBody& body, const Vec& w, double s) {
  const double h = body.centered_support(w);
  const double delta = (s - w.dot(body.center())) / h;
  if (delta * delta >= 1.0) return 0.0;
  return std::numbers::pi * (1.0 - delta * delta) / (body.sqrt_det_shape() * h);
}

inline double gaussian_plane_integral(const GaussianBump& g, const Vec& w, double s) {
  const double var = w.dot(g.covariance() * w);
  const double delta = s - w.dot(g.center());
  return g.amplitude() * 2.0 * std::numbers::pi * std::sqrt(g.det_covariance() / var) *
         std::exp(-0.5 * delta * delta / var);
}

inline double line_integral(const Scene& scene, const Vec& p, const Vec& v, bool background) {
  double acc = 0.0;
  for (const auto& b : scene.bodies()) acc += chord_length(b, p, v);
  if (background)
    for (const auto& g : scene.background()) acc += gaussian_line_integral(g, p, v);
  return acc;
}

inline double plane_integral(const Scene& scene, const Vec& w, double s, bool background) {
  double acc = 0.0;
  for (const auto& b : scene.bodies()) acc += section_area(b, w, s);
  if (background)
    for (const auto& g : scene.background()) acc += gaussian_plane_integral(g, w, s);
  return acc;
}

}  // namespace detail

// Exact integral of chi_D (+ background) over the flat.
inline double forward_analytic(const Scene& scene, const Flat& flat, bool include_background = true) {
  if (flat.n != scene.dimension()) throw ConfigError("flat dimension differs from scene");
  switch (flat.kind()) {
    case ChartKind::kLine2:
    case ChartKind::kLine3:
      return detail::line_integral(scene, flat.offset, flat.sigma[0], include_background);
    case ChartKind::kPlane3:
      return detail::plane_integral(scene, flat.perp[0], flat.offset.dot(flat.perp[0]),
                                    include_background);
  }
  return 0.0;
}

// Midpoint-rule integral of chi_D + background over the part of the flat
// inside the scene bounding box (bumps truncated at 5 standard deviations).
inline double forward_quadrature(const Scene& scene, const Flat& flat, double step) {
  if (!(step > 0.0)) throw InputError("quadrature step must be positive");
  if (flat.n != scene.dimension()) throw ConfigError("flat dimension differs from scene");
  auto [lo, hi] = scene.bounds(5.0);
  if ((lo.array() > hi.array()).any()) return 0.0;
  const int n = flat.n;
  // Parameter range of the box projected on each sigma axis, centered at x''.
  const int d = flat.d;
  std::vector<double> t0(d), t1(d);
  for (int i = 0; i < d; ++i) {
    double mn = 0.0, mx = 0.0;
    for (int a = 0; a < n; ++a) {
      const double w = flat.sigma[i](a);
      const double e1 = (lo(a) - flat.offset(a)) * w;
      const double e2 = (hi(a) - flat.offset(a)) * w;
      mn += std::min(e1, e2);
      mx += std::max(e1, e2);
    }
    t0[i] = mn;
    t1[i] = mx;
  }
  std::vector<long> cells(d);
  std::vector<double> dt(d);
  for (int i = 0; i < d; ++i) {
    cells[i] = std::max(1L, static_cast<long>(std::ceil((t1[i] - t0[i]) / step)));
    dt[i] = (t1[i] - t0[i]) / cells[i];
  }
  double acc = 0.0;
  Vec x(n);
  if (d == 1) {
    for (long i = 0; i < cells[0]; ++i) {
      x = flat.offset + (t0[0] + (i + 0.5) * dt[0]) * flat.sigma[0];
      acc += attenuation(scene, x);
    }
    return acc * dt[0];
  }
  for (long i = 0; i < cells[0]; ++i) {
    const Vec row = flat.offset + (t0[0] + (i + 0.5) * dt[0]) * flat.sigma[0];
    for (long j = 0; j < cells[1]; ++j) {
      x = row + (t0[1] + (j + 0.5) * dt[1]) * flat.sigma[1];
      if ((x.array() < lo.array()).any() || (x.array() > hi.array()).any()) continue;
      acc += attenuation(scene, x);
    }
  }
  return acc * dt[0] * dt[1];
}

// R_d of the scene on every flat of the chart grid.
inline Sinogram forward_sinogram(const Scene& scene, const ChartSpec& chart,
                                 bool include_background = true) {
  if (chart.n != scene.dimension()) throw ConfigError("chart dimension differs from scene");
  Sinogram sino(chart, SinogramRole::kTransform);
  const auto& dirs = sino.directions();
  const std::size_t row = sino.row_size();
  const ChartKind kind = chart.kind();
  parallel_for(dirs.size(), [&](std::size_t k) {
    const DirectionSample& dir = dirs[k];
    auto out = sino.row(static_cast<int>(k));
    for (std::size_t idx = 0; idx < row; ++idx) {
      const Vec c = sino.offset_coords(idx);
      if (kind == ChartKind::kPlane3) {
        out[idx] = detail::plane_integral(scene, dir.axis, c(0), include_background);
      } else {
        Vec p = c(0) * dir.perp[0];
        if (kind == ChartKind::kLine3) p += c(1) * dir.perp[1];
        out[idx] = detail::line_integral(scene, p, dir.sigma[0], include_background);
      }
    }
  });
  return sino;
}

namespace detail {

struct FftwDeleter {
  void operator()(void* p) const { fftw_free(p); }
};
struct PlanDeleter {
  void operator()(fftw_plan p) const { fftw_destroy_plan(p); }
};
using PlanPtr = std::unique_ptr<std::remove_pointer_t<fftw_plan>, PlanDeleter>;

// Raised-cosine roll-off: 1 up to 80% of Nyquist, 0 from Nyquist on.
inline double rolloff(double ratio) {
  if (ratio <= 0.8) return 1.0;
  if (ratio >= 1.0) return 0.0;
  return 0.5 * (1.0 + std::cos(std::numbers::pi * (ratio - 0.8) / 0.2));
}

// Half-spectrum multiplier on the padded grid `padded` (spacing h) for
// |xi|^power with roll-off. The continuous multiplier is sampled on an 8x
// finer frequency grid, its kernel truncated to offsets |n| < padded/2 and
// transformed back, so the padded circular convolution equals the linear
// convolution of the offset row with that kernel.
inline std::vector<double> filter_multiplier(const std::vector<int>& padded, double h,
                                             double power) {
  constexpr int kOversample = 8;
  const int axes = static_cast<int>(padded.size());
  const double nyquist = std::numbers::pi / h;
  std::vector<int> big(axes);
  std::size_t big_real = 1;
  for (int a = 0; a < axes; ++a) {
    big[a] = kOversample * padded[a];
    big_real *= big[a];
  }
  const int big_last = big[axes - 1];
  const std::size_t big_half = big_last / 2 + 1;
  const std::size_t big_complex = big_real / big_last * big_half;
  std::unique_ptr<double, FftwDeleter> kernel(
      static_cast<double*>(fftw_malloc(sizeof(double) * big_real)));
  std::unique_ptr<fftw_complex, FftwDeleter> spec(
      static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * big_complex)));
  auto freq = [&](int i, int size) {
    const int f = i <= size / 2 ? i : i - size;
    return 2.0 * std::numbers::pi * f / (size * h);
  };
  for (std::size_t idx = 0; idx < big_complex; ++idx) {
    double xi2 = 0.0;
    if (axes == 1) {
      const double xi = freq(static_cast<int>(idx), big[0]);
      xi2 = xi * xi;
    } else {
      const double x0 = freq(static_cast<int>(idx / big_half), big[0]);
      const double x1 = freq(static_cast<int>(idx % big_half), big[1]);
      xi2 = x0 * x0 + x1 * x1;
    }
    const double xi = std::sqrt(xi2);
    spec.get()[idx][0] = std::pow(xi, power) * rolloff(xi / nyquist) / static_cast<double>(big_real);
    spec.get()[idx][1] = 0.0;
  }
  {
    PlanPtr inv(fftw_plan_dft_c2r(axes, big.data(), spec.get(), kernel.get(), FFTW_ESTIMATE));
    fftw_execute(inv.get());
  }
  // Truncate the kernel onto the padded grid.
  std::size_t pad_real = 1;
  for (int a = 0; a < axes; ++a) pad_real *= padded[a];
  std::unique_ptr<double, FftwDeleter> small(
      static_cast<double*>(fftw_malloc(sizeof(double) * pad_real)));
  const int pad_last = padded[axes - 1];
  const std::size_t pad_half = pad_last / 2 + 1;
  const std::size_t pad_complex = pad_real / pad_last * pad_half;
  std::unique_ptr<fftw_complex, FftwDeleter> out(
      static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * pad_complex)));
  auto signed_index = [](int i, int size) { return i < size / 2 ? i : i - size; };
  auto wrap = [](int s, int size) { return s >= 0 ? s : s + size; };
  for (std::size_t idx = 0; idx < pad_real; ++idx) {
    std::array<int, 2> s{0, 0};
    if (axes == 1) {
      s[0] = signed_index(static_cast<int>(idx), padded[0]);
    } else {
      s[0] = signed_index(static_cast<int>(idx / pad_last), padded[0]);
      s[1] = signed_index(static_cast<int>(idx % pad_last), padded[1]);
    }
    bool keep = true;
    for (int a = 0; a < axes; ++a) keep = keep && std::abs(s[a]) < padded[a] / 2;
    double v = 0.0;
    if (keep) {
      const std::size_t b = axes == 1 ? wrap(s[0], big[0])
                                      : static_cast<std::size_t>(wrap(s[0], big[0])) * big[1] +
                                            wrap(s[1], big[1]);
      v = kernel.get()[b];
    }
    small.get()[idx] = v;
  }
  {
    PlanPtr fwd(fftw_plan_dft_r2c(axes, const_cast<int*>(padded.data()), small.get(), out.get(),
                                  FFTW_ESTIMATE));
    fftw_execute(fwd.get());
  }
  std::vector<double> mult(pad_complex);
  for (std::size_t idx = 0; idx < pad_complex; ++idx) mult[idx] = out.get()[idx][0];
  return mult;
}

}  // namespace detail

// Fourier multiplier |xi''|^d with roll-off, applied to every offset row.
inline Sinogram apply_fractional_filter(const Sinogram& sino) {
  if (sino.role() == SinogramRole::kFiltered)
    throw ConfigError("sinogram is already filtered");
  const ChartSpec& chart = sino.chart();
  const int axes = chart.n - chart.d;
  if (axes == 2 && std::abs(chart.offset_spacing(0) - chart.offset_spacing(1)) >
                       1e-12 * chart.offset_spacing(0))
    throw ConfigError("fractional filter needs equal offset spacing on both axes");
  const double h = chart.offset_spacing(0);
  const double power = chart.d;

  Sinogram out = sino;
  out.set_role(SinogramRole::kFiltered);

  std::vector<int> padded(axes);
  std::size_t real_size = 1;
  for (int a = 0; a < axes; ++a) {
    padded[a] = 2 * chart.offset_counts[a];
    real_size *= padded[a];
  }
  const int last = padded[axes - 1];
  const std::size_t complex_size = real_size / last * (last / 2 + 1);
  std::unique_ptr<double, detail::FftwDeleter> buf(
      static_cast<double*>(fftw_malloc(sizeof(double) * real_size)));
  std::unique_ptr<fftw_complex, detail::FftwDeleter> spec(
      static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * complex_size)));
  detail::PlanPtr fwd(fftw_plan_dft_r2c(axes, padded.data(), buf.get(), spec.get(), FFTW_ESTIMATE));
  detail::PlanPtr inv(fftw_plan_dft_c2r(axes, padded.data(), spec.get(), buf.get(), FFTW_ESTIMATE));

  const std::vector<double> mult = detail::filter_multiplier(padded, h, power);
  const double norm = 1.0 / static_cast<double>(real_size);

  const std::size_t row = sino.row_size();
  for (int k = 0; k < chart.direction_count; ++k) {
    auto src = sino.row(k);
    std::fill(buf.get(), buf.get() + real_size, 0.0);
    if (axes == 1) {
      std::copy(src.begin(), src.end(), buf.get());
    } else {
      const int m1 = chart.offset_counts[1];
      for (std::size_t idx = 0; idx < row; ++idx)
        buf.get()[(idx / m1) * padded[1] + idx % m1] = src[idx];
    }
    fftw_execute(fwd.get());
    for (std::size_t idx = 0; idx < complex_size; ++idx) {
      spec.get()[idx][0] *= mult[idx] * norm;
      spec.get()[idx][1] *= mult[idx] * norm;
    }
    fftw_execute(inv.get());
    auto dst = out.row(k);
    if (axes == 1) {
      std::copy(buf.get(), buf.get() + row, dst.begin());
    } else {
      const int m1 = chart.offset_counts[1];
      for (std::size_t idx = 0; idx < row; ++idx)
        dst[idx] = buf.get()[(idx / m1) * padded[1] + idx % m1];
    }
  }
  return out;
}

// Normalized average over direction samples of the plane data on the flats
// through each grid point, divided by C(d, n). Offsets outside the sinogram
// grid read as zero and are counted in the report.
inline ImageGrid backproject(const Sinogram& sino, const ImageGrid& grid,
                             OperationReport* report = nullptr) {
  const ChartSpec& chart = sino.chart();
  if (grid.n != chart.n) throw ConfigError("image grid dimension differs from sinogram chart");
  ImageGrid out = grid;
  out.values.assign(grid.size(), 0.0);
  const auto& dirs = sino.directions();
  const int ndir = static_cast<int>(dirs.size());
  const int axes = chart.n - chart.d;
  const int n = chart.n;

  // Flattened per-direction projection vectors onto the offset axes.
  std::vector<double> proj(static_cast<std::size_t>(ndir) * axes * n);
  std::vector<double> weight(ndir);
  for (int k = 0; k < ndir; ++k) {
    weight[k] = dirs[k].weight;
    for (int a = 0; a < axes; ++a)
      for (int c = 0; c < n; ++c) proj[(k * axes + a) * n + c] = dirs[k].perp[a](c);
  }
  const double extent = chart.offset_extent;
  const double h0 = chart.offset_spacing(0);
  const int m0 = chart.offset_counts[0];
  const double h1 = axes == 2 ? chart.offset_spacing(1) : 1.0;
  const int m1 = axes == 2 ? chart.offset_counts[1] : 1;
  const double scale = 1.0 / chart.constant();

  const std::size_t line = grid.dims[0];
  const std::size_t lines = grid.size() / line;
  std::vector<std::size_t> oob(lines, 0);
  parallel_for(lines, [&](std::size_t li) {
    double x[3];
    std::size_t local_oob = 0;
    for (std::size_t i = 0; i < line; ++i) {
      const std::size_t index = li * line + i;
      x[0] = grid.origin[0] + i * grid.spacing[0];
      x[1] = grid.origin[1] + (li % grid.dims[1]) * grid.spacing[1];
      x[2] = n == 3 ? grid.origin[2] + (li / grid.dims[1]) * grid.spacing[2] : 0.0;
      double acc = 0.0;
      for (int k = 0; k < ndir; ++k) {
        const double* p = &proj[static_cast<std::size_t>(k) * axes * n];
        const auto row = sino.row(k);
        double t0 = 0.0;
        for (int c = 0; c < n; ++c) t0 += p[c] * x[c];
        t0 = (t0 + extent) / h0;
        if (axes == 1) {
          if (!(t0 >= 0.0 && t0 <= m0 - 1)) {
            ++local_oob;
            continue;
          }
          const int b = std::min(static_cast<int>(t0), m0 - 2);
          const double f = t0 - b;
          acc += weight[k] * ((1.0 - f) * row[b] + f * row[b + 1]);
        } else {
          double t1 = 0.0;
          for (int c = 0; c < n; ++c) t1 += p[n + c] * x[c];
          t1 = (t1 + extent) / h1;
          if (!(t0 >= 0.0 && t0 <= m0 - 1 && t1 >= 0.0 && t1 <= m1 - 1)) {
            ++local_oob;
            continue;
          }
          const int b0 = std::min(static_cast<int>(t0), m0 - 2);
          const int b1 = std::min(static_cast<int>(t1), m1 - 2);
          const double f0 = t0 - b0;
          const double f1 = t1 - b1;
          const std::size_t r0 = static_cast<std::size_t>(b0) * m1;
          const std::size_t r1 = r0 + m1;
          const double v = (1.0 - f0) * ((1.0 - f1) * row[r0 + b1] + f1 * row[r0 + b1 + 1]) +
                           f0 * ((1.0 - f1) * row[r1 + b1] + f1 * row[r1 + b1 + 1]);
          acc += weight[k] * v;
        }
      }
      out.values[index] = acc * scale;
    }
    oob[li] = local_oob;
  });
  if (report) {
    report->lookups += grid.size() * static_cast<std::size_t>(ndir);
    for (std::size_t v : oob) report->out_of_range += v;
    if (report->out_of_range_fraction() > 0.01) {
      std::ostringstream os;
      os << "back-projection: " << 100.0 * report->out_of_range_fraction()
         << "% of offset lookups fell outside the sinogram grid";
      report->warnings.push_back(os.str());
    }
  }
  return out;
}

inline ImageGrid fbp_reconstruct(const Sinogram& sino, const ImageGrid& grid,
                                 OperationReport* report = nullptr) {
  return backproject(apply_fractional_filter(sino), grid, report);
}

// Fourier transform int f(x) e^{-i x.xi} dx of chi_D + background.
inline std::complex<double> scene_fourier(const Scene& scene, const Vec& xi) {
  using namespace std::complex_literals;
  const int n = scene.dimension();
  std::complex<double> acc = 0.0;
  for (const auto& g : scene.background()) {
    const double mag = g.mass() * std::exp(-0.5 * xi.dot(g.covariance() * xi));
    acc += mag * std::exp(-1i * xi.dot(g.center()));
  }
  for (const auto& b : scene.bodies()) {
    const double k = b.centered_support(xi);
    double ball = 0.0;
    if (n == 2) {
      ball = k < 1e-8 ? std::numbers::pi : 2.0 * std::numbers::pi * std::cyl_bessel_j(1.0, k) / k;
    } else {
      ball = k < 1e-3 ? 4.0 * std::numbers::pi / 3.0 * (1.0 - k * k / 10.0)
                      : 4.0 * std::numbers::pi * (std::sin(k) - k * std::cos(k)) / (k * k * k);
    }
    acc += ball / b.sqrt_det_shape() * std::exp(-1i * xi.dot(b.center()));
  }
  return acc;
}

struct FourierSliceResult {
  double max_relative_error = 0.0;
  std::vector<double> errors;
  std::vector<std::complex<double>> discrete;
  std::vector<std::complex<double>> analytic;
};

// Compares the offset-domain Fourier transform of R_d f(sigma, .) with the
// n-dimensional transform of f on sigma^perp. Errors are relative to
// max(|f^(xi)|, 1e-8 |f^(0)|).
inline FourierSliceResult fourier_slice_check(const Scene& scene, const ChartSpec& chart,
                                              const DirectionSample& direction,
                                              const std::vector<Vec>& frequencies) {
  using namespace std::complex_literals;
  if (chart.n != scene.dimension()) throw ConfigError("chart dimension differs from scene");
  chart.validate();
  for (const Vec& xi : frequencies) {
    if (xi.size() != chart.n) throw InputError("frequency has wrong dimension");
    for (const Vec& w : direction.sigma)
      if (std::abs(xi.dot(w)) > 1e-9 * std::max(1.0, xi.norm()))
        throw InputError("frequency is not orthogonal to sigma");
  }
  const ChartKind kind = chart.kind();
  const int axes = chart.n - chart.d;
  std::size_t cells = chart.offset_grid_size();
  std::vector<double> profile(cells);
  std::vector<Vec> points(cells);
  double cell_measure = 1.0;
  for (int a = 0; a < axes; ++a) cell_measure *= chart.offset_spacing(a);
  const int m1 = axes == 2 ? chart.offset_counts[1] : 1;
  for (std::size_t idx = 0; idx < cells; ++idx) {
    Vec p = Vec::Zero(chart.n);
    if (axes == 1) {
      p = chart.offset_at(0, static_cast<int>(idx)) * direction.perp[0];
    } else {
      p = chart.offset_at(0, static_cast<int>(idx / m1)) * direction.perp[0] +
          chart.offset_at(1, static_cast<int>(idx % m1)) * direction.perp[1];
    }
    points[idx] = p;
    profile[idx] = kind == ChartKind::kPlane3
                       ? detail::plane_integral(scene, direction.axis, p.dot(direction.axis), true)
                       : detail::line_integral(scene, p, direction.sigma[0], true);
  }
  const double floor = 1e-8 * std::abs(scene_fourier(scene, Vec::Zero(chart.n)));
  FourierSliceResult res;
  for (const Vec& xi : frequencies) {
    std::complex<double> acc = 0.0;
    for (std::size_t idx = 0; idx < cells; ++idx)
      if (profile[idx] != 0.0) acc += profile[idx] * std::exp(-1i * points[idx].dot(xi));
    acc *= cell_measure;
    const std::complex<double> exact = scene_fourier(scene, xi);
    const double err = std::abs(acc - exact) / std::max(std::abs(exact), floor);
    res.discrete.push_back(acc);
    res.analytic.push_back(exact);
    res.errors.push_back(err);
    res.max_relative_error = std::max(res.max_relative_error, err);
  }
  return res;
}

struct MomentCheckResult {
  double max_deviation = 0.0;
  Eigen::VectorXd coefficients;  // monomial coefficients of the fitted P_k
};

namespace detail {

// Exponent tuples of the degree-k monomials in n variables.
inline std::vector<std::vector<int>> monomials(int n, int k) {
  std::vector<std::vector<int>> out;
  std::vector<int> e(n, 0);
  auto rec = [&](auto&& self, int var, int left) -> void {
    if (var == n - 1) {
      e[var] = left;
      out.push_back(e);
      return;
    }
    for (int p = left; p >= 0; --p) {
      e[var] = p;
      self(self, var + 1, left - p);
    }
  };
  rec(rec, 0, k);
  return out;
}

}  // namespace detail

// Fits one homogeneous polynomial P_k with P_k(xi'') = int (xi''.x'')^k
// R_d f(sigma, x'') dx'' for xi'' in sigma^perp over all directions. The
// deviation is the worst misfit relative to the largest absolute moment
// int |xi''.x''|^k |R_d f| dx'' over the samples.
inline MomentCheckResult moment_condition_check(const Sinogram& sino, int k) {
  if (k < 0 || k > 2) throw ConfigError("moment order must be 0, 1 or 2");
  const ChartSpec& chart = sino.chart();
  const int n = chart.n;
  const int axes = n - chart.d;
  const auto& dirs = sino.directions();
  const auto monos = detail::monomials(n, k);
  double cell_measure = 1.0;
  for (int a = 0; a < axes; ++a) cell_measure *= chart.offset_spacing(a);

  std::vector<Vec> xis;
  std::vector<double> moments;
  double scale = 0.0;
  for (int dir = 0; dir < static_cast<int>(dirs.size()); ++dir) {
    std::vector<Vec> samples;
    if (axes == 1) {
      samples = {dirs[dir].perp[0]};
    } else {
      const Vec& e1 = dirs[dir].perp[0];
      const Vec& e2 = dirs[dir].perp[1];
      samples = {e1, e2, (e1 + e2) / std::sqrt(2.0), (e1 - e2) / std::sqrt(2.0)};
    }
    const auto row = sino.row(dir);
    for (const Vec& xi : samples) {
      // xi'' . x'' in offset coordinates.
      Eigen::VectorXd c(axes);
      for (int a = 0; a < axes; ++a) c(a) = xi.dot(dirs[dir].perp[a]);
      double m = 0.0, mabs = 0.0;
      for (std::size_t idx = 0; idx < row.size(); ++idx) {
        if (row[idx] == 0.0) continue;
        const Vec x = sino.offset_coords(idx);
        const double t = std::pow(c.dot(x), k);
        m += t * row[idx];
        mabs += std::abs(t * row[idx]);
      }
      xis.push_back(xi);
      moments.push_back(m * cell_measure);
      scale = std::max(scale, mabs * cell_measure);
    }
  }
  Eigen::MatrixXd a(static_cast<Eigen::Index>(xis.size()), static_cast<Eigen::Index>(monos.size()));
  Eigen::VectorXd b(static_cast<Eigen::Index>(xis.size()));
  for (std::size_t r = 0; r < xis.size(); ++r) {
    for (std::size_t c = 0; c < monos.size(); ++c) {
      double v = 1.0;
      for (int i = 0; i < n; ++i) v *= std::pow(xis[r](i), monos[c][i]);
      a(r, c) = v;
    }
    b(r) = moments[r];
  }
  MomentCheckResult res;
  res.coefficients = a.bdcSvd(Eigen::ComputeThinU | Eigen::ComputeThinV).solve(b);
  const Eigen::VectorXd resid = a * res.coefficients - b;
  res.max_deviation = scale > 0.0 ? resid.cwiseAbs().maxCoeff() / scale : 0.0;
  return res;
}

}  // namespace dplane
