#pragma once

#include <array>
#include <cmath>
#include <memory>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "dplane/errors.hpp"
#include "dplane/grassmannian.hpp"

namespace dplane {

enum class SinogramRole { kTransform, kMeasurement, kMetalPart, kFiltered };

inline const char* role_name(SinogramRole role) {
  switch (role) {
    case SinogramRole::kTransform: return "transform";
    case SinogramRole::kMeasurement: return "measurement";
    case SinogramRole::kMetalPart: return "metal_part";
    case SinogramRole::kFiltered: return "filtered";
  }
  return "unknown";
}

inline SinogramRole role_from_name(const std::string& name) {
  if (name == "transform") return SinogramRole::kTransform;
  if (name == "measurement") return SinogramRole::kMeasurement;
  if (name == "metal_part") return SinogramRole::kMetalPart;
  if (name == "filtered") return SinogramRole::kFiltered;
  throw FormatError("unknown sinogram role '" + name + "'");
}

// Plane data sampled over direction samples x offset grid. Row k holds the
// offset grid of direction k, row-major over the perp axes (u1 slowest).
class Sinogram {
 public:
  Sinogram() = default;
  Sinogram(ChartSpec chart, SinogramRole role)
      : chart_(std::move(chart)), role_(role) {
    chart_.validate();
    directions_ = sample_directions(chart_);
    values_.assign(static_cast<std::size_t>(chart_.direction_count) * chart_.offset_grid_size(), 0.0);
  }

  const ChartSpec& chart() const { return chart_; }
  SinogramRole role() const { return role_; }
  void set_role(SinogramRole r) { role_ = r; }
  const std::vector<DirectionSample>& directions() const { return directions_; }

  std::size_t row_size() const { return chart_.offset_grid_size(); }
  std::span<double> row(int k) { return {values_.data() + k * row_size(), row_size()}; }
  std::span<const double> row(int k) const {
    return {values_.data() + k * row_size(), row_size()};
  }
  std::vector<double>& values() { return values_; }
  const std::vector<double>& values() const { return values_; }

  // Chart coordinates of offset-grid cell `index`.
  Vec offset_coords(std::size_t index) const {
    Vec c(chart_.n - chart_.d);
    if (c.size() == 1) {
      c(0) = chart_.offset_at(0, static_cast<int>(index));
    } else {
      const int m2 = chart_.offset_counts[1];
      c(0) = chart_.offset_at(0, static_cast<int>(index / m2));
      c(1) = chart_.offset_at(1, static_cast<int>(index % m2));
    }
    return c;
  }

  Flat flat(int k, std::size_t index) const {
    return chart_flat(chart_, directions_[k], offset_coords(index));
  }

  Sinogram& operator*=(double a) {
    for (double& v : values_) v *= a;
    return *this;
  }

 private:
  ChartSpec chart_;
  SinogramRole role_ = SinogramRole::kTransform;
  std::vector<DirectionSample> directions_;
  std::vector<double> values_;
};

// Uniform grid in 2 or 3 dimensions. Values are row-major with the last
// axis (x) fastest: index = (k * ny + j) * nx + i.
struct ImageGrid {
  int n = 2;
  std::array<int, 3> dims{1, 1, 1};          // nx, ny, nz
  std::array<double, 3> origin{0, 0, 0};     // coordinate of cell (0,0,0)
  std::array<double, 3> spacing{1, 1, 1};
  std::vector<double> values;

  // count^n cells covering [-extent, extent]^n, cell centered.
  static ImageGrid square(int n, int count, double extent) {
    if (n != 2 && n != 3) throw ConfigError("image dimension must be 2 or 3");
    if (count < 2 || !(extent > 0)) throw ConfigError("invalid image grid");
    ImageGrid g;
    g.n = n;
    const double h = 2.0 * extent / count;
    for (int a = 0; a < n; ++a) {
      g.dims[a] = count;
      g.spacing[a] = h;
      g.origin[a] = -extent + 0.5 * h;
    }
    g.values.assign(g.size(), 0.0);
    return g;
  }

  // count^n cells of spacing h centered on `center`.
  static ImageGrid patch(const Vec& center, int count, double h) {
    ImageGrid g;
    g.n = static_cast<int>(center.size());
    for (int a = 0; a < g.n; ++a) {
      g.dims[a] = count;
      g.spacing[a] = h;
      g.origin[a] = center(a) - 0.5 * (count - 1) * h;
    }
    g.values.assign(g.size(), 0.0);
    return g;
  }

  std::size_t size() const {
    std::size_t s = 1;
    for (int a = 0; a < n; ++a) s *= static_cast<std::size_t>(dims[a]);
    return s;
  }

  Vec point(std::size_t index) const {
    Vec x(n);
    const std::size_t i = index % dims[0];
    const std::size_t j = (index / dims[0]) % dims[1];
    x(0) = origin[0] + i * spacing[0];
    x(1) = origin[1] + j * spacing[1];
    if (n == 3) x(2) = origin[2] + (index / (static_cast<std::size_t>(dims[0]) * dims[1])) * spacing[2];
    return x;
  }

  double cell_volume() const {
    double v = 1.0;
    for (int a = 0; a < n; ++a) v *= spacing[a];
    return v;
  }

  bool same_geometry(const ImageGrid& o) const {
    return n == o.n && dims == o.dims && origin == o.origin && spacing == o.spacing;
  }
};

// Read-only view of a uniformly sampled field on an m-dimensional grid
// (m = 1, 2, 3). Axis 0 is the slowest-varying in memory.
struct GridView {
  int m = 1;
  std::array<int, 3> shape{1, 1, 1};
  std::array<double, 3> origin{0, 0, 0};
  std::array<double, 3> spacing{1, 1, 1};
  std::span<const double> values;

  std::size_t stride(int axis) const {
    std::size_t s = 1;
    for (int a = axis + 1; a < m; ++a) s *= static_cast<std::size_t>(shape[a]);
    return s;
  }

  double max_abs() const {
    double v = 0.0;
    for (double x : values) v = std::max(v, std::abs(x));
    return v;
  }

  // Multilinear interpolation; outside the grid returns 0 and sets *inside.
  double interpolate(const Vec& x, bool* inside = nullptr) const {
    std::array<int, 3> base{0, 0, 0};
    std::array<double, 3> frac{0, 0, 0};
    for (int a = 0; a < m; ++a) {
      const double t = (x(a) - origin[a]) / spacing[a];
      if (!(t >= 0.0 && t <= shape[a] - 1)) {
        if (inside) *inside = false;
        return 0.0;
      }
      base[a] = std::min(static_cast<int>(t), shape[a] - 2);
      frac[a] = t - base[a];
    }
    if (inside) *inside = true;
    double acc = 0.0;
    const int corners = 1 << m;
    for (int c = 0; c < corners; ++c) {
      double w = 1.0;
      std::size_t idx = 0;
      for (int a = 0; a < m; ++a) {
        const int bit = (c >> a) & 1;
        w *= bit ? frac[a] : 1.0 - frac[a];
        idx += static_cast<std::size_t>(base[a] + bit) * stride(a);
      }
      if (w != 0.0) acc += w * values[idx];
    }
    return acc;
  }
};

// Physical axes (x, y[, z]) in view order (z, y, x reversed to match memory).
// Points passed to the view must therefore be reversed too; use
// image_point_to_view.
inline GridView view_of(const ImageGrid& g) {
  GridView v;
  v.m = g.n;
  for (int a = 0; a < g.n; ++a) {
    v.shape[a] = g.dims[g.n - 1 - a];
    v.origin[a] = g.origin[g.n - 1 - a];
    v.spacing[a] = g.spacing[g.n - 1 - a];
  }
  v.values = g.values;
  return v;
}

inline Vec image_point_to_view(const Vec& x) { return x.reverse(); }

// (2,1) sinogram as a field over (theta, s).
inline GridView view_of_chart(const Sinogram& s) {
  if (s.chart().kind() != ChartKind::kLine2)
    throw ConfigError("chart-plane view requires the (2,1) chart");
  GridView v;
  v.m = 2;
  v.shape = {s.chart().direction_count, s.chart().offset_counts[0], 1};
  v.origin = {0.0, -s.chart().offset_extent, 0.0};
  v.spacing = {std::numbers::pi / s.chart().direction_count, s.chart().offset_spacing(0), 1.0};
  v.values = s.values();
  return v;
}

// A field that owns its samples; `view` points into `data`.
struct OwnedField {
  std::vector<double> data;
  GridView view;

  OwnedField() = default;
  OwnedField(const OwnedField&) = delete;
  OwnedField& operator=(const OwnedField&) = delete;
};

// The (2,1) chart field continued past theta = 0 and theta = pi by `pad`
// rows on each side through g(theta + pi, s) = g(theta, -s), so probes near
// the chart edges see the periodic sinogram instead of a cut.
inline std::unique_ptr<OwnedField> periodic_chart_field(const Sinogram& s, int pad) {
  const GridView base = view_of_chart(s);
  const int k_count = base.shape[0];
  const int m = base.shape[1];
  if (pad < 0 || pad > k_count) throw ConfigError("periodic padding must be within one period");
  auto out = std::make_unique<OwnedField>();
  const int rows = k_count + 2 * pad;
  out->data.assign(static_cast<std::size_t>(rows) * m, 0.0);
  for (int r = 0; r < rows; ++r) {
    int k = r - pad;
    bool flip = false;
    if (k < 0) {
      k += k_count;
      flip = true;
    } else if (k >= k_count) {
      k -= k_count;
      flip = true;
    }
    for (int i = 0; i < m; ++i) {
      // s_i = -E + i h, so -s_i sits at index m - i (index m is s = E, outside).
      const int src = flip ? m - i : i;
      if (src >= m) continue;
      out->data[static_cast<std::size_t>(r) * m + i] = base.values[static_cast<std::size_t>(k) * m + src];
    }
  }
  out->view = base;
  out->view.shape[0] = rows;
  out->view.origin[0] = base.origin[0] - pad * base.spacing[0];
  out->view.values = out->data;
  return out;
}

// Offset-grid row of direction k as a 1D (hyperplane charts) or 2D field.
inline GridView view_of_row(const Sinogram& s, int k) {
  GridView v;
  const auto& c = s.chart();
  v.m = c.n - c.d;
  for (int a = 0; a < v.m; ++a) {
    v.shape[a] = c.offset_counts[a];
    v.origin[a] = -c.offset_extent;
    v.spacing[a] = c.offset_spacing(a);
  }
  v.values = s.row(k);
  return v;
}

}  // namespace dplane
