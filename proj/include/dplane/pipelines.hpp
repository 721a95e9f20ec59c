#pragma once

#include <fftw3.h>
#include <openssl/opensslv.h>

#include <Eigen/Core>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <functional>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "dplane/beam_hardening.hpp"
#include "dplane/config.hpp"
#include "dplane/io.hpp"
#include "dplane/microlocal.hpp"
#include "dplane/parallel.hpp"
#include "dplane/product_check.hpp"
#include "dplane/transform.hpp"
#include "dplane/wavefront.hpp"

namespace dplane {

inline constexpr const char* kVersion = "1.0.0";

// One file of a run, held in memory until the run is written.
struct OutputFile {
  std::string name;
  std::string kind;  // sinogram | image | json | tsv | pgm
  std::string role;
  std::string bytes;
  std::string payload_sha256;
  Json windowing;  // pgm only
};

struct RunResult {
  std::string command;
  std::vector<OutputFile> files;
  Json summary = Json::object();
  std::vector<std::string> failures;  // numerical validation failures
  double seconds = 0.0;

  bool ok() const { return failures.empty(); }
  const OutputFile* file(const std::string& name) const {
    for (const auto& f : files)
      if (f.name == name) return &f;
    return nullptr;
  }
};

struct RunOptions {
  bool quicklook = false;
};

inline Json library_versions() {
  return Json{{"dplane", kVersion},
              {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) +
                            "." + std::to_string(EIGEN_MINOR_VERSION)},
              {"fftw", std::string(fftw_version)},
              {"openssl", OPENSSL_VERSION_TEXT}};
}

inline std::string provenance_of(const std::string& command, const RunConfig& cfg) {
  return sha256_hex(command + "\n" + std::to_string(cfg.seed) + "\n" + cfg.text);
}

namespace detail {

class RunBuilder {
 public:
  RunBuilder(std::string command, const RunConfig& cfg, const RunOptions& opts)
      : opts_(opts), provenance_(provenance_of(command, cfg)) {
    result_.command = std::move(command);
  }

  void sinogram(const std::string& name, const Sinogram& s, bool quicklook) {
    result_.files.push_back({name + ".dplt", "sinogram", role_name(s.role()), encode_sinogram(s, provenance_),
                             payload_sha256(s.values()), {}});
    if (quicklook || opts_.quicklook) pgm(name + ".pgm", raster_of(s));
  }

  void image(const std::string& name, const ImageGrid& g, const std::string& role, bool quicklook,
             const std::vector<std::pair<Vec, double>>* lines = nullptr) {
    result_.files.push_back({name + ".dplt", "image", role, encode_image(g, role, provenance_),
                             payload_sha256(g.values), {}});
    if (!(quicklook || opts_.quicklook)) return;
    const Raster r = raster_of(g);
    const Windowing w = full_range(r);
    auto px = to_gray16(r, w);
    if (lines && g.n == 2)
      for (const auto& [normal, offset] : *lines) overdraw_line(px, g, normal, offset);
    add_pgm(name + ".pgm", r.width, r.height, px, w);
  }

  void pgm(const std::string& name, const Raster& r) {
    const Windowing w = full_range(r);
    add_pgm(name, r.width, r.height, to_gray16(r, w), w);
  }

  void json(const std::string& name, const Json& doc) { text(name, "json", doc.dump(2) + "\n"); }

  void text(const std::string& name, const std::string& kind, const std::string& body) {
    result_.files.push_back({name, kind, kind, body, sha256_hex(body), {}});
  }

  void fail(const std::string& what) { result_.failures.push_back(what); }
  Json& summary() { return result_.summary; }
  RunResult finish() { return std::move(result_); }

 private:
  void add_pgm(const std::string& name, int w, int h, const std::vector<std::uint16_t>& px,
               const Windowing& win) {
    std::string out = "P5\n" + std::to_string(w) + " " + std::to_string(h) + "\n65535\n";
    for (std::uint16_t v : px) {
      out.push_back(static_cast<char>(v >> 8));
      out.push_back(static_cast<char>(v & 0xff));
    }
    result_.files.push_back({name, "pgm", "quicklook", out, sha256_hex(out), windowing_json(win)});
  }

  RunOptions opts_;
  std::string provenance_;
  RunResult result_;
};

inline Scene require_scene(const RunConfig& cfg) {
  if (!cfg.has_scene) throw ConfigError((cfg.source.empty() ? "<config>" : cfg.source.string()) +
                                        ": this command needs a 'scene'");
  return cfg.scene.build();
}

inline ImageGrid indicator_image(const Scene& scene, const ImageGrid& grid) {
  ImageGrid g = grid;
  parallel_for(g.size(), [&](std::size_t i) { g.values[i] = indicator(scene, g.point(i)); });
  return g;
}

inline Json report_json(const OperationReport& r) {
  return Json{{"lookups", r.lookups}, {"out_of_range", r.out_of_range}, {"warnings", r.warnings}};
}

inline Json probe_point_json(const ProductProbePoint& p) {
  Json probes = Json::array();
  for (const auto& c : p.probes)
    probes.push_back(Json{{"direction", vec_json(c.direction)},
                          {"class", c.cls == DirectionClass::kSingular ? "singular" : "smooth"},
                          {"reference_magnitude", c.reference_magnitude},
                          {"estimate", decay_json(c.estimate)}});
  return Json{{"point", vec_json(p.point)}, {"probes", probes}};
}

}  // namespace detail

inline Json product_report_json(const ProductProbeReport& r) {
  Json inter = Json::array(), off = Json::array();
  for (const auto& p : r.intersections) inter.push_back(detail::probe_point_json(p));
  for (const auto& p : r.off_locus) off.push_back(detail::probe_point_json(p));
  Json j{{"j", r.j},
         {"chart", chart_json(r.chart)},
         {"floor", r.floor},
         {"vacuous", r.vacuous},
         {"flagged", r.flagged},
         {"non_degenerate", r.non_degenerate()},
         {"off_locus_smooth", r.off_locus_smooth()},
         {"intersections", inter},
         {"off_locus", off},
         {"notes", r.notes}};
  if (r.k >= 0) j["k"] = r.k;
  return j;
}

// ---------------------------------------------------------------- commands

inline RunResult run_forward(const RunConfig& cfg, const RunOptions& opts = {}) {
  detail::RunBuilder b("forward", cfg, opts);
  const Scene scene = detail::require_scene(cfg);
  const Sinogram s = forward_sinogram(scene, cfg.chart, true);
  b.sinogram("transform", s, false);
  b.summary() = Json{{"chart", chart_json(cfg.chart)}, {"bodies", scene.bodies().size()},
                     {"bumps", scene.background().size()}};
  return b.finish();
}

inline RunResult run_fbp(const RunConfig& cfg, const RunOptions& opts = {}) {
  detail::RunBuilder b("fbp", cfg, opts);
  Sinogram s = cfg.input.empty() ? forward_sinogram(detail::require_scene(cfg), cfg.chart, true)
                                 : read_sinogram(cfg.input);
  ImageGrid grid = ImageGrid::square(s.chart().n, cfg.image.count,
                                     cfg.image.extent > 0.0 ? cfg.image.extent : s.chart().offset_extent);
  OperationReport rep;
  const ImageGrid img = fbp_reconstruct(s, grid, &rep);
  b.image("fbp", img, "fbp", false);
  b.summary() = Json{{"chart", chart_json(s.chart())}, {"grid", grid_json(img)},
                     {"source", cfg.input.empty() ? "scene" : "input"}, {"backprojection", detail::report_json(rep)}};
  return b.finish();
}

inline RunResult run_beamharden(const RunConfig& cfg, const RunOptions& opts = {}) {
  detail::RunBuilder b("beamharden", cfg, opts);
  const Scene scene = detail::require_scene(cfg);
  const Measurement m = synthesize_measurement(scene, cfg.chart, cfg.spectrum);
  const ImageGrid grid = cfg.image_grid();
  OperationReport ra, rr;
  const ImageGrid artifact = reconstruct_artifact(m.metal_part, grid, &ra);
  const ImageGrid recon = fbp_reconstruct(m.total, grid, &rr);
  b.sinogram("measurement", m.total, false);
  b.sinogram("metal_part", m.metal_part, false);
  b.image("artifact", artifact, "artifact", false);
  b.image("reconstruction", recon, "reconstruction", false);
  const BeamSeries series = series_coefficients(2);
  b.summary() = Json{{"chart", chart_json(cfg.chart)},
                     {"spectrum", {{"E0", cfg.spectrum.e0}, {"epsilon", cfg.spectrum.epsilon},
                                   {"alpha", cfg.spectrum.alpha}, {"strength", cfg.spectrum.strength()}}},
                     {"series", series.coefficients},
                     {"artifact_backprojection", detail::report_json(ra)},
                     {"reconstruction_backprojection", detail::report_json(rr)}};
  return b.finish();
}

inline Json intersections_json(const Scene& scene, const ChartSpec& chart, int line_count, std::uint64_t seed,
                               std::vector<std::string>* problems) {
  Json out = Json::array();
  const auto& bodies = scene.bodies();
  for (std::size_t j = 0; j < bodies.size(); ++j)
    for (std::size_t k = j + 1; k < bodies.size(); ++k) {
      const IntersectionReport r = intersection_report(bodies[j], bodies[k], chart, line_count, seed);
      if (problems && !r.consistent)
        problems->push_back("type-2 intersection in a hyperplane chart for bodies " +
                            std::to_string(bodies[j].label()) + ", " + std::to_string(bodies[k].label()));
      Json e = intersection_json(r);
      e["pair"] = {bodies[j].label(), bodies[k].label()};
      out.push_back(std::move(e));
    }
  return out;
}

inline RunResult run_atlas(const RunConfig& cfg, const RunOptions& opts = {}) {
  detail::RunBuilder b("atlas", cfg, opts);
  const Scene scene = detail::require_scene(cfg);
  const Atlas atlas = build_atlas(scene, cfg.chart.d, cfg.atlas.plane_samples, cfg.atlas.line_count, cfg.seed);
  std::vector<std::string> problems;
  Json doc = atlas_json(atlas);
  doc["chart"] = chart_json(cfg.chart);
  doc["intersections"] = intersections_json(scene, cfg.chart, cfg.atlas.line_count, cfg.seed, &problems);
  b.json("atlas.json", doc);
  for (const auto& p : problems) b.fail(p);
  b.summary() = Json{{"hyperplanes", atlas.hyperplanes.size()}, {"lines", atlas.lines.size()}};
  return b.finish();
}

inline RunResult run_probe(const RunConfig& cfg, const RunOptions& opts = {}) {
  detail::RunBuilder b("probe", cfg, opts);
  if (cfg.probe.probes.empty()) throw ConfigError("probe needs at least one entry in probes.points");
  // Field on its grid; image probes take (x, y[, z]) and are mapped to the
  // view's slowest-first axis order.
  std::unique_ptr<OwnedField> owned;
  GridView view;
  bool image_axes = true;
  ImageGrid img;
  Sinogram sino;
  if (!cfg.input.empty()) {
    if (file_kind(cfg.input) == "sinogram") {
      sino = read_sinogram(cfg.input);
      image_axes = false;
    } else {
      img = read_image(cfg.input);
    }
  } else {
    const Scene scene = detail::require_scene(cfg);
    if (cfg.probe.field == "indicator") {
      img = detail::indicator_image(scene, cfg.image_grid());
    } else if (cfg.probe.field == "artifact") {
      img = reconstruct_artifact(synthesize_measurement(scene, cfg.chart, cfg.spectrum).metal_part,
                                 cfg.image_grid());
    } else {
      sino = forward_sinogram(scene, cfg.chart, true);
      image_axes = false;
    }
  }
  if (image_axes) {
    view = view_of(img);
  } else {
    if (sino.chart().kind() != ChartKind::kLine2)
      throw ConfigError("sinogram probes need the (2,1) chart");
    owned = periodic_chart_field(sino, sino.chart().direction_count / 2);
    view = owned->view;
  }
  std::vector<DecayEstimate> est(cfg.probe.probes.size());
  std::vector<std::string> errors(est.size());
  parallel_for(est.size(), [&](std::size_t i) {
    const auto& p = cfg.probe.probes[i];
    try {
      est[i] = image_axes ? directional_decay(view, image_point_to_view(p.point),
                                              image_point_to_view(p.direction), cfg.probe.settings)
                          : directional_decay(view, p.point, p.direction, cfg.probe.settings);
    } catch (const Error& e) {
      errors[i] = e.what();
    }
  });
  for (std::size_t i = 0; i < errors.size(); ++i)
    if (!errors[i].empty()) throw InputError("probe " + std::to_string(i) + ": " + errors[i]);

  std::ostringstream tsv;
  tsv.precision(17);
  tsv << "index\tpoint\tdirection\tslope\tr2\tclass\tbelow_floor\tpoor_fit\n";
  Json rows = Json::array();
  for (std::size_t i = 0; i < est.size(); ++i) {
    const auto& p = cfg.probe.probes[i];
    const auto cls = classify_direction(est[i], cfg.probe.settings.smooth_threshold);
    const char* name = cls == DirectionClass::kSingular ? "singular" : "smooth";
    auto join = [](const Vec& v) {
      std::ostringstream os;
      os.precision(17);
      for (Eigen::Index a = 0; a < v.size(); ++a) os << (a ? "," : "") << v(a);
      return os.str();
    };
    tsv << i << '\t' << join(p.point) << '\t' << join(p.direction) << '\t' << est[i].slope << '\t'
        << est[i].r2 << '\t' << name << '\t' << est[i].below_floor << '\t' << est[i].poor_fit << '\n';
    Json row = decay_json(est[i]);
    row["point"] = detail::vec_json(p.point);
    row["direction"] = detail::vec_json(p.direction);
    row["class"] = name;
    rows.push_back(std::move(row));
  }
  b.text("probes.tsv", "tsv", tsv.str());
  b.json("probes.json", Json{{"field", cfg.input.empty() ? cfg.probe.field : "input"}, {"probes", rows}});
  b.summary() = Json{{"probes", est.size()}};
  return b.finish();
}

inline RunResult run_product_check(const RunConfig& cfg, const RunOptions& opts = {}) {
  detail::RunBuilder b("product-check", cfg, opts);
  const Scene scene = detail::require_scene(cfg);
  const auto& bodies = scene.bodies();
  if (bodies.empty()) throw ConfigError("product-check needs at least one body");
  std::vector<Sinogram> sinos;
  for (const auto& body : bodies) sinos.push_back(forward_sinogram(Scene(scene.dimension(), {body}, {}), cfg.chart, false));

  Json selfs = Json::array(), cross = Json::array();
  for (std::size_t j = 0; j < bodies.size(); ++j) {
    const auto rep = self_product_order(sinos[j], bodies[j], cfg.product.direction_index, cfg.probe.settings);
    selfs.push_back(product_report_json(rep));
  }
  if (cfg.chart.kind() == ChartKind::kLine2) {
    CrossProbeOptions co;
    co.settings = cfg.probe.settings;
    co.off_locus_points = cfg.product.off_locus_points;
    co.off_locus_directions = cfg.product.off_locus_directions;
    co.off_locus_widths = cfg.product.off_locus_widths;
    for (std::size_t j = 0; j < bodies.size(); ++j)
      for (std::size_t k = j + 1; k < bodies.size(); ++k) {
        const auto rep = cross_product_probe(sinos[j], sinos[k], bodies[j], bodies[k], co);
        if (!rep.vacuous && !rep.non_degenerate())
          b.fail("product of bodies " + std::to_string(rep.j) + ", " + std::to_string(rep.k) +
                 " is degenerate at an S_jk point");
        if (!rep.vacuous && !rep.off_locus_smooth())
          b.fail("product of bodies " + std::to_string(rep.j) + ", " + std::to_string(rep.k) +
                 " is singular off the predicted loci");
        cross.push_back(product_report_json(rep));
      }
  }
  Json products{{"self", selfs}, {"cross", cross}};
  b.json("product.json", products);
  const Atlas atlas = build_atlas(scene, cfg.chart.d, cfg.atlas.plane_samples, cfg.atlas.line_count, cfg.seed);
  Json doc = atlas_json(atlas);
  doc["chart"] = chart_json(cfg.chart);
  doc["products"] = products;
  b.json("atlas.json", doc);
  b.summary() = Json{{"self_reports", selfs.size()}, {"cross_reports", cross.size()}};
  return b.finish();
}

// ---------------------------------------------------------------- two-disk streaks

struct Fig1Defaults {
  static RunConfig config() {
    RunConfig cfg;
    cfg.has_scene = true;
    cfg.scene.dimension = 2;
    Vec a(2), c(2);
    a << -2.0, 0.0;
    c << 2.0, 0.0;
    cfg.scene.bodies = {{a, 1.0, std::nullopt, 0}, {c, 1.0, std::nullopt, 1}};
    cfg.chart.n = 2;
    cfg.chart.d = 1;
    cfg.chart.direction_count = 360;
    cfg.chart.offset_counts = {512};
    cfg.chart.offset_extent = 6.0;
    cfg.image.count = 256;
    cfg.image.extent = 5.0;
    return cfg;
  }
};

// Line x . normal = offset avoiding the convex hull of the bodies by `margin`.
inline bool avoids_hull(const Scene& scene, const Vec& normal, double offset, double margin) {
  double hi = -std::numeric_limits<double>::infinity(), lo = std::numeric_limits<double>::infinity();
  for (const auto& b : scene.bodies()) {
    hi = std::max(hi, support_value(b, normal));
    lo = std::min(lo, -support_value(b, (-normal).eval()));
  }
  return offset > hi + margin || offset < lo - margin;
}

// Distance between two lines in the chart plane: angle scaled by `radius`
// combined with the offset difference, after matching orientations.
inline double chart_distance(const Vec& n1, double s1, const Vec& n2, double s2, double radius) {
  const double c = n1.dot(n2);
  const double sign = c < 0.0 ? -1.0 : 1.0;
  const double angle = std::acos(std::min(1.0, std::abs(c)));
  return std::hypot(radius * angle, s1 - sign * s2);
}

// Seeded control lines: clear of the bodies' convex hull by `clearance`, within
// the central 60% of the image, and at least `min_distance` in the chart
// plane from every predicted tangent line.
inline std::vector<TangentFlat> control_lines(const Scene& scene, const ImageGrid& grid,
                                              const std::vector<TangentFlat>& tangents, int count,
                                              double clearance, double min_distance, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double half = 0.5 * grid.dims[0] * grid.spacing[0];
  std::vector<TangentFlat> out;
  for (int tries = 0; static_cast<int>(out.size()) < count && tries < 100000; ++tries) {
    const double th = std::numbers::pi * unit(rng);
    const double s = half * (2.0 * unit(rng) - 1.0);
    Vec w(2);
    w << std::cos(th), std::sin(th);
    if (std::abs(s) > 0.6 * half || !avoids_hull(scene, w, s, clearance)) continue;
    bool near = false;
    for (const auto& t : tangents)
      near = near || chart_distance(w, s, t.normal, t.offset, half) < min_distance;
    if (near) continue;
    TangentFlat t;
    t.kind = 1;
    t.normal = w;
    t.offset = s;
    t.y_j = Vec::Constant(2, std::numeric_limits<double>::infinity());
    t.y_k = t.y_j;
    t.eta_j = w;
    t.eta_k = w;
    out.push_back(std::move(t));
  }
  return out;
}

struct Fig1Thresholds {
  static constexpr double kTangentMin = 3.0;
  static constexpr double kControlMax = 1.5;
};

inline RunResult run_reproduce_fig1(const RunConfig& cfg_in, const RunOptions& opts = {}) {
  RunConfig cfg = cfg_in;
  if (!cfg.has_scene) {
    RunConfig d = Fig1Defaults::config();
    cfg.has_scene = true;
    cfg.scene = d.scene;
    cfg.chart = d.chart;
    cfg.image = d.image;
  }
  detail::RunBuilder b("reproduce-fig1", cfg, opts);
  const Scene scene = cfg.scene.build();
  if (scene.dimension() != 2 || cfg.chart.kind() != ChartKind::kLine2)
    throw ConfigError("reproduce-fig1 runs on a 2D scene with the (2,1) chart");
  const ImageGrid grid = cfg.image_grid();

  const ImageGrid chi = detail::indicator_image(scene, grid);
  const Sinogram r1 = forward_sinogram(scene.metal_only(), cfg.chart, false);
  OperationReport rep1, rep2;
  const ImageGrid fbp1 = fbp_reconstruct(r1, grid, &rep1);
  const ImageGrid fbp2 = fbp_reconstruct(squared(r1), grid, &rep2);
  const Atlas atlas = build_atlas(scene, 1, cfg.atlas.plane_samples, cfg.atlas.line_count, cfg.seed);

  std::vector<std::pair<Vec, double>> lines;
  for (const auto& t : atlas.hyperplanes) lines.push_back({t.normal, t.offset});
  b.image("chi", chi, "indicator", true);
  b.sinogram("r1_chi", r1, true);
  b.image("fbp_r1_chi", fbp1, "fbp", true);
  b.image("fbp_r1_chi_squared", fbp2, "fbp", true, &lines);

  const std::size_t pairs = scene.bodies().size() * (scene.bodies().size() - 1) / 2;
  if (atlas.hyperplanes.size() != 4 * pairs)
    b.fail("expected " + std::to_string(4 * pairs) + " common tangent lines, found " +
           std::to_string(atlas.hyperplanes.size()));
  Json tangents = Json::array(), controls = Json::array();
  for (const auto& t : atlas.hyperplanes) {
    const auto m = streak_contrast(fbp2, scene, t, cfg.streak.margin, cfg.streak.window_width);
    tangents.push_back(Json{{"normal", detail::vec_json(t.normal)}, {"offset", t.offset},
                            {"ratio", m.ratio}, {"on_flat", m.on_flat},
                            {"control_median", m.control_median}, {"samples", m.samples}});
    if (!(m.ratio >= Fig1Thresholds::kTangentMin))
      b.fail("streak contrast " + std::to_string(m.ratio) + " below " +
             std::to_string(Fig1Thresholds::kTangentMin) + " on a tangent line");
  }
  const double window = cfg.streak.window_width > 0.0 ? cfg.streak.window_width : 12.0 * grid.spacing[0];
  for (const auto& t : control_lines(scene, grid, atlas.hyperplanes, cfg.streak.control_lines,
                                     cfg.streak.margin + window, 3.0 * window, cfg.seed)) {
    const auto m = streak_contrast(fbp2, scene, t, cfg.streak.margin, cfg.streak.window_width);
    controls.push_back(Json{{"normal", detail::vec_json(t.normal)}, {"offset", t.offset}, {"ratio", m.ratio}});
    if (!(m.ratio < Fig1Thresholds::kControlMax))
      b.fail("streak contrast " + std::to_string(m.ratio) + " on a control line");
  }
  Json doc = atlas_json(atlas);
  doc["chart"] = chart_json(cfg.chart);
  doc["streaks"] = Json{{"tangent", tangents}, {"control", controls}, {"margin", cfg.streak.margin}};
  b.json("atlas.json", doc);
  b.summary() = Json{{"tangent_lines", atlas.hyperplanes.size()},
                     {"fbp_r1_chi_backprojection", detail::report_json(rep1)},
                     {"fbp_r1_chi_squared_backprojection", detail::report_json(rep2)}};
  return b.finish();
}

// ---------------------------------------------------------------- selfcheck

struct CheckOutcome {
  std::string name;
  double value = 0.0;
  double limit = 0.0;
  bool pass = false;
};

inline std::vector<CheckOutcome> selfcheck_suite(std::uint64_t seed) {
  std::vector<CheckOutcome> out;
  auto record = [&](std::string name, double value, double limit, bool pass) {
    out.push_back({std::move(name), value, limit, pass});
  };
  auto v2 = [](double a, double b) {
    Vec v(2);
    v << a, b;
    return v;
  };

  // Gaussian scene: Fourier slice, inversion, range moments.
  const Scene gauss(2, {}, {GaussianBump(v2(0.3, -0.2), Mat::Identity(2, 2) * 0.25, 1.0)});
  ChartSpec c2;
  c2.direction_count = 180;
  c2.offset_counts = {256};
  c2.offset_extent = 4.0;
  {
    const auto dirs = sample_directions(c2);
    std::vector<Vec> xis;
    for (double r : {0.0, 1.0, 2.5, 4.0}) xis.push_back(r * dirs[17].perp[0]);
    const double err = fourier_slice_check(gauss, c2, dirs[17], xis).max_relative_error;
    record("fourier slice (2,1)", err, 1e-3, err < 1e-3);
  }
  {
    const Sinogram s = forward_sinogram(gauss, c2, true);
    ImageGrid g = ImageGrid::patch(v2(0.3, -0.2), 3, 0.05);
    const ImageGrid r = fbp_reconstruct(s, g);
    const double err = std::abs(r.values[4] - 1.0);
    record("fbp gaussian center", err, 1e-2, err < 1e-2);
    for (int k = 0; k <= 2; ++k) {
      const double dev = moment_condition_check(s, k).max_deviation;
      record("range moment k=" + std::to_string(k), dev, 1e-3, dev < 1e-3);
    }
  }
  // Beam-hardening series.
  {
    const BeamSeries s = series_coefficients(2);
    const double err = std::max(std::abs(s.coefficients[0] + 1.0 / 6.0), std::abs(s.coefficients[1] - 1.0 / 180.0));
    record("series coefficients", err, 1e-12, err < 1e-12);
  }
  // Support function and boundary normal round trip; canonical relation.
  {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> nd(0.0, 1.0);
    Mat q(3, 3);
    q << 2.0, 0.3, 0.1, 0.3, 1.0, 0.2, 0.1, 0.2, 1.5;
    Vec c(3);
    c << 0.2, -0.1, 0.3;
    const ConvexBody body(c, q);
    double rt = 0.0, adj = 0.0, locus = 0.0;
    for (int i = 0; i < 200; ++i) {
      Vec w(3);
      w << nd(rng), nd(rng), nd(rng);
      w.normalize();
      const BoundaryPoint bp = boundary_point_and_normal(body, w);
      rt = std::max(rt, std::abs(w.dot(bp.point) - support_value(body, w)));
      const int d = 1 + i % 2;
      for (const auto& fc : canonical_forward({bp.point, bp.normal}, 3, d, 4)) {
        const AdjointResult ar = canonical_adjoint(fc);
        if (!ar.accepted || ar.covectors.empty()) {
          adj = std::numeric_limits<double>::infinity();
          continue;
        }
        const Covector& back = ar.covectors.front();
        adj = std::max(adj, (back.base - bp.point).norm() +
                                (back.direction.normalized() - bp.normal.normalized()).norm());
        if (d == 2) locus = std::max(locus, std::abs(tangency_residual(body, fc.base)));
      }
    }
    record("support round trip", rt, 1e-9, rt < 1e-9);
    record("canonical round trip", adj, 1e-9, adj < 1e-9);
    record("forward image on locus", locus, 1e-8, locus < 1e-8);
  }
  // Binary format round trip.
  {
    Sinogram s(c2, SinogramRole::kTransform);
    std::mt19937_64 rng(seed + 1);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (double& v : s.values()) v = u(rng);
    const Sinogram back = decode_sinogram(encode_sinogram(s, "selfcheck"));
    const bool same = std::memcmp(back.values().data(), s.values().data(), s.values().size() * 8) == 0;
    record("binary round trip", same ? 0.0 : 1.0, 0.0, same);
  }
  // Probe on a half-plane step.
  {
    ImageGrid g = ImageGrid::square(2, 256, 2.0);
    for (std::size_t i = 0; i < g.size(); ++i) {
      const Vec x = g.point(i);
      g.values[i] = x(0) + 0.5 * x(1) > 0.0 ? 1.0 : 0.0;
    }
    const DecayEstimate e = directional_decay(view_of(g), Vec::Zero(2), image_point_to_view(v2(1, 0.5).normalized()));
    record("step probe slope", e.slope, -1.0, std::abs(e.slope + 1.0) < 0.2);
  }
  // Two-disk atlas.
  {
    const Scene disks(2, {ConvexBody::ball(v2(-2, 0), 1.0, 0), ConvexBody::ball(v2(2, 0), 1.0, 1)}, {});
    const auto n = static_cast<double>(build_atlas(disks, 1).hyperplanes.size());
    record("two-disk tangent count", n, 4.0, n == 4.0);
  }
  return out;
}

inline RunResult run_selfcheck(const RunConfig& cfg, const RunOptions& opts = {}) {
  detail::RunBuilder b("selfcheck", cfg, opts);
  Json checks = Json::array();
  for (const auto& c : selfcheck_suite(cfg.seed)) {
    checks.push_back(Json{{"name", c.name}, {"value", c.value}, {"limit", c.limit}, {"pass", c.pass}});
    if (!c.pass) b.fail(c.name);
  }
  b.json("selfcheck.json", Json{{"checks", checks}});
  b.summary() = Json{{"checks", checks.size()}};
  return b.finish();
}

// ---------------------------------------------------------------- dispatch

inline const std::vector<std::string>& command_names() {
  static const std::vector<std::string> names{"forward", "fbp", "beamharden", "atlas", "probe",
                                              "product-check", "reproduce-fig1", "selfcheck"};
  return names;
}

inline RunResult run_command(const std::string& command, const RunConfig& cfg, const RunOptions& opts = {}) {
  const auto t0 = std::chrono::steady_clock::now();
  RunResult r;
  if (command == "forward") r = run_forward(cfg, opts);
  else if (command == "fbp") r = run_fbp(cfg, opts);
  else if (command == "beamharden") r = run_beamharden(cfg, opts);
  else if (command == "atlas") r = run_atlas(cfg, opts);
  else if (command == "probe") r = run_probe(cfg, opts);
  else if (command == "product-check") r = run_product_check(cfg, opts);
  else if (command == "reproduce-fig1") r = run_reproduce_fig1(cfg, opts);
  else if (command == "selfcheck") r = run_selfcheck(cfg, opts);
  else throw ConfigError("unknown subcommand '" + command + "'");
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

// Deterministic record of a run: no paths, clocks or thread counts.
inline Json manifest_json(const RunResult& r, const RunConfig& cfg) {
  Json outputs = Json::array();
  for (const auto& f : r.files) {
    Json e{{"file", f.name}, {"kind", f.kind}, {"role", f.role}, {"sha256", f.payload_sha256}};
    if (!f.windowing.is_null()) e["windowing"] = f.windowing;
    outputs.push_back(std::move(e));
  }
  return Json{{"command", r.command},
              {"config_sha256", sha256_hex(cfg.text)},
              {"seed", cfg.seed},
              {"versions", library_versions()},
              {"summary", r.summary},
              {"validation", {{"passed", r.ok()}, {"failures", r.failures}}},
              {"outputs", outputs}};
}

inline void write_run(const std::filesystem::path& dir, const RunResult& r, const RunConfig& cfg) {
  for (const auto& f : r.files) detail::write_file(dir / f.name, f.bytes);
  detail::write_file(dir / "manifest.json", manifest_json(r, cfg).dump(2) + "\n");
  const Json timings{{"command", r.command}, {"seconds", r.seconds}, {"threads", thread_count()}};
  detail::write_file(dir / "timings.json", timings.dump(2) + "\n");
}

}  // namespace dplane
