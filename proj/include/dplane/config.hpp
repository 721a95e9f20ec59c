#pragma once

#include <yaml-cpp/yaml.h>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "dplane/beam_hardening.hpp"
#include "dplane/errors.hpp"
#include "dplane/grassmannian.hpp"
#include "dplane/scene.hpp"
#include "dplane/wavefront.hpp"

namespace dplane {

// Scene description as read from a config, before validation.
struct SceneSpec {
  int dimension = 2;
  struct Body {
    Vec center;
    std::optional<double> radius;
    std::optional<Mat> shape;
    int label = 0;
  };
  struct Bump {
    Vec center;
    Mat covariance;
    double amplitude = 1.0;
  };
  std::vector<Body> bodies;
  std::vector<Bump> background;
  double alpha = 1.0;
  double min_separation = 0.0;

  Scene build() const {
    std::vector<ConvexBody> b;
    for (const auto& s : bodies)
      b.push_back(s.radius ? ConvexBody::ball(s.center, *s.radius, s.label)
                           : ConvexBody(s.center, *s.shape, s.label));
    std::vector<GaussianBump> g;
    for (const auto& s : background) g.emplace_back(s.center, s.covariance, s.amplitude);
    return Scene(dimension, std::move(b), std::move(g), alpha, min_separation);
  }
};

struct ImageSpec {
  int count = 128;
  double extent = 0.0;  // 0: the chart offset extent
};

struct ProbeSpec {
  Vec point;
  Vec direction;
};

struct ProbeBatch {
  std::string field = "indicator";  // indicator | transform | artifact
  std::vector<ProbeSpec> probes;
  ProbeSettings settings;
};

struct AtlasSpec {
  int plane_samples = 128;
  int line_count = 64;
};

struct ProductSpec {
  int direction_index = 0;
  int off_locus_points = 24;
  int off_locus_directions = 8;
  double off_locus_widths = 5.0;
};

struct StreakSpec {
  double margin = 0.3;
  double window_width = 0.0;
  int control_lines = 20;
};

struct RunConfig {
  std::filesystem::path source;  // empty for built-in defaults
  std::string text;              // bytes hashed into the manifest
  std::uint64_t seed = 1;
  bool has_scene = false;
  SceneSpec scene;
  ChartSpec chart;
  ImageSpec image;
  SpectralModel spectrum;
  std::filesystem::path input;
  ProbeBatch probe;
  AtlasSpec atlas;
  ProductSpec product;
  StreakSpec streak;
  std::filesystem::path output;

  ImageGrid image_grid() const {
    return ImageGrid::square(chart.n, image.count, image.extent > 0.0 ? image.extent : chart.offset_extent);
  }
};

namespace detail {

class ConfigReader {
 public:
  explicit ConfigReader(std::string name) : name_(std::move(name)) {}

  [[noreturn]] void fail(const YAML::Node& node, const std::string& msg) const {
    const YAML::Mark m = node.Mark();
    std::string where = name_;
    if (!m.is_null()) where += ":" + std::to_string(m.line + 1) + ":" + std::to_string(m.column + 1);
    throw ConfigError(where + ": " + msg);
  }

  void require_map(const YAML::Node& node, const std::string& what,
                   const std::set<std::string>& allowed) const {
    if (!node.IsMap()) fail(node, what + " must be a mapping");
    for (const auto& kv : node) {
      const auto key = kv.first.as<std::string>();
      if (!allowed.count(key)) fail(kv.first, "unknown key '" + key + "' in " + what);
    }
  }

  template <class T>
  T scalar(const YAML::Node& node, const std::string& what) const {
    if (!node.IsScalar()) fail(node, what + " must be a scalar");
    try {
      return node.as<T>();
    } catch (const YAML::Exception&) {
      fail(node, "cannot parse " + what + " from '" + node.Scalar() + "'");
    }
  }

  double positive(const YAML::Node& node, const std::string& what) const {
    const double v = scalar<double>(node, what);
    if (!(v > 0.0)) fail(node, what + " must be positive");
    return v;
  }

  int count(const YAML::Node& node, const std::string& what, int lo) const {
    const int v = scalar<int>(node, what);
    if (v < lo) fail(node, what + " must be >= " + std::to_string(lo));
    return v;
  }

  Vec vector(const YAML::Node& node, const std::string& what, int dim) const {
    if (!node.IsSequence()) fail(node, what + " must be a list");
    if (static_cast<int>(node.size()) != dim)
      fail(node, what + " must have " + std::to_string(dim) + " entries");
    Vec v(dim);
    for (int i = 0; i < dim; ++i) v(i) = scalar<double>(node[i], what + " entry");
    return v;
  }

  Mat matrix(const YAML::Node& node, const std::string& what, int dim) const {
    if (!node.IsSequence() || static_cast<int>(node.size()) != dim)
      fail(node, what + " must be a list of " + std::to_string(dim) + " rows");
    Mat m(dim, dim);
    for (int r = 0; r < dim; ++r) m.row(r) = vector(node[r], what + " row", dim).transpose();
    if ((m - m.transpose()).cwiseAbs().maxCoeff() > 1e-12 * std::max(1.0, m.cwiseAbs().maxCoeff()))
      fail(node, what + " must be symmetric");
    Eigen::SelfAdjointEigenSolver<Mat> eig(m);
    if (!(eig.eigenvalues().minCoeff() > 0.0)) fail(node, what + " must be positive definite");
    return m;
  }

  SceneSpec scene(const YAML::Node& node) const {
    require_map(node, "scene", {"dimension", "bodies", "background", "alpha", "min_separation"});
    SceneSpec s;
    if (!node["dimension"]) fail(node, "scene needs 'dimension'");
    s.dimension = scalar<int>(node["dimension"], "scene.dimension");
    if (s.dimension != 2 && s.dimension != 3) fail(node["dimension"], "scene.dimension must be 2 or 3");
    if (node["alpha"]) {
      s.alpha = scalar<double>(node["alpha"], "scene.alpha");
      if (!(s.alpha >= 0.0)) fail(node["alpha"], "scene.alpha must be >= 0");
    }
    if (node["min_separation"]) {
      s.min_separation = scalar<double>(node["min_separation"], "scene.min_separation");
      if (!(s.min_separation >= 0.0)) fail(node["min_separation"], "scene.min_separation must be >= 0");
    }
    if (const auto bodies = node["bodies"]) {
      if (!bodies.IsSequence()) fail(bodies, "scene.bodies must be a list");
      int label = 0;
      for (const auto& b : bodies) {
        require_map(b, "body", {"center", "radius", "shape_matrix", "label"});
        SceneSpec::Body body;
        if (!b["center"]) fail(b, "body needs 'center'");
        body.center = vector(b["center"], "body center", s.dimension);
        if (b["radius"] && b["shape_matrix"]) fail(b, "body takes either 'radius' or 'shape_matrix'");
        if (b["radius"]) body.radius = positive(b["radius"], "body radius");
        else if (b["shape_matrix"]) body.shape = matrix(b["shape_matrix"], "shape_matrix", s.dimension);
        else fail(b, "body needs 'radius' or 'shape_matrix'");
        body.label = b["label"] ? scalar<int>(b["label"], "body label") : label;
        ++label;
        s.bodies.push_back(std::move(body));
      }
    }
    if (const auto bg = node["background"]) {
      if (!bg.IsSequence()) fail(bg, "scene.background must be a list");
      for (const auto& g : bg) {
        require_map(g, "background bump", {"center", "covariance", "amplitude"});
        SceneSpec::Bump bump;
        if (!g["center"] || !g["covariance"]) fail(g, "bump needs 'center' and 'covariance'");
        bump.center = vector(g["center"], "bump center", s.dimension);
        bump.covariance = matrix(g["covariance"], "covariance", s.dimension);
        if (g["amplitude"]) bump.amplitude = scalar<double>(g["amplitude"], "bump amplitude");
        s.background.push_back(std::move(bump));
      }
    }
    return s;
  }

  ChartSpec chart(const YAML::Node& node, int dimension) const {
    require_map(node, "chart", {"d", "directions", "offsets", "extent"});
    ChartSpec c;
    c.n = dimension;
    c.d = node["d"] ? scalar<int>(node["d"], "chart.d") : dimension - 1;
    if (!supported(c.n, c.d))
      fail(node["d"] ? node["d"] : node, "unsupported chart (n, d) = (" + std::to_string(c.n) + ", " +
                                             std::to_string(c.d) + ")");
    if (node["directions"]) c.direction_count = count(node["directions"], "chart.directions", 2);
    const int axes = c.n - c.d;
    c.offset_counts.assign(axes, 256);
    if (const auto o = node["offsets"]) {
      if (o.IsScalar()) {
        c.offset_counts.assign(axes, count(o, "chart.offsets", 2));
      } else if (o.IsSequence() && static_cast<int>(o.size()) == axes) {
        for (int a = 0; a < axes; ++a) c.offset_counts[a] = count(o[a], "chart.offsets entry", 2);
      } else {
        fail(o, "chart.offsets must be a count or a list of " + std::to_string(axes));
      }
    }
    if (node["extent"]) c.offset_extent = positive(node["extent"], "chart.extent");
    return c;
  }

  const std::string& name() const { return name_; }

 private:
  std::string name_;
};

inline YAML::Node load_yaml(const std::string& text, const std::string& name) {
  try {
    return YAML::Load(text);
  } catch (const YAML::ParserException& e) {
    throw ConfigError(name + ":" + std::to_string(e.mark.line + 1) + ":" +
                      std::to_string(e.mark.column + 1) + ": " + e.msg);
  }
}

}  // namespace detail

// Parses a config document. Relative paths resolve against `base`.
inline RunConfig parse_config(const std::string& text, const std::string& name = "<config>",
                              const std::filesystem::path& base = {}) {
  const YAML::Node root = detail::load_yaml(text, name);
  const detail::ConfigReader rd(name);
  RunConfig cfg;
  cfg.text = text;
  if (root.IsNull()) return cfg;
  rd.require_map(root, "config",
                 {"seed", "scene", "chart", "image", "spectrum", "input", "probes", "atlas", "product",
                  "streak", "output"});
  auto resolve = [&](const std::string& p) {
    std::filesystem::path path(p);
    return path.is_relative() && !base.empty() ? base / path : path;
  };
  if (root["seed"]) cfg.seed = rd.scalar<std::uint64_t>(root["seed"], "seed");
  if (const auto sc = root["scene"]) {
    cfg.has_scene = true;
    if (sc.IsScalar()) {
      const auto path = resolve(sc.as<std::string>());
      std::ifstream in(path);
      if (!in) rd.fail(sc, "cannot open scene file " + path.string());
      std::ostringstream os;
      os << in.rdbuf();
      const YAML::Node sub = detail::load_yaml(os.str(), path.string());
      cfg.scene = detail::ConfigReader(path.string()).scene(sub);
    } else {
      cfg.scene = rd.scene(sc);
    }
  }
  const int dim = cfg.scene.dimension;
  cfg.chart.n = dim;
  cfg.chart.d = dim - 1;
  cfg.chart.offset_counts.assign(1, 256);
  if (root["chart"]) cfg.chart = rd.chart(root["chart"], dim);
  if (const auto im = root["image"]) {
    rd.require_map(im, "image", {"count", "extent"});
    if (im["count"]) cfg.image.count = rd.count(im["count"], "image.count", 2);
    if (im["extent"]) cfg.image.extent = rd.positive(im["extent"], "image.extent");
  }
  cfg.spectrum.alpha = cfg.scene.alpha;
  if (const auto sp = root["spectrum"]) {
    rd.require_map(sp, "spectrum", {"E0", "epsilon"});
    if (sp["E0"]) cfg.spectrum.e0 = rd.positive(sp["E0"], "spectrum.E0");
    if (sp["epsilon"]) cfg.spectrum.epsilon = rd.positive(sp["epsilon"], "spectrum.epsilon");
    try {
      cfg.spectrum.validate();
    } catch (const ConfigError& e) {
      rd.fail(sp, e.what());
    }
  }
  if (const auto in = root["input"]) {
    cfg.input = resolve(rd.scalar<std::string>(in, "input"));
    if (!std::filesystem::exists(cfg.input)) rd.fail(in, "input file " + cfg.input.string() + " does not exist");
  }
  if (const auto pr = root["probes"]) {
    rd.require_map(pr, "probes",
                   {"field", "points", "window_width", "smooth_threshold", "radii_count", "floor_relative"});
    if (pr["field"]) {
      cfg.probe.field = rd.scalar<std::string>(pr["field"], "probes.field");
      if (cfg.probe.field != "indicator" && cfg.probe.field != "transform" && cfg.probe.field != "artifact")
        rd.fail(pr["field"], "probes.field must be indicator, transform or artifact");
    }
    auto& s = cfg.probe.settings;
    if (pr["window_width"]) s.window_width = rd.positive(pr["window_width"], "probes.window_width");
    if (pr["smooth_threshold"]) s.smooth_threshold = rd.scalar<double>(pr["smooth_threshold"], "probes.smooth_threshold");
    if (pr["radii_count"]) s.radii_count = rd.count(pr["radii_count"], "probes.radii_count", 3);
    if (pr["floor_relative"]) s.floor_relative = rd.positive(pr["floor_relative"], "probes.floor_relative");
    if (const auto pts = pr["points"]) {
      if (!pts.IsSequence()) rd.fail(pts, "probes.points must be a list");
      for (const auto& p : pts) {
        rd.require_map(p, "probe point", {"point", "direction"});
        if (!p["point"] || !p["direction"]) rd.fail(p, "probe needs 'point' and 'direction'");
        ProbeSpec ps;
        // Transform probes live on the (theta, s) chart plane.
        if (cfg.probe.field == "transform" && cfg.chart.kind() != ChartKind::kLine2)
          rd.fail(pr["field"], "transform probes need the (2,1) chart");
        const int pdim = cfg.probe.field == "transform" ? 2 : dim;
        ps.point = rd.vector(p["point"], "probe point", pdim);
        ps.direction = rd.vector(p["direction"], "probe direction", pdim);
        if (!(ps.direction.norm() > 0.0)) rd.fail(p["direction"], "probe direction must be nonzero");
        ps.direction.normalize();
        cfg.probe.probes.push_back(std::move(ps));
      }
    }
  }
  if (const auto at = root["atlas"]) {
    rd.require_map(at, "atlas", {"plane_samples", "line_count"});
    if (at["plane_samples"]) cfg.atlas.plane_samples = rd.count(at["plane_samples"], "atlas.plane_samples", 8);
    if (at["line_count"]) cfg.atlas.line_count = rd.count(at["line_count"], "atlas.line_count", 1);
  }
  if (const auto pc = root["product"]) {
    rd.require_map(pc, "product",
                   {"direction_index", "off_locus_points", "off_locus_directions", "off_locus_widths"});
    auto& p = cfg.product;
    if (pc["direction_index"]) p.direction_index = rd.count(pc["direction_index"], "product.direction_index", 0);
    if (p.direction_index >= cfg.chart.direction_count)
      rd.fail(pc["direction_index"], "product.direction_index exceeds the direction count");
    if (pc["off_locus_points"]) p.off_locus_points = rd.count(pc["off_locus_points"], "product.off_locus_points", 0);
    if (pc["off_locus_directions"])
      p.off_locus_directions = rd.count(pc["off_locus_directions"], "product.off_locus_directions", 1);
    if (pc["off_locus_widths"]) p.off_locus_widths = rd.positive(pc["off_locus_widths"], "product.off_locus_widths");
  }
  if (const auto st = root["streak"]) {
    rd.require_map(st, "streak", {"margin", "window_width", "control_lines"});
    if (st["margin"]) cfg.streak.margin = rd.scalar<double>(st["margin"], "streak.margin");
    if (st["window_width"]) cfg.streak.window_width = rd.positive(st["window_width"], "streak.window_width");
    if (st["control_lines"]) cfg.streak.control_lines = rd.count(st["control_lines"], "streak.control_lines", 0);
  }
  if (root["output"]) cfg.output = resolve(rd.scalar<std::string>(root["output"], "output"));
  return cfg;
}

inline RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError(path.string() + ": cannot open config file");
  std::ostringstream os;
  os << in.rdbuf();
  RunConfig cfg = parse_config(os.str(), path.string(), path.parent_path());
  cfg.source = path;
  return cfg;
}

}  // namespace dplane
