#pragma once

#include <nlohmann/json.hpp>
#include <openssl/evp.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <memory>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "dplane/errors.hpp"
#include "dplane/microlocal.hpp"
#include "dplane/sinogram.hpp"

namespace dplane {

using Json = nlohmann::json;

inline constexpr char kMagic[8] = {'D', 'P', 'L', 'T', 'O', 'M', 'O', '1'};
inline constexpr std::uint64_t kMaxHeaderBytes = 1u << 20;

inline std::string sha256_hex(std::span<const unsigned char> bytes) {
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), &EVP_MD_CTX_free);
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1 ||
      EVP_DigestUpdate(ctx.get(), bytes.data(), bytes.size()) != 1 ||
      EVP_DigestFinal_ex(ctx.get(), digest, &len) != 1)
    throw Error(ExitCode::kIo, "SHA-256 computation failed");
  std::ostringstream os;
  for (unsigned int i = 0; i < len; ++i)
    os << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(digest[i]);
  return os.str();
}

inline std::string sha256_hex(const std::string& text) {
  return sha256_hex(std::span(reinterpret_cast<const unsigned char*>(text.data()), text.size()));
}

namespace detail {

inline void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline std::uint64_t get_u64(const unsigned char* p) {
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
  return v;
}

// Little-endian image of the doubles.
inline std::string payload_bytes(std::span<const double> values) {
  std::string out(values.size() * 8, '\0');
  for (std::size_t i = 0; i < values.size(); ++i) {
    const auto bits = std::bit_cast<std::uint64_t>(values[i]);
    for (int b = 0; b < 8; ++b) out[i * 8 + b] = static_cast<char>((bits >> (8 * b)) & 0xff);
  }
  return out;
}

inline std::vector<double> payload_values(const unsigned char* p, std::size_t count) {
  std::vector<double> v(count);
  for (std::size_t i = 0; i < count; ++i) v[i] = std::bit_cast<double>(get_u64(p + 8 * i));
  return v;
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream os;
  os << in.rdbuf();
  if (in.bad()) throw IoError("cannot read " + path.string());
  return os.str();
}

inline void write_file(const std::filesystem::path& path, const std::string& bytes) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
    if (ec) throw IoError("cannot create directory " + path.parent_path().string());
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("cannot write " + path.string());
}

template <class T>
Json to_array(const T& v, int count) {
  Json a = Json::array();
  for (int i = 0; i < count; ++i) a.push_back(v[i]);
  return a;
}

inline Json vec_json(const Vec& v) {
  Json a = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

}  // namespace detail

inline Json chart_json(const ChartSpec& c) {
  return Json{{"n", c.n},
              {"d", c.d},
              {"direction_count", c.direction_count},
              {"offset_counts", c.offset_counts},
              {"offset_extent", c.offset_extent}};
}

inline ChartSpec chart_from_json(const Json& j) {
  try {
    ChartSpec c;
    c.n = j.at("n").get<int>();
    c.d = j.at("d").get<int>();
    c.direction_count = j.at("direction_count").get<int>();
    c.offset_counts = j.at("offset_counts").get<std::vector<int>>();
    c.offset_extent = j.at("offset_extent").get<double>();
    c.validate();
    return c;
  } catch (const Json::exception& e) {
    throw FormatError(std::string("malformed chart in header: ") + e.what());
  } catch (const ConfigError& e) {
    throw FormatError(std::string("invalid chart in header: ") + e.what());
  }
}

inline Json grid_json(const ImageGrid& g) {
  return Json{{"n", g.n},
              {"dims", detail::to_array(g.dims, g.n)},
              {"origin", detail::to_array(g.origin, g.n)},
              {"spacing", detail::to_array(g.spacing, g.n)}};
}

// A decoded file: the structured-text header and the raw samples.
struct ArrayFile {
  Json header;
  std::vector<double> values;
};

// Magic, u64 little-endian header length, JSON header, f64 payload.
inline std::string encode_array(const Json& header, std::span<const double> values) {
  const std::string text = header.dump();
  std::string out(kMagic, 8);
  detail::put_u64(out, text.size());
  out += text;
  out += detail::payload_bytes(values);
  return out;
}

inline ArrayFile decode_array(const std::string& bytes, const std::string& name = "input") {
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kMagic, 8) != 0)
    throw FormatError(name + ": not a DPLTOMO1 file (bad magic)");
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  const std::uint64_t hlen = detail::get_u64(p + 8);
  if (hlen > kMaxHeaderBytes || 16 + hlen > bytes.size())
    throw FormatError(name + ": header length out of range");
  ArrayFile f;
  try {
    f.header = Json::parse(bytes.begin() + 16, bytes.begin() + 16 + static_cast<std::ptrdiff_t>(hlen));
  } catch (const Json::parse_error& e) {
    throw FormatError(name + ": malformed header: " + e.what());
  }
  std::vector<std::uint64_t> shape;
  try {
    shape = f.header.at("shape").get<std::vector<std::uint64_t>>();
  } catch (const Json::exception&) {
    throw FormatError(name + ": header lacks a shape");
  }
  std::uint64_t count = 1;
  for (auto s : shape) count *= s;
  const std::uint64_t payload = bytes.size() - 16 - hlen;
  if (payload != count * 8)
    throw FormatError(name + ": shape mismatch: header expects " + std::to_string(count) +
                      " values, payload holds " + std::to_string(payload / 8) +
                      (payload % 8 ? " and a partial value" : ""));
  f.values = detail::payload_values(p + 16 + hlen, count);
  return f;
}

inline std::string payload_sha256(std::span<const double> values) {
  const std::string bytes = detail::payload_bytes(values);
  return sha256_hex(std::span(reinterpret_cast<const unsigned char*>(bytes.data()), bytes.size()));
}

inline Json sinogram_header(const Sinogram& s, const std::string& provenance) {
  Json shape = Json::array({s.chart().direction_count});
  for (int c : s.chart().offset_counts) shape.push_back(c);
  return Json{{"format", "DPLTOMO1"},
              {"kind", "sinogram"},
              {"role", role_name(s.role())},
              {"chart", chart_json(s.chart())},
              {"shape", shape},
              {"provenance", provenance}};
}

inline Json image_header(const ImageGrid& g, const std::string& role, const std::string& provenance) {
  Json shape = Json::array();
  for (int a = g.n - 1; a >= 0; --a) shape.push_back(g.dims[a]);
  return Json{{"format", "DPLTOMO1"},
              {"kind", "image"},
              {"role", role},
              {"grid", grid_json(g)},
              {"shape", shape},
              {"provenance", provenance}};
}

inline std::string encode_sinogram(const Sinogram& s, const std::string& provenance = "") {
  return encode_array(sinogram_header(s, provenance), s.values());
}

inline std::string encode_image(const ImageGrid& g, const std::string& role = "image",
                                const std::string& provenance = "") {
  return encode_array(image_header(g, role, provenance), g.values);
}

inline Sinogram decode_sinogram(const std::string& bytes, const std::string& name = "input") {
  ArrayFile f = decode_array(bytes, name);
  if (f.header.value("kind", "") != "sinogram") throw FormatError(name + ": not a sinogram file");
  Sinogram s(chart_from_json(f.header.at("chart")), role_from_name(f.header.value("role", "")));
  std::vector<std::uint64_t> expect{static_cast<std::uint64_t>(s.chart().direction_count)};
  for (int c : s.chart().offset_counts) expect.push_back(c);
  if (f.header.at("shape").get<std::vector<std::uint64_t>>() != expect)
    throw FormatError(name + ": shape mismatch between header chart and shape");
  s.values() = std::move(f.values);
  return s;
}

inline ImageGrid decode_image(const std::string& bytes, std::string* role = nullptr,
                              const std::string& name = "input") {
  ArrayFile f = decode_array(bytes, name);
  if (f.header.value("kind", "") != "image") throw FormatError(name + ": not an image file");
  ImageGrid g;
  try {
    const Json& j = f.header.at("grid");
    g.n = j.at("n").get<int>();
    if (g.n != 2 && g.n != 3) throw FormatError(name + ": image dimension must be 2 or 3");
    const auto dims = j.at("dims").get<std::vector<int>>();
    const auto origin = j.at("origin").get<std::vector<double>>();
    const auto spacing = j.at("spacing").get<std::vector<double>>();
    if (static_cast<int>(dims.size()) != g.n || static_cast<int>(origin.size()) != g.n ||
        static_cast<int>(spacing.size()) != g.n)
      throw FormatError(name + ": grid arrays do not match the dimension");
    for (int a = 0; a < g.n; ++a) {
      g.dims[a] = dims[a];
      g.origin[a] = origin[a];
      g.spacing[a] = spacing[a];
    }
  } catch (const Json::exception& e) {
    throw FormatError(name + ": malformed grid: " + e.what());
  }
  std::vector<std::uint64_t> expect;
  for (int a = g.n - 1; a >= 0; --a) expect.push_back(g.dims[a]);
  if (f.header.at("shape").get<std::vector<std::uint64_t>>() != expect)
    throw FormatError(name + ": shape mismatch between header grid and shape");
  if (role) *role = f.header.value("role", "");
  g.values = std::move(f.values);
  return g;
}

inline void write_sinogram(const std::filesystem::path& path, const Sinogram& s,
                           const std::string& provenance = "") {
  detail::write_file(path, encode_sinogram(s, provenance));
}

inline Sinogram read_sinogram(const std::filesystem::path& path) {
  return decode_sinogram(detail::read_file(path), path.string());
}

inline void write_image(const std::filesystem::path& path, const ImageGrid& g,
                        const std::string& role = "image", const std::string& provenance = "") {
  detail::write_file(path, encode_image(g, role, provenance));
}

inline ImageGrid read_image(const std::filesystem::path& path, std::string* role = nullptr) {
  return decode_image(detail::read_file(path), role, path.string());
}

// Header kind of a DPLTOMO1 file without decoding the payload twice.
inline std::string file_kind(const std::filesystem::path& path) {
  return decode_array(detail::read_file(path), path.string()).header.value("kind", "");
}

// ---------------------------------------------------------------- quicklook

// 2D raster, row 0 at the top.
struct Raster {
  int width = 0;
  int height = 0;
  std::vector<double> values;
};

struct Windowing {
  double lo = 0.0;
  double hi = 1.0;
};

inline Json windowing_json(const Windowing& w) { return Json{{"lo", w.lo}, {"hi", w.hi}}; }

// Image (2D, or the middle z slice of 3D) with +y up.
inline Raster raster_of(const ImageGrid& g) {
  Raster r;
  r.width = g.dims[0];
  r.height = g.dims[1];
  const std::size_t slice = g.n == 3 ? static_cast<std::size_t>(g.dims[2] / 2) : 0;
  r.values.resize(static_cast<std::size_t>(r.width) * r.height);
  for (int j = 0; j < r.height; ++j)
    for (int i = 0; i < r.width; ++i)
      r.values[static_cast<std::size_t>(r.height - 1 - j) * r.width + i] =
          g.values[(slice * g.dims[1] + j) * g.dims[0] + i];
  return r;
}

// Hyperplane charts: directions down, offsets across. (3,1): the offset
// plane of the first direction.
inline Raster raster_of(const Sinogram& s) {
  Raster r;
  const auto& c = s.chart();
  if (c.kind() == ChartKind::kLine3) {
    r.width = c.offset_counts[1];
    r.height = c.offset_counts[0];
    auto row = s.row(0);
    r.values.assign(row.begin(), row.end());
  } else {
    r.width = c.offset_counts[0];
    r.height = c.direction_count;
    r.values = s.values();
  }
  return r;
}

inline Windowing full_range(const Raster& r) {
  Windowing w{0.0, 0.0};
  if (!r.values.empty()) {
    const auto [mn, mx] = std::minmax_element(r.values.begin(), r.values.end());
    w = {*mn, *mx};
  }
  if (!(w.hi > w.lo)) w.hi = w.lo + 1.0;
  return w;
}

inline std::vector<std::uint16_t> to_gray16(const Raster& r, const Windowing& w) {
  std::vector<std::uint16_t> px(r.values.size());
  for (std::size_t i = 0; i < px.size(); ++i) {
    const double t = std::clamp((r.values[i] - w.lo) / (w.hi - w.lo), 0.0, 1.0);
    px[i] = static_cast<std::uint16_t>(std::lround(t * 65535.0));
  }
  return px;
}

// Marks pixels of an image raster whose centers lie within half a pixel of
// the line x . normal = offset.
inline void overdraw_line(std::vector<std::uint16_t>& px, const ImageGrid& g, const Vec& normal,
                          double offset, std::uint16_t value = 65535) {
  const double tol = 0.5 * std::max(g.spacing[0], g.spacing[1]);
  for (int j = 0; j < g.dims[1]; ++j)
    for (int i = 0; i < g.dims[0]; ++i) {
      const double x = g.origin[0] + i * g.spacing[0];
      const double y = g.origin[1] + j * g.spacing[1];
      if (std::abs(normal(0) * x + normal(1) * y - offset) <= tol)
        px[static_cast<std::size_t>(g.dims[1] - 1 - j) * g.dims[0] + i] = value;
    }
}

// Binary PGM, maxval 65535, big-endian samples.
inline void write_pgm(const std::filesystem::path& path, int width, int height,
                      const std::vector<std::uint16_t>& px) {
  std::string out = "P5\n" + std::to_string(width) + " " + std::to_string(height) + "\n65535\n";
  out.reserve(out.size() + px.size() * 2);
  for (std::uint16_t v : px) {
    out.push_back(static_cast<char>(v >> 8));
    out.push_back(static_cast<char>(v & 0xff));
  }
  detail::write_file(path, out);
}

inline Windowing write_quicklook(const std::filesystem::path& path, const Raster& r) {
  const Windowing w = full_range(r);
  write_pgm(path, r.width, r.height, to_gray16(r, w));
  return w;
}

// ---------------------------------------------------------------- atlas

inline Json tangent_flat_json(const TangentFlat& t) {
  Json j{{"pair", {t.j, t.k}},
         {"kind", t.kind},
         {"y_j", detail::vec_json(t.y_j)},
         {"y_k", detail::vec_json(t.y_k)},
         {"eta_j", detail::vec_json(t.eta_j)},
         {"eta_k", detail::vec_json(t.eta_k)}};
  if (t.kind == 1) {
    j["normal"] = detail::vec_json(t.normal);
    j["offset"] = t.offset;
  } else {
    j["point"] = detail::vec_json(t.point);
    j["direction"] = detail::vec_json(t.direction);
    j["in_plane"] = t.in_plane;
  }
  Json conormals = Json::array();
  for (const Vec& v : t.allowed_conormals()) conormals.push_back(detail::vec_json(v));
  j["allowed_conormals"] = conormals;
  return j;
}

inline Json atlas_json(const Atlas& a) {
  Json hp = Json::array(), ln = Json::array();
  for (const auto& t : a.hyperplanes) hp.push_back(tangent_flat_json(t));
  for (const auto& t : a.lines) ln.push_back(tangent_flat_json(t));
  return Json{{"hyperplanes", hp}, {"lines", ln}, {"warnings", a.warnings}};
}

inline Json intersection_json(const IntersectionReport& r) {
  Json samples = Json::array();
  for (const auto& s : r.samples)
    samples.push_back(Json{{"type", s.type},
                           {"transversal", s.transversal},
                           {"min_singular_value", s.min_singular_value},
                           {"flat", tangent_flat_json(s.flat)}});
  return Json{{"chart", chart_json(r.chart)},
              {"type1", r.type1},
              {"type2", r.type2},
              {"all_transversal", r.all_transversal},
              {"consistent", r.consistent},
              {"samples", samples}};
}

inline Json decay_json(const DecayEstimate& e) {
  return Json{{"point", detail::vec_json(e.point)},
              {"direction", detail::vec_json(e.direction)},
              {"radii", e.radii},
              {"log_magnitudes", e.log_magnitudes},
              {"slope", e.slope},
              {"intercept", e.intercept},
              {"r2", e.r2},
              {"floor", e.floor},
              {"below_floor", e.below_floor},
              {"poor_fit", e.poor_fit},
              {"degenerate", e.degenerate}};
}

}  // namespace dplane
