#include <gtest/gtest.h>

#include <cstring>
#include <filesystem>
#include <random>

#include "dplane/dplane.hpp"

using namespace dplane;
namespace fs = std::filesystem;

namespace {

const fs::path kConfigs = DPLANE_CONFIG_DIR;

ChartSpec small_chart(int n, int d) {
  ChartSpec c;
  c.n = n;
  c.d = d;
  c.direction_count = 7;
  c.offset_counts.assign(n - d, 5);
  c.offset_extent = 2.5;
  return c;
}

void fill_awkward(std::vector<double>& v, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1e3, 1e3);
  for (double& x : v) x = u(rng);
  if (v.size() > 4) {
    v[0] = -0.0;
    v[1] = std::numeric_limits<double>::denorm_min();
    v[2] = std::numeric_limits<double>::max();
    v[3] = std::nextafter(1.0, 2.0);
  }
}

bool same_bits(const std::vector<double>& a, const std::vector<double>& b) {
  return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

fs::path fresh_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("dplane_test_" + name + "_" + std::to_string(::getpid()));
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string error_of(const std::string& text) {
  try {
    parse_config(text, "cfg.yaml");
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST(Format, SinogramRoundTripIsBitIdentical) {
  for (auto [n, d] : {std::pair{2, 1}, std::pair{3, 1}, std::pair{3, 2}}) {
    Sinogram s(small_chart(n, d), SinogramRole::kMetalPart);
    fill_awkward(s.values(), 7u + n + d);
    const std::string bytes = encode_sinogram(s, "abc");
    const Sinogram back = decode_sinogram(bytes);
    EXPECT_TRUE(same_bits(s.values(), back.values()));
    EXPECT_EQ(back.role(), SinogramRole::kMetalPart);
    EXPECT_EQ(back.chart().offset_counts, s.chart().offset_counts);
    EXPECT_EQ(back.chart().offset_extent, s.chart().offset_extent);
    EXPECT_EQ(encode_sinogram(back, "abc"), bytes);
  }
}

TEST(Format, ImageRoundTripIsBitIdentical) {
  for (int n : {2, 3}) {
    ImageGrid g = ImageGrid::square(n, 6, 1.7);
    fill_awkward(g.values, 11u + n);
    std::string role;
    const ImageGrid back = decode_image(encode_image(g, "fbp"), &role);
    EXPECT_TRUE(same_bits(g.values, back.values));
    EXPECT_TRUE(back.same_geometry(g));
    EXPECT_EQ(role, "fbp");
  }
}

TEST(Format, FileRoundTrip) {
  const fs::path dir = fresh_dir("file");
  Sinogram s(small_chart(2, 1), SinogramRole::kTransform);
  fill_awkward(s.values(), 3);
  write_sinogram(dir / "s.dplt", s);
  EXPECT_TRUE(same_bits(read_sinogram(dir / "s.dplt").values(), s.values()));
  EXPECT_EQ(file_kind(dir / "s.dplt"), "sinogram");
  fs::remove_all(dir);
}

TEST(Format, LayoutIsMagicLengthHeaderPayload) {
  Sinogram s(small_chart(2, 1), SinogramRole::kTransform);
  s.values()[0] = 1.5;
  const std::string bytes = encode_sinogram(s);
  ASSERT_EQ(bytes.substr(0, 8), "DPLTOMO1");
  std::uint64_t hlen = 0;
  for (int i = 7; i >= 0; --i) hlen = (hlen << 8) | static_cast<unsigned char>(bytes[8 + i]);
  EXPECT_EQ(bytes.size(), 16 + hlen + 8 * s.values().size());
  const Json header = Json::parse(bytes.substr(16, hlen));
  EXPECT_EQ(header.at("shape"), Json::array({7, 5}));
  double first = 0;
  std::memcpy(&first, bytes.data() + 16 + hlen, 8);
  EXPECT_EQ(first, 1.5);
}

TEST(Format, CorruptInputsAreFormatErrors) {
  Sinogram s(small_chart(2, 1), SinogramRole::kTransform);
  const std::string good = encode_sinogram(s);
  std::string bad_magic = good;
  bad_magic[3] = 'X';
  EXPECT_THROW(decode_sinogram(bad_magic), FormatError);
  EXPECT_THROW(decode_sinogram(good.substr(0, good.size() - 8)), FormatError);
  EXPECT_THROW(decode_sinogram(good + "abc"), FormatError);
  EXPECT_THROW(decode_sinogram(good.substr(0, 12)), FormatError);
  std::string huge = good;
  huge[15] = '\x7f';
  EXPECT_THROW(decode_sinogram(huge), FormatError);
  EXPECT_THROW(decode_image(good), FormatError);
  try {
    decode_sinogram(good.substr(0, good.size() - 8), "x.dplt");
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("shape mismatch"), std::string::npos);
    EXPECT_EQ(e.code(), ExitCode::kIo);
  }
}

TEST(Format, HeaderChartMustMatchShape) {
  Sinogram s(small_chart(2, 1), SinogramRole::kTransform);
  Json h = sinogram_header(s, "");
  h["chart"]["direction_count"] = 5;
  h["shape"] = Json::array({7, 5});
  EXPECT_THROW(decode_sinogram(encode_array(h, s.values())), FormatError);
}

TEST(Config, ErrorsCarryLineAndColumn) {
  const std::string e = error_of("seed: 1\nchart: {d: 1, directionz: 4}\n");
  EXPECT_NE(e.find("cfg.yaml:2:"), std::string::npos) << e;
  EXPECT_NE(e.find("directionz"), std::string::npos) << e;
  EXPECT_NE(error_of("seed: 1\nbogus: 2\n").find("cfg.yaml:2:1"), std::string::npos);
  EXPECT_NE(error_of("chart: [1, 2\n").find("cfg.yaml:"), std::string::npos);
}

TEST(Config, RejectsInvalidValues) {
  EXPECT_NE(error_of("scene: {dimension: 2, bodies: []}\nchart: {d: 2}\n"), "");
  EXPECT_NE(error_of("chart: {directions: 1}\n"), "");
  EXPECT_NE(error_of("chart: {extent: -1}\n"), "");
  EXPECT_NE(error_of("spectrum: {E0: 1.0, epsilon: 0.5}\n"), "");  // |alpha| eps > 0.2
  EXPECT_NE(error_of("probes: {field: sideways}\n"), "");
  EXPECT_NE(error_of("chart: {directions: 4}\nproduct: {direction_index: 4}\n"), "");
  EXPECT_EQ(error_of("chart: {directions: 4}\nproduct: {direction_index: 3}\n"), "");
}

TEST(Config, ShippedConfigsParse) {
  for (const auto& entry : fs::directory_iterator(kConfigs)) {
    if (entry.path().extension() != ".yaml" || entry.path().stem() == "two_disks") continue;
    const RunConfig cfg = load_config(entry.path());
    if (entry.path().stem() == "bad_overlap") {
      try {
        cfg.scene.build();
        FAIL() << "overlapping scene accepted";
      } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("assumption (A) violated"), std::string::npos);
      }
    } else if (cfg.has_scene) {
      EXPECT_NO_THROW(cfg.scene.build()) << entry.path();
    }
  }
}

TEST(Config, MissingFileIsConfigError) {
  EXPECT_THROW(load_config(kConfigs / "does_not_exist.yaml"), ConfigError);
}

TEST(Pipeline, ForwardIsDeterministic) {
  const RunConfig cfg = load_config(kConfigs / "forward.yaml");
  const RunResult a = run_forward(cfg), b = run_forward(cfg);
  EXPECT_EQ(manifest_json(a, cfg).dump(), manifest_json(b, cfg).dump());
  ASSERT_NE(a.file("transform.dplt"), nullptr);
  EXPECT_EQ(a.file("transform.dplt")->bytes, b.file("transform.dplt")->bytes);
}

TEST(Pipeline, ThreadCountDoesNotChangeOutputs) {
  const RunConfig cfg = load_config(kConfigs / "fbp.yaml");
  set_thread_count(1);
  const RunResult a = run_fbp(cfg);
  set_thread_count(4);
  const RunResult b = run_fbp(cfg);
  set_thread_count(0);
  EXPECT_EQ(manifest_json(a, cfg).dump(), manifest_json(b, cfg).dump());
}

TEST(Pipeline, ManifestRecordsHashesAndNoPaths) {
  const RunConfig cfg = load_config(kConfigs / "forward.yaml");
  const RunResult r = run_forward(cfg);
  const Json m = manifest_json(r, cfg);
  EXPECT_EQ(m.at("command"), "forward");
  EXPECT_EQ(m.at("config_sha256"), sha256_hex(cfg.text));
  EXPECT_EQ(m.at("seed"), cfg.seed);
  EXPECT_TRUE(m.at("validation").at("passed").get<bool>());
  const Sinogram s = decode_sinogram(r.file("transform.dplt")->bytes);
  EXPECT_EQ(m.at("outputs").at(0).at("sha256"), payload_sha256(s.values()));
  EXPECT_EQ(m.dump().find(kConfigs.string()), std::string::npos);
}

TEST(Pipeline, Sha256KnownAnswer) {
  EXPECT_EQ(sha256_hex(std::string("abc")), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST(Pipeline, WriteRunAndQuicklookHeader) {
  const fs::path dir = fresh_dir("run");
  const RunConfig cfg = load_config(kConfigs / "forward.yaml");
  const RunResult r = run_forward(cfg, RunOptions{true});
  write_run(dir, r, cfg);
  EXPECT_TRUE(fs::exists(dir / "manifest.json"));
  EXPECT_TRUE(fs::exists(dir / "timings.json"));
  const std::string pgm = detail::read_file(dir / "transform.pgm");
  const std::string header = "P5\n256 180\n65535\n";
  ASSERT_EQ(pgm.substr(0, header.size()), header);
  EXPECT_EQ(pgm.size(), header.size() + 2u * 256 * 180);
  const Json m = Json::parse(detail::read_file(dir / "manifest.json"));
  bool windowed = false;
  for (const auto& o : m.at("outputs"))
    if (o.at("kind") == "pgm") windowed = o.contains("windowing");
  EXPECT_TRUE(windowed);
  fs::remove_all(dir);
}

TEST(Pipeline, OverlapIsRejectedAtRunTime) {
  const RunConfig cfg = load_config(kConfigs / "bad_overlap.yaml");
  try {
    run_command("forward", cfg);
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("assumption (A) violated"), std::string::npos);
    EXPECT_EQ(e.code(), ExitCode::kConfig);
  }
}

TEST(Pipeline, UnknownCommandAndMissingScene) {
  EXPECT_THROW(run_command("backwards", RunConfig{}), ConfigError);
  EXPECT_THROW(run_command("forward", RunConfig{}), ConfigError);
}

TEST(Pipeline, FbpReadsItsInputFile) {
  const fs::path dir = fresh_dir("fbpin");
  const RunConfig fwd = load_config(kConfigs / "fbp.yaml");
  const Sinogram s = forward_sinogram(fwd.scene.build(), fwd.chart, true);
  write_sinogram(dir / "in.dplt", s);
  const RunConfig cfg = parse_config("input: in.dplt\nimage: {count: 128, extent: 2.0}\n", "cfg", dir);
  const RunResult from_file = run_fbp(cfg);
  const RunResult from_scene = run_fbp(fwd);
  EXPECT_EQ(from_file.file("fbp.dplt")->payload_sha256, from_scene.file("fbp.dplt")->payload_sha256);
  EXPECT_NE(error_of("input: /nonexistent/in.dplt\n"), "");
  fs::remove_all(dir);
}
