#include <CLI11.hpp>

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>

#include "dplane/dplane.hpp"

namespace {

struct Flags {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  unsigned threads = 0;
  bool quicklook = false;
};

int run(const std::string& command, const Flags& flags) {
  using namespace dplane;
  RunConfig cfg = flags.config.empty() ? RunConfig{} : load_config(flags.config);
  if (flags.seed) cfg.seed = *flags.seed;
  set_thread_count(flags.threads);
  std::filesystem::path out = flags.out.empty() ? (cfg.output.empty() ? std::filesystem::path("out") : cfg.output)
                                                : std::filesystem::path(flags.out);

  const RunResult r = run_command(command, cfg, RunOptions{flags.quicklook});
  write_run(out, r, cfg);
  std::cout << command << ": wrote " << r.files.size() + 2 << " files to " << out.string() << "\n";
  for (const auto& f : r.failures) std::cerr << "validation failure: " << f << "\n";
  return static_cast<int>(r.ok() ? ExitCode::kOk : ExitCode::kValidation);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"d-plane transform tomography and streak-artifact laboratory"};
  app.require_subcommand(1);
  Flags flags;
  std::string chosen;
  const std::map<std::string, std::string> about = {
      {"forward", "sample R_d of a scene on a chart"},
      {"fbp", "filtered back-projection of a scene or an input sinogram"},
      {"beamharden", "polychromatic measurement and its metal artifact"},
      {"atlas", "common tangent flats and intersection reports"},
      {"probe", "windowed-Fourier decay probes"},
      {"product-check", "conormal orders of sinogram products"},
      {"reproduce-fig1", "two-disk streak reproduction"},
      {"selfcheck", "built-in numerical checks"},
  };
  for (const auto& name : dplane::command_names()) {
    CLI::App* sub = app.add_subcommand(name, about.at(name));
    sub->add_option("--config", flags.config, "run configuration (YAML)")->check(CLI::ExistingFile);
    sub->add_option("--out", flags.out, "output directory");
    sub->add_option("--seed", flags.seed, "64-bit seed, overrides the config");
    sub->add_option("--threads", flags.threads, "worker threads, 0 = all cores");
    sub->add_flag("--quicklook", flags.quicklook, "also write 16-bit PGM previews");
    sub->callback([&chosen, name] { chosen = name; });
  }
  if (argc > 1 && argv[1][0] != '-') {
    const auto& names = dplane::command_names();
    if (std::find(names.begin(), names.end(), argv[1]) == names.end()) {
      std::cerr << "error: unknown subcommand '" << argv[1] << "'\n";
      return static_cast<int>(dplane::ExitCode::kConfig);
    }
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : static_cast<int>(dplane::ExitCode::kConfig);
  }
  try {
    return run(chosen, flags);
  } catch (const dplane::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return static_cast<int>(e.code());
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return static_cast<int>(dplane::ExitCode::kIo);
  }
}
