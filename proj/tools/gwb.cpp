// Batch driver: gwb <lemma-sweep|decay|model-pipeline|probes> --config FILE [--out DIR] [--seed N]
// Exit codes: 0 all verdicts pass, 2 scientific failure, 1 configuration or runtime error.

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "gwb/gwb.hpp"

namespace {

struct Options {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
};

int run(gwb::ExperimentKind kind, const Options& opt) {
  auto cfg = gwb::load_config(opt.config);
  if (cfg.kind != kind) {
    throw gwb::ConfigError("config describes '" + gwb::to_string(cfg.kind) + "', not '" + gwb::to_string(kind) + "'");
  }
  if (opt.seed) cfg.seed = *opt.seed;
  const std::string out = opt.out.empty() ? cfg.output : opt.out;
  if (out.empty()) throw gwb::ConfigError("no output directory: pass --out or set experiment.output");
  const auto rep = gwb::run_experiment(cfg, out);
  std::cout << rep.experiment << ": " << (rep.pass ? "PASS" : "FAIL") << '\n';
  for (const auto& f : rep.files) std::cout << "  " << f.string() << '\n';
  return rep.pass ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Generalized Wannier basis experiments"};
  app.require_subcommand(1);
  Options opt;
  std::optional<gwb::ExperimentKind> chosen;
  for (auto kind : {gwb::ExperimentKind::lemma_sweep, gwb::ExperimentKind::decay, gwb::ExperimentKind::model_pipeline,
                    gwb::ExperimentKind::probes}) {
    auto* sub = app.add_subcommand(gwb::to_string(kind));
    sub->add_option("--config", opt.config, "INI config file")->required();
    sub->add_option("--out", opt.out, "output directory (overrides experiment.output)");
    sub->add_option("--seed", opt.seed, "random seed (overrides experiment.seed)");
    sub->callback([&chosen, kind] { chosen = kind; });
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }
  try {
    return run(*chosen, opt);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
