#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "gradguess/experiments.hpp"

namespace {

struct CommonArgs {
  std::string config_path;
  std::string out_dir;
  std::uint64_t seed = 0;
  bool seed_set = false;
  int threads = 1;
  std::vector<std::string> overrides;
};

void add_common(CLI::App* sub, CommonArgs& args) {
  sub->add_option("--config", args.config_path, "Experiment config file (INI-style)");
  sub->add_option("--seed", args.seed, "Random seed (overrides train.seed)")
      ->each([&](const std::string&) { args.seed_set = true; });
  sub->add_option("--out", args.out_dir, "Output directory (overrides output.dir)");
  sub->add_option("--threads", args.threads, "Worker thread count")
      ->check(CLI::PositiveNumber);
  sub->add_option("--override", args.overrides,
                  "Config override as section.key=value (repeatable)");
}

int run(const std::string& name, const CommonArgs& args) {
  gg::Config cfg;
  if (!args.config_path.empty()) cfg = gg::Config::from_file(args.config_path);
  for (const std::string& ov : args.overrides) cfg.apply_override(ov);
  if (args.seed_set) cfg.set("train.seed", std::to_string(args.seed));
  if (!args.out_dir.empty()) cfg.set("output.dir", args.out_dir);
  cfg.set("run.threads", std::to_string(args.threads));
  return gg::run_subcommand(name, cfg);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Forward-mode gradient-guessing trainer and analysis harness"};
  app.require_subcommand(1);

  const std::vector<std::string> names{"train",    "cosine",  "replications", "onestep",
                                       "subspace", "biastoy", "svdpower",     "sweep"};
  const std::vector<std::string> help{
      "Train models with guessed gradients and log metrics",
      "Track guess/oracle cosine along a backprop trajectory",
      "Cosine vs number of averaged guesses",
      "One-step loss reduction relative to backprop",
      "Gradient alignment with activation PCA subspaces",
      "Monte-Carlo check of the accumulated-Jacobian bias law",
      "Train with spectrum-reshaped transpose guesses",
      "Learning-rate / optimizer grid sweep"};

  std::vector<CommonArgs> args(names.size());
  for (std::size_t i = 0; i < names.size(); ++i)
    add_common(app.add_subcommand(names[i], help[i]), args[i]);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : gg::kExitConfigError;
  }

  for (std::size_t i = 0; i < names.size(); ++i) {
    if (!app.get_subcommand(names[i])->parsed()) continue;
    try {
      return run(names[i], args[i]);
    } catch (const gg::ConfigError& e) {
      std::cerr << "config error: " << e.what() << "\n";
      return gg::kExitConfigError;
    } catch (const std::exception& e) {
      std::cerr << "error: " << e.what() << "\n";
      return 1;
    }
  }
  return gg::kExitConfigError;
}
