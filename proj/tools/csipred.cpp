// csipred command line: dataset generation, model training, figure sweeps and
// the oracle verification suite.
#include <cstdlib>
#include <iostream>
#include <string>
#include <thread>

#include "CLI11.hpp"
#include "csipred/experiments.hpp"
#include "csipred/verify.hpp"

namespace {

int log_level() {
  // CSIPRED_LOG: quiet | info (default) | debug
  const char* env = std::getenv("CSIPRED_LOG");
  if (env == nullptr) return 1;
  const std::string v(env);
  if (v == "quiet") return 0;
  if (v == "debug") return 2;
  return 1;
}

void info(const std::string& msg) {
  if (log_level() >= 1) std::cerr << "csipred: " << msg << "\n";
}

csipred::ExperimentConfig load_config(const std::string& path, const std::string& out_dir,
                                      std::uint64_t seed, bool seed_set) {
  csipred::ExperimentConfig cfg = csipred::load_experiment_config(path);
  if (!out_dir.empty()) cfg.out_dir = out_dir;
  if (seed_set) {
    cfg.seed = seed;
    cfg.channel.seed = seed;
  }
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Effective-SINR link adaptation and CSI prediction workbench"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir;
  std::string figure;
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::size_t workers = std::max(1u, std::thread::hardware_concurrency());
  bool inject_gradient_bug = false;
  std::string verify_table;

  auto add_common = [&](CLI::App* cmd, bool need_config) {
    auto* opt = cmd->add_option("--config", config_path, "experiment config (JSON)");
    if (need_config) opt->required()->check(CLI::ExistingFile);
    cmd->add_option("--out", out_dir, "output directory (overrides the config)");
    cmd->add_option("--seed", seed, "global seed (overrides the config)")
        ->each([&](const std::string&) { seed_set = true; });
  };

  CLI::App* generate = app.add_subcommand("generate", "write dataset CSVs and a manifest");
  add_common(generate, true);

  CLI::App* train = app.add_subcommand("train", "train the configured neural predictors");
  add_common(train, true);

  CLI::App* sweep = app.add_subcommand("sweep", "produce the plot-ready CSV for one figure");
  add_common(sweep, true);
  std::string figure_help = "figure key (";
  for (const auto& k : csipred::sweep_figure_keys()) figure_help += k + "|";
  figure_help.back() = ')';
  sweep->add_option("--figure", figure, figure_help)->required();
  sweep->add_option("--workers", workers, "worker threads for sweep points");

  CLI::App* verify = app.add_subcommand("verify", "run the oracle and invariant checks");
  verify->add_option("--config", config_path, "experiment config (optional)")
      ->check(CLI::ExistingFile);
  verify->add_option("--cqi-table", verify_table, "CQI table file to validate")
      ->check(CLI::ExistingFile);
  verify->add_flag("--inject-gradient-bug", inject_gradient_bug,
                   "test hook: perturb one gradient so the check must fail");

  CLI11_PARSE(app, argc, argv);

  try {
    if (generate->parsed()) {
      const auto cfg = load_config(config_path, out_dir, seed, seed_set);
      info("generating datasets into " + cfg.out_dir + "/dataset");
      csipred::cmd_generate(cfg);
      info("done");
      return 0;
    }
    if (train->parsed()) {
      const auto cfg = load_config(config_path, out_dir, seed, seed_set);
      info("training models into " + cfg.out_dir + "/models");
      csipred::cmd_train(cfg);
      info("done");
      return 0;
    }
    if (sweep->parsed()) {
      const auto cfg = load_config(config_path, out_dir, seed, seed_set);
      info("sweeping figure '" + figure + "' with " + std::to_string(workers) + " worker(s)");
      const std::string csv = csipred::cmd_sweep(cfg, figure, workers);
      info("wrote " + csv);
      return 0;
    }
    if (verify->parsed()) {
      csipred::VerifyOptions options;
      options.inject_gradient_bug = inject_gradient_bug;
      options.cqi_table_path = verify_table;
      if (!config_path.empty() && verify_table.empty()) {
        const auto cfg = csipred::load_experiment_config(config_path);
        options.cqi_table_path = cfg.cqi_table_path;
      }
      const auto results = csipred::run_verification(options);
      const int failures = csipred::report_verification(results, std::cout);
      return failures == 0 ? 0 : 1;
    }
  } catch (const std::invalid_argument& e) {
    std::cerr << "csipred: configuration error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "csipred: error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
