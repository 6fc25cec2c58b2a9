// Command-line front end: gen-data, train, eval, run, export-plot.
//
// Exit codes: 0 success, 1 usage or configuration error, 2 data error,
// 3 numeric failure.

#include <CLI11.hpp>

#include <iostream>
#include <optional>
#include <string>

#include "gcvrnn/commands.hpp"

namespace {

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  bool force = false;
  std::string checkpoint;
  std::string out;
  std::string input;
};

gcvrnn::RunConfig resolve(const Options& o) {
  gcvrnn::RunConfig cfg = o.config.empty() ? gcvrnn::RunConfig{} : gcvrnn::load_run_config(o.config);
  if (o.seed) cfg.model.seed = *o.seed;
  if (!o.out.empty()) cfg.out_dir = o.out;
  return cfg;
}

std::string dataset_input(const Options& o, const gcvrnn::RunConfig& cfg) {
  const std::string path = o.input.empty() ? cfg.dataset : o.input;
  if (path.empty()) throw gcvrnn::ConfigError("no dataset given (pass a path or set dataset= in the config)");
  return path;
}

std::string require_checkpoint(const Options& o) {
  if (o.checkpoint.empty()) throw gcvrnn::ConfigError("--checkpoint is required");
  return o.checkpoint;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-agent trajectory imputation and prediction"};
  app.require_subcommand(1);
  Options o;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config, "key=value run configuration file");
    sub->add_option("--seed", o.seed, "override the seed");
    sub->add_option("--out", o.out, "output directory");
  };
  auto* gen = app.add_subcommand("gen-data", "generate synthetic scenario datasets");
  add_common(gen);
  gen->add_flag("--force", o.force, "overwrite existing files");

  auto* train = app.add_subcommand("train", "train a model");
  add_common(train);
  train->add_option("--checkpoint", o.checkpoint, "resume from this checkpoint");
  train->add_option("dataset", o.input, "dataset file");

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint and the baselines");
  add_common(eval);
  eval->add_option("--checkpoint", o.checkpoint, "checkpoint to evaluate");
  eval->add_option("dataset", o.input, "dataset file");

  auto* run = app.add_subcommand("run", "impute and predict one sequence");
  add_common(run);
  run->add_option("--checkpoint", o.checkpoint, "checkpoint to use");
  run->add_option("input", o.input, "single-sequence dataset file")->required();

  auto* plot = app.add_subcommand("export-plot", "write SVG and CSV for a result file");
  add_common(plot);
  plot->add_option("result", o.input, "result file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    gcvrnn::RunConfig cfg = resolve(o);
    if (gen->parsed()) {
      if (!o.out.empty()) cfg.data_dir = o.out;
      const auto res = gcvrnn::cmd_gen_data(cfg, o.force);
      for (const auto& f : res.files) std::cout << f << '\n';
      std::cout << res.manifest << '\n';
    } else if (train->parsed()) {
      std::optional<std::string> resume;
      if (!o.checkpoint.empty()) resume = o.checkpoint;
      const auto res = gcvrnn::cmd_train(cfg, dataset_input(o, cfg), resume, &std::cerr);
      std::cout << res.loss_log << '\n';
      for (const auto& c : res.checkpoints) std::cout << c << '\n';
    } else if (eval->parsed()) {
      const auto rep = gcvrnn::cmd_eval(cfg, require_checkpoint(o), dataset_input(o, cfg));
      std::cout << rep.table;
    } else if (run->parsed()) {
      gcvrnn::cmd_run(cfg, require_checkpoint(o), o.input);
      std::cout << (std::filesystem::path(cfg.out_dir) / "result.gcds").string() << '\n';
    } else if (plot->parsed()) {
      for (const auto& p : gcvrnn::cmd_export_plot(o.input, cfg.out_dir)) std::cout << p << '\n';
    }
  } catch (const gcvrnn::ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const gcvrnn::NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << '\n';
    return 3;
  } catch (const gcvrnn::Error& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return 2;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
