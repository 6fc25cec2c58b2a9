#pragma once

#include <filesystem>
#include <functional>
#include <iomanip>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "gcvrnn/baselines.hpp"
#include "gcvrnn/checkpoint.hpp"
#include "gcvrnn/config.hpp"
#include "gcvrnn/dataset_io.hpp"
#include "gcvrnn/metrics.hpp"
#include "gcvrnn/plot.hpp"
#include "gcvrnn/train.hpp"

namespace gcvrnn {

/// Raised when a command would overwrite existing output without --force.
class RefusalError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

namespace fs = std::filesystem;

namespace seed_tags {
inline constexpr std::uint64_t data = 0x64617461ull;
inline constexpr std::uint64_t split = 0x73706c6974ull;
inline constexpr std::uint64_t train = 0x747261696eull;
inline constexpr std::uint64_t eval = 0x6576616cull;
}  // namespace seed_tags

inline std::string scenario_file_name(const MaskingSpec& s) {
  return s.mode == MaskMode::circle ? "circle_r" + detail::format_double(s.parameter) + ".gcds"
                                    : "camera_theta" + detail::format_double(s.parameter) + ".gcds";
}

/// Short label of the ablation switches, e.g. "full", "wo/TD,wo/CON".
inline std::string variant_label(const ModelConfig& c) {
  std::vector<std::string> parts;
  if (c.mode == TrainingMode::impute_only) parts.push_back("w/IMP");
  if (c.mode == TrainingMode::predict_only) parts.push_back("w/PRE");
  if (!c.share_streams) parts.push_back("wo/CON");
  if (!c.use_td) parts.push_back("wo/TD");
  if (!(c.use_st && c.use_dl && c.use_ec)) {
    std::string g = "GCL=";
    if (c.use_st) g += "st+";
    if (c.use_dl) g += "dl+";
    if (c.use_ec) g += "ec+";
    g.pop_back();
    parts.push_back(g);
  }
  return parts.empty() ? "full" : detail::join(parts, ',');
}

/// Confirms a model can consume a dataset; errors name the expected and found shapes.
inline void check_compatible(const ModelConfig& m, const DatasetHeader& h) {
  if (m.t_past != h.t_past || m.t_future != h.t_future || (m.use_dl && h.agents > m.n_max)) {
    throw DimensionError("dataset has T=" + std::to_string(h.t_past) + "+" + std::to_string(h.t_future) +
                         ", N=" + std::to_string(h.agents) + " but the model expects T=" + std::to_string(m.t_past) +
                         "+" + std::to_string(m.t_future) + ", N<=" + std::to_string(m.n_max));
  }
}

// ---- gen-data -----------------------------------------------------------------

struct GenDataResult {
  std::vector<std::string> files;
  std::string manifest;
};

/// One dataset file per scenario (same sequences and split, different masks)
/// plus `manifest.txt` in the data directory.
inline GenDataResult cmd_gen_data(const RunConfig& cfg, bool force) {
  cfg.validate();
  if (cfg.scenarios.empty()) throw ConfigError("gen-data: scenario grid is empty");
  if (cfg.train_sequences == 0 || cfg.test_sequences == 0) throw ConfigError("gen-data: train and test sizes must be positive");
  const fs::path dir(cfg.data_dir);
  GenDataResult res;
  res.manifest = (dir / "manifest.txt").string();
  std::vector<fs::path> targets;
  for (const auto& s : cfg.scenarios) targets.push_back(dir / scenario_file_name(s));
  targets.push_back(res.manifest);
  for (const auto& t : targets) {
    if (!force && fs::exists(t)) throw RefusalError("gen-data: " + t.string() + " exists (use --force to overwrite)");
  }
  fs::create_directories(dir);

  const std::size_t total = cfg.train_sequences + cfg.test_sequences;
  const auto& m = cfg.model;
  auto seqs = generate_sequences(total, cfg.agents, m.t_past, m.t_future, derive_seed(m.seed, seed_tags::data), cfg.dynamics);
  const auto [train_idx, test_idx] =
      split_indices(total, static_cast<double>(cfg.train_sequences) / static_cast<double>(total),
                    derive_seed(m.seed, seed_tags::split));
  std::vector<Split> split(total, Split::train);
  for (auto i : test_idx) split[i] = Split::test;

  std::ostringstream manifest;
  manifest << "seed=" << m.seed << "\nagents=" << cfg.agents << "\nt_past=" << m.t_past << "\nt_future=" << m.t_future
           << "\ntrain=" << cfg.train_sequences << "\ntest=" << cfg.test_sequences << '\n';
  for (const auto& spec : cfg.scenarios) {
    DatasetFile f;
    f.header.masking = spec;
    f.header.masking.camera = cfg.camera;
    f.header.units = cfg.units;
    f.header.seed = m.seed;
    f.header.agents = cfg.agents;
    f.header.t_past = m.t_past;
    f.header.t_future = m.t_future;
    double missing = 0.0;
    for (std::size_t k = 0; k < total; ++k) {
      DatasetRecord r;
      r.sequence = seqs[k];
      r.mask = apply_mask(seqs[k], f.header.masking);
      r.split = split[k];
      missing += r.mask.missing_rate();
      f.records.push_back(std::move(r));
    }
    const fs::path path = dir / scenario_file_name(spec);
    write_dataset(path.string(), f);
    res.files.push_back(path.string());
    manifest << "file=" << scenario_file_name(spec) << ";mode=" << to_string(spec.mode)
             << ";parameter=" << detail::format_double(spec.parameter) << ";records=" << total
             << ";missing_rate=" << std::fixed << std::setprecision(6) << missing / static_cast<double>(total)
             << std::defaultfloat << '\n';
  }
  io::write_file(res.manifest, manifest.str());
  return res;
}

// ---- train ----------------------------------------------------------------------

struct TrainResult {
  std::string loss_log;
  std::vector<std::string> checkpoints;
  std::vector<EpochStats> epochs;  // epochs run by this invocation
};

inline constexpr const char* kLossCsvHeader = "epoch,total,L_imp,L_pre";

inline std::vector<TrainingExample> training_examples(const DatasetFile& f) {
  std::vector<TrainingExample> out;
  for (const auto* r : f.split(Split::train)) out.push_back({&r->sequence, &r->mask});
  if (out.empty()) throw DataError("dataset has no training records");
  return out;
}

inline std::string checkpoint_name(std::uint64_t epoch) {
  std::ostringstream os;
  os << "checkpoint_e" << std::setw(4) << std::setfill('0') << epoch << ".ckpt";
  return os.str();
}

/// Trains on the train split of `dataset_path`. Periodic checkpoints are
/// written every `checkpoint_interval` epochs before the last one; the last
/// epoch is saved as `final.ckpt`. With `resume` the run continues from a
/// checkpoint and the loss log keeps its earlier rows.
inline TrainResult cmd_train(const RunConfig& cfg, const std::string& dataset_path,
                             const std::optional<std::string>& resume = std::nullopt, std::ostream* progress = nullptr) {
  cfg.validate();
  const DatasetFile data = read_dataset(dataset_path);
  check_compatible(cfg.model, data.header);
  const auto examples = training_examples(data);

  std::optional<CheckpointData> ck;
  if (resume) {
    ck = load_checkpoint(*resume);
    const auto want = to_key_values(cfg.model), have = to_key_values(ck->config);
    for (const auto& [k, v] : want) {
      if (have.at(k) != v) throw ConfigError("resume: checkpoint has " + k + "=" + have.at(k) + ", config has " + v);
    }
  }
  GcVrnn model(cfg.model);
  Trainer trainer(model, cfg.adam_options(), cfg.batch_size, derive_seed(cfg.model.seed, seed_tags::train));
  if (ck) {
    restore_parameters(*ck, model);
    restore_optimizer(*ck, model, trainer.optimizer());
    trainer.set_epochs_done(detail::parse_uint("meta.epoch", ck->meta.count("epoch") ? ck->meta.at("epoch") : "0"));
  }

  const fs::path out(cfg.out_dir);
  fs::create_directories(out);
  TrainResult res;
  res.loss_log = (out / "loss.csv").string();
  std::string log = std::string(kLossCsvHeader) + "\n";
  if (ck && fs::exists(res.loss_log)) {
    std::istringstream old(io::read_file(res.loss_log));
    std::string line;
    std::getline(old, line);
    while (std::getline(old, line)) {
      if (!line.empty() && detail::parse_uint("epoch", line.substr(0, line.find(','))) <= trainer.epochs_done()) {
        log += line + "\n";
      }
    }
  }

  auto meta = [&](std::uint64_t epoch) {
    return std::map<std::string, std::string>{{"epoch", std::to_string(epoch)},
                                              {"epochs", std::to_string(cfg.epochs)},
                                              {"batch_size", std::to_string(cfg.batch_size)},
                                              {"dataset", dataset_path},
                                              {"variant", variant_label(cfg.model)}};
  };
  while (trainer.epochs_done() < cfg.epochs) {
    EpochStats st;
    try {
      st = trainer.run_epoch(examples);
    } catch (const NumericError& e) {
      auto m = meta(trainer.epochs_done());
      m["failure"] = e.what();
      save_checkpoint((out / "diagnostic.ckpt").string(), model, &trainer.optimizer(), m);
      io::write_file(res.loss_log, log);
      throw;
    }
    res.epochs.push_back(st);
    log += std::to_string(st.epoch) + "," + detail::format_double(st.mean.total) + "," +
           detail::format_double(st.mean.imputation) + "," + detail::format_double(st.mean.prediction) + "\n";
    io::write_file(res.loss_log, log);
    if (progress) *progress << "epoch " << st.epoch << " loss " << st.mean.total << '\n';
    if (st.epoch < cfg.epochs && st.epoch % cfg.checkpoint_interval == 0) {
      const auto p = (out / checkpoint_name(st.epoch)).string();
      save_checkpoint(p, model, &trainer.optimizer(), meta(st.epoch));
      res.checkpoints.push_back(p);
    }
  }
  const auto p = (out / "final.ckpt").string();
  save_checkpoint(p, model, &trainer.optimizer(), meta(trainer.epochs_done()));
  res.checkpoints.push_back(p);
  io::write_file(res.loss_log, log);
  return res;
}

// ---- eval -----------------------------------------------------------------------

/// Produces an InferenceResult per record; `keys` are stable per-record ids.
using MethodFn =
    std::function<std::vector<InferenceResult>(std::span<const DatasetRecord* const>, std::span<const std::uint64_t>)>;

struct Method {
  std::string name;
  MethodFn run;
};

inline Method baseline_method(const std::string& name) {
  using Imputer = std::vector<double> (*)(const TrajectorySequence&, const MaskMatrix&, Vec2);
  Imputer imp = name == "mean" ? &impute_mean : name == "median" ? &impute_median : name == "linear_fit" ? &impute_linear_fit : nullptr;
  if (!imp) throw ConfigError("unknown baseline '" + name + "'");
  return {name, [imp](std::span<const DatasetRecord* const> recs, std::span<const std::uint64_t>) {
            std::vector<InferenceResult> out;
            for (const auto* r : recs) {
              const auto& s = r->sequence;
              InferenceResult ir;
              ir.agents = s.agents;
              ir.imputed = imp(s, r->mask, Vec2{});
              ir.predicted = predict_constant_velocity(ir.imputed, s.agents, s.t_past, s.t_future);
              out.push_back(std::move(ir));
            }
            return out;
          }};
}

inline Method model_method(const GcVrnn& model, std::uint64_t seed, std::string name = "gcvrnn",
                           std::size_t batch = 64) {
  return {std::move(name), [&model, seed, batch](std::span<const DatasetRecord* const> recs, std::span<const std::uint64_t> keys) {
            std::vector<InferenceResult> out;
            for (std::size_t a = 0; a < recs.size(); a += batch) {
              const std::size_t b = std::min(recs.size(), a + batch);
              std::vector<const TrajectorySequence*> seqs;
              std::vector<const MaskMatrix*> masks;
              std::vector<std::uint64_t> k(keys.begin() + static_cast<std::ptrdiff_t>(a), keys.begin() + static_cast<std::ptrdiff_t>(b));
              for (std::size_t i = a; i < b; ++i) {
                seqs.push_back(&recs[i]->sequence);
                masks.push_back(&recs[i]->mask);
              }
              auto part = model.run_inference_batch(seqs, masks, seed, k);
              for (auto& p : part) out.push_back(std::move(p));
            }
            return out;
          }};
}

/// Metrics of each method over the test split, both I-L2 variants.
inline std::vector<MetricReport> evaluate_methods(const DatasetFile& data, const std::vector<Method>& methods) {
  std::vector<const DatasetRecord*> recs;
  std::vector<std::uint64_t> keys;
  for (std::size_t i = 0; i < data.records.size(); ++i) {
    if (data.records[i].split != Split::test) continue;
    recs.push_back(&data.records[i]);
    keys.push_back(i);
  }
  if (recs.empty()) throw DataError("dataset has no test records");
  std::vector<MetricReport> out;
  for (const auto& m : methods) {
    const auto results = m.run(recs, keys);
    if (results.size() != recs.size()) throw ContractError("method " + m.name + " returned the wrong number of results");
    ErrorSum all, missing, pred;
    for (std::size_t k = 0; k < recs.size(); ++k) {
      all += imputation_error(results[k].imputed, recs[k]->sequence, recs[k]->mask, ImputationVariant::all_past_steps);
      missing += imputation_error(results[k].imputed, recs[k]->sequence, recs[k]->mask, ImputationVariant::missing_only);
      pred += prediction_error(results[k].predicted, recs[k]->sequence);
    }
    for (auto [variant, err] : {std::pair{ImputationVariant::all_past_steps, all}, std::pair{ImputationVariant::missing_only, missing}}) {
      MetricReport r;
      r.method = m.name;
      r.masking = data.header.masking;
      r.variant = variant;
      r.i_l2 = err.mean();
      r.p_l2 = pred.mean();
      r.n_sequences = recs.size();
      r.units = data.header.units;
      out.push_back(r);
    }
  }
  return out;
}

inline std::vector<Method> baseline_methods(const RunConfig& cfg) {
  std::vector<Method> out;
  for (const auto& b : cfg.baselines) out.push_back(baseline_method(b));
  return out;
}

/// Evaluates a checkpoint and the configured baselines; writes report.csv and
/// report.txt into the output directory.
inline FormattedReport cmd_eval(const RunConfig& cfg, const std::string& checkpoint_path, const std::string& dataset_path) {
  const DatasetFile data = read_dataset(dataset_path);
  const auto model = model_from_checkpoint(load_checkpoint(checkpoint_path));
  check_compatible(model->config(), data.header);
  auto methods = baseline_methods(cfg);
  methods.push_back(model_method(*model, derive_seed(cfg.model.seed, seed_tags::eval)));
  FormattedReport rep = report_table(evaluate_methods(data, methods));
  const fs::path out(cfg.out_dir);
  fs::create_directories(out);
  io::write_file((out / "report.csv").string(), rep.csv);
  io::write_file((out / "report.txt").string(), rep.table);
  return rep;
}

// ---- run ------------------------------------------------------------------------

/// Imputes and predicts the single sequence in `input_path`; writes
/// `result.gcds` (the input extended with a result section).
inline DatasetFile cmd_run(const RunConfig& cfg, const std::string& checkpoint_path, const std::string& input_path) {
  DatasetFile f = read_dataset(input_path);
  if (f.records.size() != 1) throw DataError("run: expected exactly one sequence in " + input_path + ", found " + std::to_string(f.records.size()));
  const auto model = model_from_checkpoint(load_checkpoint(checkpoint_path));
  check_compatible(model->config(), f.header);
  auto& rec = f.records.front();
  const InferenceResult ir = model->run_inference(rec.sequence, rec.mask, derive_seed(cfg.model.seed, seed_tags::eval), 0);
  rec.result = ResultSection{ir.imputed, ir.predicted};
  const fs::path out(cfg.out_dir);
  fs::create_directories(out);
  write_dataset((out / "result.gcds").string(), f);
  return f;
}

// ---- export-plot ----------------------------------------------------------------

/// Writes `plot.svg` and `plot.csv` (or `plot_<k>.*` per record when the file
/// holds several) and returns the written paths.
inline std::vector<std::string> cmd_export_plot(const std::string& result_path, const std::string& out_dir) {
  const DatasetFile f = read_dataset(result_path);
  if (f.records.empty()) throw ParseError(result_path + ": no records to plot");
  if (!f.has_results()) throw ParseError(result_path + ": file has no result section");
  const fs::path out(out_dir);
  fs::create_directories(out);
  std::vector<std::string> written;
  for (std::size_t k = 0; k < f.records.size(); ++k) {
    const PlotOutput p = render_plot(f.records[k]);
    const std::string stem = f.records.size() == 1 ? "plot" : "plot_" + std::to_string(k);
    written.push_back((out / (stem + ".svg")).string());
    written.push_back((out / (stem + ".csv")).string());
    io::write_file(written[written.size() - 2], p.svg);
    io::write_file(written.back(), p.csv);
  }
  return written;
}

}  // namespace gcvrnn
