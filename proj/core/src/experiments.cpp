#include "gradguess/experiments.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <stdexcept>

namespace gg {

namespace {

std::string sanitize(const std::string& s) {
  std::string out;
  for (char c : s) out += (std::isalnum(static_cast<unsigned char>(c)) ? c : '_');
  return out;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

// run_id covers only the experiment-defining keys: output location and
// runner settings must not change it, or reruns stop being comparable.
std::string run_id_of(const Config& cfg) {
  Config pruned;
  for (const auto& [key, value] : cfg.values())
    if (key.rfind("output.", 0) != 0 && key.rfind("run.", 0) != 0) pruned.set(key, value);
  return hex64(pruned.hash() ^ cfg.get_u64("train.seed", 0));
}

std::string prepare_out_dir(const Config& cfg) {
  const std::string dir = cfg.get("output.dir", "out");
  std::filesystem::create_directories(dir);
  return dir;
}

MetricRecord record(const std::string& run_id, std::uint64_t seed, long epoch, long step,
                    const std::string& method, const std::string& metric, int layer,
                    double value) {
  MetricRecord r;
  r.run_id = run_id;
  r.seed = seed;
  r.epoch = epoch;
  r.step = step;
  r.method = method;
  r.metric = metric;
  r.layer = layer;
  r.value = value;
  return r;
}

std::vector<std::size_t> default_ks(std::size_t max_k) {
  std::vector<std::size_t> ks{1};
  for (std::size_t k = 2; k <= max_k; k *= 2) ks.push_back(k);
  return ks;
}

// First ≤n examples as a fixed measurement batch.
std::pair<Mat<float>, std::vector<int>> head_batch(const Dataset& ds, std::size_t n) {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < std::min(n, ds.size()); ++i) idx.push_back(i);
  return {gather_rows(ds.features, idx), gather_labels(ds.labels, idx)};
}

GuessMethod method_from_name(const std::string& name) { return GuessMethod::parse(name); }

}  // namespace

EvalResult evaluate(const MlpParams<float>& params, const Dataset& ds, std::size_t limit,
                    std::size_t eval_batch) {
  const std::size_t n = limit > 0 ? std::min(limit, ds.size()) : ds.size();
  EvalResult out;
  std::size_t correct = 0;
  double loss_sum = 0;
  for (std::size_t start = 0; start < n; start += eval_batch) {
    std::vector<std::size_t> idx;
    for (std::size_t i = start; i < std::min(start + eval_batch, n); ++i) idx.push_back(i);
    const Mat<float> batch = gather_rows(ds.features, idx);
    const std::vector<int> labels = gather_labels(ds.labels, idx);
    const ForwardTrace<float> trace = forward(params, batch, labels);
    loss_sum += static_cast<double>(trace.mean_loss) * static_cast<double>(idx.size());
    const Mat<float>& logits = trace.preacts.back();
    for (std::size_t b = 0; b < idx.size(); ++b) {
      const float* row = logits.row_ptr(b);
      std::size_t arg = 0;
      for (std::size_t j = 1; j < logits.cols; ++j)
        if (row[j] > row[arg]) arg = j;
      if (static_cast<int>(arg) == labels[b]) ++correct;
    }
  }
  out.loss = loss_sum / static_cast<double>(n);
  out.accuracy = static_cast<double>(correct) / static_cast<double>(n);
  return out;
}

TrainOutcome train_method(const GuessMethod& method, const MlpConfig& model,
                          const Dataset& train, const Dataset& test, const TrainOptions& opts) {
  TrainOutcome out;
  const RngStream master(opts.seed);
  RngStream init_rng = master.derived({0xC0DE});
  out.params = init_params<float>(model, init_rng);
  Optimizer<float> optim(opts.optimizer, out.params);
  const BatchPlan plan{opts.batch_size, opts.seed, false};
  const std::string desc = method.describe();

  auto [mbatch, mlabels] = head_batch(train, opts.measure_batch);

  auto log = [&](long epoch, long step, const std::string& metric, int layer, double value) {
    out.records.push_back(record(opts.run_id, opts.seed, epoch, step, desc, metric, layer, value));
  };

  for (long epoch = 0; epoch < opts.epochs && !out.diverged; ++epoch) {
    const auto batches = epoch_batches(train.size(), plan, static_cast<std::uint64_t>(epoch));
    for (std::size_t bi = 0; bi < batches.size(); ++bi) {
      Mat<float> batch = gather_rows(train.features, batches[bi]);
      const std::vector<int> labels = gather_labels(train.labels, batches[bi]);
      if ((opts.augment.hflip || opts.augment.crop_pad > 0) && train.geometry.dim() > 0) {
        RngStream aug_rng = master.derived({3, static_cast<std::uint64_t>(epoch), bi});
        batch = augment(batch, train.geometry, aug_rng, opts.augment);
      }
      RngStream step_rng = master.derived({1, static_cast<std::uint64_t>(epoch), bi});
      try {
        const ForwardTrace<float> trace = forward(out.params, batch, labels);
        if (!std::isfinite(trace.mean_loss)) throw std::runtime_error("non-finite loss");
        GradEstimate<float> est;
        if (method.kind == GuessKind::Backprop) {
          ++out.audit.update_path;
          est = grads_to_estimate(backprop(out.params, trace));
        } else if (method.kind == GuessKind::SlerpMatched) {
          ++out.audit.control;
          const Gradients<float> oracle = backprop(out.params, trace);
          est = estimate_gradient(method, out.params, trace, step_rng, opts.replicates, &oracle);
        } else {
          est = estimate_gradient(method, out.params, trace, step_rng, opts.replicates);
        }
        optim.apply(out.params, est, opts.lr);
        ++out.steps;
      } catch (const std::runtime_error&) {
        out.diverged = true;
        break;
      }
    }

    try {
      const EvalResult tr = evaluate(out.params, train, opts.eval_limit);
      out.train_loss.push_back(tr.loss);
      out.train_acc.push_back(tr.accuracy);
      log(epoch, out.steps, "train_loss", -1, tr.loss);
      log(epoch, out.steps, "train_acc", -1, tr.accuracy);
      if (test.size() > 0) {
        const EvalResult te = evaluate(out.params, test, opts.eval_limit);
        out.test_acc.push_back(te.accuracy);
        log(epoch, out.steps, "test_acc", -1, te.accuracy);
      }

      if (opts.measure_cosine && epoch % std::max(opts.measure_every, 1L) == 0) {
        const ForwardTrace<float> trace = forward(out.params, mbatch, mlabels);
        ++out.audit.measurement;
        const Gradients<float> oracle = backprop(out.params, trace);
        RngStream meas_rng = master.derived({2, static_cast<std::uint64_t>(epoch)});
        double cos;
        if (method.kind == GuessKind::Backprop) {
          cos = 1.0;
        } else {
          const GradEstimate<float> est =
              estimate_gradient(method, out.params, trace, meas_rng, 1, &oracle);
          cos = static_cast<double>(cosine_similarity(est, oracle));
        }
        out.cosine.push_back(cos);
        log(epoch, out.steps, "cosine", -1, cos);
      }
      if (opts.measure_effective_rank && epoch % std::max(opts.measure_every, 1L) == 0) {
        const double er = effective_rank(out.params.weights[0]);
        out.effective_rank.push_back(er);
        log(epoch, out.steps, "effective_rank_w1", 0, er);
      }
    } catch (const std::runtime_error&) {
      out.diverged = true;
    }
  }

  log(opts.epochs, out.steps, "oracle_calls_update_path", -1,
      static_cast<double>(out.audit.update_path));
  log(opts.epochs, out.steps, "oracle_calls_measurement", -1,
      static_cast<double>(out.audit.measurement));
  log(opts.epochs, out.steps, "oracle_calls_control", -1, static_cast<double>(out.audit.control));
  if (!method.uses_oracle() && out.audit.update_path != 0)
    throw std::logic_error("oracle gradient leaked into a backprop-free update path");
  return out;
}

ExperimentData load_experiment_data(const Config& cfg) {
  const std::string kind = cfg.get("dataset.kind", "synth");
  ExperimentData data;
  if (kind == "synth") {
    const int classes = static_cast<int>(cfg.get_int("dataset.classes", 10));
    const std::size_t dim = static_cast<std::size_t>(cfg.get_int("dataset.dim", 64));
    const std::size_t per_class = static_cast<std::size_t>(cfg.get_int("dataset.per_class", 100));
    const double sep = cfg.get_num("dataset.separation", 3.0);
    const std::uint64_t dseed = cfg.get_u64("dataset.seed", 7);
    RngStream train_rng(dseed, 0);
    data.train = synth_clusters(classes, dim, per_class, sep, train_rng);
    const std::size_t test_per_class =
        static_cast<std::size_t>(cfg.get_int("dataset.test_per_class", per_class / 5));
    if (test_per_class > 0) {
      // same cluster centers, fresh noise: regenerate with the identical
      // stream for centers by drawing a superset and splitting
      RngStream test_rng(dseed, 1);
      data.test = synth_clusters(classes, dim, test_per_class, sep, test_rng);
      // distinct streams give distinct centers; re-center the test set on
      // the train centers by regenerating both from one stream instead
      RngStream both(dseed, 0);
      Dataset all = synth_clusters(classes, dim, per_class + test_per_class, sep, both);
      std::vector<std::size_t> tr_idx, te_idx;
      for (int c = 0; c < classes; ++c) {
        const std::size_t base = static_cast<std::size_t>(c) * (per_class + test_per_class);
        for (std::size_t i = 0; i < per_class; ++i) tr_idx.push_back(base + i);
        for (std::size_t i = 0; i < test_per_class; ++i) te_idx.push_back(base + per_class + i);
      }
      data.train.features = gather_rows(all.features, tr_idx);
      data.train.labels = gather_labels(all.labels, tr_idx);
      data.test = all;
      data.test.features = gather_rows(all.features, te_idx);
      data.test.labels = gather_labels(all.labels, te_idx);
    }
  } else if (kind == "idx") {
    data.train = load_idx(cfg.get("dataset.images"), cfg.get("dataset.labels"));
    if (cfg.has("dataset.test_images"))
      data.test = load_idx(cfg.get("dataset.test_images"), cfg.get("dataset.test_labels"));
  } else if (kind == "cifar10") {
    data.train = load_cifar_binary(cfg.get_list("dataset.files"));
    if (cfg.has("dataset.test_files"))
      data.test = load_cifar_binary(cfg.get_list("dataset.test_files"));
  } else {
    throw ConfigError("unknown dataset.kind: " + kind);
  }

  const std::size_t limit = static_cast<std::size_t>(cfg.get_int("dataset.limit", 0));
  if (limit > 0 && limit < data.train.size()) {
    std::vector<std::size_t> idx(limit);
    for (std::size_t i = 0; i < limit; ++i) idx[i] = i;
    data.train.features = gather_rows(data.train.features, idx);
    data.train.labels = gather_labels(data.train.labels, idx);
  }
  const std::size_t test_limit = static_cast<std::size_t>(cfg.get_int("dataset.test_limit", 0));
  if (test_limit > 0 && test_limit < data.test.size()) {
    std::vector<std::size_t> idx(test_limit);
    for (std::size_t i = 0; i < test_limit; ++i) idx[i] = i;
    data.test.features = gather_rows(data.test.features, idx);
    data.test.labels = gather_labels(data.test.labels, idx);
  }

  const std::string norm = cfg.get("dataset.normalize", kind == "synth" ? "none" : "feature");
  if (norm == "feature") {
    const Normalization stats = compute_normalization(data.train);
    apply_normalization(data.train, stats);
    if (data.test.size() > 0) apply_normalization(data.test, stats);
  } else if (norm == "channel") {
    const Normalization stats = compute_channel_normalization(data.train);
    apply_normalization(data.train, stats);
    if (data.test.size() > 0) apply_normalization(data.test, stats);
  } else if (norm != "none") {
    throw ConfigError("unknown dataset.normalize: " + norm);
  }
  return data;
}

MlpConfig model_from_config(const Config& cfg, const Dataset& train) {
  MlpConfig model;
  model.input_dim = train.input_dim();
  model.output_dim = static_cast<std::size_t>(train.class_count);
  model.depth = static_cast<std::size_t>(cfg.get_int("model.depth", 3));
  model.width = static_cast<std::size_t>(cfg.get_int("model.width", 128));
  model.bias_enabled = cfg.get_flag("model.bias", false);
  model.validate();
  return model;
}

TrainOptions train_options_from_config(const Config& cfg) {
  TrainOptions opts;
  opts.epochs = cfg.get_int("train.epochs", 10);
  opts.batch_size = static_cast<std::size_t>(cfg.get_int("train.batch_size", 512));
  opts.lr = cfg.get_num("optimizer.lr", 1e-4);
  opts.optimizer = OptimizerSpec::parse(cfg.get("optimizer.kind", "adamw"));
  opts.optimizer.momentum = cfg.get_num("optimizer.momentum", opts.optimizer.momentum);
  opts.optimizer.weight_decay = cfg.get_num("optimizer.weight_decay", 0.0);
  opts.replicates = static_cast<std::size_t>(cfg.get_int("method.replicates", 1));
  opts.seed = cfg.get_u64("train.seed", 0);
  opts.run_id = run_id_of(cfg);
  opts.measure_cosine = cfg.get_flag("measure.cosine", false);
  opts.measure_every = cfg.get_int("measure.every", 1);
  opts.measure_batch = static_cast<std::size_t>(cfg.get_int("measure.batch", 256));
  opts.measure_effective_rank = cfg.get_flag("measure.effective_rank", false);
  opts.eval_limit = static_cast<std::size_t>(cfg.get_int("measure.eval_limit", 0));
  opts.augment.hflip = cfg.get_flag("dataset.augment_hflip", false);
  opts.augment.crop_pad = static_cast<std::size_t>(cfg.get_int("dataset.augment_crop_pad", 0));
  return opts;
}

int cmd_train(const Config& cfg) {
  const ExperimentData data = load_experiment_data(cfg);
  const MlpConfig model = model_from_config(cfg, data.train);
  const TrainOptions opts = train_options_from_config(cfg);
  const std::string dir = prepare_out_dir(cfg);
  CsvWriter writer(dir + "/train.csv");
  int exit_code = kExitOk;
  for (const std::string& name : cfg.get_list("method.methods")) {
    const GuessMethod method = method_from_name(name);
    const TrainOutcome outcome = train_method(method, model, data.train, data.test, opts);
    for (const auto& rec : outcome.records) writer.write(rec);
    save_checkpoint(outcome.params, dir + "/" + sanitize(name) + "_final.ckpt");
    if (outcome.diverged) {
      std::cerr << "run diverged: " << name << "\n";
      exit_code = kExitDivergence;
    }
  }
  writer.flush();
  return exit_code;
}

int cmd_cosine(const Config& cfg) {
  const ExperimentData data = load_experiment_data(cfg);
  const MlpConfig model = model_from_config(cfg, data.train);
  const TrainOptions opts = train_options_from_config(cfg);
  const std::string dir = prepare_out_dir(cfg);
  CsvWriter writer(dir + "/cosine.csv");

  std::vector<GuessMethod> methods;
  for (const std::string& name : cfg.get_list("method.methods"))
    methods.push_back(method_from_name(name));

  const RngStream master(opts.seed);
  RngStream init_rng = master.derived({0xC0DE});
  MlpParams<float> params = init_params<float>(model, init_rng);
  Optimizer<float> optim(opts.optimizer, params);
  const BatchPlan plan{opts.batch_size, opts.seed, false};
  auto [mbatch, mlabels] = head_batch(data.train, opts.measure_batch);
  OracleAudit audit;

  long steps = 0;
  for (long epoch = 0; epoch < opts.epochs; ++epoch) {
    // oracle-driven trajectory
    for (const auto& idx : epoch_batches(data.train.size(), plan, static_cast<std::uint64_t>(epoch))) {
      const Mat<float> batch = gather_rows(data.train.features, idx);
      const std::vector<int> labels = gather_labels(data.train.labels, idx);
      const ForwardTrace<float> trace = forward(params, batch, labels);
      if (!std::isfinite(trace.mean_loss)) return kExitDivergence;
      ++audit.update_path;  // this IS the backprop trajectory
      optim.apply(params, grads_to_estimate(backprop(params, trace)), opts.lr);
      ++steps;
    }
    const ForwardTrace<float> trace = forward(params, mbatch, mlabels);
    ++audit.measurement;
    const Gradients<float> oracle = backprop(params, trace);
    for (std::size_t mi = 0; mi < methods.size(); ++mi) {
      RngStream meas_rng = master.derived({2, static_cast<std::uint64_t>(epoch), mi});
      double cos;
      if (methods[mi].kind == GuessKind::Backprop) {
        cos = 1.0;
      } else {
        const GradEstimate<float> est =
            estimate_gradient(methods[mi], params, trace, meas_rng, opts.replicates, &oracle);
        cos = static_cast<double>(cosine_similarity(est, oracle));
      }
      writer.write(record(opts.run_id, opts.seed, epoch, steps, methods[mi].describe(), "cosine",
                          -1, cos));
    }
  }
  writer.flush();
  return kExitOk;
}

namespace {

// Shared pretraining for the measurement subcommands: a short backprop
// trajectory puts the net "during training" rather than at init.
MlpParams<float> pretrain(const Config& cfg, const ExperimentData& data, const MlpConfig& model,
                          const TrainOptions& opts) {
  const long epochs = cfg.get_int("measure.pretrain_epochs", 1);
  if (epochs <= 0) {
    RngStream init_rng = RngStream(opts.seed).derived({0xC0DE});
    return init_params<float>(model, init_rng);
  }
  TrainOptions pre = opts;
  pre.epochs = epochs;
  pre.measure_cosine = false;
  pre.measure_effective_rank = false;
  return train_method(GuessMethod(GuessKind::Backprop), model, data.train, data.test, pre).params;
}

}  // namespace

int cmd_replications(const Config& cfg) {
  const ExperimentData data = load_experiment_data(cfg);
  const MlpConfig model = model_from_config(cfg, data.train);
  const TrainOptions opts = train_options_from_config(cfg);
  const std::string dir = prepare_out_dir(cfg);
  CsvWriter writer(dir + "/replications.csv");

  MlpParams<float> params = pretrain(cfg, data, model, opts);
  const std::size_t n_examples = static_cast<std::size_t>(cfg.get_int("measure.examples", 1));
  auto [batch, labels] = head_batch(data.train, n_examples);
  const ForwardTrace<float> trace = forward(params, batch, labels);
  const Gradients<float> oracle = backprop(params, trace);
  const auto ks = default_ks(static_cast<std::size_t>(cfg.get_int("measure.max_guesses", 8192)));

  const RngStream master(opts.seed);
  for (const std::string& name : cfg.get_list("method.methods")) {
    const GuessMethod method = method_from_name(name);
    if (method.kind == GuessKind::Backprop) continue;  // not a guess generator
    RngStream rng = master.derived({4, static_cast<std::uint64_t>(cfg.hash()), 0});
    const auto curve = replication_curve(method, params, trace, ks, rng, oracle);
    for (const auto& [k, cos] : curve)
      writer.write(record(opts.run_id, opts.seed, -1, static_cast<long>(k), method.describe(),
                          "replication_cosine", -1, cos));
  }
  writer.flush();
  return kExitOk;
}

int cmd_onestep(const Config& cfg) {
  const ExperimentData data = load_experiment_data(cfg);
  const MlpConfig model = model_from_config(cfg, data.train);
  const TrainOptions opts = train_options_from_config(cfg);
  const std::string dir = prepare_out_dir(cfg);
  CsvWriter writer(dir + "/onestep.csv");

  MlpParams<float> params = pretrain(cfg, data, model, opts);
  auto [batch, labels] = head_batch(data.train, opts.measure_batch);
  std::vector<double> grid{1e-5, 1e-4, 1e-3, 1e-2, 1e-1};
  if (cfg.has("measure.step_grid")) grid = cfg.get_num_list("measure.step_grid");

  const RngStream master(opts.seed);
  for (const std::string& name : cfg.get_list("method.methods")) {
    const GuessMethod method = method_from_name(name);
    RngStream rng = master.derived({5});
    const OneStepResult<float> res =
        one_step_effectiveness(method, params, batch, labels, rng, grid, opts.replicates);
    if (res.skipped) {
      writer.write(record(opts.run_id, opts.seed, -1, -1, method.describe(), "onestep_skipped",
                          -1, 1.0));
    } else {
      writer.write(
          record(opts.run_id, opts.seed, -1, -1, method.describe(), "onestep_ratio", -1, res.ratio));
    }
  }
  writer.flush();
  return kExitOk;
}

int cmd_subspace(const Config& cfg) {
  const ExperimentData data = load_experiment_data(cfg);
  const MlpConfig model = model_from_config(cfg, data.train);
  const TrainOptions opts = train_options_from_config(cfg);
  const std::string dir = prepare_out_dir(cfg);
  CsvWriter writer(dir + "/subspace.csv");

  MlpParams<float> params = pretrain(cfg, data, model, opts);
  auto [batch, labels] = head_batch(data.train, opts.measure_batch);
  const ForwardTrace<float> trace = forward(params, batch, labels);
  const Gradients<float> oracle = backprop(params, trace);

  std::vector<std::size_t> m_grid{1, 2, 5, 10, 20, 50};
  if (cfg.has("measure.m_grid")) {
    m_grid.clear();
    for (double v : cfg.get_num_list("measure.m_grid"))
      m_grid.push_back(static_cast<std::size_t>(v));
  }

  const RngStream master(opts.seed);
  for (std::size_t i = 0; i + 1 < model.depth; ++i) {
    // mean gradient w.r.t. the post-activations x_{i+1}
    const Mat<float> dx = matmul(oracle.preact_grads[i + 1], params.weights[i + 1]);
    Vec<float> grad(dx.cols);
    for (std::size_t b = 0; b < dx.rows; ++b)
      for (std::size_t j = 0; j < dx.cols; ++j) grad[j] += dx(b, j);
    for (auto& x : grad.data) x /= static_cast<float>(dx.rows);

    RngStream rng = master.derived({6, i});
    const auto reports =
        subspace_alignment(trace.postacts[i], grad, m_grid, rng,
                           cfg.get_flag("measure.pca_center", true), static_cast<int>(i + 1));
    for (const auto& rep : reports) {
      const std::string suffix = ":m=" + std::to_string(rep.basis_size) +
                                 (rep.truncated ? ",truncated=1" : "");
      writer.write(record(opts.run_id, opts.seed, -1, -1, "subspace", "activation_cosine" + suffix,
                          rep.layer, rep.activation_cosine));
      writer.write(record(opts.run_id, opts.seed, -1, -1, "subspace", "random_cosine" + suffix,
                          rep.layer, rep.random_cosine));
    }
  }
  writer.flush();
  return kExitOk;
}

int cmd_biastoy(const Config& cfg) {
  const std::string dir = prepare_out_dir(cfg);
  CsvWriter writer(dir + "/biastoy.csv");
  const std::uint64_t seed = cfg.get_u64("train.seed", 0);
  const std::size_t dim = static_cast<std::size_t>(cfg.get_int("measure.toy_dim", 8));
  const std::size_t replicates =
      static_cast<std::size_t>(cfg.get_int("measure.toy_replicates", 100000));
  std::vector<double> ks{1, 2, 3};
  if (cfg.has("measure.toy_k")) ks = cfg.get_num_list("measure.toy_k");
  const std::string run_id = run_id_of(cfg);
  for (double kd : ks) {
    const int k = static_cast<int>(kd);
    RngStream rng = RngStream(seed).derived({7, static_cast<std::uint64_t>(k)});
    const BiasToyResult res = bias_toy_chain(k, dim, replicates, rng);
    writer.write(record(run_id, seed, -1, k, "bias_toy", "measured_bias", -1, res.measured));
    writer.write(record(run_id, seed, -1, k, "bias_toy", "predicted_bias", -1, res.predicted));
  }
  writer.flush();
  return kExitOk;
}

int cmd_svdpower(const Config& cfg) {
  const ExperimentData data = load_experiment_data(cfg);
  const MlpConfig model = model_from_config(cfg, data.train);
  TrainOptions opts = train_options_from_config(cfg);
  opts.measure_cosine = true;
  opts.measure_effective_rank = true;
  const std::string dir = prepare_out_dir(cfg);
  CsvWriter writer(dir + "/svdpower.csv");

  std::vector<double> powers{0.5, 1.0, 2.0, 4.0};
  if (cfg.has("measure.powers")) powers = cfg.get_num_list("measure.powers");

  int exit_code = kExitOk;
  for (double p : powers) {
    GuessMethod method(GuessKind::SvdPowerWT);
    method.svd_power = p;
    const TrainOutcome outcome = train_method(method, model, data.train, data.test, opts);
    for (const auto& rec : outcome.records) writer.write(rec);
    if (outcome.diverged) exit_code = kExitDivergence;
  }
  writer.flush();
  return exit_code;
}

int cmd_sweep(const Config& cfg) {
  const ExperimentData data = load_experiment_data(cfg);
  const MlpConfig model = model_from_config(cfg, data.train);
  const TrainOptions base = train_options_from_config(cfg);
  const std::string dir = prepare_out_dir(cfg);
  CsvWriter all_writer(dir + "/sweep_all.csv");
  CsvWriter best_writer(dir + "/sweep_best.csv");

  const std::vector<double> lrs = cfg.get_num_list("optimizer.lr_grid");
  const std::vector<std::string> opt_names = cfg.get_list("optimizer.kinds");
  const std::vector<std::string> methods = cfg.get_list("method.methods");
  if (lrs.empty() || opt_names.empty() || methods.empty())
    throw ConfigError("sweep requires non-empty optimizer.lr_grid, optimizer.kinds, method.methods");

  for (const std::string& name : methods) {
    const GuessMethod method = method_from_name(name);
    for (const std::string& opt_name : opt_names) {
      double best_acc = -1.0, best_lr = 0.0;
      std::vector<MetricRecord> best_records;
      for (double lr : lrs) {
        TrainOptions opts = base;
        opts.lr = lr;
        opts.optimizer = OptimizerSpec::parse(opt_name);
        opts.optimizer.momentum = cfg.get_num("optimizer.momentum", opts.optimizer.momentum);
        const TrainOutcome outcome = train_method(method, model, data.train, data.test, opts);
        const double final_acc =
            outcome.train_acc.empty() || outcome.diverged ? 0.0 : outcome.train_acc.back();
        const std::string combo =
            method.describe() + "|" + opts.optimizer.describe() + "|lr=" + std::to_string(lr);
        for (auto rec : outcome.records) {
          rec.method = combo;
          all_writer.write(rec);
        }
        all_writer.write(
            record(base.run_id, base.seed, base.epochs, -1, combo, "final_train_acc", -1, final_acc));
        if (final_acc > best_acc) {
          best_acc = final_acc;
          best_lr = lr;
          best_records = outcome.records;
          for (auto& rec : best_records) rec.method = combo;
        }
      }
      for (const auto& rec : best_records) best_writer.write(rec);
      best_writer.write(record(base.run_id, base.seed, base.epochs, -1,
                               method.describe() + "|" + opt_name + "|best_lr=" +
                                   std::to_string(best_lr),
                               "best_final_train_acc", -1, best_acc));
    }
  }
  all_writer.flush();
  best_writer.flush();
  return kExitOk;
}

int run_subcommand(const std::string& name, const Config& cfg) {
  if (name == "train") return cmd_train(cfg);
  if (name == "cosine") return cmd_cosine(cfg);
  if (name == "replications") return cmd_replications(cfg);
  if (name == "onestep") return cmd_onestep(cfg);
  if (name == "subspace") return cmd_subspace(cfg);
  if (name == "biastoy") return cmd_biastoy(cfg);
  if (name == "svdpower") return cmd_svdpower(cfg);
  if (name == "sweep") return cmd_sweep(cfg);
  throw ConfigError("unknown subcommand: " + name);
}

}  // namespace gg
