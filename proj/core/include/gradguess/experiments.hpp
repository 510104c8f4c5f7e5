#pragma once

#include "gradguess/config.hpp"
#include "gradguess/dataio.hpp"
#include "gradguess/guess.hpp"
#include "gradguess/optim.hpp"

namespace gg {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfigError = 2;
inline constexpr int kExitDivergence = 3;

/// Counts exact-gradient invocations per purpose. A backprop-free
/// training run must end with update_path == 0; measurement hooks and
/// oracle controls are counted separately.
struct OracleAudit {
  long update_path = 0;
  long measurement = 0;
  long control = 0;
};

struct EvalResult {
  double loss = 0.0;
  double accuracy = 0.0;
};

EvalResult evaluate(const MlpParams<float>& params, const Dataset& ds, std::size_t limit = 0,
                    std::size_t eval_batch = 512);

struct TrainOptions {
  long epochs = 10;
  std::size_t batch_size = 512;
  double lr = 1e-4;
  OptimizerSpec optimizer;
  std::size_t replicates = 1;
  std::uint64_t seed = 0;
  std::string run_id = "run";
  bool measure_cosine = false;
  long measure_every = 1;
  std::size_t measure_batch = 256;
  bool measure_effective_rank = false;
  std::size_t eval_limit = 0;  // 0 = full split
  AugmentFlags augment;
};

struct TrainOutcome {
  std::vector<MetricRecord> records;
  std::vector<double> train_loss;
  std::vector<double> train_acc;
  std::vector<double> test_acc;
  std::vector<double> cosine;          // per measured epoch (if enabled)
  std::vector<double> effective_rank;  // first weight matrix, per measured epoch
  MlpParams<float> params;
  OracleAudit audit;
  bool diverged = false;
  long steps = 0;
};

/// One training run of a single method. The backprop oracle enters the
/// update path only for GuessKind::Backprop; slerp controls read it as
/// `control`, per-epoch cosine measurement as `measurement`.
TrainOutcome train_method(const GuessMethod& method, const MlpConfig& model,
                          const Dataset& train, const Dataset& test, const TrainOptions& opts);

/// Datasets resolved from [dataset] config keys (train, test).
struct ExperimentData {
  Dataset train;
  Dataset test;
};
ExperimentData load_experiment_data(const Config& cfg);

MlpConfig model_from_config(const Config& cfg, const Dataset& train);
TrainOptions train_options_from_config(const Config& cfg);

// CLI subcommands; each writes CSV into <output.dir>.
int cmd_train(const Config& cfg);
int cmd_cosine(const Config& cfg);
int cmd_replications(const Config& cfg);
int cmd_onestep(const Config& cfg);
int cmd_subspace(const Config& cfg);
int cmd_biastoy(const Config& cfg);
int cmd_svdpower(const Config& cfg);
int cmd_sweep(const Config& cfg);

int run_subcommand(const std::string& name, const Config& cfg);

}  // namespace gg
