#pragma once

// The joint contrastive training loop, the source-only baseline and the
// end-of-run diagnostics (linear probe, gamma sweep).

#include "jcl/cluster.hpp"
#include "jcl/data.hpp"
#include "jcl/nn.hpp"

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace jcl::trainer {

struct TrainConfig {
  data::SyntheticTaskConfig task;
  nn::Architecture arch;

  double gamma = 1.0;
  double tau = 0.05;
  double d = 1.0;
  std::size_t queue_capacity = 512;
  double key_momentum = 0.99;

  double eta0 = 0.01;
  double alpha = 10.0;
  double beta = 0.75;
  double sgd_momentum = 0.9;

  int batch_source = 32;
  int batch_certain = 32;
  int batch_uncertain = 32;
  int epochs = 30;
  int iterations_per_epoch = 10;
  int warmup_epochs = 1;
  double augment_scale = 0.05;  // jitter sigma as a fraction of the task radius

  bool enqueue_before_loss = true;
  bool warm_start_clusters = false;
  // Source-only runs: also forward target batches to keep target statistics
  // and evaluate the target with them.
  bool baseline_target_stats = false;
  int infonce_samples = 64;
  std::uint64_t seed = 1;

  void validate() const;
  int max_iterations() const { return epochs * iterations_per_epoch; }
};

// One row per iteration. Evaluation fields are NaN except on the last
// iteration of an epoch; probe_error is set on the final row only.
struct MetricsRecord {
  int iteration = 0;
  int epoch = 0;
  double loss_s = 0.0;
  double loss_c = 0.0;
  double lr = 0.0;
  bool contrastive = false;
  double target_accuracy = 0.0;
  double pseudo_label_accuracy = 0.0;
  double certain_fraction = 0.0;
  double infonce = 0.0;
  double probe_error = 0.0;
};

void write_metrics_csv(std::ostream& out, std::span<const MetricsRecord> rows);

struct TrainResult {
  nn::MlpState state;
  std::vector<MetricsRecord> metrics;
  double source_accuracy = 0.0;
  double target_accuracy = 0.0;
  double probe_error = 0.0;
  std::optional<std::string> abort_reason;  // set when a loss went non-finite
  // Final features for export.
  Matrix source_z;
  Matrix target_z;
  std::vector<int> target_pseudo_labels;  // last clustering, -1 for uncertain
};

struct ProbeOptions {
  int epochs = 200;
  int batch = 64;
  double lr = 0.5;
  double momentum = 0.9;
};

// Softmax regression on frozen features trained by minibatch SGD. Returns the
// error rate on the same data.
double linear_probe(const Matrix& features, std::span<const int> labels, int num_classes,
                    std::uint64_t seed, const ProbeOptions& options = {});

// Full joint contrastive procedure on the configured synthetic task.
TrainResult train_jcl(const TrainConfig& cfg);

// Same loop with only the source classification loss. The target is evaluated
// with the source normalization statistics unless baseline_target_stats is set.
TrainResult train_source_only(const TrainConfig& cfg);

// The loops above on explicit data. The target rows carry no labels; the
// evaluator is the only holder of target truth.
TrainResult run_training(const TrainConfig& cfg, const data::DomainDataset& source,
                         const data::DomainDataset& target, const data::Evaluator& evaluator,
                         bool joint);

// Forward a batch in train mode purely to refresh the normalization statistics
// of one domain.
void refresh_statistics(nn::MlpState& state, const Matrix& batch, nn::Domain domain);

struct SweepRow {
  double gamma = 0.0;
  double target_accuracy = 0.0;
  double probe_error = 0.0;
};

struct SweepResult {
  std::vector<SweepRow> rows;
  std::vector<TrainResult> runs;
  double sensitivity = 0.0;  // max - min target accuracy
};

SweepResult gamma_sweep(const TrainConfig& cfg, std::span<const double> gammas);
void write_sweep_csv(std::ostream& out, const SweepResult& sweep);

// x1..xd,z1..zk,label,pseudo_label,domain
void write_features_csv(std::ostream& out, const TrainConfig& cfg, const TrainResult& result);

}  // namespace jcl::trainer
