#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "nagg/data_io.hpp"
#include "nagg/models.hpp"
#include "nagg/tape.hpp"

namespace nagg {

enum class OptimizerKind { Adam, SgdMomentum };

struct TrainConfig {
  double lr = 0.01;
  double weight_decay = 5e-4;
  int max_epochs = 500;
  int patience = 100;  // evaluations without val-accuracy improvement
  OptimizerKind optimizer = OptimizerKind::Adam;
  std::uint64_t seed = 0;
  int eval_every = 1;
  bool share_agg_theta = false;

  void validate() const;
};

struct EpochLog {
  int epoch = 0;
  double train_loss = 0.0;  // evaluated without dropout
  double val_loss = 0.0;
  double val_acc = 0.0;
  std::vector<double> agg_params;  // effective p/alpha/gamma per parameterized layer
};

struct TrainMetrics {
  double test_acc = 0.0;
  int best_epoch = 0;
  std::vector<double> final_agg_params;
  double wall_time_s = 0.0;  // reported in run summaries, not in metrics.json
};

struct TrainResult {
  ModelParams params;  // best-validation snapshot
  std::vector<EpochLog> logs;
  TrainMetrics metrics;
};

/// Raised when the training loss turns non-finite.
struct TrainingDiverged : std::runtime_error {
  int epoch;
  explicit TrainingDiverged(int at)
      : std::runtime_error("training diverged at epoch " + std::to_string(at)), epoch(at) {}
};

/// Mean over the masked rows of -log softmax(logits)[label], stabilized by
/// max subtraction. Differentiable w.r.t. logits.
ValueId masked_cross_entropy(Tape& t, ValueId logits, const std::vector<int>& labels,
                             const std::vector<int>& mask);
/// Forward-only counterpart for evaluation passes.
double masked_cross_entropy_value(const Tensor& logits, const std::vector<int>& labels,
                                  const std::vector<int>& mask);

/// Fraction of masked rows whose argmax equals the label (ties break to the
/// lowest class index).
double accuracy(const Tensor& logits, const std::vector<int>& labels,
                const std::vector<int>& mask);

/// Per-parameter optimizer state; slots are sized on first use.
struct OptimizerSlot {
  std::vector<double> m;  // Adam first moment / SGD velocity
  std::vector<double> v;  // Adam second moment
};

/// Adam with beta1=0.9, beta2=0.999, eps=1e-8. The weight-decay term is
/// added to the gradient before the moment updates.
void adam_step(std::span<double> param, std::span<const double> grad, OptimizerSlot& slot,
               long step_index, double lr, double weight_decay);
/// SGD with momentum 0.9 and the same gradient-side weight decay.
void sgd_momentum_step(std::span<double> param, std::span<const double> grad, OptimizerSlot& slot,
                       double lr, double weight_decay);

/// Full semi-supervised run: masked cross-entropy, weight decay on W and
/// attention vectors (never on aggregator theta), early stopping on
/// validation accuracy, best-snapshot restore, test accuracy of the snapshot.
TrainResult train(const DatasetBundle& bundle, const SplitMask& split,
                  const std::vector<LayerSpec>& specs, const TrainConfig& cfg);

void write_loss_csv(const std::vector<EpochLog>& logs, const std::string& path);
/// Deterministic fields only (test_acc, best_epoch, agg_params, seed), so
/// repeated runs of one configuration are byte-identical.
void write_metrics_json(const TrainMetrics& metrics, std::uint64_t seed, const std::string& path);

}  // namespace nagg
