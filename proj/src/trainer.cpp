#include "nagg/trainer.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include <json.hpp>

namespace nagg {

namespace {

[[noreturn]] void fail(const std::string& msg) { throw std::invalid_argument(msg); }

void check_mask(const Tensor& logits, const std::vector<int>& labels,
                const std::vector<int>& mask, const char* op) {
  if (mask.empty()) fail(std::string(op) + ": empty mask");
  if (static_cast<int>(labels.size()) != logits.rows)
    fail(std::string(op) + ": " + std::to_string(labels.size()) + " labels for " +
         std::to_string(logits.rows) + " logit rows");
  for (int i : mask) {
    if (i < 0 || i >= logits.rows)
      fail(std::string(op) + ": masked row " + std::to_string(i) + " out of range");
    if (labels[i] < 0 || labels[i] >= logits.cols)
      fail(std::string(op) + ": node " + std::to_string(i) + " has label " +
           std::to_string(labels[i]) + " outside [0," + std::to_string(logits.cols) + ")");
  }
}

double row_lse(const Tensor& logits, int row) {
  double m = logits.at(row, 0);
  for (int j = 1; j < logits.cols; ++j) m = std::max(m, logits.at(row, j));
  double z = 0.0;
  for (int j = 0; j < logits.cols; ++j) z += std::exp(logits.at(row, j) - m);
  return m + std::log(z);
}

std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::vector<double> effective_params(const std::vector<LayerSpec>& specs,
                                     const ModelParams& params) {
  std::vector<double> out;
  for (std::size_t l = 0; l < specs.size(); ++l)
    if (agg_has_param(specs[l].agg.kind)) {
      AggConfig cfg = specs[l].agg;
      cfg.theta = params.layers[l].theta;
      out.push_back(reparam(cfg));
    }
  return out;
}

}  // namespace

void TrainConfig::validate() const {
  if (!(lr >= 0.0)) fail("train config: lr must be nonnegative");
  if (weight_decay < 0.0) fail("train config: weight_decay must be nonnegative");
  if (max_epochs <= 0) fail("train config: max_epochs must be positive");
  if (patience <= 0 || patience > max_epochs)
    fail("train config: patience must lie in [1, max_epochs]");
  if (eval_every <= 0) fail("train config: eval_every must be positive");
}

ValueId masked_cross_entropy(Tape& t, ValueId logits, const std::vector<int>& labels,
                             const std::vector<int>& mask) {
  const Tensor& L = t.value(logits);
  check_mask(L, labels, mask, "masked_cross_entropy");
  double loss = 0.0;
  for (int i : mask) loss += row_lse(L, i) - L.at(i, labels[i]);
  loss /= static_cast<double>(mask.size());
  return t.record(Tensor::scalar(loss), {logits},
                  [logits, labels, mask](Tape& tt, ValueId out_id) {
                    const double go = tt.grad_of(out_id).data[0];
                    const Tensor& L = tt.value(logits);
                    Tensor& gl = tt.grad_acc(logits);
                    const double inv = 1.0 / static_cast<double>(mask.size());
                    for (int i : mask) {
                      const double lse = row_lse(L, i);
                      for (int j = 0; j < L.cols; ++j) {
                        double p = std::exp(L.at(i, j) - lse);
                        if (j == labels[i]) p -= 1.0;
                        gl.at(i, j) += go * inv * p;
                      }
                    }
                  });
}

double masked_cross_entropy_value(const Tensor& logits, const std::vector<int>& labels,
                                  const std::vector<int>& mask) {
  check_mask(logits, labels, mask, "masked_cross_entropy");
  double loss = 0.0;
  for (int i : mask) loss += row_lse(logits, i) - logits.at(i, labels[i]);
  return loss / static_cast<double>(mask.size());
}

double accuracy(const Tensor& logits, const std::vector<int>& labels,
                const std::vector<int>& mask) {
  check_mask(logits, labels, mask, "accuracy");
  int correct = 0;
  for (int i : mask) {
    int best = 0;
    for (int j = 1; j < logits.cols; ++j)
      if (logits.at(i, j) > logits.at(i, best)) best = j;
    if (best == labels[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(mask.size());
}

void adam_step(std::span<double> param, std::span<const double> grad, OptimizerSlot& slot,
               long step_index, double lr, double weight_decay) {
  if (param.size() != grad.size()) fail("adam_step: parameter/gradient size mismatch");
  constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  if (slot.m.size() != param.size()) {
    slot.m.assign(param.size(), 0.0);
    slot.v.assign(param.size(), 0.0);
  }
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step_index));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step_index));
  for (std::size_t i = 0; i < param.size(); ++i) {
    const double g = grad[i] + weight_decay * param[i];
    slot.m[i] = beta1 * slot.m[i] + (1.0 - beta1) * g;
    slot.v[i] = beta2 * slot.v[i] + (1.0 - beta2) * g * g;
    const double mhat = slot.m[i] / bc1;
    const double vhat = slot.v[i] / bc2;
    param[i] -= lr * mhat / (std::sqrt(vhat) + eps);
  }
}

void sgd_momentum_step(std::span<double> param, std::span<const double> grad, OptimizerSlot& slot,
                       double lr, double weight_decay) {
  if (param.size() != grad.size()) fail("sgd_momentum_step: parameter/gradient size mismatch");
  constexpr double momentum = 0.9;
  if (slot.m.size() != param.size()) slot.m.assign(param.size(), 0.0);
  for (std::size_t i = 0; i < param.size(); ++i) {
    const double g = grad[i] + weight_decay * param[i];
    slot.m[i] = momentum * slot.m[i] + g;
    param[i] -= lr * slot.m[i];
  }
}

TrainResult train(const DatasetBundle& bundle, const SplitMask& split,
                  const std::vector<LayerSpec>& specs, const TrainConfig& cfg) {
  cfg.validate();
  split.validate(bundle.graph.num_nodes());
  const auto t_start = std::chrono::steady_clock::now();

  PreparedGraphs graphs = prepare_graphs(bundle.graph);
  ModelParams params = init_params(specs, cfg.seed);
  std::mt19937_64 dropout_rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);

  // One optimizer slot per trainable span: per-layer w heads, a vectors, theta.
  std::vector<OptimizerSlot> slots;
  long adam_t = 0;

  auto eval_model = [&](const ModelParams& p) {
    Tape t;
    ValueId h = t.leaf(bundle.features);
    ModelHandles mh =
        model_forward(t, graphs, h, specs, p, /*train_mode=*/false, nullptr, cfg.share_agg_theta);
    return t.value(mh.logits);
  };

  TrainResult result;
  ModelParams best = params;
  double best_val_acc = -1.0;
  int best_epoch = 0;
  int evals_since_improvement = 0;

  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    // --- optimization step ---
    {
      Tape t;
      ValueId h = t.leaf(bundle.features);
      ModelHandles mh =
          model_forward(t, graphs, h, specs, params, /*train_mode=*/true, &dropout_rng,
                        cfg.share_agg_theta);
      ValueId loss = masked_cross_entropy(t, mh.logits, bundle.labels, split.train_idx);
      if (!std::isfinite(t.value(loss).scalar_value())) throw TrainingDiverged(epoch);
      t.backward(loss);

      ++adam_t;
      std::size_t slot_idx = 0;
      auto ensure_slot = [&]() -> OptimizerSlot& {
        if (slot_idx >= slots.size()) slots.emplace_back();
        return slots[slot_idx++];
      };
      auto step = [&](std::span<double> p, std::span<const double> g, double wd) {
        OptimizerSlot& slot = ensure_slot();
        if (cfg.optimizer == OptimizerKind::Adam)
          adam_step(p, g, slot, adam_t, cfg.lr, wd);
        else
          sgd_momentum_step(p, g, slot, cfg.lr, wd);
      };
      ValueId shared_theta_seen = kNoValue;
      for (std::size_t l = 0; l < specs.size(); ++l) {
        LayerParams& lp = params.layers[l];
        const LayerHandles& lh = mh.layers[l];
        for (std::size_t i = 0; i < lp.w.size(); ++i)
          step(lp.w[i].data, t.grad(lh.w[i]).data, cfg.weight_decay);
        for (std::size_t i = 0; i < lp.a.size(); ++i)
          step(lp.a[i].data, t.grad(lh.a[i]).data, cfg.weight_decay);
        if (lh.theta != kNoValue && specs[l].agg.learnable) {
          if (cfg.share_agg_theta && shared_theta_seen != kNoValue) {
            continue;  // updated through the owning layer below
          }
          shared_theta_seen = lh.theta;
          step(std::span<double>(&lp.theta, 1), t.grad(lh.theta).data, 0.0);
        }
      }
      if (cfg.share_agg_theta && shared_theta_seen != kNoValue) {
        // Propagate the shared raw parameter to the other layers' storage.
        double shared = 0.0;
        bool found = false;
        for (std::size_t l = 0; l < specs.size(); ++l)
          if (agg_has_param(specs[l].agg.kind)) {
            if (!found) {
              shared = params.layers[l].theta;
              found = true;
            } else {
              params.layers[l].theta = shared;
            }
          }
      }
    }

    // --- evaluation / early stopping ---
    if (epoch % cfg.eval_every == 0) {
      Tensor logits = eval_model(params);
      EpochLog log;
      log.epoch = epoch;
      log.train_loss = masked_cross_entropy_value(logits, bundle.labels, split.train_idx);
      log.val_loss = split.val_idx.empty()
                         ? 0.0
                         : masked_cross_entropy_value(logits, bundle.labels, split.val_idx);
      log.val_acc =
          split.val_idx.empty() ? 0.0 : accuracy(logits, bundle.labels, split.val_idx);
      log.agg_params = effective_params(specs, params);
      if (!std::isfinite(log.train_loss)) throw TrainingDiverged(epoch);
      result.logs.push_back(log);

      if (log.val_acc > best_val_acc) {
        best_val_acc = log.val_acc;
        best = params;
        best_epoch = epoch;
        evals_since_improvement = 0;
      } else {
        ++evals_since_improvement;
        if (evals_since_improvement >= cfg.patience) break;
      }
    }
  }

  result.params = best;
  result.metrics.best_epoch = best_epoch;
  result.metrics.final_agg_params = effective_params(specs, best);
  {
    Tensor logits = eval_model(best);
    result.metrics.test_acc =
        split.test_idx.empty() ? 0.0 : accuracy(logits, bundle.labels, split.test_idx);
  }
  result.metrics.wall_time_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  return result;
}

void write_loss_csv(const std::vector<EpochLog>& logs, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write loss csv: " + path);
  out << "epoch,train_loss,val_loss,val_acc,agg_param\n";
  for (const EpochLog& log : logs) {
    const double agg = log.agg_params.empty() ? 0.0 : log.agg_params.front();
    out << log.epoch << ',' << fmt_double(log.train_loss) << ',' << fmt_double(log.val_loss)
        << ',' << fmt_double(log.val_acc) << ',' << fmt_double(agg) << '\n';
  }
}

void write_metrics_json(const TrainMetrics& metrics, std::uint64_t seed, const std::string& path) {
  nlohmann::json j;
  j["test_acc"] = metrics.test_acc;
  j["best_epoch"] = metrics.best_epoch;
  j["agg_params"] = metrics.final_agg_params;
  j["seed"] = seed;
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write metrics json: " + path);
  out << j.dump(2) << '\n';
}

}  // namespace nagg
