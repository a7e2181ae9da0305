#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "tailflow/ad/graph.hpp"
#include "tailflow/model/flow_model.hpp"

namespace tailflow::model {

struct TrainConfig {
  std::size_t steps = 5000;
  std::size_t batch_size = 512;
  double learning_rate = 1e-5;
  double weight_decay = 1e-6;
  double dof_learning_rate = 0.01;
  std::uint64_t seed = 0;
  std::optional<double> grad_clip;
  std::size_t eval_every = 100;
};

void validate(const TrainConfig& cfg);

struct HistoryRow {
  std::size_t step = 0;
  /// Mean minibatch NLL over the steps since the previous row.
  double train_nll = 0.0;
  double val_nll = 0.0;
};

struct TrainResult {
  std::vector<HistoryRow> history;
  std::size_t best_step = 0;
  double best_val_nll = 0.0;
};

/// Adam (beta1 0.9, beta2 0.999, eps 1e-8) with decoupled weight decay applied
/// to the weight group only. Each parameter keeps its own moment estimates.
class Adam {
 public:
  Adam(std::vector<ad::Parameter> params, double lr, double weight_decay, double dof_lr);
  /// Applies one update from the parameters' accumulated gradients.
  void step();
  std::size_t steps_taken() const noexcept { return t_; }

 private:
  std::vector<ad::Parameter> params_;
  std::vector<ad::Tensor> m_, v_;
  double lr_, wd_, dof_lr_;
  std::size_t t_ = 0;
};

/// Scales all gradients by max_norm / ||g|| when the global norm exceeds
/// max_norm. Returns the norm before clipping.
double grad_clip_apply(std::span<const ad::Parameter> params, double max_norm);

/// Minimises mean negative log_prob over shuffled minibatches. Validation NLL
/// is recorded every `eval_every` steps and at the end; the parameters with the
/// best validation NLL are restored before returning. A non-finite loss
/// restores the best parameters and throws training_aborted.
TrainResult fit(FlowModel& model, const ad::Tensor& train, const ad::Tensor& val, const TrainConfig& cfg);

}  // namespace tailflow::model
