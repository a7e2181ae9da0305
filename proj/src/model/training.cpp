#include "tailflow/model/training.hpp"

#include <cmath>
#include <limits>
#include <numeric>

#include "tailflow/ad/ops.hpp"
#include "tailflow/error.hpp"

namespace tailflow::model {

void validate(const TrainConfig& cfg) {
  auto fail = [](const std::string& msg) { throw Error(Errc::invalid_argument, "train config: " + msg); };
  if (cfg.batch_size == 0) fail("batch_size must be positive");
  if (cfg.eval_every == 0) fail("eval_every must be positive");
  if (!(cfg.learning_rate > 0.0)) fail("learning_rate must be positive");
  if (!(cfg.dof_learning_rate > 0.0)) fail("dof_learning_rate must be positive");
  if (!(cfg.weight_decay >= 0.0)) fail("weight_decay must be nonnegative");
  if (cfg.grad_clip && !(*cfg.grad_clip > 0.0)) fail("grad_clip must be positive");
}

Adam::Adam(std::vector<ad::Parameter> params, double lr, double weight_decay, double dof_lr)
    : params_(std::move(params)), lr_(lr), wd_(weight_decay), dof_lr_(dof_lr) {
  for (const auto& p : params_) {
    m_.emplace_back(p.var.shape());
    v_.emplace_back(p.var.shape());
  }
}

void Adam::step() {
  constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
  ++t_;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  for (std::size_t k = 0; k < params_.size(); ++k) {
    auto& p = params_[k];
    if (!p.var.has_grad()) continue;
    const ad::Tensor g = p.var.grad();
    ad::Tensor& w = p.var.leaf_value();
    const double lr = p.group == ad::ParamGroup::dof ? dof_lr_ : lr_;
    const bool decay = p.group == ad::ParamGroup::weight && wd_ > 0.0;
    for (std::size_t i = 0; i < w.numel(); ++i) {
      m_[k][i] = b1 * m_[k][i] + (1.0 - b1) * g[i];
      v_[k][i] = b2 * v_[k][i] + (1.0 - b2) * g[i] * g[i];
      if (decay) w[i] -= lr * wd_ * w[i];
      w[i] -= lr * (m_[k][i] / c1) / (std::sqrt(v_[k][i] / c2) + eps);
    }
  }
}

double grad_clip_apply(std::span<const ad::Parameter> params, double max_norm) {
  if (!(max_norm > 0.0)) throw Error(Errc::invalid_argument, "grad_clip_apply: max_norm must be positive");
  double sq = 0.0;
  for (const auto& p : params)
    if (p.var.has_grad())
      for (double g : p.var.node()->grad.data()) sq += g * g;
  const double norm = std::sqrt(sq);
  if (norm > max_norm) {
    const double scale = max_norm / norm;
    for (const auto& p : params)
      if (p.var.has_grad())
        for (double& g : p.var.node()->grad.data()) g *= scale;
  }
  return norm;
}

TrainResult fit(FlowModel& model, const ad::Tensor& train, const ad::Tensor& val, const TrainConfig& cfg) {
  validate(cfg);
  const std::size_t d = model.dim();
  for (const ad::Tensor* t : {&train, &val}) {
    if (t->rank() != 2 || t->cols() != d || t->rows() == 0) {
      throw Error(Errc::shape_mismatch, "fit: expected non-empty [n x " + std::to_string(d) + "] data, got " +
                                            ad::to_string(t->shape()));
    }
  }
  const auto params = model.trainable_parameters();
  Adam opt(params, cfg.learning_rate, cfg.weight_decay, cfg.dof_learning_rate);
  Rng rng(cfg.seed);
  const std::size_t n = train.rows();
  const std::size_t batch = std::min(cfg.batch_size, n);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::size_t cursor = n;  // forces a shuffle on the first step

  TrainResult result;
  auto best = model.snapshot();
  result.best_val_nll = model.nll(val);
  result.history.push_back({0, std::numeric_limits<double>::quiet_NaN(), result.best_val_nll});
  double window_sum = 0.0;
  std::size_t window_count = 0;

  ad::Tensor xb({batch, d});
  for (std::size_t step = 1; step <= cfg.steps; ++step) {
    if (cursor + batch > n) {
      for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
      cursor = 0;
    }
    for (std::size_t r = 0; r < batch; ++r) {
      const auto src = train.row_span(order[cursor + r]);
      std::copy(src.begin(), src.end(), xb.data().begin() + static_cast<std::ptrdiff_t>(r * d));
    }
    cursor += batch;

    for (auto p : params) p.var.zero_grad();
    double loss_value;
    try {
      const ad::Var loss = -ad::mean(model.log_prob(ad::Var::constant(xb)));
      loss_value = loss.item();
      if (std::isfinite(loss_value)) ad::backward(loss);
    } catch (const Error& e) {
      if (e.code() != Errc::non_finite) throw;
      loss_value = std::numeric_limits<double>::quiet_NaN();
    }
    if (!std::isfinite(loss_value)) {
      model.restore(best);
      throw Error(Errc::training_aborted, "fit: non-finite loss at step " + std::to_string(step) +
                                              "; restored parameters from step " + std::to_string(result.best_step));
    }
    if (cfg.grad_clip) grad_clip_apply(params, *cfg.grad_clip);
    opt.step();
    window_sum += loss_value;
    ++window_count;

    if (step % cfg.eval_every == 0 || step == cfg.steps) {
      double val_nll;
      try {
        val_nll = model.nll(val);
      } catch (const Error& e) {
        if (e.code() != Errc::non_finite) throw;
        val_nll = std::numeric_limits<double>::infinity();
      }
      result.history.push_back({step, window_sum / static_cast<double>(window_count), val_nll});
      window_sum = 0.0;
      window_count = 0;
      if (val_nll < result.best_val_nll) {
        result.best_val_nll = val_nll;
        result.best_step = step;
        best = model.snapshot();
      }
    }
  }
  model.restore(best);
  return result;
}

}  // namespace tailflow::model
