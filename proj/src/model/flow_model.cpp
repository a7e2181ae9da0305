#include "tailflow/model/flow_model.hpp"

#include <algorithm>
#include <cmath>

#include "tailflow/ad/ops.hpp"
#include "tailflow/error.hpp"

namespace tailflow::model {
namespace {

using ad::Tensor;
using ad::Var;

std::vector<std::size_t> identity_order(std::size_t n) {
  std::vector<std::size_t> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = i;
  return out;
}

bool is_identity(const std::vector<std::size_t>& p) {
  for (std::size_t i = 0; i < p.size(); ++i)
    if (p[i] != i) return false;
  return true;
}

std::vector<std::size_t> inverse_order(const std::vector<std::size_t>& p) {
  std::vector<std::size_t> inv(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) inv[p[i]] = i;
  return inv;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

void validate(const ModelConfig& c) {
  auto fail = [](const std::string& msg) { throw Error(Errc::invalid_argument, "model config: " + msg); };
  if (c.dim == 0) fail("dimension must be positive");
  if (!dist::is_permutation(c.reorder, c.dim)) fail("reorder is not a permutation of 0..D-1");
  if (c.d_l > c.dim) fail("d_l exceeds the dimension");
  if (c.arch.hidden.empty()) fail("at least one hidden layer required");
  if (c.transform == TransformKind::rqs && (c.arch.bins == 0 || !(c.arch.tail_bound > 0.0))) fail("spline needs bins >= 1 and a positive tail bound");
  const std::size_t heavy = c.dim - c.d_l;
  switch (c.variant) {
    case Variant::vanilla:
      if (c.d_l != c.dim || !c.initial_dof.empty()) fail("vanilla has an all-Normal base");
      break;
    case Variant::taf:
      if (c.d_l != 0 || c.initial_dof.size() != 1) fail("TAF has one shared dof and no Normal marginals");
      break;
    case Variant::gtaf:
      if (c.d_l != 0 || c.initial_dof.size() != c.dim) fail("gTAF has one dof per marginal");
      break;
    case Variant::mtaf:
      if (c.initial_dof.size() != heavy) fail("mTAF needs one dof per heavy marginal");
      break;
  }
  if (c.variant != Variant::mtaf && !is_identity(c.reorder)) fail("only mTAF reorders its input");
  for (double nu : c.initial_dof)
    if (!(nu > 1.0)) fail("initial dof must exceed 1");
}

dist::BaseSpec make_base(const ModelConfig& c) {
  std::vector<dist::MarginalKind> m(c.d_l, dist::MarginalKind::normal());
  if (c.variant == Variant::taf) {
    auto shared = ad::Parameter::make("base.dof", Tensor::scalar(dist::raw_from_dof(c.initial_dof[0])), ad::ParamGroup::dof);
    shared.trainable = c.dof_trainable;
    for (std::size_t j = 0; j < c.dim; ++j) m.push_back(dist::MarginalKind::student_t(shared));
  } else {
    for (std::size_t j = c.d_l; j < c.dim; ++j) {
      auto p = ad::Parameter::make("base.dof" + std::to_string(j), Tensor::scalar(dist::raw_from_dof(c.initial_dof[j - c.d_l])),
                                   ad::ParamGroup::dof);
      p.trainable = c.dof_trainable;
      m.push_back(dist::MarginalKind::student_t(p));
    }
  }
  return dist::BaseSpec(std::move(m), c.reorder);
}

std::size_t permutation_group(const ModelConfig& c) { return c.variant == Variant::mtaf ? c.d_l : c.dim; }

}  // namespace

std::string to_string(Variant v) {
  switch (v) {
    case Variant::vanilla: return "vanilla";
    case Variant::taf: return "taf";
    case Variant::gtaf: return "gtaf";
    case Variant::mtaf: return "mtaf";
  }
  return "?";
}

std::string to_string(TransformKind k) { return k == TransformKind::affine ? "affine" : "rqs"; }

Variant parse_variant(const std::string& s) {
  for (Variant v : {Variant::vanilla, Variant::taf, Variant::gtaf, Variant::mtaf})
    if (s == to_string(v)) return v;
  throw Error(Errc::parse_error, "unknown variant '" + s + "' (expected vanilla, taf, gtaf or mtaf)");
}

TransformKind parse_transform(const std::string& s) {
  if (s == "affine") return TransformKind::affine;
  if (s == "rqs" || s == "spline") return TransformKind::rqs;
  throw Error(Errc::parse_error, "unknown transform '" + s + "' (expected affine or rqs)");
}

FlowModel::FlowModel(const ModelConfig& config) : config_(config) {
  validate(config_);
  base_ = make_base(config_);
  Rng rng(config_.arch.seed);
  const flow::ConditionerShape shape{config_.arch.hidden};
  const std::size_t lu_dl = config_.variant == Variant::mtaf ? config_.d_l : 0;
  for (std::size_t l = 0; l < config_.n_layers; ++l) {
    const std::string prefix = "block" + std::to_string(l);
    if (config_.transform == TransformKind::affine) {
      layers_.push_back(std::make_unique<flow::AffineARLayer>(config_.dim, shape, rng, prefix + ".ar"));
    } else {
      layers_.push_back(std::make_unique<flow::RQSplineARLayer>(config_.dim, config_.arch.bins, config_.arch.tail_bound,
                                                                shape, rng, prefix + ".ar"));
    }
    layers_.push_back(std::make_unique<flow::GroupPermutation>(
        flow::GroupPermutation::random(config_.dim, permutation_group(config_), rng)));
    layers_.push_back(std::make_unique<flow::TailLULayer>(config_.dim, lu_dl, prefix + ".lu"));
  }
}

Var FlowModel::log_prob(const Var& x) const {
  if (x.value().rank() != 2 || x.value().cols() != dim()) {
    throw Error(Errc::shape_mismatch,
                "log_prob: expected [n x " + std::to_string(dim()) + "], got " + ad::to_string(x.shape()));
  }
  Var h = is_identity(config_.reorder) ? x : ad::select_cols(x, config_.reorder);
  Var logdet;
  for (std::size_t i = layers_.size(); i-- > 0;) {
    flow::FlowResult r;
    try {
      r = layers_[i]->inverse(h);
    } catch (const Error& e) {
      throw Error(e.code(), "layer " + std::to_string(i) + " (" + layers_[i]->kind() + "): " + e.message());
    }
    if (!r.out.value().all_finite() || !r.logdet.value().all_finite()) {
      throw Error(Errc::non_finite, "log_prob: non-finite value after layer " + std::to_string(i) + " (" +
                                        layers_[i]->kind() + ")");
    }
    h = r.out;
    logdet = logdet ? logdet + r.logdet : r.logdet;
  }
  const Var base = dist::base_logpdf(base_, h);
  return logdet ? base + logdet : base;
}

std::vector<double> FlowModel::log_prob(const Tensor& x) const {
  ad::NoGradGuard guard;
  if (x.rank() != 2 || x.cols() != dim()) {
    throw Error(Errc::shape_mismatch, "log_prob: expected [n x " + std::to_string(dim()) + "], got " + ad::to_string(x.shape()));
  }
  constexpr std::size_t kChunk = 4096;
  const std::size_t n = x.rows();
  std::vector<double> out;
  out.reserve(n);
  for (std::size_t start = 0; start < n; start += kChunk) {
    const std::size_t m = std::min(kChunk, n - start);
    Tensor chunk({m, dim()});
    std::copy_n(x.data().begin() + static_cast<std::ptrdiff_t>(start * dim()), m * dim(), chunk.data().begin());
    const Var lp = log_prob(Var::constant(std::move(chunk)));
    out.insert(out.end(), lp.value().data().begin(), lp.value().data().end());
  }
  return out;
}

double FlowModel::nll(const Tensor& x) const {
  const auto lp = log_prob(x);
  double s = 0.0;
  for (double v : lp) s -= v;
  return s / static_cast<double>(lp.size());
}

Tensor FlowModel::sample(Rng& rng, std::size_t n) const {
  ad::NoGradGuard guard;
  // Small chunks keep temporaries in recycled heap memory.
  constexpr std::size_t kChunk = 4096;
  const std::size_t d = dim();
  const Tensor z = dist::base_sample(base_, rng, n);
  const auto inv = inverse_order(config_.reorder);
  Tensor out({n, d});
  for (std::size_t start = 0; start < n; start += kChunk) {
    const std::size_t m = std::min(kChunk, n - start);
    Tensor chunk({m, d});
    std::copy_n(z.data().begin() + static_cast<std::ptrdiff_t>(start * d), m * d, chunk.data().begin());
    Var h = Var::constant(std::move(chunk));
    for (const auto& layer : layers_) h = layer->forward(h).out;
    const Tensor& hv = h.value();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t c = 0; c < d; ++c) out.at(start + i, c) = hv.at(i, inv[c]);
  }
  return out;
}

std::vector<ad::Parameter> FlowModel::parameters() const {
  std::vector<ad::Parameter> out;
  for (const auto& layer : layers_) {
    auto p = layer->parameters();
    out.insert(out.end(), p.begin(), p.end());
  }
  const auto dofs = base_.dof_parameters();
  out.insert(out.end(), dofs.begin(), dofs.end());
  return out;
}

std::vector<ad::Parameter> FlowModel::trainable_parameters() const {
  auto all = parameters();
  std::erase_if(all, [](const ad::Parameter& p) { return !p.trainable; });
  return all;
}

std::vector<Tensor> FlowModel::snapshot() const {
  std::vector<Tensor> out;
  for (const auto& p : parameters()) out.push_back(p.var.value());
  return out;
}

void FlowModel::restore(const std::vector<Tensor>& values) {
  auto params = parameters();
  if (values.size() != params.size()) throw Error(Errc::shape_mismatch, "restore: parameter count mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (values[i].shape() != params[i].var.shape()) {
      throw Error(Errc::shape_mismatch, "restore: " + params[i].name + " expects " + ad::to_string(params[i].var.shape()) +
                                            ", got " + ad::to_string(values[i].shape()));
    }
    params[i].var.leaf_value() = values[i];
  }
}

void FlowModel::jitter(Rng& rng, double sigma) {
  for (auto p : parameters()) {
    if (p.group == ad::ParamGroup::dof) continue;
    for (auto& v : p.var.leaf_value().data()) v += sigma * rng.normal();
  }
}

std::vector<std::vector<std::size_t>> FlowModel::permutations() const {
  std::vector<std::vector<std::size_t>> out;
  for (const auto& layer : layers_)
    if (const auto* p = dynamic_cast<const flow::GroupPermutation*>(layer.get())) out.push_back(p->perm());
  return out;
}

void FlowModel::set_permutations(const std::vector<std::vector<std::size_t>>& perms) {
  std::size_t k = 0;
  for (auto& layer : layers_) {
    if (!dynamic_cast<const flow::GroupPermutation*>(layer.get())) continue;
    if (k >= perms.size()) break;
    layer = std::make_unique<flow::GroupPermutation>(perms[k++], permutation_group(config_));
  }
  if (k != perms.size() || k != config_.n_layers) {
    throw Error(Errc::shape_mismatch, "set_permutations: expected " + std::to_string(config_.n_layers) +
                                          " permutations, got " + std::to_string(perms.size()));
  }
}

FlowModel build_model(Variant variant, TransformKind transform, std::size_t dim, std::size_t n_layers,
                      const tail::TailReport* report, const Architecture& arch) {
  ModelConfig c;
  c.variant = variant;
  c.transform = transform;
  c.dim = dim;
  c.n_layers = n_layers;
  c.arch = arch;
  c.reorder = identity_order(dim);
  if (report && report->marginals.size() != dim) {
    throw Error(Errc::shape_mismatch, "build_model: tail report has " + std::to_string(report->marginals.size()) +
                                          " marginals for D=" + std::to_string(dim));
  }
  switch (variant) {
    case Variant::vanilla:
      c.d_l = dim;
      break;
    case Variant::taf: {
      c.dof_trainable = true;
      const auto heavy = report ? report->heavy_indices() : std::vector<double>{};
      c.initial_dof = {heavy.empty() ? kDefaultDof : median(heavy)};
      break;
    }
    case Variant::gtaf:
      c.dof_trainable = true;
      for (std::size_t j = 0; j < dim; ++j) {
        const bool heavy = report && report->marginals[j].cls == tail::TailClass::heavy;
        c.initial_dof.push_back(heavy ? *report->marginals[j].index : kDefaultDof);
      }
      break;
    case Variant::mtaf:
      if (!report) throw Error(Errc::invalid_argument, "build_model: mTAF requires a tail report");
      c.d_l = report->d_l;
      c.reorder = report->reorder;
      c.initial_dof = report->heavy_indices();
      c.dof_trainable = arch.mtaf_trainable_dof;
      break;
  }
  for (auto& nu : c.initial_dof) nu = std::max(arch.initial_dof.value_or(nu), kMinInitialDof);
  return FlowModel(c);
}

}  // namespace tailflow::model
