// Acceptance criteria 1-10. `acceptance --criterion N` runs one of them, no
// arguments runs all. Each prints a single PASS/FAIL line; the exit code is
// non-zero when any selected criterion fails.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "oracles.hpp"
#include "tailflow/ad/grad_check.hpp"
#include "tailflow/ad/ops.hpp"
#include "tailflow/dist/distributions.hpp"
#include "tailflow/dist/special.hpp"
#include "tailflow/flow/layers.hpp"
#include "tailflow/harness/experiment.hpp"
#include "tailflow/io/csv.hpp"
#include "tailflow/model/flow_model.hpp"
#include "tailflow/model/training.hpp"
#include "tailflow/synth/synth.hpp"
#include "tailflow/tail/estimators.hpp"

using namespace tailflow;
using ad::Tensor;
using ad::Var;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

Tensor random_matrix(Rng& rng, std::size_t n, std::size_t d, double scale) {
  Tensor t({n, d});
  for (auto& v : t.data()) v = scale * rng.normal();
  return t;
}

void jitter(const std::vector<ad::Parameter>& params, Rng& rng, double sigma) {
  for (auto p : params)
    for (auto& v : p.var.leaf_value().data()) v += sigma * rng.normal();
}

tail::TailReport report_for(const std::vector<bool>& heavy, double nu) {
  tail::TailReport r;
  std::vector<tail::TailClass> classes;
  for (bool h : heavy) {
    tail::MarginalTail m;
    if (h) {
      m.cls = tail::TailClass::heavy;
      m.index = nu;
    } else {
      ++r.d_l;
    }
    r.marginals.push_back(m);
    classes.push_back(m.cls);
  }
  r.reorder = tail::light_first_order(classes);
  return r;
}

const std::vector<model::Variant> kVariants{model::Variant::vanilla, model::Variant::taf, model::Variant::gtaf,
                                            model::Variant::mtaf};

// 1. Gradient correctness of the flow NLL. mTAF with trainable dof has every
// parameter kind: masked MLPs, both LU blocks with the cross term, and dof.
Outcome gradients() {
  const auto report = report_for({false, true, false, true}, 2.0);
  double worst = 0.0;
  std::string where;
  std::size_t checks = 0, params = 0;
  for (auto kind : {model::TransformKind::affine, model::TransformKind::rqs}) {
    {
      const auto variant = model::Variant::mtaf;
      for (int init = 0; init < 5; ++init) {
        model::Architecture arch;
        arch.hidden = {16, 16};
        arch.seed = static_cast<std::uint64_t>(init);
        arch.mtaf_trainable_dof = true;
        auto m = model::build_model(variant, kind, 4, 5, &report, arch);
        Rng rng(100 + init);
        m.jitter(rng, 0.1);
        const Var x = Var::constant(random_matrix(rng, 8, 4, 1.5));
        const auto ps = m.parameters();
        const auto r = ad::grad_check([&] { return -ad::mean(m.log_prob(x)); }, ps, 1e-6, 1e-4);
        ++checks;
        for (const auto& p : ps) params += p.var.value().numel();
        for (const auto& e : r.entries) {
          if (e.max_rel_dev > worst) {
            worst = e.max_rel_dev;
            where = model::to_string(variant) + "/" + model::to_string(kind) + " " + e.name;
          }
        }
      }
    }
  }
  return {worst <= 1e-4, fmt("%zu models, %zu scalar parameters, max rel dev %.2e (%s), rtol 1e-4", checks, params,
                             worst, where.c_str())};
}

// 2. Invertibility and log-determinants of every layer type.
Outcome invertibility() {
  using namespace flow;
  struct Factory {
    std::string name;
    std::function<std::unique_ptr<Layer>(std::size_t, Rng&)> make;
  };
  const std::vector<Factory> layers{
      {"affine", [](std::size_t d, Rng& r) { return std::make_unique<AffineARLayer>(d, ConditionerShape{}, r, "a"); }},
      {"rqs", [](std::size_t d, Rng& r) { return std::make_unique<RQSplineARLayer>(d, 3, 2.0, ConditionerShape{}, r, "s"); }},
      {"lu_full", [](std::size_t d, Rng&) { return std::make_unique<TailLULayer>(d, 0, "l"); }},
      {"lu_tail", [](std::size_t d, Rng&) { return std::make_unique<TailLULayer>(d, d / 2, "l"); }},
      {"perm", [](std::size_t d, Rng& r) { return std::make_unique<GroupPermutation>(GroupPermutation::random(d, d / 2, r)); }},
  };
  auto apply = [](const Layer& l, const Tensor& in, bool inverse) {
    ad::NoGradGuard g;
    return inverse ? l.inverse(Var::constant(in)).out.value() : l.forward(Var::constant(in)).out.value();
  };
  double worst_rt = 0.0, worst_ld = 0.0;
  for (const auto& f : layers) {
    for (std::size_t d : {2u, 4u, 8u}) {
      Rng rng(7 + d);
      auto layer = f.make(d, rng);
      jitter(layer->parameters(), rng, 0.3);
      const Tensor z = random_matrix(rng, 2000, d, 2.5);
      const Tensor back = apply(*layer, apply(*layer, z, false), true);
      for (std::size_t i = 0; i < z.numel(); ++i) worst_rt = std::max(worst_rt, std::abs(back[i] - z[i]));
      for (int point = 0; point < 5; ++point) {
        const Tensor row = random_matrix(rng, 1, d, 2.0);
        for (bool inverse : {false, true}) {
          double analytic;
          {
            ad::NoGradGuard g;
            const auto r = inverse ? layer->inverse(Var::constant(row)) : layer->forward(Var::constant(row));
            analytic = r.logdet.value()[0];
          }
          const double h = 1e-6;
          std::vector<long double> jac(d * d);
          for (std::size_t k = 0; k < d; ++k) {
            Tensor plus = row, minus = row;
            plus[k] += h;
            minus[k] -= h;
            const Tensor fp = apply(*layer, plus, inverse), fm = apply(*layer, minus, inverse);
            for (std::size_t i = 0; i < d; ++i) jac[i * d + k] = (fp[i] - fm[i]) / (2.0 * h);
          }
          worst_ld = std::max(worst_ld, std::abs(analytic - static_cast<double>(oracle::dense_log_abs_det(jac, d))));
        }
      }
    }
  }
  return {worst_rt <= 1e-8 && worst_ld <= 1e-4,
          fmt("max round-trip error %.2e (tol 1e-8), max logdet gap %.2e (atol 1e-4)", worst_rt, worst_ld)};
}

// 3. Tail classifier and Hill estimator oracles.
Outcome estimators() {
  constexpr std::size_t n = 100000;
  auto heavy_count = [&](const std::function<std::vector<double>(Rng&)>& draw) {
    int heavy = 0;
    for (int s = 0; s < 20; ++s) {
      Rng rng(3000 + s);
      heavy += tail::classify_marginal(draw(rng)).cls == tail::TailClass::heavy;
    }
    return heavy;
  };
  const int t2 = heavy_count([&](Rng& r) { return dist::sample_student_t(r, 2.0, n); });
  const int t3 = heavy_count([&](Rng& r) { return dist::sample_student_t(r, 3.0, n); });
  const int gauss = 20 - heavy_count([&](Rng& r) { return dist::sample_normal(r, n); });
  const int expo = 20 - heavy_count([&](Rng& r) { return oracle::exponential(r, n); });
  int hill_ok = 0;
  double lo = 1e9, hi = -1e9;
  for (int s = 0; s < 20; ++s) {
    Rng rng(4000 + s);
    const double a = tail::hill_estimate(oracle::pareto(rng, 2.0, n), tail::threshold_count(n, 2.0 / 3.0));
    lo = std::min(lo, a);
    hi = std::max(hi, a);
    hill_ok += a >= 1.7 && a <= 2.3;
  }
  const bool pass = t2 >= 18 && t3 >= 18 && gauss >= 18 && expo >= 18 && hill_ok == 20;
  return {pass, fmt("heavy t2 %d/20, t3 %d/20; light N(0,1) %d/20, Exp(1) %d/20; Hill Pareto(2) in [%.3f, %.3f]",
                    t2, t3, gauss, expo, lo, hi)};
}

// 4. Jittered mTAF keeps the tail classes; jittered TAF is heavy everywhere.
Outcome tail_preservation() {
  const auto report = report_for({false, false, false, false, true, true, true, true}, 2.0);
  std::vector<tail::TailClass> truth(8, tail::TailClass::light);
  for (std::size_t j = 4; j < 8; ++j) truth[j] = tail::TailClass::heavy;
  int mtaf_ok = 0, taf_ok = 0;
  for (int seed = 0; seed < 20; ++seed) {
    model::Architecture arch;
    arch.seed = static_cast<std::uint64_t>(seed);
    Rng rng(5000 + seed);
    auto mtaf = model::build_model(model::Variant::mtaf, model::TransformKind::affine, 8, 5, &report, arch);
    mtaf.jitter(rng, 0.1);
    mtaf_ok += tail::diagonal(tail::synthetic_tail_confusion(truth, mtaf.sample(rng, 100000))) >= 7;
    arch.initial_dof = 2.0;
    auto taf = model::build_model(model::Variant::taf, model::TransformKind::affine, 8, 5, nullptr, arch);
    taf.jitter(rng, 0.1);
    const auto c = tail::synthetic_tail_confusion(std::vector<tail::TailClass>(8, tail::TailClass::heavy),
                                                  taf.sample(rng, 100000));
    taf_ok += c[1][1] == 8;
  }
  return {mtaf_ok >= 18 && taf_ok >= 18,
          fmt("mTAF diagonal >= 7/8 in %d/20 seeds; TAF all-heavy in %d/20 seeds (need 18)", mtaf_ok, taf_ok)};
}

// 5. A random tail-preserving LU layer keeps per-coordinate classes.
Outcome lu_preservation() {
  std::vector<dist::MarginalKind> m(4, dist::MarginalKind::normal());
  for (int j = 0; j < 4; ++j)
    m.push_back(dist::MarginalKind::student_t(ad::Parameter::make("dof", Tensor::scalar(dist::raw_from_dof(2.0)))));
  const dist::BaseSpec base(m, {0, 1, 2, 3, 4, 5, 6, 7});
  int good = 0;
  for (int seed = 0; seed < 20; ++seed) {
    Rng rng(6000 + seed);
    flow::TailLULayer lu(8, 4, "l");
    jitter(lu.parameters(), rng, 0.5);
    Tensor x;
    {
      ad::NoGradGuard g;
      x = lu.forward(Var::constant(dist::base_sample(base, rng, 100000))).out.value();
    }
    std::size_t correct = 0;
    for (std::size_t j = 0; j < 8; ++j)
      correct += (tail::classify_marginal(x.column(j)).cls == tail::TailClass::heavy) == (j >= 4);
    good += correct >= 7;
  }
  return {good >= 18, fmt(">= 7/8 coordinates keep their class in %d/20 seeds (need 18)", good)};
}

// 6. Student t approaches the normal for large dof.
Outcome large_dof() {
  double gap = 0.0;
  for (int i = 0; i <= 100000; ++i) {
    const double x = -5.0 + i * 1e-4;
    gap = std::max(gap, std::abs(dist::student_t_logpdf(x, 1e6) - dist::normal_logpdf(x)));
  }
  Rng rng(7);
  const double ks = oracle::ks_distance(dist::sample_student_t(rng, 1e6, 100000), oracle::std_normal_cdf);
  return {gap < 1e-3 && ks < 0.01, fmt("sup logpdf gap %.2e (< 1e-3), KS %.4f (< 0.01)", gap, ks)};
}

harness::ExperimentConfig desk_config() {
  harness::ExperimentConfig c;
  c.output_dir = "acceptance-desk";
  return c;
}

harness::SuiteResult desk_suite(bool fresh) {
  const auto cfg = desk_config();
  if (fresh) fs::remove_all(cfg.output_dir);
  return harness::cmd_suite(cfg, [](const std::string& m) { std::cerr << "  " << m << "\n"; });
}

double median_of(const harness::SuiteResult& r, model::Variant v, double metrics::MetricSummary::*field) {
  std::vector<double> xs;
  for (const auto& t : r.trials)
    if (t.ok && t.variant == v) xs.push_back(t.summary.*field);
  if (xs.empty()) return std::nan("");
  std::sort(xs.begin(), xs.end());
  const std::size_t n = xs.size();
  return n % 2 ? xs[n / 2] : 0.5 * (xs[n / 2 - 1] + xs[n / 2]);
}

// 7. Desk-scale ordering on the default target.
Outcome desk_ordering() {
  const auto r = desk_suite(true);
  using MS = metrics::MetricSummary;
  const double l_v = median_of(r, model::Variant::vanilla, &MS::nll);
  const double l_m = median_of(r, model::Variant::mtaf, &MS::nll);
  const double a_v = median_of(r, model::Variant::vanilla, &MS::area_heavy);
  const double a_m = median_of(r, model::Variant::mtaf, &MS::area_heavy);
  const double t_v = median_of(r, model::Variant::vanilla, &MS::tvar_heavy);
  const double t_m = median_of(r, model::Variant::mtaf, &MS::tvar_heavy);
  const double t_g = median_of(r, model::Variant::gtaf, &MS::tvar_heavy);
  const bool pass = l_m < l_v && a_m < a_v && std::min(t_m, t_g) < t_v;
  return {pass, fmt("median L mTAF %.3f vs vanilla %.3f; Area_h %.3f vs %.3f; tVaR_h min(mTAF %.3f, gTAF %.3f) vs %.3f",
                    l_m, l_v, a_m, a_v, t_m, t_g, t_v)};
}

// 8. No model beats the true density by more than estimator noise.
Outcome oracle_floor() {
  const auto r = desk_suite(false);
  bool pass = true;
  std::string detail = fmt("oracle NLL %.4f; median L", r.oracle_nll);
  for (auto v : kVariants) {
    const double l = median_of(r, v, &metrics::MetricSummary::nll);
    pass = pass && l >= r.oracle_nll - 0.05;
    detail += fmt(" %s %.4f", model::to_string(v).c_str(), l);
  }
  return {pass, detail};
}

// 9. A trained two-dimensional density integrates to one.
Outcome normalization() {
  const auto spec = synth::make_spec(2, 1, 2.0, 9);
  Rng rng(9);
  const Tensor train = synth::sample_spec(spec, rng, 4000);
  const Tensor val = synth::sample_spec(spec, rng, 2000);
  const auto report = tail::build_tail_report(train);
  constexpr std::size_t kGrid = 1200;
  const double h = 60.0 / kGrid;
  Tensor grid({kGrid * kGrid, 2});
  for (std::size_t i = 0; i < kGrid; ++i)
    for (std::size_t j = 0; j < kGrid; ++j) {
      grid.at(i * kGrid + j, 0) = -30.0 + (i + 0.5) * h;
      grid.at(i * kGrid + j, 1) = -30.0 + (j + 0.5) * h;
    }
  bool pass = true;
  std::string detail = "mass on [-30,30]^2:";
  for (auto [variant, kind] : {std::pair{model::Variant::vanilla, model::TransformKind::affine},
                               std::pair{model::Variant::mtaf, model::TransformKind::rqs}}) {
    auto m = model::build_model(variant, kind, 2, 3, &report);
    model::TrainConfig cfg;
    cfg.steps = 600;
    cfg.batch_size = 256;
    cfg.learning_rate = 5e-3;
    model::fit(m, train, val, cfg);
    double mass = 0.0;
    for (double lp : m.log_prob(grid)) mass += std::exp(lp);
    mass *= h * h;
    pass = pass && std::abs(mass - 1.0) <= 2e-2;
    detail += fmt(" %s/%s %.5f", model::to_string(variant).c_str(), model::to_string(kind).c_str(), mass);
  }
  return {pass, detail + " (tol 2e-2)"};
}

// 10. Two suite runs with the same seed give byte-identical aggregates.
Outcome determinism() {
  harness::ExperimentConfig c;
  c.spec = {4, 2, 2.0, 21};
  c.sizes = {3000, 1000, 5000};
  c.train.steps = 200;
  c.train.batch_size = 256;
  c.flow_samples = 5000;
  c.n_trials = 2;
  c.seed = 5;
  std::vector<std::string> texts;
  for (int run = 0; run < 2; ++run) {
    c.output_dir = fmt("acceptance-determinism-%d", run);
    c.jobs = static_cast<std::size_t>(run + 1);
    fs::remove_all(c.output_dir);
    const auto r = harness::cmd_suite(c);
    std::string all;
    for (const auto& p : {r.mean_csv, r.std_csv, r.median_csv, r.runs_csv}) all += io::read_text(p);
    texts.push_back(all);
  }
  return {texts[0] == texts[1], fmt("aggregate CSVs %s (%zu bytes)", texts[0] == texts[1] ? "identical" : "differ",
                                    texts[0].size())};
}

struct Criterion {
  const char* title;
  double budget_seconds;
  Outcome (*run)();
};

const Criterion kCriteria[] = {
    {"gradient correctness", 60, gradients},
    {"invertibility and log-det", 60, invertibility},
    {"estimator oracles", 120, estimators},
    {"tail preservation", 600, tail_preservation},
    {"tail-preserving LU layer", 180, lu_preservation},
    {"large-dof limit", 60, large_dof},
    {"desk-scale ordering", 3600, desk_ordering},
    {"oracle floor", 3600, oracle_floor},
    {"normalization", 120, normalization},
    {"determinism", 600, determinism},
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance criteria"};
  int only = 0;
  app.add_option("--criterion", only, "run a single criterion (1-10)")->check(CLI::Range(1, 10));
  CLI11_PARSE(app, argc, argv);

  bool all_pass = true;
  for (int i = 1; i <= 10; ++i) {
    if (only && i != only) continue;
    const auto& c = kCriteria[i - 1];
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool in_time = secs <= c.budget_seconds;
    const bool pass = o.pass && in_time;
    all_pass = all_pass && pass;
    std::printf("criterion %d %s: %s: %s; %.1f s (budget %.0f s)\n", i, pass ? "PASS" : "FAIL", c.title,
                o.detail.c_str(), secs, c.budget_seconds);
    std::fflush(stdout);
  }
  return all_pass ? 0 : 1;
}
