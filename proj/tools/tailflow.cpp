#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "tailflow/error.hpp"
#include "tailflow/harness/experiment.hpp"
#include "tailflow/io/csv.hpp"
#include "tailflow/metrics/metrics.hpp"
#include "tailflow/model/checkpoint.hpp"
#include "tailflow/rng.hpp"

namespace fs = std::filesystem;
using namespace tailflow;

namespace {

struct ModelFlags {
  std::string variant = "mtaf";
  std::string transform = "affine";
  std::size_t layers = 5;
  std::vector<std::size_t> hidden{30, 30};
  std::size_t bins = 3;
  double tail_bound = 2.0;
  bool trainable_dof = false;
  std::optional<double> initial_dof;
};

struct TrainFlags {
  std::optional<std::size_t> steps, batch, eval_every;
  std::optional<double> lr, wd, dof_lr, grad_clip;
};

void add_model_flags(CLI::App* app, ModelFlags& m) {
  app->add_option("--variant", m.variant, "vanilla, taf, gtaf or mtaf")->capture_default_str();
  app->add_option("--transform", m.transform, "affine or rqs")->capture_default_str();
  app->add_option("--layers", m.layers, "number of flow layers")->capture_default_str();
  app->add_option("--hidden", m.hidden, "conditioner widths, comma separated")->delimiter(',')->capture_default_str();
  app->add_option("--bins", m.bins, "spline bins")->capture_default_str();
  app->add_option("--tail-bound", m.tail_bound, "spline interval half-width")->capture_default_str();
  app->add_flag("--trainable-dof", m.trainable_dof, "let mTAF learn its degrees of freedom");
  app->add_option("--initial-dof", m.initial_dof, "override every initial degree of freedom");
}

void add_train_flags(CLI::App* app, TrainFlags& t) {
  app->add_option("--steps", t.steps, "optimizer steps");
  app->add_option("--batch", t.batch, "minibatch size");
  app->add_option("--lr", t.lr, "learning rate");
  app->add_option("--weight-decay", t.wd, "weight decay");
  app->add_option("--dof-lr", t.dof_lr, "learning rate of the degrees of freedom");
  app->add_option("--grad-clip", t.grad_clip, "global gradient norm bound");
  app->add_option("--eval-every", t.eval_every, "steps between validation passes");
}

void apply(const TrainFlags& f, model::TrainConfig& c) {
  if (f.steps) c.steps = *f.steps;
  if (f.batch) c.batch_size = *f.batch;
  if (f.eval_every) c.eval_every = *f.eval_every;
  if (f.lr) c.learning_rate = *f.lr;
  if (f.wd) c.weight_decay = *f.wd;
  if (f.dof_lr) c.dof_learning_rate = *f.dof_lr;
  if (f.grad_clip) c.grad_clip = *f.grad_clip;
}

model::Architecture architecture(const ModelFlags& m) {
  model::Architecture a;
  a.hidden = m.hidden;
  a.bins = m.bins;
  a.tail_bound = m.tail_bound;
  a.mtaf_trainable_dof = m.trainable_dof;
  a.initial_dof = m.initial_dof;
  return a;
}

ad::Tensor sample_flow(const fs::path& checkpoint, std::size_t n, std::uint64_t seed) {
  const auto m = model::load_checkpoint(checkpoint);
  Rng rng(seed);
  return m.sample(rng, n);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Marginally tail-adaptive normalizing flows"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "tailflow 1.0");

  // generate-data
  auto* gen = app.add_subcommand("generate-data", "sample a synthetic target and write train/val/test CSVs");
  harness::SpecParams spec;
  synth::DatasetSizes sizes;
  fs::path gen_out;
  bool header = false;
  gen->add_option("--out", gen_out, "output directory")->required();
  gen->add_option("--dim", spec.dim, "dimension")->capture_default_str();
  gen->add_option("--heavy", spec.d_h, "number of heavy-tailed marginals")->capture_default_str();
  gen->add_option("--nu", spec.nu, "degrees of freedom of the heavy marginals")->capture_default_str();
  gen->add_option("--seed", spec.seed, "generator seed")->capture_default_str();
  gen->add_option("--n-train", sizes.train, "training rows")->capture_default_str();
  gen->add_option("--n-val", sizes.val, "validation rows")->capture_default_str();
  gen->add_option("--n-test", sizes.test, "test rows")->capture_default_str();
  gen->add_flag("--header", header, "write column names c0..c{D-1}");

  // estimate-tails
  auto* est = app.add_subcommand("estimate-tails", "classify each column as light or heavy tailed");
  fs::path est_data, est_out;
  est->add_option("--data", est_data, "data CSV")->required();
  est->add_option("--out", est_out, "tail report JSON")->required();

  // train
  auto* tr = app.add_subcommand("train", "fit one flow and write checkpoint.json and history.csv");
  ModelFlags train_model;
  TrainFlags train_flags;
  fs::path tr_train, tr_val, tr_out;
  std::optional<fs::path> tr_tails;
  std::uint64_t tr_seed = 0;
  tr->add_option("--train", tr_train, "training CSV")->required();
  tr->add_option("--val", tr_val, "validation CSV")->required();
  tr->add_option("--tails", tr_tails, "tail report JSON (required for mtaf)");
  tr->add_option("--out", tr_out, "output directory")->required();
  tr->add_option("--seed", tr_seed, "initialization and minibatch seed")->capture_default_str();
  add_model_flags(tr, train_model);
  add_train_flags(tr, train_flags);

  // evaluate
  auto* ev = app.add_subcommand("evaluate", "test NLL and tail metrics of a checkpoint");
  harness::EvaluateRequest ev_req;
  fs::path ev_out;
  ev->add_option("--checkpoint", ev_req.checkpoint, "checkpoint.json from train")->required();
  ev->add_option("--test", ev_req.test_csv, "test CSV")->required();
  ev->add_option("--spec", ev_req.spec_json, "generator spec; adds the oracle NLL");
  ev->add_option("--tails", ev_req.tails_json, "tail report giving the heavy columns");
  ev->add_option("--samples", ev_req.flow_samples, "flow samples for the tail metrics")->capture_default_str();
  ev->add_option("--seed", ev_req.seed, "sampling seed")->capture_default_str();
  ev->add_option("--out", ev_out, "output directory")->required();

  // project-stats
  auto* ps = app.add_subcommand("project-stats", "statistics of random convex projections, data vs flow");
  fs::path ps_ckpt, ps_data, ps_out;
  std::size_t ps_proj = 100, ps_samples = 0;
  std::uint64_t ps_seed = 0;
  ps->add_option("--checkpoint", ps_ckpt, "checkpoint.json from train")->required();
  ps->add_option("--data", ps_data, "data CSV")->required();
  ps->add_option("--out", ps_out, "output CSV")->required();
  ps->add_option("--projections", ps_proj, "number of random weight vectors")->capture_default_str();
  ps->add_option("--samples", ps_samples, "flow samples (default: as many as data rows)");
  ps->add_option("--seed", ps_seed, "sampling and projection seed")->capture_default_str();

  // qq-data
  auto* qq = app.add_subcommand("qq-data", "per-column quantile pairs, data vs flow");
  fs::path qq_ckpt, qq_data, qq_out;
  std::size_t qq_points = 200, qq_samples = 0;
  std::uint64_t qq_seed = 0;
  qq->add_option("--checkpoint", qq_ckpt, "checkpoint.json from train")->required();
  qq->add_option("--data", qq_data, "data CSV")->required();
  qq->add_option("--out", qq_out, "output CSV")->required();
  qq->add_option("--points", qq_points, "quantile levels per column")->capture_default_str();
  qq->add_option("--samples", qq_samples, "flow samples (default: as many as data rows)");
  qq->add_option("--seed", qq_seed, "sampling seed")->capture_default_str();

  // suite
  auto* su = app.add_subcommand("suite", "generate, estimate, train and evaluate every variant, then aggregate");
  std::optional<fs::path> su_config, su_out;
  std::optional<std::size_t> su_trials, su_jobs, su_dim, su_heavy, su_samples, su_layers;
  std::optional<double> su_nu;
  std::optional<std::uint64_t> su_seed, su_data_seed;
  std::optional<std::vector<std::string>> su_variants;
  std::optional<std::string> su_transform;
  TrainFlags su_train;
  su->add_option("--config", su_config, "experiment config JSON");
  su->add_option("--out", su_out, "output directory");
  su->add_option("--trials", su_trials, "trials per variant");
  su->add_option("--jobs", su_jobs, "concurrent trials");
  su->add_option("--seed", su_seed, "trial i uses seed + i");
  su->add_option("--data-seed", su_data_seed, "generator seed");
  su->add_option("--dim", su_dim, "dimension of the target");
  su->add_option("--heavy", su_heavy, "number of heavy-tailed marginals");
  su->add_option("--nu", su_nu, "degrees of freedom of the heavy marginals");
  su->add_option("--variants", su_variants, "comma separated")->delimiter(',');
  su->add_option("--transform", su_transform, "affine or rqs");
  su->add_option("--layers", su_layers, "number of flow layers");
  su->add_option("--samples", su_samples, "flow samples for the tail metrics");
  add_train_flags(su, su_train);
  bool su_paper_scale = false;
  su->add_flag("--paper-scale", su_paper_scale, "25 trials of 5000 steps at learning rate 1e-5");
  bool su_print_config = false;
  su->add_flag("--print-config", su_print_config, "print the effective config and exit");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*gen) {
      harness::cmd_generate(spec, sizes, gen_out, header);
    } else if (*est) {
      const auto r = harness::cmd_estimate(est_data, est_out);
      std::cout << "light " << r.d_l << ", heavy " << r.marginals.size() - r.d_l << "\n";
    } else if (*tr) {
      harness::TrainRequest req;
      req.variant = model::parse_variant(train_model.variant);
      req.transform = model::parse_transform(train_model.transform);
      req.n_layers = train_model.layers;
      req.arch = architecture(train_model);
      req.arch.seed = tr_seed;
      req.train.seed = tr_seed;
      apply(train_flags, req.train);
      const auto r = harness::cmd_train(req, tr_train, tr_val, tr_tails, tr_out);
      std::printf("best step %zu, validation NLL %.6f\n", r.best_step, r.best_val_nll);
    } else if (*ev) {
      const auto s = harness::cmd_evaluate(ev_req, ev_out);
      std::printf("NLL %.6f  Area_l %.4f  Area_h %.4f  tVaR_l %.4f  tVaR_h %.4f\n", s.nll, s.area_light,
                  s.area_heavy, s.tvar_light, s.tvar_heavy);
    } else if (*ps) {
      const auto data = io::read_matrix_csv(ps_data);
      const auto flow = sample_flow(ps_ckpt, ps_samples ? ps_samples : data.rows(), ps_seed);
      Rng rng(ps_seed);
      Rng proj_rng = rng.split();
      const auto stats = metrics::projection_stats(data, flow, ps_proj, proj_rng);
      std::vector<std::vector<std::string>> rows;
      for (const char* section : {"mean", "std", "q01"}) {
        for (std::size_t p = 0; p < stats.size(); ++p) {
          const auto& s = stats[p];
          const std::string sec = section;
          const double d = sec == "mean" ? s.data_mean : sec == "std" ? s.data_std : s.data_q01;
          const double f = sec == "mean" ? s.flow_mean : sec == "std" ? s.flow_std : s.flow_q01;
          rows.push_back({sec, std::to_string(p), io::format_double(d), io::format_double(f)});
        }
      }
      io::write_table_csv(ps_out, {"statistic", "projection", "data", "flow"}, rows);
    } else if (*qq) {
      const auto data = io::read_matrix_csv(qq_data);
      const auto flow = sample_flow(qq_ckpt, qq_samples ? qq_samples : data.rows(), qq_seed);
      if (flow.cols() != data.cols()) {
        throw Error(Errc::shape_mismatch, "qq-data: data has " + std::to_string(data.cols()) +
                                              " columns, model expects " + std::to_string(flow.cols()));
      }
      std::vector<std::vector<std::string>> rows;
      for (std::size_t j = 0; j < data.cols(); ++j) {
        const auto dc = data.column(j);
        const auto fc = flow.column(j);
        for (const auto& q : metrics::qq_data(dc, fc, qq_points)) {
          rows.push_back(
              {std::to_string(j), io::format_double(q.level), io::format_double(q.data), io::format_double(q.flow)});
        }
      }
      io::write_table_csv(qq_out, {"column", "level", "data", "flow"}, rows);
    } else if (*su) {
      harness::ExperimentConfig cfg = su_config ? harness::load_config(*su_config) : harness::ExperimentConfig();
      if (su_paper_scale) {
        cfg.n_trials = 25;
        cfg.train.steps = 5000;
        cfg.train.learning_rate = model::TrainConfig{}.learning_rate;
      }
      if (su_out) cfg.output_dir = *su_out;
      if (su_trials) cfg.n_trials = *su_trials;
      if (su_jobs) cfg.jobs = *su_jobs;
      if (su_seed) cfg.seed = *su_seed;
      if (su_data_seed) cfg.spec.seed = *su_data_seed;
      if (su_dim) cfg.spec.dim = *su_dim;
      if (su_heavy) cfg.spec.d_h = *su_heavy;
      if (su_nu) cfg.spec.nu = *su_nu;
      if (su_layers) cfg.model.n_layers = *su_layers;
      if (su_samples) cfg.flow_samples = *su_samples;
      if (su_transform) cfg.model.transform = model::parse_transform(*su_transform);
      if (su_variants) {
        cfg.model.variants.clear();
        for (const auto& v : *su_variants) cfg.model.variants.push_back(model::parse_variant(v));
      }
      apply(su_train, cfg.train);
      harness::validate(cfg);
      if (su_print_config) {
        std::cout << harness::config_to_json(cfg).dump(1) << "\n";
        return 0;
      }
      const auto r = harness::cmd_suite(cfg, [](const std::string& msg) { std::cerr << msg << "\n"; });
      std::cout << io::read_text(r.mean_csv);
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return is_validation_error(e.code()) ? 1 : 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
