#include "tailflow/harness/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <mutex>
#include <numeric>
#include <set>
#include <thread>

#include "tailflow/error.hpp"
#include "tailflow/io/csv.hpp"
#include "tailflow/io/hash.hpp"
#include "tailflow/model/checkpoint.hpp"

namespace tailflow::harness {

using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr const char* kConfigSchema = "tailflow-experiment";
constexpr const char* kTailSchema = "tailflow-tail-report";
constexpr const char* kTrialSchema = "tailflow-trial";
constexpr int kVersion = 1;
constexpr double kMaxFailedFraction = 0.2;
// Desk-scale optimizer step, picked by validation NLL; 1e-5 barely moves a flow
// in 2000 steps.
constexpr double kDeskLearningRate = 3e-3;

json num(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }
double num_from(const json& j) { return j.is_null() ? std::nan("") : j.get<double>(); }

void reject_unknown(const json& obj, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!obj.is_object()) throw Error(Errc::schema_mismatch, where + ": expected an object");
  const std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [key, value] : obj.items()) {
    if (!ok.count(key)) throw Error(Errc::schema_mismatch, where + ": unknown field '" + key + "'");
  }
}

template <class F>
auto schema_guard(const std::string& what, F&& f) {
  try {
    return f();
  } catch (const json::exception& e) {
    throw Error(Errc::schema_mismatch, what + ": " + e.what());
  }
}

json identity_json(const ExperimentConfig& cfg) {
  auto j = config_to_json(cfg);
  // Fields that do not change any result.
  j.erase("jobs");
  j.erase("output_dir");
  j.erase("n_trials");
  return j;
}

std::string run_name(model::Variant v, std::size_t trial) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%02zu", trial);
  return std::string(model::to_string(v)) + "-" + buf;
}

json summary_json(const metrics::MetricSummary& s) { return metrics::summary_to_json(s); }

metrics::MetricSummary summary_from_json(const json& j) {
  metrics::MetricSummary s;
  s.nll = num_from(j.at("nll"));
  s.area_light = num_from(j.at("area_light"));
  s.area_heavy = num_from(j.at("area_heavy"));
  s.tvar_light = num_from(j.at("tvar_light"));
  s.tvar_heavy = num_from(j.at("tvar_heavy"));
  const auto& c = j.at("confusion");
  for (std::size_t a = 0; a < 2; ++a)
    for (std::size_t b = 0; b < 2; ++b) s.confusion[a][b] = c.at(a).at(b).get<std::size_t>();
  for (const auto& col : j.at("columns")) {
    metrics::ColumnMetrics m;
    m.heavy = col.at("heavy").get<bool>();
    m.tvar_diff = num_from(col.at("tvar_diff"));
    m.area = num_from(col.at("area"));
    m.area_skipped = col.at("area_skipped").get<std::size_t>();
    s.columns.push_back(m);
  }
  return s;
}

void write_json_file(const fs::path& path, const json& doc) { io::write_text_atomic(path, doc.dump(1) + "\n"); }

json read_json_file(const fs::path& path) {
  const std::string text = io::read_text(path);
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(Errc::parse_error, path.string() + ": " + e.what());
  }
}

void write_history(const fs::path& path, const model::TrainResult& r) {
  std::vector<std::vector<std::string>> rows;
  for (const auto& h : r.history)
    rows.push_back({std::to_string(h.step), io::format_double(h.train_nll), io::format_double(h.val_nll)});
  io::write_table_csv(path, {"step", "train_nll", "val_nll"}, rows);
}

void write_columns(const fs::path& path, const metrics::MetricSummary& s) {
  std::vector<std::vector<std::string>> rows;
  for (std::size_t j = 0; j < s.columns.size(); ++j) {
    const auto& c = s.columns[j];
    rows.push_back({std::to_string(j), c.heavy ? "heavy" : "light", io::format_double(c.tvar_diff),
                    io::format_double(c.area), std::to_string(c.area_skipped)});
  }
  io::write_table_csv(path, {"column", "class", "tvar_diff", "area", "area_skipped"}, rows);
}

model::TrainResult train_on(const TrainRequest& req, const ad::Tensor& train, const ad::Tensor& val,
                            const tail::TailReport* report, const fs::path& out_dir) {
  auto m = model::build_model(req.variant, req.transform, train.cols(), req.n_layers, report, req.arch);
  auto result = model::fit(m, train, val, req.train);
  fs::create_directories(out_dir);
  model::save_checkpoint(m, out_dir / "checkpoint.json");
  write_history(out_dir / "history.csv", result);
  return result;
}

metrics::MetricSummary evaluate_on(const model::FlowModel& m, const ad::Tensor& test, const std::vector<bool>& mask,
                                   std::size_t n_samples, std::uint64_t seed) {
  Rng rng(seed);
  const ad::Tensor flow = m.sample(rng, n_samples);
  return metrics::summarize(m, flow, test, mask);
}

std::vector<bool> mask_from_report(const tail::TailReport& r) {
  std::vector<bool> out;
  for (const auto& m : r.marginals) out.push_back(m.cls == tail::TailClass::heavy);
  return out;
}

struct Stats {
  double mean, std, median;
};

Stats stats_of(std::vector<double> v) {
  std::erase_if(v, [](double x) { return !std::isfinite(x); });
  const double nan = std::nan("");
  if (v.empty()) return {nan, nan, nan};
  const double n = static_cast<double>(v.size());
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / n;
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  std::sort(v.begin(), v.end());
  const double median = v.size() % 2 ? v[v.size() / 2] : 0.5 * (v[v.size() / 2 - 1] + v[v.size() / 2]);
  return {mean, v.size() > 1 ? std::sqrt(ss / (n - 1.0)) : nan, median};
}

const std::vector<std::string> kTableHeader{"model", "trials", "L", "Area_l", "Area_h", "tVaR_l", "tVaR_h"};

}  // namespace

ExperimentConfig::ExperimentConfig() {
  train.steps = 2000;
  train.learning_rate = kDeskLearningRate;
}

void validate(const ExperimentConfig& cfg) {
  auto fail = [](const std::string& msg) { throw Error(Errc::invalid_argument, "experiment config: " + msg); };
  if (cfg.spec.dim == 0) fail("spec.dim must be positive");
  if (cfg.spec.d_h > cfg.spec.dim) fail("spec.d_h must not exceed spec.dim");
  if (cfg.spec.d_h > 0 && !(cfg.spec.nu > 0.0)) fail("spec.nu must be positive");
  if (cfg.model.variants.empty()) fail("model.variants must not be empty");
  if (cfg.model.n_layers == 0) fail("model.n_layers must be positive");
  if (cfg.model.arch.bins == 0) fail("model.bins must be positive");
  if (!(cfg.model.arch.tail_bound > 0.0)) fail("model.tail_bound must be positive");
  if (cfg.sizes.train == 0 || cfg.sizes.val == 0 || cfg.sizes.test == 0) fail("dataset sizes must be positive");
  if (cfg.sizes.train < 500) fail("sizes.train must be at least 500 for tail estimation");
  if (cfg.flow_samples < 500) fail("flow_samples must be at least 500 for tail estimation");
  if (cfg.n_trials == 0) fail("n_trials must be positive");
  if (cfg.jobs == 0) fail("jobs must be positive");
  model::validate(cfg.train);
}

json config_to_json(const ExperimentConfig& cfg) {
  std::vector<std::string> variants;
  for (auto v : cfg.model.variants) variants.emplace_back(model::to_string(v));
  const auto& t = cfg.train;
  return {{"schema", kConfigSchema},
          {"version", kVersion},
          {"spec", {{"dim", cfg.spec.dim}, {"d_h", cfg.spec.d_h}, {"nu", cfg.spec.nu}, {"seed", cfg.spec.seed}}},
          {"model",
           {{"variants", variants},
            {"transform", model::to_string(cfg.model.transform)},
            {"n_layers", cfg.model.n_layers},
            {"hidden", cfg.model.arch.hidden},
            {"bins", cfg.model.arch.bins},
            {"tail_bound", cfg.model.arch.tail_bound},
            {"mtaf_trainable_dof", cfg.model.arch.mtaf_trainable_dof}}},
          {"train",
           {{"steps", t.steps},
            {"batch_size", t.batch_size},
            {"learning_rate", t.learning_rate},
            {"weight_decay", t.weight_decay},
            {"dof_learning_rate", t.dof_learning_rate},
            {"grad_clip", t.grad_clip ? json(*t.grad_clip) : json(nullptr)},
            {"eval_every", t.eval_every}}},
          {"sizes", {{"train", cfg.sizes.train}, {"val", cfg.sizes.val}, {"test", cfg.sizes.test}}},
          {"flow_samples", cfg.flow_samples},
          {"n_trials", cfg.n_trials},
          {"seed", cfg.seed},
          {"jobs", cfg.jobs},
          {"output_dir", cfg.output_dir.string()}};
}

ExperimentConfig config_from_json(const json& doc) {
  return schema_guard("experiment config", [&] {
    reject_unknown(doc, {"schema", "version", "spec", "model", "train", "sizes", "flow_samples", "n_trials", "seed",
                         "jobs", "output_dir"},
                   "experiment config");
    if (doc.value("schema", std::string()) != kConfigSchema) {
      throw Error(Errc::schema_mismatch, "experiment config: schema must be '" + std::string(kConfigSchema) + "'");
    }
    if (doc.value("version", 0) != kVersion) {
      throw Error(Errc::schema_mismatch, "experiment config: unsupported version " + doc.value("version", json()).dump());
    }
    ExperimentConfig c;
    if (doc.contains("spec")) {
      const auto& s = doc["spec"];
      reject_unknown(s, {"dim", "d_h", "nu", "seed"}, "spec");
      c.spec.dim = s.value("dim", c.spec.dim);
      c.spec.d_h = s.value("d_h", c.spec.d_h);
      c.spec.nu = s.value("nu", c.spec.nu);
      c.spec.seed = s.value("seed", c.spec.seed);
    }
    if (doc.contains("model")) {
      const auto& m = doc["model"];
      reject_unknown(m, {"variants", "transform", "n_layers", "hidden", "bins", "tail_bound", "mtaf_trainable_dof"},
                     "model");
      if (m.contains("variants")) {
        c.model.variants.clear();
        for (const auto& v : m["variants"]) c.model.variants.push_back(model::parse_variant(v.get<std::string>()));
      }
      if (m.contains("transform")) c.model.transform = model::parse_transform(m["transform"].get<std::string>());
      c.model.n_layers = m.value("n_layers", c.model.n_layers);
      c.model.arch.hidden = m.value("hidden", c.model.arch.hidden);
      c.model.arch.bins = m.value("bins", c.model.arch.bins);
      c.model.arch.tail_bound = m.value("tail_bound", c.model.arch.tail_bound);
      c.model.arch.mtaf_trainable_dof = m.value("mtaf_trainable_dof", c.model.arch.mtaf_trainable_dof);
    }
    if (doc.contains("train")) {
      const auto& t = doc["train"];
      reject_unknown(t, {"steps", "batch_size", "learning_rate", "weight_decay", "dof_learning_rate", "grad_clip",
                         "eval_every"},
                     "train");
      c.train.steps = t.value("steps", c.train.steps);
      c.train.batch_size = t.value("batch_size", c.train.batch_size);
      c.train.learning_rate = t.value("learning_rate", c.train.learning_rate);
      c.train.weight_decay = t.value("weight_decay", c.train.weight_decay);
      c.train.dof_learning_rate = t.value("dof_learning_rate", c.train.dof_learning_rate);
      c.train.eval_every = t.value("eval_every", c.train.eval_every);
      if (t.contains("grad_clip") && !t["grad_clip"].is_null()) c.train.grad_clip = t["grad_clip"].get<double>();
    }
    if (doc.contains("sizes")) {
      const auto& s = doc["sizes"];
      reject_unknown(s, {"train", "val", "test"}, "sizes");
      c.sizes.train = s.value("train", c.sizes.train);
      c.sizes.val = s.value("val", c.sizes.val);
      c.sizes.test = s.value("test", c.sizes.test);
    }
    c.flow_samples = doc.value("flow_samples", c.flow_samples);
    c.n_trials = doc.value("n_trials", c.n_trials);
    c.seed = doc.value("seed", c.seed);
    c.jobs = doc.value("jobs", c.jobs);
    if (doc.contains("output_dir")) c.output_dir = doc["output_dir"].get<std::string>();
    return c;
  });
}

ExperimentConfig load_config(const fs::path& path) { return config_from_json(read_json_file(path)); }

std::string config_hash(const ExperimentConfig& cfg) { return io::sha1_hex(identity_json(cfg).dump()); }

json tail_report_to_json(const tail::TailReport& r) {
  json cols = json::array();
  for (std::size_t j = 0; j < r.marginals.size(); ++j) {
    const auto& m = r.marginals[j];
    cols.push_back({{"column", j},
                    {"class", m.cls == tail::TailClass::heavy ? "heavy" : "light"},
                    {"index", m.index ? json(*m.index) : json(nullptr)},
                    {"k", m.k_used}});
  }
  return {{"schema", kTailSchema}, {"version", kVersion}, {"marginals", cols}, {"d_l", r.d_l}, {"reorder", r.reorder}};
}

tail::TailReport tail_report_from_json(const json& doc) {
  return schema_guard("tail report", [&] {
    if (doc.value("schema", std::string()) != kTailSchema || doc.value("version", 0) != kVersion) {
      throw Error(Errc::schema_mismatch, "tail report: wrong schema or version");
    }
    tail::TailReport r;
    for (const auto& c : doc.at("marginals")) {
      tail::MarginalTail m;
      const auto cls = c.at("class").get<std::string>();
      if (cls != "light" && cls != "heavy") throw Error(Errc::schema_mismatch, "tail report: bad class '" + cls + "'");
      m.cls = cls == "heavy" ? tail::TailClass::heavy : tail::TailClass::light;
      if (!c.at("index").is_null()) m.index = c["index"].get<double>();
      if ((m.cls == tail::TailClass::heavy) != m.index.has_value()) {
        throw Error(Errc::schema_mismatch, "tail report: heavy marginals need an index, light ones none");
      }
      m.k_used = c.at("k").get<std::size_t>();
      r.marginals.push_back(m);
    }
    r.d_l = doc.at("d_l").get<std::size_t>();
    r.reorder = doc.at("reorder").get<std::vector<std::size_t>>();
    const auto classes = r.classes();
    if (r.reorder != tail::light_first_order(classes) ||
        r.d_l != static_cast<std::size_t>(std::count(classes.begin(), classes.end(), tail::TailClass::light))) {
      throw Error(Errc::schema_mismatch, "tail report: d_l or reorder inconsistent with the classes");
    }
    return r;
  });
}

std::vector<bool> heavy_mask(const synth::SynthSpec& spec) {
  std::vector<bool> out;
  for (const auto& m : spec.marginals) out.push_back(m.kind == synth::MarginalModel::Kind::t_mixture);
  return out;
}

void cmd_generate(const SpecParams& p, const synth::DatasetSizes& sizes, const fs::path& out_dir, bool header) {
  const auto spec = synth::make_spec(p.dim, p.d_h, p.nu, p.seed);
  synth::emit_datasets(spec, sizes, synth::default_paths(out_dir), header);
}

tail::TailReport cmd_estimate(const fs::path& data_csv, const fs::path& out_json) {
  const auto report = tail::build_tail_report(io::read_matrix_csv(data_csv));
  write_json_file(out_json, tail_report_to_json(report));
  return report;
}

model::TrainResult cmd_train(const TrainRequest& req, const fs::path& train_csv, const fs::path& val_csv,
                             const std::optional<fs::path>& tails, const fs::path& out_dir) {
  const auto train = io::read_matrix_csv(train_csv);
  const auto val = io::read_matrix_csv(val_csv);
  std::optional<tail::TailReport> report;
  if (tails) report = tail_report_from_json(read_json_file(*tails));
  return train_on(req, train, val, report ? &*report : nullptr, out_dir);
}

metrics::MetricSummary cmd_evaluate(const EvaluateRequest& req, const fs::path& out_dir) {
  const auto m = model::load_checkpoint(req.checkpoint);
  const auto test = io::read_matrix_csv(req.test_csv);
  if (test.cols() != m.dim()) {
    throw Error(Errc::shape_mismatch, "evaluate: test data has " + std::to_string(test.cols()) +
                                          " columns, model expects " + std::to_string(m.dim()));
  }
  std::optional<synth::SynthSpec> spec;
  if (req.spec_json) spec = synth::spec_from_json(read_json_file(*req.spec_json));
  std::vector<bool> mask;
  if (spec) {
    mask = heavy_mask(*spec);
  } else if (req.tails_json) {
    mask = mask_from_report(tail_report_from_json(read_json_file(*req.tails_json)));
  } else {
    mask = mask_from_report(tail::build_tail_report(test));
  }
  const auto summary = evaluate_on(m, test, mask, req.flow_samples, req.seed);
  json doc = summary_json(summary);
  if (spec) {
    const auto lp = synth::exact_logpdf(*spec, test);
    doc["oracle_nll"] = -std::accumulate(lp.begin(), lp.end(), 0.0) / static_cast<double>(lp.size());
  }
  fs::create_directories(out_dir);
  write_json_file(out_dir / "metrics.json", doc);
  write_columns(out_dir / "columns.csv", summary);
  return summary;
}

SuiteResult cmd_suite(const ExperimentConfig& cfg, const std::function<void(const std::string&)>& log_fn) {
  validate(cfg);
  std::mutex log_mutex;
  auto log = [&](const std::string& msg) {
    if (!log_fn) return;
    std::lock_guard lock(log_mutex);
    log_fn(msg);
  };
  const auto started = std::chrono::steady_clock::now();
  const fs::path out = cfg.output_dir;
  const fs::path data_dir = out / "data";
  fs::create_directories(out);
  const std::string hash = config_hash(cfg);
  write_json_file(out / "config.json", config_to_json(cfg));

  // Data: reuse when the stored spec matches the requested one.
  const auto spec = synth::make_spec(cfg.spec.dim, cfg.spec.d_h, cfg.spec.nu, cfg.spec.seed);
  const auto paths = synth::default_paths(data_dir);
  const std::string spec_text = spec_to_json(spec).dump(1) + "\n";
  bool reuse = fs::exists(paths.spec) && fs::exists(paths.train) && fs::exists(paths.val) && fs::exists(paths.test) &&
               io::read_text(paths.spec) == spec_text;
  ad::Tensor train, val, test;
  if (reuse) {
    train = io::read_matrix_csv(paths.train);
    val = io::read_matrix_csv(paths.val);
    test = io::read_matrix_csv(paths.test);
    reuse = train.rows() == cfg.sizes.train && val.rows() == cfg.sizes.val && test.rows() == cfg.sizes.test;
  }
  if (!reuse) {
    log("generating data in " + data_dir.string());
    synth::emit_datasets(spec, cfg.sizes, paths);
    train = io::read_matrix_csv(paths.train);
    val = io::read_matrix_csv(paths.val);
    test = io::read_matrix_csv(paths.test);
  }
  const auto report = tail::build_tail_report(train);
  write_json_file(out / "tails.json", tail_report_to_json(report));
  const auto mask = heavy_mask(spec);

  SuiteResult result;
  {
    const auto lp = synth::exact_logpdf(spec, test);
    result.oracle_nll = -std::accumulate(lp.begin(), lp.end(), 0.0) / static_cast<double>(lp.size());
    Rng rng(cfg.seed);
    Rng oracle_rng = rng.split();
    const auto oracle_samples = synth::sample_spec(spec, oracle_rng, cfg.flow_samples);
    auto summary = metrics::summarize_samples(oracle_samples, test, mask, result.oracle_nll);
    json doc = summary_json(summary);
    doc["config_hash"] = hash;
    write_json_file(out / "oracle.json", doc);
    TrialOutcome oracle_row;
    oracle_row.summary = std::move(summary);
    oracle_row.ok = true;
    const auto input_hashes = json{{"train.csv", io::git_blob_hash_file(paths.train)},
                                   {"val.csv", io::git_blob_hash_file(paths.val)},
                                   {"test.csv", io::git_blob_hash_file(paths.test)},
                                   {"spec.json", io::git_blob_hash_file(paths.spec)},
                                   {"tails.json", io::git_blob_hash_file(out / "tails.json")}};

    for (auto v : cfg.model.variants)
      for (std::size_t i = 0; i < cfg.n_trials; ++i) {
        TrialOutcome t;
        t.variant = v;
        t.trial = i;
        result.trials.push_back(std::move(t));
      }

    std::atomic<std::size_t> next{0};
    auto worker = [&] {
      for (;;) {
        const std::size_t k = next.fetch_add(1);
        if (k >= result.trials.size()) return;
        auto& t = result.trials[k];
        const std::string name = run_name(t.variant, t.trial);
        const fs::path dir = out / "runs" / name;
        const fs::path result_path = dir / "result.json";
        try {
          if (fs::exists(result_path)) {
            const auto doc = read_json_file(result_path);
            if (doc.value("schema", std::string()) == kTrialSchema && doc.value("config_hash", std::string()) == hash &&
                doc.value("variant", std::string()) == model::to_string(t.variant) &&
                doc.value("trial", std::size_t{0}) == t.trial && doc.contains("summary")) {
              t.summary = summary_from_json(doc["summary"]);
              t.ok = true;
              t.resumed = true;
              log(name + ": resumed");
              continue;
            }
          }
        } catch (const std::exception&) {
          // Invalid document: rerun the trial.
        }
        const auto t0 = std::chrono::steady_clock::now();
        try {
          TrainRequest req;
          req.variant = t.variant;
          req.transform = cfg.model.transform;
          req.n_layers = cfg.model.n_layers;
          req.arch = cfg.model.arch;
          req.arch.seed = cfg.seed + t.trial;
          req.train = cfg.train;
          req.train.seed = cfg.seed + t.trial;
          log(name + ": training");
          const auto fit = train_on(req, train, val, &report, dir);
          const auto m = model::load_checkpoint(dir / "checkpoint.json");
          t.summary = evaluate_on(m, test, mask, cfg.flow_samples, cfg.seed + t.trial);
          write_columns(dir / "columns.csv", t.summary);
          t.ok = true;
          const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
          write_json_file(dir / "manifest.json", {{"config_hash", hash},
                                                  {"inputs", input_hashes},
                                                  {"checkpoint", io::git_blob_hash_file(dir / "checkpoint.json")},
                                                  {"wall_seconds", wall},
                                                  {"best_step", fit.best_step},
                                                  {"best_val_nll", num(fit.best_val_nll)},
                                                  {"metrics", summary_json(t.summary)}});
          write_json_file(result_path, {{"schema", kTrialSchema},
                                        {"version", kVersion},
                                        {"config_hash", hash},
                                        {"variant", model::to_string(t.variant)},
                                        {"trial", t.trial},
                                        {"summary", summary_json(t.summary)}});
          char buf[160];
          std::snprintf(buf, sizeof buf, "%s: test NLL %.4f, Area_h %.3f, tVaR_h %.3f (%.0f s)", name.c_str(),
                        t.summary.nll, t.summary.area_heavy, t.summary.tvar_heavy, wall);
          log(buf);
        } catch (const std::exception& e) {
          t.ok = false;
          t.error = e.what();
          log(name + ": failed: " + t.error);
        }
      }
    };
    const std::size_t n_threads = std::min(cfg.jobs, result.trials.size());
    std::vector<std::thread> pool;
    for (std::size_t j = 1; j < n_threads; ++j) pool.emplace_back(worker);
    worker();
    for (auto& th : pool) th.join();

    // Per-run table.
    std::vector<std::vector<std::string>> runs;
    for (const auto& t : result.trials) {
      const auto& s = t.summary;
      runs.push_back({model::to_string(t.variant), std::to_string(t.trial), t.ok ? "ok" : "failed",
                      t.ok ? io::format_double(s.nll) : "", t.ok ? io::format_double(s.area_light) : "",
                      t.ok ? io::format_double(s.area_heavy) : "", t.ok ? io::format_double(s.tvar_light) : "",
                      t.ok ? io::format_double(s.tvar_heavy) : "",
                      t.ok ? std::to_string(tail::diagonal(s.confusion)) : "", t.error});
    }
    result.runs_csv = out / "runs.csv";
    io::write_table_csv(result.runs_csv,
                        {"model", "trial", "status", "L", "Area_l", "Area_h", "tVaR_l", "tVaR_h", "confusion_diag", "error"},
                        runs);

    // Aggregates, one row per variant in config order plus the oracle.
    std::vector<std::vector<std::string>> mean_rows, std_rows, median_rows;
    for (auto v : cfg.model.variants) {
      std::vector<double> cols[5];
      std::size_t ok = 0;
      for (const auto& t : result.trials) {
        if (t.variant != v || !t.ok) continue;
        ++ok;
        const auto& s = t.summary;
        const double vals[5] = {s.nll, s.area_light, s.area_heavy, s.tvar_light, s.tvar_heavy};
        for (int c = 0; c < 5; ++c) cols[c].push_back(vals[c]);
      }
      std::vector<std::string> mr{model::to_string(v), std::to_string(ok)}, sr = mr, dr = mr;
      for (auto& col : cols) {
        const auto st = stats_of(col);
        mr.push_back(io::format_double(st.mean));
        sr.push_back(io::format_double(st.std));
        dr.push_back(io::format_double(st.median));
      }
      mean_rows.push_back(mr);
      std_rows.push_back(sr);
      median_rows.push_back(dr);
    }
    const auto& os = oracle_row.summary;
    const std::vector<std::string> oracle_cells{"oracle", "1", io::format_double(os.nll), io::format_double(os.area_light),
                                                io::format_double(os.area_heavy), io::format_double(os.tvar_light),
                                                io::format_double(os.tvar_heavy)};
    mean_rows.push_back(oracle_cells);
    median_rows.push_back(oracle_cells);
    result.mean_csv = out / "aggregate_mean.csv";
    result.std_csv = out / "aggregate_std.csv";
    result.median_csv = out / "aggregate_median.csv";
    io::write_table_csv(result.mean_csv, kTableHeader, mean_rows);
    io::write_table_csv(result.std_csv, kTableHeader, std_rows);
    io::write_table_csv(result.median_csv, kTableHeader, median_rows);

    const std::size_t failed = static_cast<std::size_t>(
        std::count_if(result.trials.begin(), result.trials.end(), [](const TrialOutcome& t) { return !t.ok; }));
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    write_json_file(out / "manifest.json", {{"config_hash", hash},
                                            {"inputs", input_hashes},
                                            {"trials", result.trials.size()},
                                            {"failed", failed},
                                            {"oracle_nll", num(result.oracle_nll)},
                                            {"aggregate_mean", io::git_blob_hash_file(result.mean_csv)},
                                            {"wall_seconds", wall}});
    if (static_cast<double>(failed) > kMaxFailedFraction * static_cast<double>(result.trials.size())) {
      throw Error(Errc::training_aborted, "suite: " + std::to_string(failed) + " of " +
                                              std::to_string(result.trials.size()) + " trials failed");
    }
  }
  return result;
}

}  // namespace tailflow::harness
