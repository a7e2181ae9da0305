#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "tailflow/metrics/metrics.hpp"
#include "tailflow/model/flow_model.hpp"
#include "tailflow/model/training.hpp"
#include "tailflow/synth/synth.hpp"
#include "tailflow/tail/estimators.hpp"

namespace tailflow::harness {

struct SpecParams {
  std::size_t dim = 8;
  std::size_t d_h = 4;
  double nu = 2.0;
  std::uint64_t seed = 0;
};

struct ModelParams {
  std::vector<model::Variant> variants{model::Variant::vanilla, model::Variant::taf, model::Variant::gtaf,
                                       model::Variant::mtaf};
  model::TransformKind transform = model::TransformKind::affine;
  std::size_t n_layers = 5;
  model::Architecture arch;
};

/// Everything one suite run depends on. Defaults are the desk-scale setting:
/// 5 trials of 2000 steps on one generated target.
struct ExperimentConfig {
  SpecParams spec;
  ModelParams model;
  model::TrainConfig train;
  synth::DatasetSizes sizes;
  std::size_t flow_samples = 75000;
  std::size_t n_trials = 5;
  /// Trial i uses seed + i for model init, minibatch order and sampling.
  std::uint64_t seed = 0;
  std::size_t jobs = 1;
  std::filesystem::path output_dir = "tailflow-out";

  ExperimentConfig();
};

void validate(const ExperimentConfig& cfg);
nlohmann::json config_to_json(const ExperimentConfig& cfg);
/// Missing fields keep their defaults; unknown fields are schema errors.
ExperimentConfig config_from_json(const nlohmann::json& doc);
ExperimentConfig load_config(const std::filesystem::path& path);
/// sha1 of the canonical serialization.
std::string config_hash(const ExperimentConfig& cfg);

nlohmann::json tail_report_to_json(const tail::TailReport& r);
tail::TailReport tail_report_from_json(const nlohmann::json& doc);

/// Heavy columns of a spec (t-mixture marginals).
std::vector<bool> heavy_mask(const synth::SynthSpec& spec);

// Individual pipeline stages, each writing deterministic files.

void cmd_generate(const SpecParams& spec, const synth::DatasetSizes& sizes, const std::filesystem::path& out_dir,
                  bool header = false);
tail::TailReport cmd_estimate(const std::filesystem::path& data_csv, const std::filesystem::path& out_json);

struct TrainRequest {
  model::Variant variant = model::Variant::mtaf;
  model::TransformKind transform = model::TransformKind::affine;
  std::size_t n_layers = 5;
  model::Architecture arch;
  model::TrainConfig train;
};

/// Writes checkpoint.json and history.csv into out_dir.
model::TrainResult cmd_train(const TrainRequest& req, const std::filesystem::path& train_csv,
                             const std::filesystem::path& val_csv, const std::optional<std::filesystem::path>& tails,
                             const std::filesystem::path& out_dir);

struct EvaluateRequest {
  std::filesystem::path checkpoint, test_csv;
  std::optional<std::filesystem::path> spec_json, tails_json;
  std::size_t flow_samples = 75000;
  std::uint64_t seed = 0;
};

/// Writes metrics.json (plus the oracle NLL when a spec is given) and
/// columns.csv. The heavy mask comes from the spec, else the tail report, else
/// from classifying the test data.
metrics::MetricSummary cmd_evaluate(const EvaluateRequest& req, const std::filesystem::path& out_dir);

struct TrialOutcome {
  model::Variant variant;
  std::size_t trial = 0;
  bool ok = false;
  bool resumed = false;
  std::string error;
  metrics::MetricSummary summary;
};

struct SuiteResult {
  std::vector<TrialOutcome> trials;
  double oracle_nll = 0.0;
  std::filesystem::path mean_csv, std_csv, median_csv, runs_csv;
};

/// generate -> estimate -> train -> evaluate for every variant and trial,
/// then aggregate. Trials whose metrics document already validates against the
/// current config hash are skipped. Throws when more than 20% of trials fail.
SuiteResult cmd_suite(const ExperimentConfig& cfg, const std::function<void(const std::string&)>& log = {});

}  // namespace tailflow::harness
