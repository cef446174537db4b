#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "posthoc/calibration/calibration.hpp"
#include "posthoc/data/dataset.hpp"
#include "posthoc/harness/config.hpp"
#include "posthoc/harness/metrics.hpp"
#include "posthoc/predictive/predictive.hpp"
#include "posthoc/samplers/samplers.hpp"

namespace posthoc::harness {

using nn::ParamVector;

struct ReplicateData {
  data::Dataset train;  // labels possibly corrupted
  data::Dataset test;
  data::Dataset calib;  // unlabeled
};

ReplicateData make_data(const ExperimentConfig& cfg, std::uint64_t seed);

// Sampler settings with lr/momentum resolved against the training-set size
// and the replicate seed filled in.
sampling::SghmcConfig resolve_sampler(const ExperimentConfig& cfg, std::size_t n_train, std::uint64_t seed);
// class_weights from the config, or derived from the cost matrix.
nn::ClassWeights resolve_class_weights(const ExperimentConfig& cfg, const decision::CostSpec& cost);

ParamVector train_map(const ExperimentConfig& cfg, const data::Dataset& train, std::uint64_t seed);

struct PosteriorRun {
  sampling::ChainStore chain;
  std::optional<predictive::StudentModel> student;
  predictive::StudentModel student_init;  // for fidelity diagnostics
};

// Sampler (SGHMC, SGLD or VI) with online distillation when enabled.
PosteriorRun run_posterior(const ExperimentConfig& cfg, const data::Dataset& train, const data::Dataset& calib,
                           const ParamVector& map_theta, std::uint64_t seed);

calib::CalibProblem make_calib_problem(const ExperimentConfig& cfg, const ReplicateData& d,
                                       const PosteriorRun& post, const ParamVector& map_theta,
                                       const decision::CostSpec& cost);

struct ReplicateResult {
  std::size_t index = 0;
  std::uint64_t seed = 0;
  ReplicateData data;
  ParamVector map_theta;
  PosteriorRun posterior;
  predictive::PredictiveTable calib_table;
  std::optional<calib::CalibResult> correction;
  std::map<std::string, ad::Tensor> test_probs;  // per method
  std::vector<MetricsRecord> records;
  std::map<std::string, double> timings;  // seconds per phase
};

ReplicateResult run_replicate(const ExperimentConfig& cfg, std::size_t index);

// Replicates 0..n-1 on up to `workers` threads, results ordered by index.
std::vector<ReplicateResult> run_replicates(const ExperimentConfig& cfg, std::size_t n, std::size_t workers);

// For each r, extends `base` with a referral decision of cost r and
// evaluates every method's fixed test table.
std::vector<MetricsRecord> sweep_referral(const std::map<std::string, ad::Tensor>& test_probs,
                                          std::span<const nn::Label> labels, const decision::CostSpec& base,
                                          std::span<const double> r_values, std::size_t replicate,
                                          std::uint64_t seed, std::optional<double> rho);

struct RunManifest {
  Json config;
  std::string code_version = kCodeVersion;
  std::string command;
  std::vector<std::uint64_t> replicate_seeds;
  std::vector<std::string> artifacts;
  Json timings = Json::object();
};

Json to_json(const RunManifest& m);
RunManifest manifest_from_json(const Json& j);

}  // namespace posthoc::harness
