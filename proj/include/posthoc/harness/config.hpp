#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "posthoc/calibration/calibration.hpp"
#include "posthoc/core/serialize.hpp"
#include "posthoc/data/dataset.hpp"
#include "posthoc/decisions/decisions.hpp"
#include "posthoc/models/mlp.hpp"
#include "posthoc/predictive/predictive.hpp"
#include "posthoc/samplers/samplers.hpp"

namespace posthoc::harness {

inline constexpr const char* kCodeVersion = "posthoc 0.1.0";

// Where the three datasets come from. Synthetic data is regenerated per
// replicate from the replicate seed; file-backed data is shared.
struct DataConfig {
  std::string kind = "synthetic";  // synthetic | csv | idx
  data::SyntheticSpec synthetic;   // seed is replaced by the replicate seed
  // csv: train/test/calib paths. idx: train/test image+label files; the
  // calibration set is carved out of train (labels dropped).
  std::string train, test, calib;
  std::string train_labels, test_labels;
  double calib_fraction = 0.2;
  std::size_t max_train = 0;  // 0 keeps everything
  double corruption = 0.0;    // training-label corruption rate
};

struct SamplerChoice {
  std::string kind = "sghmc";  // sghmc | sgld | vi
  sampling::SghmcConfig sghmc;
  // Per-datum learning rate and momentum factor; when set they override
  // step_size/friction via SghmcConfig::from_momentum.
  std::optional<double> lr;
  std::optional<double> momentum;
  sampling::ViConfig vi;
  std::size_t vi_samples = 100;
  bool init_from_map = true;
};

struct DistillChoice {
  bool enabled = true;
  predictive::DistillConfig cfg;
  std::string init = "map";  // map | random
  std::vector<std::size_t> layer_sizes;  // empty: teacher architecture
};

struct CostChoice {
  std::string preset = "synthetic-asymmetric";
  std::size_t num_classes = 2;
  double referral_cost = 0.3;
  std::string file;           // overrides preset when set
  std::optional<Json> inline_spec;  // overrides both
  std::optional<double> M;

  decision::CostSpec resolve() const;
};

struct CwSgdChoice {
  sampling::MapConfig map;
  std::vector<double> class_weights;  // empty: max cost per true class, scaled so the smallest is 1
};

struct BenchConfig {
  std::vector<std::size_t> t_values{1, 10, 30, 100};
  std::size_t batch_size = 100;
  std::size_t points = 1000;
  std::size_t trials = 9;
  std::size_t warmup_batches = 3;
  double min_trial_seconds = 0.1;
};

struct ExperimentConfig {
  std::string name = "experiment";
  DataConfig data;
  nn::MlpSpec model{{2, 50, 2}};
  nn::PriorConfig prior;
  sampling::MapConfig map;
  SamplerChoice sampler;
  DistillChoice distill;
  CostChoice cost;
  calib::CalibConfig calibration;
  std::vector<std::size_t> correction_layers;  // empty: model architecture
  std::vector<std::string> methods{"uncorrected", "corrected"};
  CwSgdChoice cw_sgd;
  std::vector<double> referral_sweep;
  BenchConfig bench;
  std::size_t replicates = 10;
  std::size_t workers = 1;
  std::uint64_t base_seed = 0;
  std::string output_dir = "runs/out";

  void validate() const;
};

Json to_json(const ExperimentConfig& c);
ExperimentConfig experiment_from_json(const Json& j);
ExperimentConfig load_experiment(const std::filesystem::path& path);

const std::vector<std::string>& method_names();

}  // namespace posthoc::harness
