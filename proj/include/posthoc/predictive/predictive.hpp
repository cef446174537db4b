#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "posthoc/autodiff/tensor.hpp"
#include "posthoc/core/rng.hpp"
#include "posthoc/core/serialize.hpp"
#include "posthoc/models/mlp.hpp"
#include "posthoc/samplers/chain_store.hpp"
#include "posthoc/samplers/optim.hpp"
#include "posthoc/samplers/samplers.hpp"

namespace posthoc::predictive {

using ad::Tensor;
using nn::Label;
using nn::ParamVector;

// N x C class probabilities under some predictive distribution.
struct PredictiveTable {
  Tensor probs = Tensor::matrix(0, 0);
  std::string source;

  std::size_t size() const { return probs.rows(); }
  std::size_t num_classes() const { return probs.cols(); }
  void validate() const;  // rows sum to 1 within 1e-9, entries in [0, 1]
};

// probs[n] = (1/T) sum_t p(. | x_n, theta_t), accumulated in sample order.
PredictiveTable mc_predictive(const nn::MlpSpec& spec, const sampling::ChainStore& chain, const Tensor& x);

// Row-wise KL(p || q) with 0 log 0 = 0. Rows where q has a zero under
// positive p mass are +inf and reported through `infinite_rows`.
std::vector<double> kl_rows(const Tensor& p, const Tensor& q, std::vector<std::size_t>* infinite_rows = nullptr);
double mean_kl(const Tensor& p, const Tensor& q);

// Mean of -log probs[n][y_n]; +inf when a true label has zero probability
// (those rows are reported through `zero_rows`).
double predictive_nll(const Tensor& probs, std::span<const Label> labels, std::vector<std::size_t>* zero_rows = nullptr);

struct StudentModel {
  nn::MlpSpec spec;
  ParamVector omega;

  Tensor predict(const Tensor& x) const { return nn::forward_probs(spec, omega, x); }
};

struct DistillConfig {
  std::size_t batch_size = 64;
  double lr = 0.05;
  double momentum = 0.9;
  double jitter = 0.0;  // std of Gaussian feature noise added to calibration batches
  std::uint64_t seed = 0;
};

// Mean over the batch of the cross-entropy -sum_k p_k log S_k from teacher
// rows p to the student; its gradient equals that of the mean KL(p || S).
nn::Objective distillation_loss(const nn::MlpSpec& student_spec, const ParamVector& omega, const Tensor& x,
                                const Tensor& teacher_probs);

// One student SGD step per observed teacher sample, on a fresh calibration
// minibatch labelled by that sample's predictive.
class OnlineDistiller {
 public:
  OnlineDistiller(nn::MlpSpec teacher_spec, StudentModel init, const Tensor& calib_x, const DistillConfig& cfg);

  void observe(const ParamVector& teacher_theta);
  sampling::SampleObserver observer();

  const StudentModel& student() const { return student_; }
  std::size_t steps() const { return steps_; }
  const std::vector<double>& loss_trace() const { return losses_; }

 private:
  nn::MlpSpec teacher_spec_;
  StudentModel student_;
  const Tensor& calib_x_;
  DistillConfig cfg_;
  sampling::MinibatchCycler cycler_;
  sampling::MomentumSgd opt_;
  Rng noise_;
  std::size_t steps_ = 0;
  std::vector<double> losses_;
};

// A sampler run that reports post-burn-in iterations to an observer.
using SamplerRun = std::function<sampling::ChainStore(const sampling::SampleObserver&)>;

struct DistillResult {
  StudentModel student;
  sampling::ChainStore chain;
  std::vector<double> loss_trace;
};

DistillResult distill_online(const nn::MlpSpec& teacher_spec, const SamplerRun& run, StudentModel init,
                             const Tensor& calib_x, const DistillConfig& cfg);

Json to_json(const PredictiveTable& t);
PredictiveTable table_from_json(const Json& j);
Json to_json(const StudentModel& s, std::string_view kind = "student");
StudentModel student_from_json(const Json& j, std::string_view kind = "student");

Json tensor_to_json(const Tensor& t);
Tensor tensor_from_json(const Json& j);
Json spec_to_json(const nn::MlpSpec& spec);
nn::MlpSpec spec_from_json(const Json& j);

}  // namespace posthoc::predictive
