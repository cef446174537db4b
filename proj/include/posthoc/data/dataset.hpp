#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "posthoc/autodiff/tensor.hpp"
#include "posthoc/models/mlp.hpp"

namespace posthoc::data {

using ad::Tensor;
using nn::Label;

struct Dataset {
  Tensor x = Tensor::matrix(0, 0);  // N x D
  std::optional<std::vector<Label>> y;
  std::vector<std::string> class_names;

  std::size_t size() const { return x.rows(); }
  std::size_t dim() const { return x.cols(); }
  bool labeled() const { return y.has_value(); }
  const std::vector<Label>& labels() const;
  void validate(std::size_t num_classes) const;
};

Dataset subset(const Dataset& d, std::span<const std::size_t> rows);

// Two-class isotropic Gaussian problem. Class 0 ("negative") is centred on
// neg_mean, class 1 ("positive") on pos_mean. Test uses the same counts as
// train. The calibration set is uniform over the square [box_lo, box_hi]^2.
struct SyntheticSpec {
  std::array<double, 2> neg_mean{-1.0, -1.0};
  std::array<double, 2> pos_mean{1.0, 1.0};
  double std = 1.0;
  std::size_t n_neg = 90;
  std::size_t n_pos = 10;
  std::size_t calib_n = 500;
  double box_lo = -3.0;
  double box_hi = 3.0;
  std::uint64_t seed = 0;

  void validate() const;
};

struct SyntheticSplits {
  Dataset train;
  Dataset test;
  Dataset calib;
};

SyntheticSplits gen_synthetic(const SyntheticSpec& spec);

struct CorruptionSpec {
  double rate = 0.0;
  std::uint64_t seed = 0;
};

// Replaces the labels of a uniformly chosen floor(rate*N) subset with uniform
// draws over all classes; a redraw may equal the original label.
Dataset corrupt_labels(const Dataset& d, std::size_t num_classes, const CorruptionSpec& spec);

// Seeded shuffle followed by a partition. Part sizes are floor(f_i * N) with
// the remainder going to the last part.
std::vector<Dataset> split(const Dataset& d, std::span<const double> fractions, std::uint64_t seed);

// CSV with header f0,...,f{D-1}[,label].
Dataset load_csv(const std::filesystem::path& path);
void save_csv(const Dataset& d, const std::filesystem::path& path);

// IDX image file (magic 0x00000803, unsigned bytes) scaled to [0,1], plus an
// optional IDX label file (magic 0x00000801).
Dataset load_idx(const std::filesystem::path& images, const std::optional<std::filesystem::path>& labels = {});

}  // namespace posthoc::data
