#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "posthoc/core/serialize.hpp"
#include "posthoc/models/mlp.hpp"

namespace posthoc::sampling {

using nn::ParamVector;

struct ChainMeta {
  std::string sampler;
  Json config = Json::object();
  std::uint64_t seed = 0;
  std::size_t burn_in = 0;
  std::size_t thinning = 1;
  std::size_t iterations = 0;  // total dynamics steps executed
};

// Ordered posterior samples theta_1..theta_T with provenance.
struct ChainStore {
  std::vector<ParamVector> samples;
  ChainMeta meta;

  std::size_t size() const { return samples.size(); }
  bool empty() const { return samples.empty(); }
  void validate() const;
};

// {format_version: 1, kind: "chain", meta, samples: [base64 float64 LE, ...]}
Json to_json(const ChainStore& chain);
ChainStore chain_from_json(const Json& j);
void save_chain(const ChainStore& chain, const std::filesystem::path& path);
ChainStore load_chain(const std::filesystem::path& path);

}  // namespace posthoc::sampling
