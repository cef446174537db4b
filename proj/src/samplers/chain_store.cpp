#include "posthoc/samplers/chain_store.hpp"

#include "posthoc/core/error.hpp"

namespace posthoc::sampling {

void ChainStore::validate() const {
  for (const auto& s : samples) {
    require(s.size() == samples.front().size(), "chain samples have differing lengths");
  }
}

Json to_json(const ChainStore& chain) {
  Json meta;
  meta["sampler"] = chain.meta.sampler;
  meta["config"] = chain.meta.config;
  meta["seed"] = chain.meta.seed;
  meta["burn_in"] = chain.meta.burn_in;
  meta["thinning"] = chain.meta.thinning;
  meta["iterations"] = chain.meta.iterations;
  Json samples = Json::array();
  for (const auto& s : chain.samples) samples.push_back(encode_doubles(s));
  return make_envelope("chain", Json{{"meta", meta}, {"samples", samples}});
}

ChainStore chain_from_json(const Json& j) {
  open_envelope(j, "chain");
  try {
    ChainStore c;
    const Json& meta = j.at("meta");
    c.meta.sampler = meta.at("sampler").get<std::string>();
    c.meta.config = meta.value("config", Json::object());
    c.meta.seed = meta.at("seed").get<std::uint64_t>();
    c.meta.burn_in = meta.at("burn_in").get<std::size_t>();
    c.meta.thinning = meta.at("thinning").get<std::size_t>();
    c.meta.iterations = meta.at("iterations").get<std::size_t>();
    for (const auto& s : j.at("samples")) c.samples.push_back(decode_doubles(s.get<std::string>()));
    c.validate();
    return c;
  } catch (const Json::exception& e) {
    throw ParseError("chain", "schema", e.what());
  }
}

void save_chain(const ChainStore& chain, const std::filesystem::path& path) { write_json(to_json(chain), path); }

ChainStore load_chain(const std::filesystem::path& path) { return chain_from_json(read_json(path)); }

}  // namespace posthoc::sampling
