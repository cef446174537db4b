#include "posthoc/core/serialize.hpp"

#include <openssl/evp.h>

#include <bit>
#include <cstring>
#include <fstream>

#include "posthoc/core/error.hpp"

namespace posthoc {

namespace {

void to_little_endian(unsigned char* bytes, std::size_t n_values) {
  if constexpr (std::endian::native == std::endian::big) {
    for (std::size_t i = 0; i < n_values; ++i) {
      unsigned char* p = bytes + 8 * i;
      for (int k = 0; k < 4; ++k) std::swap(p[k], p[7 - k]);
    }
  }
}

}  // namespace

std::string encode_doubles(std::span<const double> values) {
  const std::size_t n_bytes = values.size() * sizeof(double);
  std::vector<unsigned char> raw(n_bytes);
  if (n_bytes) std::memcpy(raw.data(), values.data(), n_bytes);
  to_little_endian(raw.data(), values.size());
  std::string out(4 * ((n_bytes + 2) / 3) + 1, '\0');
  const int len = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()), raw.data(), static_cast<int>(n_bytes));
  out.resize(static_cast<std::size_t>(len));
  return out;
}

std::vector<double> decode_doubles(std::string_view text) {
  if (text.size() % 4 != 0) throw ParseError("base64", "byte " + std::to_string(text.size()), "length not a multiple of 4");
  std::vector<unsigned char> raw(3 * text.size() / 4 + 1);
  const int len = EVP_DecodeBlock(raw.data(), reinterpret_cast<const unsigned char*>(text.data()),
                                  static_cast<int>(text.size()));
  if (len < 0) throw ParseError("base64", "byte 0", "invalid base64 payload");
  std::size_t n = static_cast<std::size_t>(len);
  // EVP_DecodeBlock counts padding characters as zero bytes.
  if (!text.empty() && text.back() == '=') --n;
  if (text.size() >= 2 && text[text.size() - 2] == '=') --n;
  if (n % sizeof(double) != 0) throw ParseError("base64", "byte " + std::to_string(n), "payload is not float64 aligned");
  to_little_endian(raw.data(), n / sizeof(double));
  std::vector<double> out(n / sizeof(double));
  if (n) std::memcpy(out.data(), raw.data(), n);
  return out;
}

Json make_envelope(std::string_view kind, Json payload) {
  Json env = Json::object();
  env["format_version"] = kFormatVersion;
  env["kind"] = std::string(kind);
  for (auto& [k, v] : payload.items()) env[k] = std::move(v);
  return env;
}

const Json& open_envelope(const Json& envelope, std::string_view kind) {
  if (!envelope.is_object() || !envelope.contains("format_version")) {
    throw ParseError("checkpoint", "format_version", "missing format_version");
  }
  if (envelope.at("format_version") != kFormatVersion) {
    throw ParseError("checkpoint", "format_version", "unsupported version " + envelope.at("format_version").dump());
  }
  if (envelope.value("kind", std::string()) != kind) {
    throw ParseError("checkpoint", "kind", "expected '" + std::string(kind) + "', got '" +
                                               envelope.value("kind", std::string()) + "'");
  }
  return envelope;
}

Json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(path.string(), "byte 0", "cannot open file");
  try {
    return Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw ParseError(path.string(), "byte " + std::to_string(e.byte), e.what());
  }
}

void write_json(const Json& j, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

}  // namespace posthoc
