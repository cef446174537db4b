#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace posthoc {

using Json = nlohmann::json;

inline constexpr int kFormatVersion = 1;

// Base64 of the little-endian IEEE-754 bytes of `values`.
std::string encode_doubles(std::span<const double> values);
std::vector<double> decode_doubles(std::string_view text);

// {format_version: 1, kind: <kind>, ...payload}
Json make_envelope(std::string_view kind, Json payload);
// Checks version and kind, returns the envelope unchanged.
const Json& open_envelope(const Json& envelope, std::string_view kind);

Json read_json(const std::filesystem::path& path);
void write_json(const Json& j, const std::filesystem::path& path);

}  // namespace posthoc
