#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include <json.hpp>

namespace uwsynth {

/// On-disk container used by every binary artifact in the project: one line
/// of JSON (the header) terminated by '\n', followed by a raw little-endian
/// payload whose layout the header describes.
struct Blob {
  nlohmann::json header;
  std::vector<std::uint8_t> payload;
};

Blob read_blob(const std::filesystem::path& path);
void write_blob(const std::filesystem::path& path, const nlohmann::json& header,
                std::span<const std::uint8_t> payload);

std::vector<std::uint8_t> encode_f32(std::span<const double> values);
std::vector<std::uint8_t> encode_f64(std::span<const double> values);
std::vector<double> decode_f32(std::span<const std::uint8_t> bytes);
std::vector<double> decode_f64(std::span<const std::uint8_t> bytes);

}  // namespace uwsynth
