#include "uwsynth/blob_file.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "uwsynth/errors.hpp"

namespace uwsynth {

static_assert(std::endian::native == std::endian::little,
              "payload encoding assumes a little-endian host");

Blob read_blob(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw IoError("missing header in " + path.string());
  Blob blob;
  try {
    blob.header = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw IoError("malformed header in " + path.string() + ": " + e.what());
  }
  blob.payload.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
  return blob;
}

void write_blob(const std::filesystem::path& path, const nlohmann::json& header,
                std::span<const std::uint8_t> payload) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << header.dump() << '\n';
  out.write(reinterpret_cast<const char*>(payload.data()), static_cast<std::streamsize>(payload.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

std::vector<std::uint8_t> encode_f32(std::span<const double> values) {
  std::vector<std::uint8_t> bytes(values.size() * sizeof(float));
  for (std::size_t i = 0; i < values.size(); ++i) {
    const float f = static_cast<float>(values[i]);
    std::memcpy(bytes.data() + i * sizeof(float), &f, sizeof(float));
  }
  return bytes;
}

std::vector<std::uint8_t> encode_f64(std::span<const double> values) {
  std::vector<std::uint8_t> bytes(values.size() * sizeof(double));
  std::memcpy(bytes.data(), values.data(), bytes.size());
  return bytes;
}

std::vector<double> decode_f32(std::span<const std::uint8_t> bytes) {
  if (bytes.size() % sizeof(float) != 0) throw IoError("float32 payload size not a multiple of 4");
  std::vector<double> values(bytes.size() / sizeof(float));
  for (std::size_t i = 0; i < values.size(); ++i) {
    float f;
    std::memcpy(&f, bytes.data() + i * sizeof(float), sizeof(float));
    values[i] = f;
  }
  return values;
}

std::vector<double> decode_f64(std::span<const std::uint8_t> bytes) {
  if (bytes.size() % sizeof(double) != 0) throw IoError("float64 payload size not a multiple of 8");
  std::vector<double> values(bytes.size() / sizeof(double));
  std::memcpy(values.data(), bytes.data(), bytes.size());
  return values;
}

}  // namespace uwsynth
