#pragma once

// Named-tensor container shared by checkpoints, probe files and rotations.
//
// Layout (little-endian):
//   "METATNS1"                          magic, last byte is the format version
//   u32 manifest_len, manifest          JSON text; must carry "version"
//   u32 n_tensors
//   per tensor: u16 name_len, name, u8 dtype (0 = f32, 1 = f64), u8 ndim,
//               ndim x u64 dims, raw element data

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

namespace metaoth {

struct NamedTensor {
  std::string name;
  std::vector<std::uint64_t> shape;
  std::variant<std::vector<float>, std::vector<double>> data;

  std::size_t numel() const;
  bool is_f32() const { return data.index() == 0; }
  // Element values widened to double.
  std::vector<double> as_double() const;

  static NamedTensor f32(std::string name, std::vector<std::uint64_t> shape, std::span<const float> values);
  static NamedTensor f64(std::string name, std::vector<std::uint64_t> shape, std::span<const double> values);
};

struct TensorFile {
  nlohmann::json manifest = nlohmann::json::object();
  std::vector<NamedTensor> tensors;

  const NamedTensor& get(const std::string& name) const;
  bool has(const std::string& name) const;
};

inline constexpr int kTensorFileVersion = 1;

// Throws std::runtime_error on IO failure.
void write_tensor_file(const std::filesystem::path& path, const TensorFile& file);
// Throws CorruptFile or VersionMismatch.
TensorFile read_tensor_file(const std::filesystem::path& path);

}  // namespace metaoth
