#include "metaoth/tensor_io.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>

#include "metaoth/datagen.hpp"

namespace metaoth {
namespace {

static_assert(std::endian::native == std::endian::little, "tensor files are written in native little-endian");

constexpr std::array<char, 7> kMagicPrefix{'M', 'E', 'T', 'A', 'T', 'N', 'S'};
constexpr char kFormatVersion = '1';

template <typename T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (in.gcount() != sizeof(T)) throw CorruptFile("truncated tensor file");
  return v;
}

}  // namespace

std::size_t NamedTensor::numel() const {
  std::size_t n = 1;
  for (auto s : shape) n *= s;
  return n;
}

std::vector<double> NamedTensor::as_double() const {
  return std::visit([](const auto& v) { return std::vector<double>(v.begin(), v.end()); }, data);
}

NamedTensor NamedTensor::f32(std::string name, std::vector<std::uint64_t> shape, std::span<const float> values) {
  NamedTensor t{std::move(name), std::move(shape), std::vector<float>(values.begin(), values.end())};
  if (t.numel() != values.size()) throw std::invalid_argument("tensor shape does not match data");
  return t;
}

NamedTensor NamedTensor::f64(std::string name, std::vector<std::uint64_t> shape, std::span<const double> values) {
  NamedTensor t{std::move(name), std::move(shape), std::vector<double>(values.begin(), values.end())};
  if (t.numel() != values.size()) throw std::invalid_argument("tensor shape does not match data");
  return t;
}

const NamedTensor& TensorFile::get(const std::string& name) const {
  for (const auto& t : tensors) {
    if (t.name == name) return t;
  }
  throw CorruptFile("missing tensor " + name);
}

bool TensorFile::has(const std::string& name) const {
  for (const auto& t : tensors) {
    if (t.name == name) return true;
  }
  return false;
}

void write_tensor_file(const std::filesystem::path& path, const TensorFile& file) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out.write(kMagicPrefix.data(), kMagicPrefix.size());
  out.put(kFormatVersion);
  nlohmann::json manifest = file.manifest;
  if (!manifest.contains("version")) manifest["version"] = kTensorFileVersion;
  const std::string text = manifest.dump();
  put<std::uint32_t>(out, static_cast<std::uint32_t>(text.size()));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(file.tensors.size()));
  for (const auto& t : file.tensors) {
    put<std::uint16_t>(out, static_cast<std::uint16_t>(t.name.size()));
    out.write(t.name.data(), static_cast<std::streamsize>(t.name.size()));
    put<std::uint8_t>(out, t.is_f32() ? 0 : 1);
    put<std::uint8_t>(out, static_cast<std::uint8_t>(t.shape.size()));
    for (auto s : t.shape) put<std::uint64_t>(out, s);
    std::visit(
        [&](const auto& v) {
          out.write(reinterpret_cast<const char*>(v.data()),
                    static_cast<std::streamsize>(v.size() * sizeof(v[0])));
        },
        t.data);
  }
  out.flush();
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

TensorFile read_tensor_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::array<char, 8> magic{};
  in.read(magic.data(), magic.size());
  if (in.gcount() != 8 || std::memcmp(magic.data(), kMagicPrefix.data(), kMagicPrefix.size()) != 0) {
    throw CorruptFile("bad magic in " + path.string());
  }
  if (magic[7] != kFormatVersion) throw VersionMismatch("unsupported tensor file version");
  TensorFile file;
  const auto len = get<std::uint32_t>(in);
  std::string text(len, '\0');
  in.read(text.data(), len);
  if (in.gcount() != static_cast<std::streamsize>(len)) throw CorruptFile("truncated manifest");
  try {
    file.manifest = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw CorruptFile(std::string("bad manifest: ") + e.what());
  }
  if (!file.manifest.contains("version")) throw CorruptFile("manifest has no version");
  if (file.manifest["version"] != kTensorFileVersion) throw VersionMismatch("unsupported manifest version");
  const auto n = get<std::uint32_t>(in);
  for (std::uint32_t i = 0; i < n; ++i) {
    NamedTensor t;
    const auto name_len = get<std::uint16_t>(in);
    t.name.resize(name_len);
    in.read(t.name.data(), name_len);
    if (in.gcount() != name_len) throw CorruptFile("truncated tensor name");
    const auto dtype = get<std::uint8_t>(in);
    const auto ndim = get<std::uint8_t>(in);
    for (int k = 0; k < ndim; ++k) t.shape.push_back(get<std::uint64_t>(in));
    const std::size_t count = t.numel();
    auto read_into = [&](auto& v) {
      v.resize(count);
      const auto bytes = static_cast<std::streamsize>(count * sizeof(v[0]));
      in.read(reinterpret_cast<char*>(v.data()), bytes);
      if (in.gcount() != bytes) throw CorruptFile("truncated tensor data for " + t.name);
    };
    if (dtype == 0) {
      std::vector<float> v;
      read_into(v);
      t.data = std::move(v);
    } else if (dtype == 1) {
      std::vector<double> v;
      read_into(v);
      t.data = std::move(v);
    } else {
      throw CorruptFile("unknown dtype");
    }
    file.tensors.push_back(std::move(t));
  }
  return file;
}

}  // namespace metaoth
