#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "hydroformer/data.hpp"
#include "hydroformer/model.hpp"

namespace hydro::checkpoint {

// Layout (all integers and floats little-endian):
//   "HYFCKPT\0"            8-byte magic
//   u32 version
//   u32 n; n x (str key, str value)            configuration
//   u32 n; n x (str name, f64 mean, f64 std)  normalizer
//   u32 n; n x (str name, u32 ndim, u64 dims[ndim], f64 values[prod])
//   "END\0"
// where str = u32 length + bytes.
inline constexpr std::uint32_t kFormatVersion = 1;

struct StoredTensor {
  Shape shape;
  std::vector<double> values;
};

struct Checkpoint {
  std::map<std::string, std::string> config;  // model.*, data.*, train.* keys
  data::Normalizer normalizer;
  std::map<std::string, StoredTensor> tensors;

  ModelConfig model_config() const;
  /// Rebuilds the model and copies every stored tensor into it. Missing,
  /// extra or mis-shaped tensors raise FormatError.
  TransformerModel restore_model() const;
};

Checkpoint capture(const TransformerModel& model, const data::Normalizer& normalizer,
                   std::map<std::string, std::string> extra_config = {});

void write(std::ostream& out, const Checkpoint& ckpt);
Checkpoint read(std::istream& in);
void save(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load(const std::filesystem::path& path);

/// Lowercase hex SHA-256 of `bytes` / of the file at `path`.
std::string sha256_hex(const std::string& bytes);
std::string sha256_file(const std::filesystem::path& path);

}  // namespace hydro::checkpoint
