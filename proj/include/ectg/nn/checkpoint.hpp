#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "ectg/nn/layers.hpp"
#include "json.hpp"

namespace ectg::nn {

class CheckpointError : public Error {
 public:
  using Error::Error;
};

struct StoredTensor {
  std::string name;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;
};

// Container layout:
//   8 bytes   magic "ECTGCKPT"
//   8 bytes   header length, little-endian u64
//   N bytes   JSON header {format, version, dtype, seed, config, meta, tensors:[{name, shape}]}
//   payload   every tensor's values as little-endian IEEE-754 f64, in header order
struct Checkpoint {
  static constexpr std::uint32_t kVersion = 1;

  std::uint64_t seed = 0;
  nlohmann::json config = nlohmann::json::object();
  nlohmann::json meta = nlohmann::json::object();
  std::vector<StoredTensor> tensors;

  static Checkpoint capture(const ParameterSet& params, std::uint64_t seed);
  /// Copies stored values into `params`; names and shapes must match exactly.
  void restore(ParameterSet& params) const;
};

void write_checkpoint(const Checkpoint& ckpt, std::ostream& out);
Checkpoint read_checkpoint(std::istream& in);

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace ectg::nn
