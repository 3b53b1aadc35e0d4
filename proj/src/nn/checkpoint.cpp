#include "ectg/nn/checkpoint.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

namespace ectg::nn {
namespace {

constexpr std::array<char, 8> kMagic = {'E', 'C', 'T', 'G', 'C', 'K', 'P', 'T'};

void put_u64(std::ostream& out, std::uint64_t v) {
  std::array<char, 8> b{};
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFFu);
  out.write(b.data(), 8);
}

std::uint64_t get_u64(std::istream& in) {
  std::array<unsigned char, 8> b{};
  if (!in.read(reinterpret_cast<char*>(b.data()), 8)) {
    throw CheckpointError("checkpoint truncated");
  }
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

}  // namespace

Checkpoint Checkpoint::capture(const ParameterSet& params, std::uint64_t seed) {
  Checkpoint c;
  c.seed = seed;
  for (const auto& [name, t] : params.entries()) {
    c.tensors.push_back({name, t.rows(), t.cols(), {t.values().begin(), t.values().end()}});
  }
  return c;
}

void Checkpoint::restore(ParameterSet& params) const {
  if (params.entries().size() != tensors.size()) {
    throw CheckpointError("checkpoint has " + std::to_string(tensors.size()) +
                          " tensors, model expects " + std::to_string(params.entries().size()));
  }
  for (const auto& st : tensors) {
    if (!params.contains(st.name)) throw CheckpointError("unexpected tensor in checkpoint: " + st.name);
    Tensor t = params.get(st.name);
    if (t.rows() != st.rows || t.cols() != st.cols) {
      throw CheckpointError("shape mismatch for " + st.name + ": checkpoint [" +
                            std::to_string(st.rows) + "x" + std::to_string(st.cols) +
                            "], model " + t.shape_str());
    }
    std::copy(st.values.begin(), st.values.end(), t.mutable_values().begin());
  }
}

void write_checkpoint(const Checkpoint& ckpt, std::ostream& out) {
  nlohmann::json header;
  header["format"] = "ectg-checkpoint";
  header["version"] = Checkpoint::kVersion;
  header["dtype"] = "f64";
  header["seed"] = ckpt.seed;
  header["config"] = ckpt.config;
  header["meta"] = ckpt.meta;
  header["tensors"] = nlohmann::json::array();
  for (const auto& t : ckpt.tensors) {
    header["tensors"].push_back({{"name", t.name}, {"shape", {t.rows, t.cols}}});
  }
  const std::string text = header.dump();
  out.write(kMagic.data(), kMagic.size());
  put_u64(out, text.size());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& t : ckpt.tensors) {
    for (double v : t.values) put_u64(out, std::bit_cast<std::uint64_t>(v));
  }
}

Checkpoint read_checkpoint(std::istream& in) {
  std::array<char, 8> magic{};
  if (!in.read(magic.data(), magic.size()) || magic != kMagic) {
    throw CheckpointError("not an ECTG checkpoint");
  }
  const std::uint64_t len = get_u64(in);
  std::string text(len, '\0');
  if (!in.read(text.data(), static_cast<std::streamsize>(len))) {
    throw CheckpointError("checkpoint header truncated");
  }
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("checkpoint header is not valid JSON: ") + e.what());
  }
  if (header.value("version", 0u) != Checkpoint::kVersion) {
    throw CheckpointError("unsupported checkpoint version " + header.value("version", nlohmann::json()).dump());
  }
  if (header.value("dtype", "") != "f64") throw CheckpointError("unsupported checkpoint dtype");

  Checkpoint c;
  c.seed = header.at("seed").get<std::uint64_t>();
  c.config = header.at("config");
  c.meta = header.at("meta");
  for (const auto& entry : header.at("tensors")) {
    StoredTensor t;
    t.name = entry.at("name").get<std::string>();
    t.rows = entry.at("shape").at(0).get<std::size_t>();
    t.cols = entry.at("shape").at(1).get<std::size_t>();
    t.values.resize(t.rows * t.cols);
    for (auto& v : t.values) v = std::bit_cast<double>(get_u64(in));
    c.tensors.push_back(std::move(t));
  }
  return c;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  // Written beside the target and renamed into place.
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError("cannot write " + tmp.string());
    write_checkpoint(ckpt, out);
    if (!out) throw CheckpointError("write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint " + path.string());
  return read_checkpoint(in);
}

}  // namespace ectg::nn
