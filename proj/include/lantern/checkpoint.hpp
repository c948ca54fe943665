#pragma once

#include <cstring>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "lantern/crc32.hpp"
#include "lantern/model.hpp"
#include "lantern/optim.hpp"
#include "lantern/vision.hpp"
#include "lantern/vocab.hpp"

namespace lantern {

struct CheckpointError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Everything a run needs to rebuild the exact model: format version, model
// config (including the latent-norm choice), the frozen encoder's seed and
// patch size, the pooling mode, the vocabulary map, then named parameter
// tensors with per-tensor CRCs, and optionally the optimizer state.
struct CheckpointMeta {
  ModelConfig config;
  PoolMode pool_mode = PoolMode::Flatten1D;
  std::uint64_t encoder_seed = 0;
  int patch_size = 8;
  std::vector<std::string> vocab_tokens;
};

namespace ckpt_detail {

constexpr char kMagic[4] = {'L', 'N', 'T', 'C'};
constexpr std::uint32_t kVersion = 1;

inline void wr(std::ofstream& f, const void* p, std::size_t n) {
  f.write(static_cast<const char*>(p), std::streamsize(n));
}
template <class V>
void wr_pod(std::ofstream& f, V v) {
  wr(f, &v, sizeof(V));
}
inline void wr_str(std::ofstream& f, const std::string& s) {
  wr_pod<std::uint16_t>(f, std::uint16_t(s.size()));
  wr(f, s.data(), s.size());
}

inline void rd(std::ifstream& f, void* p, std::size_t n) {
  f.read(static_cast<char*>(p), std::streamsize(n));
  if (!f) throw CheckpointError("checkpoint: unexpected end of file");
}
template <class V>
V rd_pod(std::ifstream& f) {
  V v;
  rd(f, &v, sizeof(V));
  return v;
}
inline std::string rd_str(std::ifstream& f) {
  const auto n = rd_pod<std::uint16_t>(f);
  std::string s(n, '\0');
  rd(f, s.data(), n);
  return s;
}

}  // namespace ckpt_detail

template <class T>
void save_checkpoint(const std::string& path, const TransformerT<T>& model,
                     const CheckpointMeta& meta, const AdamW<T>* optimizer = nullptr) {
  using namespace ckpt_detail;
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw CheckpointError("cannot open '" + path + "' for writing");
  wr(f, kMagic, 4);
  wr_pod<std::uint32_t>(f, kVersion);
  wr_pod<std::uint8_t>(f, sizeof(T));
  const auto& c = meta.config;
  for (int v : {c.dim, c.layers, c.heads, c.vocab, c.k, c.max_seq, c.img_tokens})
    wr_pod<std::int32_t>(f, v);
  wr_pod<std::uint8_t>(f, c.latent_post_norm ? 1 : 0);
  wr_pod<std::uint8_t>(f, c.ntp_baseline ? 1 : 0);
  wr_pod<std::uint8_t>(f, std::uint8_t(meta.pool_mode));
  wr_pod<std::uint64_t>(f, meta.encoder_seed);
  wr_pod<std::int32_t>(f, meta.patch_size);
  wr_pod<std::uint32_t>(f, std::uint32_t(meta.vocab_tokens.size()));
  for (const auto& t : meta.vocab_tokens) wr_str(f, t);

  const auto& params = model.parameters();
  wr_pod<std::uint32_t>(f, std::uint32_t(params.size()));
  for (const auto& [name, p] : params) {
    wr_str(f, name);
    wr_pod<std::uint8_t>(f, std::uint8_t(p.ndim()));
    for (int i = 0; i < p.ndim(); ++i) wr_pod<std::int32_t>(f, p.dim(i));
    const std::size_t bytes = p.numel() * sizeof(T);
    wr_pod<std::uint64_t>(f, bytes);
    wr(f, p.data(), bytes);
    wr_pod<std::uint32_t>(f, crc32(p.data(), bytes));
  }

  if (optimizer) {
    wr_pod<std::uint8_t>(f, 1);
    wr_pod<std::uint64_t>(f, std::uint64_t(optimizer->step_count()));
    auto& m = const_cast<AdamW<T>*>(optimizer)->moments1();
    auto& v = const_cast<AdamW<T>*>(optimizer)->moments2();
    for (std::size_t i = 0; i < params.size(); ++i) {
      wr(f, m[i].data(), m[i].size() * sizeof(T));
      wr(f, v[i].data(), v[i].size() * sizeof(T));
    }
  } else {
    wr_pod<std::uint8_t>(f, 0);
  }
  if (!f) throw CheckpointError("write to '" + path + "' failed");
}

template <class T>
struct LoadedCheckpoint {
  CheckpointMeta meta;
  TransformerT<T> model;
  bool has_optimizer = false;
  long optimizer_step = 0;
  std::vector<std::vector<T>> m1, m2;  // per-parameter moments, registration order
};

template <class T>
LoadedCheckpoint<T> load_checkpoint(const std::string& path) {
  using namespace ckpt_detail;
  std::ifstream f(path, std::ios::binary);
  if (!f) throw CheckpointError("cannot open checkpoint '" + path + "'");
  char magic[4];
  rd(f, magic, 4);
  if (std::memcmp(magic, kMagic, 4) != 0)
    throw CheckpointError("'" + path + "' is not a checkpoint file");
  const auto ver = rd_pod<std::uint32_t>(f);
  if (ver != kVersion)
    throw CheckpointError("checkpoint version " + std::to_string(ver) +
                          " unsupported (expected " + std::to_string(kVersion) + ")");
  const auto dtype = rd_pod<std::uint8_t>(f);
  if (dtype != sizeof(T))
    throw CheckpointError("checkpoint dtype width " + std::to_string(int(dtype)) +
                          " does not match requested width " + std::to_string(sizeof(T)));

  CheckpointMeta meta;
  auto& c = meta.config;
  c.dim = rd_pod<std::int32_t>(f);
  c.layers = rd_pod<std::int32_t>(f);
  c.heads = rd_pod<std::int32_t>(f);
  c.vocab = rd_pod<std::int32_t>(f);
  c.k = rd_pod<std::int32_t>(f);
  c.max_seq = rd_pod<std::int32_t>(f);
  c.img_tokens = rd_pod<std::int32_t>(f);
  c.latent_post_norm = rd_pod<std::uint8_t>(f) != 0;
  c.ntp_baseline = rd_pod<std::uint8_t>(f) != 0;
  meta.pool_mode = static_cast<PoolMode>(rd_pod<std::uint8_t>(f));
  meta.encoder_seed = rd_pod<std::uint64_t>(f);
  meta.patch_size = rd_pod<std::int32_t>(f);
  const auto vocab_n = rd_pod<std::uint32_t>(f);
  meta.vocab_tokens.reserve(vocab_n);
  for (std::uint32_t i = 0; i < vocab_n; ++i) meta.vocab_tokens.push_back(rd_str(f));

  LoadedCheckpoint<T> out{meta, TransformerT<T>(meta.config, 0)};
  const auto n_params = rd_pod<std::uint32_t>(f);
  std::vector<std::pair<std::string, std::vector<T>>> state;
  for (std::uint32_t i = 0; i < n_params; ++i) {
    const std::string name = rd_str(f);
    const int ndim = rd_pod<std::uint8_t>(f);
    std::size_t numel = 1;
    for (int j = 0; j < ndim; ++j) numel *= std::size_t(rd_pod<std::int32_t>(f));
    const auto bytes = rd_pod<std::uint64_t>(f);
    if (bytes != numel * sizeof(T))
      throw CheckpointError("checkpoint: byte count mismatch for '" + name + "'");
    std::vector<T> values(numel);
    rd(f, values.data(), bytes);
    const auto stored = rd_pod<std::uint32_t>(f);
    if (stored != crc32(values.data(), bytes))
      throw CheckpointError("checkpoint: CRC mismatch in parameter '" + name + "'");
    state.emplace_back(name, std::move(values));
  }
  out.model.load_state(state);

  const auto has_opt = rd_pod<std::uint8_t>(f);
  if (has_opt) {
    out.has_optimizer = true;
    out.optimizer_step = long(rd_pod<std::uint64_t>(f));
    for (const auto& [name, values] : state) {
      std::vector<T> m(values.size()), v(values.size());
      rd(f, m.data(), m.size() * sizeof(T));
      rd(f, v.data(), v.size() * sizeof(T));
      out.m1.push_back(std::move(m));
      out.m2.push_back(std::move(v));
    }
  }
  return out;
}

}  // namespace lantern
