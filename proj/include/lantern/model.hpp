#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "lantern/ops.hpp"
#include "lantern/rng.hpp"
#include "lantern/tensor.hpp"
#include "lantern/trajectory.hpp"
#include "lantern/vision.hpp"
#include "lantern/vocab.hpp"

namespace lantern {

struct ModelConfig {
  int dim = 48;
  int layers = 3;
  int heads = 4;
  int vocab = 0;
  int k = 8;             // latent block length
  int max_seq = 160;
  int img_tokens = 16;   // patch rows prepended to the prompt
  bool latent_post_norm = true;  // z taken after the final norm
  bool ntp_baseline = false;     // control tokens decode as plain text

  void validate() const {
    if (dim <= 0 || heads <= 0 || dim % heads != 0)
      throw ShapeError("model config: dim must be divisible by heads");
    if (k < 1) throw ShapeError("model config: K must be >= 1");
    if (vocab <= 0) throw ShapeError("model config: vocab not set");
    if (layers < 1 || max_seq < 4) throw ShapeError("model config: bad layers/max_seq");
  }
};

struct SamplingConfig {
  double temperature = 1.0;
  double top_p = 1.0;
  bool greedy = false;
};

enum class LatentSource { Model, Zeros, Oracle };

template <class T>
struct PromptT {
  std::vector<T> image_rows;  // P*dim patch features, row-major
  int image_count = 0;
  std::vector<int> tokens;  // question ids

  int length() const { return image_count + static_cast<int>(tokens.size()); }
};

template <class T>
PromptT<T> make_prompt(const FeatureMapT<T>& map, std::vector<int> question) {
  PromptT<T> p;
  p.image_count = map.patches();
  p.image_rows = map.values;
  p.tokens = std::move(question);
  return p;
}

// Incremental decode state: attention caches plus the text/latent mode.
template <class T>
struct DecodeStateT {
  enum class Mode { Text, Latent };
  Mode mode = Mode::Text;
  int remaining = 0;  // latents still to emit while in Latent mode, in [1,K]
  int pos = 0;
  std::vector<std::vector<T>> k_cache, v_cache;  // per layer, max_seq*dim

  // scratch rows reused across steps
  std::vector<T> x, a, q, k, v, att, proj, m4, scores, probs;
};

template <class T>
struct ScoreResultT {
  TensorT<T> logprobs;        // [n], graph-connected when a tape is active
  TensorT<T> logsoftmax_rows; // [n, V] at the scored positions
  TensorT<T> hidden;          // [S, dim] post-final-norm hidden states
  TensorT<T> logits;          // [S, V]
  std::vector<int> step_index;  // trajectory step per scored entry
  std::vector<int> targets;     // token ids per scored entry
  std::vector<int> positions;   // sequence position per scored entry
  int prompt_len = 0;
};

// Decoder-only transformer with the extended vocabulary and the TEXT/LATENT
// state machine. Pre-norm blocks, learned absolute positions, untied LM head.
// In latent mode the final-norm hidden state bypasses the LM head: it is
// recorded as z and fed back as the next input embedding.
template <class T>
class TransformerT {
 public:
  TransformerT(ModelConfig cfg, std::uint64_t init_seed) : cfg_(cfg) {
    cfg_.validate();
    head_dim_ = cfg_.dim / cfg_.heads;
    inv_sqrt_hd_ = T(1) / std::sqrt(T(head_dim_));
    Prng rng(mix_seed(init_seed, 0x7E115));
    auto w = [&](std::string name, int rows, int cols, double sigma) {
      auto t = TensorT<T>::zeros({rows, cols}, true);
      for (std::size_t i = 0; i < t.numel(); ++i)
        t.data()[i] = static_cast<T>(rng.gauss() * sigma);
      params_.emplace_back(std::move(name), t);
      return t;
    };
    auto vec1 = [&](std::string name, int n, T fill) {
      auto t = TensorT<T>::zeros({n}, true);
      for (std::size_t i = 0; i < t.numel(); ++i) t.data()[i] = fill;
      params_.emplace_back(std::move(name), t);
      return t;
    };
    const double sd = 0.08;
    wte_ = w("wte", cfg_.vocab, cfg_.dim, sd);
    wpe_ = w("wpe", cfg_.max_seq, cfg_.dim, sd);
    layers_.resize(std::size_t(cfg_.layers));
    for (int l = 0; l < cfg_.layers; ++l) {
      auto& L = layers_[std::size_t(l)];
      const std::string p = "blocks." + std::to_string(l) + ".";
      L.ln1_g = vec1(p + "ln1.g", cfg_.dim, T(1));
      L.ln1_b = vec1(p + "ln1.b", cfg_.dim, T(0));
      L.wq = w(p + "wq", cfg_.dim, cfg_.dim, sd);
      L.wk = w(p + "wk", cfg_.dim, cfg_.dim, sd);
      L.wv = w(p + "wv", cfg_.dim, cfg_.dim, sd);
      L.wo = w(p + "wo", cfg_.dim, cfg_.dim, sd);
      L.ln2_g = vec1(p + "ln2.g", cfg_.dim, T(1));
      L.ln2_b = vec1(p + "ln2.b", cfg_.dim, T(0));
      L.fc1 = w(p + "fc1", 4 * cfg_.dim, cfg_.dim, sd);
      L.fc2 = w(p + "fc2", cfg_.dim, 4 * cfg_.dim, sd);
    }
    lnf_g_ = vec1("lnf.g", cfg_.dim, T(1));
    lnf_b_ = vec1("lnf.b", cfg_.dim, T(0));
    lm_head_ = w("lm_head", cfg_.vocab, cfg_.dim, sd);
  }

  const ModelConfig& config() const { return cfg_; }
  ModelConfig& mutable_config() { return cfg_; }
  std::vector<std::pair<std::string, TensorT<T>>>& parameters() { return params_; }
  const std::vector<std::pair<std::string, TensorT<T>>>& parameters() const {
    return params_;
  }
  TensorT<T> embedding_table() const { return wte_; }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& [name, p] : params_) n += p.numel();
    return n;
  }

  // copies named values into the existing parameter tensors
  void load_state(const std::vector<std::pair<std::string, std::vector<T>>>& state) {
    for (const auto& [name, values] : state) {
      bool found = false;
      for (auto& [pname, p] : params_) {
        if (pname != name) continue;
        if (p.numel() != values.size())
          throw ShapeError("load_state: size mismatch for '" + name + "'");
        std::copy(values.begin(), values.end(), p.data());
        found = true;
        break;
      }
      if (!found) throw ShapeError("load_state: unknown parameter '" + name + "'");
    }
  }

  // deep copy with independent storage (snapshots, reference policies)
  TransformerT clone() const {
    TransformerT out(cfg_, 0);
    for (std::size_t i = 0; i < params_.size(); ++i)
      std::copy(params_[i].second.vec().begin(), params_[i].second.vec().end(),
                out.params_[i].second.data());
    return out;
  }

  // input embedding for one trajectory step: token -> table row, latent -> z
  std::vector<T> embed_step(const typename HybridTrajectoryT<T>::Step& step) const {
    if (step.latent) {
      if (static_cast<int>(step.z.size()) != cfg_.dim)
        throw ShapeError("embed_step: latent dim " + std::to_string(step.z.size()) +
                         " != model dim " + std::to_string(cfg_.dim));
      return step.z;
    }
    if (step.token < 0 || step.token >= cfg_.vocab)
      throw ShapeError("embed_step: token id out of vocabulary");
    std::vector<T> row(std::size_t(cfg_.dim), T(0));
    std::copy_n(wte_.data() + std::size_t(step.token) * cfg_.dim, cfg_.dim, row.data());
    return row;
  }

  struct FullOut {
    TensorT<T> hidden;  // [S, dim] post-final-norm
    TensorT<T> logits;  // [S, vocab]
  };

  // Teacher-forced full-sequence pass over pre-assembled base rows (token
  // embeddings, image features, injected latents). Adds position rows, runs
  // the blocks, returns hidden states and LM-head logits for every position.
  FullOut forward_rows(const std::vector<ops::RowRef<T>>& base_rows) const {
    const int S = static_cast<int>(base_rows.size());
    if (S > cfg_.max_seq)
      throw ShapeError("forward: sequence length " + std::to_string(S) +
                       " exceeds max_seq " + std::to_string(cfg_.max_seq));
    auto base = ops::compose_rows(base_rows, cfg_.dim);
    std::vector<int> positions(std::size_t(S), 0);
    std::iota(positions.begin(), positions.end(), 0);
    auto x = ops::add(base, ops::gather_rows(wpe_, positions));
    auto causal = causal_mask(S);
    for (int l = 0; l < cfg_.layers; ++l) {
      const auto& L = layers_[std::size_t(l)];
      auto a = ops::layernorm_rows(x, L.ln1_g, L.ln1_b, ln_eps_);
      auto q = ops::matmul_nt(a, L.wq);
      auto k = ops::matmul_nt(a, L.wk);
      auto v = ops::matmul_nt(a, L.wv);
      std::vector<TensorT<T>> heads;
      heads.reserve(std::size_t(cfg_.heads));
      for (int h = 0; h < cfg_.heads; ++h) {
        const int c0 = h * head_dim_, c1 = (h + 1) * head_dim_;
        auto qh = ops::slice_cols(q, c0, c1);
        auto kh = ops::slice_cols(k, c0, c1);
        auto vh = ops::slice_cols(v, c0, c1);
        auto scores = ops::add(ops::scale(ops::matmul_nt(qh, kh), inv_sqrt_hd_), causal);
        auto attn = ops::softmax_rows(scores);
        heads.push_back(ops::matmul(attn, vh));
      }
      auto att = ops::concat_cols(heads);
      x = ops::add(x, ops::matmul_nt(att, L.wo));
      auto m = ops::layernorm_rows(x, L.ln2_g, L.ln2_b, ln_eps_);
      x = ops::add(x, ops::matmul_nt(ops::gelu(ops::matmul_nt(m, L.fc1)), L.fc2));
    }
    FullOut out;
    out.hidden = ops::layernorm_rows(x, lnf_g_, lnf_b_, ln_eps_);
    out.logits = ops::matmul_nt(out.hidden, lm_head_);
    return out;
  }

  // row sources for a prompt followed by trajectory steps; latent rows come
  // from `replay` when given, else from the recorded steps
  std::vector<ops::RowRef<T>> sequence_rows(
      const PromptT<T>& prompt, const HybridTrajectoryT<T>* traj,
      const std::vector<LatentTargetBlockT<T>>* replay) const {
    std::vector<ops::RowRef<T>> rows;
    auto img = TensorT<T>::from({prompt.image_count, cfg_.dim}, prompt.image_rows);
    for (int i = 0; i < prompt.image_count; ++i) rows.push_back({img, i});
    for (int tok : prompt.tokens) {
      check_token(tok);
      rows.push_back({wte_, tok});
    }
    if (!traj) return rows;

    TensorT<T> latents;
    std::vector<int> latent_row_of_step(traj->steps.size(), -1);
    if (replay) {
      const auto blocks = traj->latent_blocks();
      if (replay->size() != blocks.size())
        throw ShapeError("replay latents: have " + std::to_string(replay->size()) +
                         " blocks, trajectory has " + std::to_string(blocks.size()));
      int total = 0;
      for (const auto& b : blocks) total += b.len;
      latents = TensorT<T>::from({total, cfg_.dim},
                                 std::vector<T>(std::size_t(total) * cfg_.dim, T(0)));
      int row = 0;
      for (std::size_t bi = 0; bi < blocks.size(); ++bi) {
        const auto& blk = (*replay)[bi];
        if (blk.k != blocks[bi].len || blk.dim != cfg_.dim)
          throw ShapeError("replay latents: block " + std::to_string(bi) +
                           " shape mismatch (" + std::to_string(blk.k) + "x" +
                           std::to_string(blk.dim) + ")");
        for (int i = 0; i < blk.k; ++i, ++row) {
          std::copy_n(blk.vec(i), cfg_.dim, latents.data() + std::size_t(row) * cfg_.dim);
          latent_row_of_step[std::size_t(blocks[bi].start + i)] = row;
        }
      }
    } else {
      int total = 0;
      for (const auto& s : traj->steps)
        if (s.latent) ++total;
      latents = TensorT<T>::from({std::max(total, 1), cfg_.dim},
                                 std::vector<T>(std::size_t(std::max(total, 1)) * cfg_.dim, T(0)));
      int row = 0;
      for (std::size_t i = 0; i < traj->steps.size(); ++i) {
        const auto& s = traj->steps[i];
        if (!s.latent) continue;
        if (static_cast<int>(s.z.size()) != cfg_.dim)
          throw ShapeError("trajectory latent has wrong dimension");
        std::copy_n(s.z.data(), cfg_.dim, latents.data() + std::size_t(row) * cfg_.dim);
        latent_row_of_step[i] = row;
        ++row;
      }
    }

    for (std::size_t i = 0; i < traj->steps.size(); ++i) {
      const auto& s = traj->steps[i];
      if (s.latent) {
        rows.push_back({latents, latent_row_of_step[i]});
      } else {
        check_token(s.token);
        rows.push_back({wte_, s.token});
      }
    }
    return rows;
  }

  // Teacher-forces prompt+trajectory with the given latents injected at the
  // latent positions and returns log pi(y_t | ...) for every sampled text
  // step. Gradients flow into all parameters, not into the replayed latents.
  ScoreResultT<T> score_text_logprobs(
      const PromptT<T>& prompt, const HybridTrajectoryT<T>& traj,
      const std::vector<LatentTargetBlockT<T>>* replay = nullptr) const {
    auto rows = sequence_rows(prompt, &traj, replay);
    auto out = forward_rows(rows);

    ScoreResultT<T> res;
    res.hidden = out.hidden;
    res.logits = out.logits;
    res.prompt_len = prompt.length();
    for (std::size_t t = 0; t < traj.steps.size(); ++t) {
      const auto& s = traj.steps[t];
      if (s.latent || !s.sampled) continue;
      res.step_index.push_back(static_cast<int>(t));
      res.targets.push_back(s.token);
      res.positions.push_back(res.prompt_len + static_cast<int>(t) - 1);
    }
    if (res.positions.empty()) {
      res.logprobs = TensorT<T>::zeros({0});
      res.logsoftmax_rows = TensorT<T>::zeros({0, cfg_.vocab});
      return res;
    }
    auto picked = ops::gather_rows(out.logits, res.positions);
    res.logsoftmax_rows = ops::log_softmax_rows(picked);
    std::vector<int> iota(res.targets.size());
    std::iota(iota.begin(), iota.end(), 0);
    res.logprobs = ops::gather_items(res.logsoftmax_rows, iota, res.targets);
    return res;
  }

  // ---- incremental decode ----

  DecodeStateT<T> new_state() const {
    DecodeStateT<T> st;
    st.k_cache.assign(std::size_t(cfg_.layers),
                      std::vector<T>(std::size_t(cfg_.max_seq) * cfg_.dim, T(0)));
    st.v_cache = st.k_cache;
    st.x.resize(std::size_t(cfg_.dim));
    st.a.resize(std::size_t(cfg_.dim));
    st.q.resize(std::size_t(cfg_.dim));
    st.k.resize(std::size_t(cfg_.dim));
    st.v.resize(std::size_t(cfg_.dim));
    st.att.resize(std::size_t(cfg_.dim));
    st.proj.resize(std::size_t(cfg_.dim));
    st.m4.resize(std::size_t(4) * cfg_.dim);
    st.scores.resize(std::size_t(cfg_.max_seq));
    st.probs.resize(std::size_t(cfg_.max_seq));
    return st;
  }

  // One position. base_row is the input embedding before the position code.
  // Writes the post-final-norm hidden state to h_out.
  void decode_step(DecodeStateT<T>& st, const T* base_row, T* h_out) const {
    const int d = cfg_.dim, t = st.pos;
    if (t >= cfg_.max_seq) throw ShapeError("decode: sequence exceeds max_seq");
    for (int j = 0; j < d; ++j)
      st.x[std::size_t(j)] = base_row[j] + wpe_.data()[std::size_t(t) * d + j];

    T mean, rstd;
    for (int l = 0; l < cfg_.layers; ++l) {
      const auto& L = layers_[std::size_t(l)];
      kernels::serial::layernorm_rows(st.x.data(), L.ln1_g.data(), L.ln1_b.data(),
                                      st.a.data(), &mean, &rstd, 1, d, ln_eps_);
      kernels::matmul_nt(st.a.data(), L.wq.data(), st.q.data(), 1, d, d);
      kernels::matmul_nt(st.a.data(), L.wk.data(), st.k.data(), 1, d, d);
      kernels::matmul_nt(st.a.data(), L.wv.data(), st.v.data(), 1, d, d);
      std::copy_n(st.k.data(), d, st.k_cache[std::size_t(l)].data() + std::size_t(t) * d);
      std::copy_n(st.v.data(), d, st.v_cache[std::size_t(l)].data() + std::size_t(t) * d);

      const T* kc = st.k_cache[std::size_t(l)].data();
      const T* vc = st.v_cache[std::size_t(l)].data();
      for (int h = 0; h < cfg_.heads; ++h) {
        const int c0 = h * head_dim_;
        for (int s = 0; s <= t; ++s) {
          const T* ks = kc + std::size_t(s) * d + c0;
          T dot = T(0);
          for (int j = 0; j < head_dim_; ++j) dot += st.q[std::size_t(c0 + j)] * ks[j];
          st.scores[std::size_t(s)] = dot * inv_sqrt_hd_;
        }
        kernels::serial::softmax_rows(st.scores.data(), st.probs.data(), 1, t + 1);
        for (int j = 0; j < head_dim_; ++j) st.att[std::size_t(c0 + j)] = T(0);
        for (int s = 0; s <= t; ++s) {
          const T p = st.probs[std::size_t(s)];
          const T* vs = vc + std::size_t(s) * d + c0;
          for (int j = 0; j < head_dim_; ++j) st.att[std::size_t(c0 + j)] += p * vs[j];
        }
      }
      kernels::matmul_nt(st.att.data(), L.wo.data(), st.proj.data(), 1, d, d);
      for (int j = 0; j < d; ++j) st.x[std::size_t(j)] += st.proj[std::size_t(j)];

      kernels::serial::layernorm_rows(st.x.data(), L.ln2_g.data(), L.ln2_b.data(),
                                      st.a.data(), &mean, &rstd, 1, d, ln_eps_);
      kernels::matmul_nt(st.a.data(), L.fc1.data(), st.m4.data(), 1, 4 * d, d);
      kernels::serial::gelu(st.m4.data(), st.m4.data(), std::size_t(4) * d);
      kernels::matmul_nt(st.m4.data(), L.fc2.data(), st.proj.data(), 1, d, 4 * d);
      for (int j = 0; j < d; ++j) st.x[std::size_t(j)] += st.proj[std::size_t(j)];
    }
    kernels::serial::layernorm_rows(st.x.data(), lnf_g_.data(), lnf_b_.data(), h_out,
                                    &mean, &rstd, 1, d, ln_eps_);
    ++st.pos;
  }

  void head_logits(const T* h, T* logits) const {
    kernels::matmul_nt(h, lm_head_.data(), logits, 1, cfg_.vocab, cfg_.dim);
  }

  // Hybrid decode. The mode machine guarantees every latent run has exactly K
  // vectors framed by <|lvr_start|> / <|lvr_end|>; <|lvr_end|> is always
  // force-inserted, never sampled. Hitting the budget inside a latent block
  // completes the block first and flags truncation.
  HybridTrajectoryT<T> generate(const PromptT<T>& prompt, const Vocabulary& vocab,
                                const SamplingConfig& sampling, int max_new,
                                Prng& rng, LatentSource source = LatentSource::Model,
                                const std::vector<LatentTargetBlockT<T>>* oracle_blocks =
                                    nullptr) const {
    const int d = cfg_.dim, K = cfg_.k;
    if (prompt.length() + max_new + K + 2 > cfg_.max_seq)
      throw ShapeError("generate: prompt plus budget exceeds max_seq");

    HybridTrajectoryT<T> traj;
    auto st = new_state();

    std::vector<T> h(std::size_t(d), T(0));
    // prime with the prompt, keeping only the last hidden state
    {
      const T* img = prompt.image_rows.data();
      for (int i = 0; i < prompt.image_count; ++i)
        decode_step(st, img + std::size_t(i) * d, h.data());
      std::vector<T> row(std::size_t(d), T(0));
      for (int tok : prompt.tokens) {
        check_token(tok);
        std::copy_n(wte_.data() + std::size_t(tok) * d, d, row.data());
        decode_step(st, row.data(), h.data());
      }
    }

    std::vector<T> logits(std::size_t(cfg_.vocab), T(0));
    std::vector<T> lse_row(std::size_t(cfg_.vocab), T(0));
    std::vector<T> pending;  // rows queued to feed before the next action
    pending.reserve(std::size_t(2) * d);
    int oracle_block_idx = 0;

    while (true) {
      // feed whatever the previous action appended
      for (std::size_t off = 0; off + d <= pending.size(); off += std::size_t(d))
        decode_step(st, pending.data() + off, h.data());
      pending.clear();

      if (st.mode == DecodeStateT<T>::Mode::Latent) {
        std::vector<T> z(std::size_t(d), T(0));
        switch (source) {
          case LatentSource::Model:
            std::copy_n(h.data(), d, z.data());
            break;
          case LatentSource::Zeros:
            break;  // stays zero
          case LatentSource::Oracle: {
            const int emitted = K - st.remaining;
            if (oracle_blocks &&
                oracle_block_idx < static_cast<int>(oracle_blocks->size())) {
              const auto& blk = (*oracle_blocks)[std::size_t(oracle_block_idx)];
              if (blk.dim != d || blk.k != K)
                throw ShapeError("oracle latents: block shape mismatch");
              std::copy_n(blk.vec(emitted), d, z.data());
            } else {
              std::copy_n(h.data(), d, z.data());  // past the provided blocks
            }
            break;
          }
        }
        pending.insert(pending.end(), z.begin(), z.end());
        traj.steps.push_back(HybridTrajectoryT<T>::latent_step(std::move(z)));
        --st.remaining;
        if (st.remaining == 0) {
          st.mode = DecodeStateT<T>::Mode::Text;
          if (source == LatentSource::Oracle) ++oracle_block_idx;
          traj.steps.push_back(
              HybridTrajectoryT<T>::text_step(vocab.lvr_end, T(0), /*sampled=*/false));
          const T* row = wte_.data() + std::size_t(vocab.lvr_end) * d;
          pending.insert(pending.end(), row, row + d);
          if (traj.size() >= max_new) {
            traj.truncated = true;
            break;
          }
        }
        continue;
      }

      // TEXT mode
      if (traj.size() >= max_new) {
        traj.truncated = true;
        break;
      }
      head_logits(h.data(), logits.data());
      kernels::serial::log_softmax_rows(logits.data(), lse_row.data(), 1, cfg_.vocab);
      const int tok = sample_token(logits, sampling, rng);
      traj.steps.push_back(
          HybridTrajectoryT<T>::text_step(tok, lse_row[std::size_t(tok)], true));
      if (tok == vocab.eos) break;
      const T* row = wte_.data() + std::size_t(tok) * d;
      pending.insert(pending.end(), row, row + d);
      if (tok == vocab.lvr_start && !cfg_.ntp_baseline) {
        st.mode = DecodeStateT<T>::Mode::Latent;
        st.remaining = K;
      }
    }
    return traj;
  }

 private:
  struct Layer {
    TensorT<T> ln1_g, ln1_b, wq, wk, wv, wo, ln2_g, ln2_b, fc1, fc2;
  };

  void check_token(int tok) const {
    if (tok < 0 || tok >= cfg_.vocab)
      throw ShapeError("token id " + std::to_string(tok) + " outside vocabulary");
  }

  TensorT<T> causal_mask(int S) const {
    auto m = TensorT<T>::zeros({S, S});
    const T ninf = -std::numeric_limits<T>::infinity();
    for (int i = 0; i < S; ++i)
      for (int j = i + 1; j < S; ++j) m.data()[std::size_t(i) * S + j] = ninf;
    return m;
  }

  // temperature + nucleus sampling over a logits row; greedy picks argmax
  int sample_token(const std::vector<T>& logits, const SamplingConfig& sc,
                   Prng& rng) const {
    const int V = cfg_.vocab;
    if (sc.greedy || sc.temperature <= 0.0) {
      int best = 0;
      for (int v = 1; v < V; ++v)
        if (logits[std::size_t(v)] > logits[std::size_t(best)]) best = v;
      return best;
    }
    std::vector<T> scaled(std::size_t(V), T(0));
    const T inv_t = T(1.0 / sc.temperature);
    for (int v = 0; v < V; ++v) scaled[std::size_t(v)] = logits[std::size_t(v)] * inv_t;
    std::vector<T> probs(std::size_t(V), T(0));
    kernels::serial::softmax_rows(scaled.data(), probs.data(), 1, V);

    std::vector<int> order(std::size_t(V), 0);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
      return probs[std::size_t(a)] > probs[std::size_t(b)];
    });
    double cum = 0.0;
    int keep = 0;
    for (int v = 0; v < V; ++v) {
      cum += static_cast<double>(probs[std::size_t(order[std::size_t(v)])]);
      ++keep;
      if (cum >= sc.top_p) break;
    }
    const double r = rng.uniform() * cum;
    double acc = 0.0;
    for (int i = 0; i < keep; ++i) {
      acc += static_cast<double>(probs[std::size_t(order[std::size_t(i)])]);
      if (r < acc) return order[std::size_t(i)];
    }
    return order[std::size_t(keep - 1)];
  }

  ModelConfig cfg_;
  int head_dim_ = 1;
  T inv_sqrt_hd_ = T(1);
  static constexpr T ln_eps_ = T(1e-5);

  std::vector<std::pair<std::string, TensorT<T>>> params_;
  TensorT<T> wte_, wpe_, lnf_g_, lnf_b_, lm_head_;
  std::vector<Layer> layers_;
};

using Transformer = TransformerT<float>;

}  // namespace lantern
