#pragma once

#include <vector>

#include "lantern/tensor.hpp"

namespace lantern {

// Hybrid generation record: discrete token steps interleaved with continuous
// latent steps. For a latent step, z is the vector that was fed back as the
// next input embedding (the model's own hidden state in free-running decode,
// or the injected vector in oracle/zero modes).
template <class T>
struct HybridTrajectoryT {
  struct Step {
    bool latent = false;
    int token = -1;      // text steps
    T logprob = T(0);    // log pi(token | ctx), present when sampled
    bool sampled = false;  // false for the forced <|lvr_end|>
    std::vector<T> z;    // latent steps, dim d
  };

  std::vector<Step> steps;
  bool truncated = false;

  static Step text_step(int token, T logprob, bool sampled) {
    Step s;
    s.token = token;
    s.logprob = logprob;
    s.sampled = sampled;
    return s;
  }
  static Step latent_step(std::vector<T> z) {
    Step s;
    s.latent = true;
    s.z = std::move(z);
    return s;
  }

  int size() const { return static_cast<int>(steps.size()); }

  std::vector<int> text_tokens() const {
    std::vector<int> out;
    for (const auto& s : steps)
      if (!s.latent) out.push_back(s.token);
    return out;
  }

  int sampled_text_count() const {
    int n = 0;
    for (const auto& s : steps)
      if (!s.latent && s.sampled) ++n;
    return n;
  }

  struct Block {
    int start = 0;  // step index of the first latent in the run
    int len = 0;
  };

  std::vector<Block> latent_blocks() const {
    std::vector<Block> blocks;
    int i = 0;
    const int n = size();
    while (i < n) {
      if (steps[std::size_t(i)].latent) {
        Block b{i, 0};
        while (i < n && steps[std::size_t(i)].latent) {
          ++b.len;
          ++i;
        }
        blocks.push_back(b);
      } else {
        ++i;
      }
    }
    return blocks;
  }

  // the mode-machine invariant: TEXT* (LVR_START LATENT{K} LVR_END TEXT*)*
  bool block_structure_ok(int k, int lvr_start_id, int lvr_end_id) const {
    for (const auto& b : latent_blocks()) {
      if (b.len != k) return false;
      const int before = b.start - 1;
      const int after = b.start + b.len;
      if (before < 0 || steps[std::size_t(before)].latent ||
          steps[std::size_t(before)].token != lvr_start_id)
        return false;
      if (after >= size() || steps[std::size_t(after)].latent ||
          steps[std::size_t(after)].token != lvr_end_id)
        return false;
    }
    return true;
  }
};

using HybridTrajectory = HybridTrajectoryT<float>;

}  // namespace lantern
