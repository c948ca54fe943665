#pragma once
#include <type_traits>

#include <cmath>
#include <fstream>
#include <numeric>
#include <string>
#include <vector>

#include "lantern/model.hpp"
#include "lantern/optim.hpp"
#include "lantern/sft.hpp"
#include "lantern/vision.hpp"

namespace lantern::rl {

// tokens strictly inside the first <answer>..</answer> pair; empty if absent
inline std::vector<int> extract_answer(const std::vector<int>& tokens,
                                       const Vocabulary& vocab) {
  int open = -1;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (tokens[i] == vocab.answer_open) {
      open = static_cast<int>(i);
      break;
    }
  }
  if (open < 0) return {};
  std::vector<int> span;
  for (std::size_t i = std::size_t(open) + 1; i < tokens.size(); ++i) {
    if (tokens[i] == vocab.answer_close) return span;
    span.push_back(tokens[i]);
  }
  return {};  // never closed
}

struct RewardWeights {
  double acc = 1.0;
  double fmt = 1.0;
  bool partial_credit = false;  // graded format score instead of all-or-nothing
};

struct Reward {
  double total = 0, acc = 0, fmt = 0;
};

// R_acc: exact match of the answer span against gold. R_fmt: one think pair,
// at least one well-formed latent block inside it, a closed answer pair after
// it, and no stray control tokens; all-or-nothing unless partial_credit.
template <class T>
Reward compute_reward(const HybridTrajectoryT<T>& traj, const std::vector<int>& gold,
                      const Vocabulary& vocab, int k, const RewardWeights& w) {
  // token stream with step indices of text tokens
  std::vector<int> tokens;
  std::vector<int> text_steps;
  for (int i = 0; i < traj.size(); ++i) {
    const auto& s = traj.steps[std::size_t(i)];
    if (s.latent) continue;
    tokens.push_back(s.token);
    text_steps.push_back(i);
  }

  Reward r;
  const auto span = extract_answer(tokens, vocab);
  r.acc = (!span.empty() && span == gold) ? 1.0 : 0.0;

  auto count_tok = [&](int id) {
    int n = 0;
    for (int t : tokens) n += (t == id);
    return n;
  };
  auto first_step_of = [&](int id) {
    for (std::size_t i = 0; i < tokens.size(); ++i)
      if (tokens[i] == id) return text_steps[i];
    return -1;
  };

  const auto blocks = traj.latent_blocks();
  const int think_open = first_step_of(vocab.think_open);
  const int think_close = first_step_of(vocab.think_close);
  const int answer_open = first_step_of(vocab.answer_open);
  const int answer_close = first_step_of(vocab.answer_close);

  int checks = 0, passed = 0;
  auto check = [&](bool ok) {
    ++checks;
    passed += ok ? 1 : 0;
    return ok;
  };

  bool all = true;
  // one properly ordered think pair
  all &= check(count_tok(vocab.think_open) == 1 && count_tok(vocab.think_close) == 1 &&
               think_open >= 0 && think_close > think_open);
  // at least one well-formed latent block, every block inside the think span
  bool blocks_ok = !blocks.empty() &&
                   traj.block_structure_ok(k, vocab.lvr_start, vocab.lvr_end);
  if (blocks_ok && think_open >= 0 && think_close > 0) {
    for (const auto& b : blocks)
      blocks_ok &= (b.start > think_open && b.start + b.len < think_close);
  } else {
    blocks_ok = false;
  }
  all &= check(blocks_ok);
  // one closed answer pair after the think section, non-empty span
  all &= check(count_tok(vocab.answer_open) == 1 && count_tok(vocab.answer_close) == 1 &&
               answer_open > think_close && answer_close > answer_open &&
               !span.empty());
  // no stray control tokens
  bool stray = count_tok(vocab.lvr_pad) > 0 || count_tok(vocab.lvr_sep) > 0 ||
               count_tok(vocab.pad) > 0 || count_tok(vocab.img) > 0;
  const int n_blocks = static_cast<int>(blocks.size());
  stray |= count_tok(vocab.lvr_start) != n_blocks;
  stray |= count_tok(vocab.lvr_end) != n_blocks;
  // nothing after </answer> except eos
  if (answer_close >= 0) {
    bool tail_ok = true;
    bool seen_close = false;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
      if (seen_close && tokens[i] != vocab.eos) tail_ok = false;
      if (tokens[i] == vocab.answer_close) seen_close = true;
    }
    stray |= !tail_ok;
  }
  all &= check(!stray);

  r.fmt = w.partial_credit ? double(passed) / double(checks) : (all ? 1.0 : 0.0);
  r.total = w.acc * r.acc + w.fmt * r.fmt;
  return r;
}

// group-normalized advantages with population std; a flat group maps to zeros
inline std::vector<double> normalize_advantages(const std::vector<double>& rewards) {
  const int g = static_cast<int>(rewards.size());
  if (g < 2) throw NumericError("normalize_advantages: need a group of at least 2");
  double mean = 0;
  for (double r : rewards) mean += r;
  mean /= g;
  double var = 0;
  for (double r : rewards) var += (r - mean) * (r - mean);
  var /= g;
  const double sd = std::sqrt(var);
  std::vector<double> out(rewards.size(), 0.0);
  if (sd < 1e-8) return out;
  for (std::size_t i = 0; i < rewards.size(); ++i) out[i] = (rewards[i] - mean) / (sd + 1e-8);
  return out;
}

template <class T>
struct RolloutGroupT {
  int sample_index = 0;
  PromptT<T> prompt;
  std::vector<int> gold;
  std::vector<HybridTrajectoryT<T>> rollouts;
  std::vector<Reward> rewards;
  std::vector<double> advantages;
};

struct RLConfig {
  int group = 4;
  double clip_eps = 0.2;
  double kl_beta = 0.1;
  double temperature = 0.6;
  double top_p = 0.85;
  double lr = 5e-6;
  double warmup_ratio = 0.03;
  double weight_decay = 0.0;
  int updates = 50;
  int prompts_per_update = 8;
  int max_new = 48;
  RewardWeights reward;
  std::uint64_t seed = 0;

  void validate() const {
    if (group < 2) throw NumericError("rl config: G must be >= 2");
    if (clip_eps <= 0) throw NumericError("rl config: clip epsilon must be > 0");
    if (kl_beta < 0) throw NumericError("rl config: beta must be >= 0");
  }
};

// Samples G completions per prompt from a frozen snapshot, recording per-step
// logprobs and the exact latent vectors for replay, then attaches rewards and
// group-normalized advantages. Rollouts are independent; parallel over (i,g)
// with per-rollout seeds, so results do not depend on scheduling.
template <class T>
std::vector<RolloutGroupT<T>> rollout_phase(const TransformerT<T>& snapshot,
                                            const PatchEncoderT<T>& encoder,
                                            const Vocabulary& vocab,
                                            const std::vector<const SyntheticSample*>& prompts,
                                            const RLConfig& cfg, std::uint64_t phase_tag) {
  cfg.validate();
  const int n = static_cast<int>(prompts.size());
  std::vector<RolloutGroupT<T>> groups;
  groups.resize(std::size_t(n));
  for (int i = 0; i < n; ++i) {
    auto& g = groups[std::size_t(i)];
    g.sample_index = i;
    g.prompt = make_prompt(encoder.encode(prompts[std::size_t(i)]->image),
                           prompts[std::size_t(i)]->question);
    g.gold = prompts[std::size_t(i)]->answer;
    g.rollouts.resize(std::size_t(cfg.group));
    g.rewards.resize(std::size_t(cfg.group));
  }

  SamplingConfig sc{cfg.temperature, cfg.top_p, false};
  const long long total = static_cast<long long>(n) * cfg.group;
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic)
#endif
  for (long long idx = 0; idx < total; ++idx) {
    const int i = static_cast<int>(idx / cfg.group);
    const int gi = static_cast<int>(idx % cfg.group);
    auto& g = groups[std::size_t(i)];
    Prng rng(mix_seed(cfg.seed, mix_seed(phase_tag, std::uint64_t(idx))));
    g.rollouts[std::size_t(gi)] =
        snapshot.generate(g.prompt, vocab, sc, cfg.max_new, rng);
    g.rewards[std::size_t(gi)] = compute_reward(g.rollouts[std::size_t(gi)], g.gold,
                                                vocab, snapshot.config().k, cfg.reward);
  }

  for (auto& g : groups) {
    std::vector<double> rs(g.rewards.size());
    for (std::size_t j = 0; j < rs.size(); ++j) rs[j] = g.rewards[j].total;
    g.advantages = normalize_advantages(rs);
  }
  return groups;
}

struct GrpoStats {
  double objective = 0;
  double mean_ratio = 1;
  double clip_frac = 0;
  double mean_kl = 0;
  double mean_reward = 0;
  double acc_rate = 0;
  double fmt_rate = 0;
  int tokens = 0;
  double lr = 0;
};

// Pre-computed reference log-softmax rows per (group, rollout); constants in
// the update graph.
template <class T>
std::vector<std::vector<TensorT<T>>> reference_logprob_rows(
    const std::vector<RolloutGroupT<T>>& groups, const TransformerT<T>& reference) {
  PauseTape<T> pause;
  std::vector<std::vector<TensorT<T>>> rows(groups.size());
  for (std::size_t i = 0; i < groups.size(); ++i) {
    rows[i].resize(groups[i].rollouts.size());
    for (std::size_t j = 0; j < groups[i].rollouts.size(); ++j) {
      auto scored = reference.score_text_logprobs(groups[i].prompt, groups[i].rollouts[j]);
      rows[i][j] = scored.logsoftmax_rows;
    }
  }
  return rows;
}

// The per-Eq. objective over sampled text tokens: the clipped importance
// surrogate minus beta times the exact per-token KL to the reference, token-
// averaged per rollout, then averaged over the group and over prompts. One J
// per call; records onto the active tape when one is present. Latent
// positions contribute no likelihood term; their recorded vectors are
// replayed as fixed inputs.
template <class T>
TensorT<T> grpo_objective(const std::vector<RolloutGroupT<T>>& groups,
                          const TransformerT<T>& policy,
                          std::type_identity_t<const std::vector<std::vector<TensorT<T>>>*> ref_rows,
                          const RLConfig& cfg, GrpoStats* stats_out = nullptr) {
  cfg.validate();
  if (groups.empty()) throw NumericError("grpo: no rollout groups");
  for (const auto& g : groups)
    for (const auto& o : g.rollouts)
      for (const auto& s : o.steps)
        if (s.latent && s.z.empty())
          throw ShapeError("grpo: rollout is missing replay latents");
  if (cfg.kl_beta > 0 && !ref_rows)
    throw NumericError("grpo: beta > 0 needs reference log-probs");

  double sum_ratio = 0, sum_kl = 0;
  long clipped = 0, n_tokens = 0;

  auto J = TensorT<T>::scalar(T(0));
  for (std::size_t i = 0; i < groups.size(); ++i) {
    const auto& g = groups[i];
    auto group_sum = TensorT<T>::scalar(T(0));
    for (std::size_t j = 0; j < g.rollouts.size(); ++j) {
      const auto& o = g.rollouts[j];
      auto scored = policy.score_text_logprobs(g.prompt, o);
      const int n = scored.logprobs.defined() ? scored.logprobs.dim(0) : 0;
      if (n == 0) continue;

      std::vector<T> old_lp(std::size_t(n), T(0));
      for (int t = 0; t < n; ++t)
        old_lp[std::size_t(t)] = o.steps[std::size_t(scored.step_index[std::size_t(t)])].logprob;
      auto old_lp_t = TensorT<T>::from({n}, std::move(old_lp));

      auto ratio = ops::exp(ops::sub(scored.logprobs, old_lp_t));
      const T adv = T(g.advantages[j]);
      auto unclipped = ops::scale(ratio, adv);
      auto surrogate = ops::minimum(
          unclipped, ops::scale(ops::clip(ratio, T(1.0 - cfg.clip_eps),
                                          T(1.0 + cfg.clip_eps)),
                                adv));

      TensorT<T> token_terms = surrogate;
      if (cfg.kl_beta > 0) {
        auto ls = scored.logsoftmax_rows;
        auto kl = ops::row_sums(ops::mul(ops::exp(ls), ops::sub(ls, (*ref_rows)[i][j])));
        token_terms = ops::sub(surrogate, ops::scale(kl, T(cfg.kl_beta)));
        for (int t = 0; t < n; ++t) sum_kl += double(kl.data()[t]);
      }
      group_sum = ops::add(group_sum, ops::scale(ops::sum(token_terms), T(1) / T(n)));

      for (int t = 0; t < n; ++t) {
        const double rv = double(ratio.data()[t]);
        sum_ratio += rv;
        clipped += (rv < 1.0 - cfg.clip_eps || rv > 1.0 + cfg.clip_eps) ? 1 : 0;
      }
      n_tokens += n;
    }
    J = ops::add(J, ops::scale(group_sum, T(1) / T(g.rollouts.size())));
  }
  J = ops::scale(J, T(1) / T(groups.size()));

  if (stats_out) {
    stats_out->objective = double(J.item());
    stats_out->tokens = int(n_tokens);
    stats_out->mean_ratio = n_tokens ? sum_ratio / double(n_tokens) : 1.0;
    stats_out->clip_frac = n_tokens ? double(clipped) / double(n_tokens) : 0.0;
    stats_out->mean_kl = n_tokens ? sum_kl / double(n_tokens) : 0.0;
  }
  return J;
}

// One clipped-surrogate ascent step on -J. Ratios cover sampled text tokens
// only; the recorded rollout latents are replayed as fixed inputs, so
// gradients reach the parameters through every position's computation while
// the latent values themselves stay pinned. KL against the frozen reference
// is the exact per-token sum over the vocabulary.
template <class T>
GrpoStats grpo_step(const std::vector<RolloutGroupT<T>>& groups, TransformerT<T>& policy,
                    std::type_identity_t<const TransformerT<T>*> reference,
                    AdamW<T>& optimizer, const RLConfig& cfg) {
  cfg.validate();
  std::vector<std::vector<TensorT<T>>> ref_rows;
  if (cfg.kl_beta > 0) {
    if (!reference) throw NumericError("grpo_step: beta > 0 needs a reference policy");
    ref_rows = reference_logprob_rows(groups, *reference);
  }

  GrpoStats stats;
  Tape<T> tape;
  {
    TapeScope<T> scope(tape);
    auto J = grpo_objective(groups, policy, cfg.kl_beta > 0 ? &ref_rows : nullptr, cfg,
                            &stats);
    if (!std::isfinite(stats.objective))
      throw NumericError("grpo_step: non-finite objective");
    auto loss = ops::scale(J, T(-1));
    optimizer.zero_grad();
    loss.backward();
  }
  optimizer.step();
  stats.lr = optimizer.last_lr();

  double sum_r = 0, acc = 0, fmt = 0;
  long n_roll = 0;
  for (const auto& g : groups)
    for (const auto& r : g.rewards) {
      sum_r += r.total;
      acc += r.acc;
      fmt += r.fmt;
      ++n_roll;
    }
  stats.mean_reward = sum_r / double(n_roll);
  stats.acc_rate = acc / double(n_roll);
  stats.fmt_rate = fmt / double(n_roll);
  return stats;
}

// Alternating rollout/update loop starting from an SFT checkpoint; the
// reference policy is that checkpoint, frozen for the whole run. One update
// per rollout batch. Logs one CSV row per update.
template <class T>
std::vector<GrpoStats> train_rl(TransformerT<T>& policy, const TransformerT<T>& reference,
                                const PatchEncoderT<T>& encoder, const Vocabulary& vocab,
                                const std::vector<SyntheticSample>& train_samples,
                                const RLConfig& cfg, const std::string& metrics_csv = "") {
  cfg.validate();
  if (train_samples.empty()) throw NumericError("train_rl: empty prompt set");

  const long total_steps = cfg.updates;
  AdamW<T> opt(&policy.parameters(), {0.9, 0.999, 1e-8, cfg.weight_decay},
               LrSchedule{cfg.lr, cfg.warmup_ratio, total_steps});

  std::ofstream csv;
  if (!metrics_csv.empty()) {
    csv.open(metrics_csv, std::ios::trunc);
    csv << "update,mean_reward,acc_rate,fmt_rate,kl,clip_frac,lr\n";
  }

  std::vector<GrpoStats> history;
  for (int update = 0; update < cfg.updates; ++update) {
    std::vector<const SyntheticSample*> prompts;
    for (int j = 0; j < cfg.prompts_per_update; ++j) {
      const std::size_t idx =
          (std::size_t(update) * cfg.prompts_per_update + std::size_t(j)) %
          train_samples.size();
      prompts.push_back(&train_samples[idx]);
    }
    auto groups = rollout_phase(policy, encoder, vocab, prompts, cfg,
                                /*phase_tag=*/std::uint64_t(update));
    auto stats = grpo_step(groups, policy, &reference, opt, cfg);
    history.push_back(stats);
    if (csv.is_open())
      csv << update << ',' << stats.mean_reward << ',' << stats.acc_rate << ','
          << stats.fmt_rate << ',' << stats.mean_kl << ',' << stats.clip_frac << ','
          << stats.lr << '\n';
  }
  return history;
}

}  // namespace lantern::rl
