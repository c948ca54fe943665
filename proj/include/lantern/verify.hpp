#pragma once

#include <chrono>
#include <cstdio>
#include <string>
#include <vector>

#include "lantern/checkpoint.hpp"
#include "lantern/eval.hpp"
#include "lantern/gradcheck.hpp"
#include "lantern/rl.hpp"
#include "lantern/sft.hpp"

// Self-check suites behind the `verify` command and the acceptance harness.
// Every routine is parameterized by its sample count so the CLI can run a
// quick pass while the acceptance suite pins the full counts. The finite
// difference and brute-force oracles here never call the code paths they
// check.

namespace lantern::verify {

struct CheckResult {
  std::string name;
  bool pass = false;
  std::string detail;
  double seconds = 0;
};

namespace detail {

// tiny 64-bit configuration: d=16, 2 layers, K=2, |V|=64
struct TinyFixture {
  Vocabulary vocab = Vocabulary::build(2, 2, /*pad_to=*/64);
  GridConfig grid{2, 2, 8, 0.5};
  PatchEncoderT<double> encoder{11, 8, 16};
  ModelConfig cfg;
  TransformerT<double> model;

  TinyFixture() : cfg(make_cfg(vocab.size())), model(cfg, 5) {}

  static ModelConfig make_cfg(int vocab_size) {
    ModelConfig c;
    c.dim = 16;
    c.layers = 2;
    c.heads = 4;
    c.vocab = vocab_size;
    c.k = 2;
    c.max_seq = 96;
    c.img_tokens = 4;
    return c;
  }
};

// small 32-bit model over the 3x3 corpus for behavioural checks
struct SmallFixture {
  Vocabulary vocab = Vocabulary::build(3, 3);
  GridConfig grid{3, 3, 8, 0.5};
  PatchEncoderT<float> encoder{11, 8, 32};
  ModelConfig cfg;
  TransformerT<float> model;

  SmallFixture() : cfg(make_cfg(vocab.size())), model(cfg, 5) {}

  static ModelConfig make_cfg(int vocab_size) {
    ModelConfig c;
    c.dim = 32;
    c.layers = 2;
    c.heads = 4;
    c.vocab = vocab_size;
    c.k = 4;
    c.max_seq = 128;
    c.img_tokens = 9;
    return c;
  }
};

template <class F>
CheckResult timed(const std::string& name, F&& fn) {
  const auto t0 = std::chrono::steady_clock::now();
  CheckResult r = fn();
  r.name = name;
  r.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

}  // namespace detail

// analytic gradients of the hybrid SFT loss vs central finite differences
inline CheckResult sft_gradient_fidelity(int n_coords, double tol) {
  return detail::timed("sft-gradient-fidelity", [&]() {
    detail::TinyFixture fx;
    std::vector<sft::SupervisedSequenceT<double>> batch;
    batch.push_back(sft::build_supervised_sequence(
        generate_sample(1, TaskFamily::DirectAttribution, fx.grid, fx.vocab), fx.vocab,
        fx.encoder, fx.cfg, PoolMode::Flatten1D));
    batch.push_back(sft::build_supervised_sequence(
        generate_sample(2, TaskFamily::RelativePosition, fx.grid, fx.vocab), fx.vocab,
        fx.encoder, fx.cfg, PoolMode::Flatten1D));

    Tape<double> tape;
    {
      TapeScope<double> scope(tape);
      auto parts = sft::hybrid_loss(fx.model, batch, 0.1);
      parts.total.backward();
    }
    auto loss_fn = [&]() { return sft::hybrid_loss(fx.model, batch, 0.1).total.item(); };
    auto rep = check_gradients(fx.model.parameters(), loss_fn, n_coords, 77, 1e-5);
    CheckResult r;
    r.pass = rep.ok(tol);
    char buf[160];
    std::snprintf(buf, sizeof(buf), "max rel err %.3e over %d coords (tol %.0e); %s",
                  rep.max_rel_err, rep.checked, tol, rep.worst.c_str());
    r.detail = buf;
    return r;
  });
}

// analytic gradients of the GRPO objective (beta > 0) vs finite differences
inline CheckResult grpo_gradient_fidelity(int n_coords, double tol) {
  return detail::timed("grpo-gradient-fidelity", [&]() {
    detail::TinyFixture fx;
    // a slightly perturbed reference makes the KL term carry real gradients
    auto reference = fx.model.clone();
    {
      Prng noise(123);
      for (auto& [name, p] : reference.parameters())
        for (std::size_t i = 0; i < p.numel(); ++i) p.data()[i] += noise.gauss() * 0.01;
    }

    const auto s0 = generate_sample(3, TaskFamily::DirectAttribution, fx.grid, fx.vocab);
    const auto s1 = generate_sample(4, TaskFamily::DirectAttribution, fx.grid, fx.vocab);
    std::vector<const SyntheticSample*> prompts = {&s0, &s1};
    rl::RLConfig cfg;
    cfg.group = 2;
    cfg.max_new = 28;
    cfg.kl_beta = 0.1;
    cfg.seed = 17;
    auto groups = rl::rollout_phase(fx.model, fx.encoder, fx.vocab, prompts, cfg, 0);
    // spread rewards and nudge the recorded logprobs into the smooth region
    Prng jitter(55);
    for (auto& g : groups) {
      for (std::size_t j = 0; j < g.rewards.size(); ++j)
        g.rewards[j] = rl::Reward{double(j % 2), 0, 0};
      std::vector<double> rs;
      for (auto& r : g.rewards) rs.push_back(r.total);
      g.advantages = rl::normalize_advantages(rs);
      for (auto& o : g.rollouts)
        for (auto& s : o.steps)
          if (!s.latent && s.sampled) s.logprob += (jitter.uniform() - 0.5) * 0.1;
    }

    auto ref_rows = rl::reference_logprob_rows(groups, reference);
    Tape<double> tape;
    {
      TapeScope<double> scope(tape);
      auto J = rl::grpo_objective(groups, fx.model, &ref_rows, cfg);
      auto loss = ops::scale(J, -1.0);
      loss.backward();
    }
    auto loss_fn = [&]() {
      return -rl::grpo_objective(groups, fx.model, &ref_rows, cfg).item();
    };
    auto rep = check_gradients(fx.model.parameters(), loss_fn, n_coords, 99, 1e-5);
    CheckResult r;
    r.pass = rep.ok(tol);
    char buf[160];
    std::snprintf(buf, sizeof(buf), "max rel err %.3e over %d coords (tol %.0e); %s",
                  rep.max_rel_err, rep.checked, tol, rep.worst.c_str());
    r.detail = buf;
    return r;
  });
}

// sampled trajectories always satisfy TEXT* (LVR_START LATENT{K} LVR_END TEXT*)*
inline CheckResult state_machine(int n_traj) {
  return detail::timed("state-machine-soundness", [&]() {
    detail::SmallFixture fx;
    const double temps[3] = {0.0, 0.6, 1.0};
    std::vector<PromptT<float>> prompts;
    for (std::uint64_t s = 0; s < 24; ++s) {
      const auto smp = generate_sample(s, static_cast<TaskFamily>(s % 3), fx.grid, fx.vocab);
      prompts.push_back(make_prompt(fx.encoder.encode(smp.image), smp.question));
    }
    long bad = 0, with_blocks = 0;
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic) reduction(+ : bad, with_blocks)
#endif
    for (int i = 0; i < n_traj; ++i) {
      SamplingConfig sc;
      sc.temperature = temps[i % 3];
      sc.top_p = (i % 6) < 3 ? 1.0 : 0.85;
      sc.greedy = sc.temperature == 0.0;
      Prng rng(mix_seed(424242, std::uint64_t(i)));
      auto traj = fx.model.generate(prompts[std::size_t(i) % prompts.size()], fx.vocab,
                                    sc, 48, rng);
      if (!traj.block_structure_ok(fx.cfg.k, fx.vocab.lvr_start, fx.vocab.lvr_end)) ++bad;
      if (!traj.latent_blocks().empty()) ++with_blocks;
    }
    CheckResult r;
    r.pass = bad == 0 && with_blocks > 0;
    r.detail = std::to_string(n_traj) + " trajectories over T={0,0.6,1.0}, " +
               std::to_string(bad) + " violations, " + std::to_string(with_blocks) +
               " contained latent blocks";
    return r;
  });
}

// pool_to_k against brute-force group averaging, exact in 64-bit
inline CheckResult pooling_oracle(int n_cases) {
  return detail::timed("pooling-oracle", [&]() {
    Prng rng(2024);
    long mismatches = 0;
    long p_lt_k = 0;
    for (int t = 0; t < n_cases; ++t) {
      const int rows = 1 + int(rng.below(6));
      const int cols = 1 + int(rng.below(6));
      const int k = 1 + int(rng.below(40));
      const int d = 1 + int(rng.below(8));
      FeatureMapT<double> m;
      m.rows = rows;
      m.cols = cols;
      m.dim = d;
      m.values.resize(std::size_t(rows) * cols * d);
      for (auto& v : m.values) v = rng.gauss();
      const int p = rows * cols;
      p_lt_k += (p < k);

      const auto z = pool_to_k(m, k);

      // brute-force oracle: explicit group index lists, then mean
      std::vector<std::vector<int>> hold;
      if (p < k) {
        for (int i = 0; i < k; ++i) hold.push_back({std::min(i, p - 1)});
      } else {
        const int q = p / k, r = p % k;
        int start = 0;
        for (int gidx = 0; gidx < k; ++gidx) {
          const int len = gidx < r ? q + 1 : q;
          std::vector<int> ids;
          for (int i = 0; i < len; ++i) ids.push_back(start + i);
          hold.push_back(ids);
          start += len;
        }
      }
      for (int gidx = 0; gidx < k; ++gidx) {
        for (int j = 0; j < d; ++j) {
          double s = 0;
          for (int idx : hold[std::size_t(gidx)]) s += m.values[std::size_t(idx) * d + j];
          s /= double(hold[std::size_t(gidx)].size());
          if (s != z.vec(gidx)[j]) ++mismatches;
        }
      }
    }
    CheckResult r;
    r.pass = mismatches == 0 && p_lt_k > 0;
    r.detail = std::to_string(n_cases) + " random (P,K) cases, " +
               std::to_string(p_lt_k) + " with P<K, " + std::to_string(mismatches) +
               " mismatches (exact compare)";
    return r;
  });
}

// scoring with replayed latents reproduces the recorded rollout logprobs
inline CheckResult replay_consistency(int n_traj, double tol) {
  return detail::timed("replay-consistency", [&]() {
    detail::SmallFixture fx;
    std::vector<PromptT<float>> prompts;
    for (std::uint64_t s = 0; s < 16; ++s) {
      const auto smp = generate_sample(s, TaskFamily::DirectAttribution, fx.grid, fx.vocab);
      prompts.push_back(make_prompt(fx.encoder.encode(smp.image), smp.question));
    }
    SamplingConfig sc{0.6, 0.85, false};
    double worst = 0;
    long scored_tokens = 0;
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic) reduction(max : worst) reduction(+ : scored_tokens)
#endif
    for (int i = 0; i < n_traj; ++i) {
      Prng rng(mix_seed(777, std::uint64_t(i)));
      const auto& prompt = prompts[std::size_t(i) % prompts.size()];
      auto traj = fx.model.generate(prompt, fx.vocab, sc, 44, rng);
      auto scored = fx.model.score_text_logprobs(prompt, traj);
      for (int t = 0; t < scored.logprobs.dim(0); ++t) {
        const auto& step = traj.steps[std::size_t(scored.step_index[std::size_t(t)])];
        const double diff =
            std::abs(double(scored.logprobs.data()[t]) - double(step.logprob));
        worst = std::max(worst, diff);
        ++scored_tokens;
      }
    }
    CheckResult r;
    r.pass = worst <= tol && scored_tokens > 0;
    char buf[128];
    std::snprintf(buf, sizeof(buf), "%d trajectories, %ld tokens, worst |diff| %.3e (tol %.0e)",
                  n_traj, scored_tokens, worst, tol);
    r.detail = buf;
    return r;
  });
}

// GRPO identities: zero-variance no-op, unit ratios on the first step, and
// advantage invariance under reward shifts
inline CheckResult grpo_identities() {
  return detail::timed("grpo-identities", [&]() {
    detail::SmallFixture fx;
    CheckResult r;
    std::string fails;

    const auto s0 = generate_sample(1, TaskFamily::DirectAttribution, fx.grid, fx.vocab);
    const auto s1 = generate_sample(2, TaskFamily::DirectAttribution, fx.grid, fx.vocab);
    std::vector<const SyntheticSample*> prompts = {&s0, &s1};
    rl::RLConfig cfg;
    cfg.group = 4;
    cfg.max_new = 36;
    cfg.kl_beta = 0.0;
    cfg.seed = 5;

    // (a) zero-variance groups, beta=0, weight decay 0: bitwise no-op
    {
      auto groups = rl::rollout_phase(fx.model, fx.encoder, fx.vocab, prompts, cfg, 0);
      for (auto& g : groups) {
        for (auto& rw : g.rewards) rw = rl::Reward{1.0, 1.0, 0.0};
        g.advantages.assign(g.advantages.size(), 0.0);
      }
      std::vector<std::vector<float>> before;
      for (auto& [name, p] : fx.model.parameters()) before.push_back(p.vec());
      AdamW<float> opt(&fx.model.parameters(), {0.9, 0.999, 1e-8, 0.0},
                       LrSchedule{1e-4, 0.0, 10});
      rl::grpo_step(groups, fx.model, nullptr, opt, cfg);
      std::size_t i = 0;
      bool same = true;
      for (auto& [name, p] : fx.model.parameters()) same &= (p.vec() == before[i++]);
      if (!same) fails += "[zero-variance no-op] ";
    }

    // (b) first post-snapshot step: ratios 1, clip fraction 0
    {
      auto groups = rl::rollout_phase(fx.model, fx.encoder, fx.vocab, prompts, cfg, 1);
      rl::GrpoStats stats;
      rl::grpo_objective(groups, fx.model, nullptr, cfg, &stats);
      if (stats.clip_frac != 0.0 || std::abs(stats.mean_ratio - 1.0) > 1e-6)
        fails += "[unit ratios] ";
    }

    // (c) advantages invariant under constant reward shifts
    {
      const std::vector<double> base = {2, 0, 1, 0.25};
      const auto a = rl::normalize_advantages(base);
      for (double c : {-5.0, 0.5, 3.0}) {
        std::vector<double> shifted;
        for (double v : base) shifted.push_back(v + c);
        const auto b = rl::normalize_advantages(shifted);
        for (std::size_t i = 0; i < a.size(); ++i)
          if (std::abs(a[i] - b[i]) > 1e-9) fails += "[shift invariance] ";
      }
    }

    r.pass = fails.empty();
    r.detail = fails.empty() ? "no-op, unit-ratio and shift-invariance identities hold"
                             : ("failed: " + fails);
    return r;
  });
}

// checkpoint save/load round-trips bitwise and reproduces greedy decodes
inline CheckResult checkpoint_roundtrip(const std::string& tmp_path) {
  return detail::timed("checkpoint-roundtrip", [&]() {
    detail::SmallFixture fx;
    CheckpointMeta meta;
    meta.config = fx.cfg;
    meta.encoder_seed = fx.encoder.seed();
    meta.patch_size = fx.encoder.patch_size();
    meta.vocab_tokens = fx.vocab.tokens();
    save_checkpoint(tmp_path, fx.model, meta);
    auto loaded = load_checkpoint<float>(tmp_path);
    bool same = loaded.meta.vocab_tokens == fx.vocab.tokens();
    const auto& a = fx.model.parameters();
    const auto& b = loaded.model.parameters();
    same &= a.size() == b.size();
    for (std::size_t i = 0; same && i < a.size(); ++i)
      same &= a[i].second.vec() == b[i].second.vec();
    std::remove(tmp_path.c_str());
    CheckResult r;
    r.pass = same;
    r.detail = same ? "parameters and metadata identical after save/load"
                    : "round-trip mismatch";
    return r;
  });
}

// same-seed SFT runs land on identical final metrics
inline CheckResult sft_determinism(int n_samples, int epochs, double tol) {
  return detail::timed("sft-determinism", [&]() {
    auto run = [&]() {
      detail::SmallFixture fx;
      std::vector<sft::SupervisedSequenceT<float>> seqs;
      for (int s = 0; s < n_samples; ++s)
        seqs.push_back(sft::build_supervised_sequence(
            generate_sample(std::uint64_t(s), TaskFamily::DirectAttribution, fx.grid,
                            fx.vocab),
            fx.vocab, fx.encoder, fx.cfg, PoolMode::Flatten1D));
      sft::SftConfig cfg;
      cfg.epochs = epochs;
      cfg.batch = 4;
      cfg.lr = 1e-3;
      cfg.seed = 9;
      return sft::train_sft(fx.model, seqs, cfg);
    };
    const auto a = run();
    const auto b = run();
    const double diff = std::max({std::abs(a.l_total - b.l_total),
                                  std::abs(a.l_text - b.l_text),
                                  std::abs(a.l_latent - b.l_latent)});
    CheckResult r;
    r.pass = diff <= tol;
    char buf[96];
    std::snprintf(buf, sizeof(buf), "final-metric difference %.3e (tol %.0e)", diff, tol);
    r.detail = buf;
    return r;
  });
}

// quick suite behind `lantern verify`
inline std::vector<CheckResult> run_verification() {
  std::vector<CheckResult> out;
  out.push_back(sft_gradient_fidelity(40, 1e-4));
  out.push_back(grpo_gradient_fidelity(40, 1e-4));
  out.push_back(state_machine(600));
  out.push_back(pooling_oracle(300));
  out.push_back(replay_consistency(120, 1e-5));
  out.push_back(grpo_identities());
  out.push_back(checkpoint_roundtrip("verify_ckpt_tmp.bin"));
  out.push_back(sft_determinism(8, 2, 1e-6));
  return out;
}

}  // namespace lantern::verify
