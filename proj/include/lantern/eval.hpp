#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

#include "lantern/corpus.hpp"
#include "lantern/model.hpp"
#include "lantern/rl.hpp"
#include "lantern/vision.hpp"

namespace lantern::eval {

enum class LatentEvalMode { Free, Oracle, Zero };

inline const char* mode_name(LatentEvalMode m) {
  switch (m) {
    case LatentEvalMode::Free: return "free";
    case LatentEvalMode::Oracle: return "oracle";
    case LatentEvalMode::Zero: return "zero";
  }
  return "?";
}

struct FamilyResult {
  int count = 0;
  int correct = 0;
  double accuracy = 0;
  double chance = 0;
};

struct EvalResult {
  std::map<TaskFamily, FamilyResult> families;
  int count = 0;
  int correct = 0;
  double accuracy = 0;

  double family_accuracy(TaskFamily f) const {
    auto it = families.find(f);
    return it == families.end() ? 0.0 : it->second.accuracy;
  }
};

template <class T>
struct EvalDumpEntry {
  std::uint64_t seed = 0;
  TaskFamily family = TaskFamily::DirectAttribution;
  std::vector<int> question, gold;
  HybridTrajectoryT<T> trajectory;
  rl::Reward reward;  // acc carries the per-sample correctness
};

// Greedy decoding, exact-match accuracy per family plus the analytic chance
// level. Oracle mode feeds the ground-truth pooled targets at latent inputs;
// Zero feeds zero vectors. Deterministic; parallel across samples.
template <class T>
EvalResult evaluate(const TransformerT<T>& model, const PatchEncoderT<T>& encoder,
                    const Vocabulary& vocab, const std::vector<SyntheticSample>& samples,
                    LatentEvalMode mode, PoolMode pool_mode, int max_new,
                    std::vector<EvalDumpEntry<T>>* dump = nullptr) {
  const int n = static_cast<int>(samples.size());
  std::vector<char> ok(std::size_t(n), 0);
  std::vector<EvalDumpEntry<T>> entries(dump ? std::size_t(n) : 0);

  SamplingConfig greedy;
  greedy.greedy = true;

#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic)
#endif
  for (int i = 0; i < n; ++i) {
    const auto& sample = samples[std::size_t(i)];
    const auto prompt = make_prompt(encoder.encode(sample.image), sample.question);
    Prng rng(0);  // unused under greedy decoding

    LatentSource source = LatentSource::Model;
    std::vector<LatentTargetBlockT<T>> oracle;
    if (mode == LatentEvalMode::Zero) source = LatentSource::Zeros;
    if (mode == LatentEvalMode::Oracle) {
      source = LatentSource::Oracle;
      oracle = latent_targets(encoder, sample, model.config().k, pool_mode);
    }
    auto traj = model.generate(prompt, vocab, greedy, max_new, rng, source,
                               oracle.empty() ? nullptr : &oracle);
    const auto span = rl::extract_answer(traj.text_tokens(), vocab);
    ok[std::size_t(i)] = (!span.empty() && span == sample.answer) ? 1 : 0;
    if (dump) {
      auto& e = entries[std::size_t(i)];
      e.seed = sample.seed;
      e.family = sample.family;
      e.question = sample.question;
      e.gold = sample.answer;
      e.reward.acc = ok[std::size_t(i)];
      e.trajectory = std::move(traj);
    }
  }

  EvalResult res;
  for (int i = 0; i < n; ++i) {
    const auto& sample = samples[std::size_t(i)];
    auto& fam = res.families[sample.family];
    fam.count += 1;
    fam.correct += ok[std::size_t(i)];
    ++res.count;
    res.correct += ok[std::size_t(i)];
  }
  for (auto& [f, fam] : res.families) {
    fam.accuracy = fam.count ? double(fam.correct) / fam.count : 0.0;
    GridConfig gc;
    for (const auto& s : samples) {
      if (s.family == f) {
        gc = GridConfig{s.image.cell_rows, s.image.cell_cols, s.image.cell_px, 0.5};
        break;
      }
    }
    fam.chance = chance_accuracy(f, gc);
  }
  res.accuracy = res.count ? double(res.correct) / res.count : 0.0;
  if (dump) *dump = std::move(entries);
  return res;
}

// train/eval splits must be disjoint by construction; callers assert this
inline void check_split_disjoint(const std::vector<SyntheticSample>& train,
                                 const std::vector<SyntheticSample>& eval_split) {
  std::set<std::uint64_t> seeds;
  for (const auto& s : train) seeds.insert(s.seed);
  for (const auto& s : eval_split)
    if (seeds.count(s.seed))
      throw NumericError("train/eval split overlap: seed " + std::to_string(s.seed) +
                         " appears in both");
}

inline std::string table_text(const EvalResult& r) {
  std::string out = "family                count  correct  accuracy  chance\n";
  char line[128];
  for (const auto& [f, fam] : r.families) {
    std::snprintf(line, sizeof(line), "%-20s %6d %8d %9.4f %7.4f\n", family_name(f),
                  fam.count, fam.correct, fam.accuracy, fam.chance);
    out += line;
  }
  std::snprintf(line, sizeof(line), "%-20s %6d %8d %9.4f\n", "overall", r.count,
                r.correct, r.accuracy);
  out += line;
  return out;
}

inline std::string table_csv(const EvalResult& r) {
  std::string out = "family,count,correct,accuracy,chance\n";
  char line[128];
  for (const auto& [f, fam] : r.families) {
    std::snprintf(line, sizeof(line), "%s,%d,%d,%.6f,%.6f\n", family_tag(f), fam.count,
                  fam.correct, fam.accuracy, fam.chance);
    out += line;
  }
  std::snprintf(line, sizeof(line), "overall,%d,%d,%.6f,\n", r.count, r.correct,
                r.accuracy);
  out += line;
  return out;
}

}  // namespace lantern::eval
