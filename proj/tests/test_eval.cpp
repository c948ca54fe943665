#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>

#include "lantern/eval.hpp"
#include "lantern/traj_io.hpp"

using namespace lantern;

namespace {

struct Fixture {
  Vocabulary vocab = Vocabulary::build(3, 3);
  GridConfig grid{3, 3, 8, 0.5};
  PatchEncoderT<float> encoder{11, 8, 32};
  ModelConfig cfg;
  TransformerT<float> model;

  Fixture() : cfg(make_cfg(vocab.size())), model(cfg, 5) {}

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

  std::vector<SyntheticSample> split(std::uint64_t lo, std::uint64_t hi,
                                     TaskFamily fam = TaskFamily::DirectAttribution) const {
    std::vector<SyntheticSample> out;
    for (std::uint64_t s = lo; s < hi; ++s) out.push_back(generate_sample(s, fam, grid, vocab));
    return out;
  }
};

}  // namespace

TEST_CASE("untrained model shows no task knowledge: accuracy at or below chance band") {
  Fixture fx;
  const auto samples = fx.split(0, 150);
  auto res = eval::evaluate(fx.model, fx.encoder, fx.vocab, samples,
                            eval::LatentEvalMode::Free, PoolMode::Flatten1D, 40);
  const auto fam = res.families.at(TaskFamily::DirectAttribution);
  CHECK(fam.chance == doctest::Approx(0.125));
  const double sigma = std::sqrt(fam.chance * (1 - fam.chance) / fam.count);
  CHECK(fam.accuracy <= fam.chance + 3 * sigma);
}

TEST_CASE("the same checkpoint evaluates to the identical table twice") {
  Fixture fx;
  const auto samples = fx.split(10, 60);
  auto a = eval::evaluate(fx.model, fx.encoder, fx.vocab, samples,
                          eval::LatentEvalMode::Free, PoolMode::Flatten1D, 40);
  auto b = eval::evaluate(fx.model, fx.encoder, fx.vocab, samples,
                          eval::LatentEvalMode::Free, PoolMode::Flatten1D, 40);
  CHECK(a.count == b.count);
  CHECK(a.correct == b.correct);
  for (const auto& [f, fam] : a.families) {
    CHECK(b.families.at(f).correct == fam.correct);
    CHECK(b.families.at(f).count == fam.count);
  }
}

TEST_CASE("oracle and zero latent modes run and dump trajectories") {
  Fixture fx;
  const auto samples = fx.split(0, 10);
  for (auto mode : {eval::LatentEvalMode::Oracle, eval::LatentEvalMode::Zero}) {
    std::vector<eval::EvalDumpEntry<float>> dump;
    auto res = eval::evaluate(fx.model, fx.encoder, fx.vocab, samples, mode,
                              PoolMode::Flatten1D, 40, &dump);
    CHECK(res.count == 10);
    CHECK(dump.size() == 10);
  }
}

TEST_CASE("zero mode actually zeroes the latent inputs") {
  Fixture fx;
  const auto samples = fx.split(3, 4);
  std::vector<eval::EvalDumpEntry<float>> dump;
  eval::evaluate(fx.model, fx.encoder, fx.vocab, samples, eval::LatentEvalMode::Zero,
                 PoolMode::Flatten1D, 40, &dump);
  for (const auto& e : dump)
    for (const auto& s : e.trajectory.steps)
      if (s.latent)
        for (float z : s.z) CHECK(z == 0.0f);
}

TEST_CASE("split disjointness is enforced by seed intersection") {
  Fixture fx;
  const auto train = fx.split(0, 50);
  const auto eval_ok = fx.split(50, 70);
  CHECK_NOTHROW(eval::check_split_disjoint(train, eval_ok));
  const auto eval_bad = fx.split(49, 55);
  CHECK_THROWS_AS(eval::check_split_disjoint(train, eval_bad), NumericError);
}

TEST_CASE("accuracy matches a brute-force re-scoring of the dumped trajectories") {
  Fixture fx;
  const auto samples = fx.split(0, 80);
  std::vector<eval::EvalDumpEntry<float>> dump;
  auto res = eval::evaluate(fx.model, fx.encoder, fx.vocab, samples,
                            eval::LatentEvalMode::Free, PoolMode::Flatten1D, 40, &dump);

  const std::string path = "test_eval_dump.bin";
  std::vector<TrajDumpRecord> records;
  for (const auto& e : dump) records.push_back(to_dump_record(e));
  write_trajectory_dump(path, records);

  // independent scorer: walk the dumped token stream by hand
  const auto back = read_trajectory_dump(path);
  REQUIRE(back.size() == dump.size());
  int correct = 0;
  for (const auto& r : back) {
    std::vector<int> tokens;
    for (const auto& s : r.steps)
      if (!s.latent) tokens.push_back(s.token);
    std::vector<int> span;
    bool in_span = false, closed = false;
    for (int t : tokens) {
      if (t == fx.vocab.answer_close && in_span) {
        closed = true;
        break;
      }
      if (in_span) span.push_back(t);
      if (t == fx.vocab.answer_open && !in_span) in_span = true;
    }
    if (closed && !span.empty() && span == r.gold) ++correct;
  }
  CHECK(correct == res.correct);
  std::remove(path.c_str());
}

TEST_CASE("result tables include the analytic chance level per family") {
  Fixture fx;
  std::vector<SyntheticSample> samples = fx.split(0, 5);
  auto rp = fx.split(0, 5, TaskFamily::RelativePosition);
  auto ol = fx.split(0, 5, TaskFamily::ObjectLocalization);
  samples.insert(samples.end(), rp.begin(), rp.end());
  samples.insert(samples.end(), ol.begin(), ol.end());
  auto res = eval::evaluate(fx.model, fx.encoder, fx.vocab, samples,
                            eval::LatentEvalMode::Free, PoolMode::Flatten1D, 40);
  CHECK(res.families.at(TaskFamily::DirectAttribution).chance == doctest::Approx(1.0 / 8));
  CHECK(res.families.at(TaskFamily::RelativePosition).chance == doctest::Approx(1.0 / 4));
  CHECK(res.families.at(TaskFamily::ObjectLocalization).chance == doctest::Approx(1.0 / 9));
  const auto text = eval::table_text(res);
  CHECK(text.find("DirectAttribution") != std::string::npos);
  CHECK(text.find("overall") != std::string::npos);
  const auto csv = eval::table_csv(res);
  CHECK(csv.find("da,") != std::string::npos);
}
