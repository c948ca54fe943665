#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "lantern/gradcheck.hpp"
#include "lantern/sft.hpp"

using namespace lantern;

namespace {

struct Fixture {
  Vocabulary vocab = Vocabulary::build(3, 3);
  GridConfig grid{3, 3, 8, 0.5};
  PatchEncoderT<double> encoder{11, 8, 16};
  ModelConfig cfg;
  TransformerT<double> model;

  Fixture(int k = 2, int dim = 16, int layers = 2)
      : cfg(make_cfg(k, dim, layers, vocab.size())), model(cfg, 5) {}

  static ModelConfig make_cfg(int k, int dim, int layers, int vocab_size) {
    ModelConfig c;
    c.dim = dim;
    c.layers = layers;
    c.heads = 4;
    c.vocab = vocab_size;
    c.k = k;
    c.max_seq = 128;
    c.img_tokens = 9;
    return c;
  }

  SyntheticSample sample(std::uint64_t seed,
                         TaskFamily fam = TaskFamily::DirectAttribution) const {
    return generate_sample(seed, fam, grid, vocab);
  }

  sft::SupervisedSequenceT<double> seq(std::uint64_t seed, bool ntp = false) const {
    return sft::build_supervised_sequence(sample(seed), vocab, encoder, cfg,
                                          PoolMode::Flatten1D, ntp);
  }
};

}  // namespace

TEST_CASE("one trace step yields exactly one latent block, two steps yield two") {
  Fixture fx;
  CHECK(fx.seq(3).blocks.size() == 1);
  auto rp = sft::build_supervised_sequence(fx.sample(3, TaskFamily::RelativePosition),
                                           fx.vocab, fx.encoder, fx.cfg,
                                           PoolMode::Flatten1D);
  CHECK(rp.blocks.size() == 2);
}

TEST_CASE("token stream carries only template tokens; ROI coordinates never appear") {
  Fixture fx;
  const auto s = fx.sample(9);
  const auto seq = fx.seq(9);

  // expected stream rebuilt from the sample's template fields alone
  std::vector<int> expected(std::size_t(fx.cfg.img_tokens), -1);
  auto app = [&](const std::vector<int>& ids) {
    expected.insert(expected.end(), ids.begin(), ids.end());
  };
  app(s.question);
  expected.push_back(fx.vocab.think_open);
  for (const auto& st : s.trace) {
    app(st.pre_text);
    expected.push_back(fx.vocab.lvr_start);
    expected.insert(expected.end(), std::size_t(fx.cfg.k), -1);  // injected latents
    expected.push_back(fx.vocab.lvr_end);
    app(st.post_text);
  }
  expected.push_back(fx.vocab.think_close);
  expected.push_back(fx.vocab.answer_open);
  app(s.answer);
  expected.push_back(fx.vocab.answer_close);
  expected.push_back(fx.vocab.eos);

  CHECK(seq.input_ids == expected);
}

TEST_CASE("latent targets equal an independent encode->roi->pool recomputation") {
  Fixture fx;
  const auto s = fx.sample(21);
  const auto seq = fx.seq(21);
  const auto map = fx.encoder.encode(s.image);
  REQUIRE(seq.blocks.size() == s.trace.size());
  for (std::size_t b = 0; b < seq.blocks.size(); ++b) {
    const auto z = pool_to_k(extract_roi(map, s.trace[b].roi, fx.encoder.patch_size()),
                             fx.cfg.k, PoolMode::Flatten1D);
    REQUIRE(seq.blocks[b].target.numel() == z.values.size());
    for (std::size_t i = 0; i < z.values.size(); ++i)
      CHECK(seq.blocks[b].target.data()[i] == z.values[i]);
  }
}

TEST_CASE("mask: prompt, latent positions and lvr_end are excluded; lvr_start is kept") {
  Fixture fx;
  const auto seq = fx.seq(4);
  for (int t = 0; t + 1 < seq.prompt_len; ++t) CHECK(seq.text_target[std::size_t(t)] == -1);
  int lvr_start_targets = 0, lvr_end_targets = 0;
  for (int t = 0; t < seq.length(); ++t) {
    const int tgt = seq.text_target[std::size_t(t)];
    if (tgt == fx.vocab.lvr_start) ++lvr_start_targets;
    if (tgt == fx.vocab.lvr_end) ++lvr_end_targets;
    if (t + 1 < seq.length() && seq.input_ids[std::size_t(t + 1)] == -1 &&
        t + 1 > seq.prompt_len)
      CHECK(tgt == -1);  // next input is an injected latent
  }
  CHECK(lvr_start_targets == 1);
  CHECK(lvr_end_targets == 0);
}

TEST_CASE("hybrid loss: latent term vanishes when targets equal the hidden states") {
  Fixture fx;
  auto seq = fx.seq(2);
  // regression targets are separate from the injected inputs, so pinning them
  // to the observed hidden rows leaves the forward pass untouched
  auto out = fx.model.forward_rows(sft::sequence_input_rows(fx.model, seq));
  for (auto& blk : seq.blocks) {
    const int k = blk.target.dim(0);
    for (int i = 0; i < k; ++i) {
      const int pos = blk.first_latent_pos - 1 + i;
      std::copy_n(out.hidden.data() + std::size_t(pos) * fx.cfg.dim, fx.cfg.dim,
                  blk.target.data() + std::size_t(i) * fx.cfg.dim);
    }
  }
  auto terms = sft::sequence_loss_terms(out, seq);
  REQUIRE(!terms.block_losses.empty());
  for (const auto& bl : terms.block_losses) CHECK(bl.item() == 0.0);
}

TEST_CASE("hand-computed block loss: K=2 with unit and double offsets gives 2.5") {
  Fixture fx;  // K = 2
  auto seq = fx.seq(6);
  REQUIRE(seq.blocks.size() == 1);
  auto out = fx.model.forward_rows(sft::sequence_input_rows(fx.model, seq));
  auto& blk = seq.blocks[0];
  // target = h - delta with ||delta_0||^2 = 1 and ||delta_1||^2 = 4
  for (int i = 0; i < 2; ++i) {
    const int pos = blk.first_latent_pos - 1 + i;
    std::copy_n(out.hidden.data() + std::size_t(pos) * fx.cfg.dim, fx.cfg.dim,
                blk.target.data() + std::size_t(i) * fx.cfg.dim);
  }
  blk.target.data()[0] -= 1.0;                     // row 0, coord 0
  blk.target.data()[std::size_t(fx.cfg.dim)] -= 2.0;  // row 1, coord 0
  auto terms = sft::sequence_loss_terms(out, seq);
  REQUIRE(terms.block_losses.size() == 1);
  CHECK(terms.block_losses[0].item() == doctest::Approx(2.5).epsilon(1e-12));
}

TEST_CASE("negative gamma is rejected") {
  Fixture fx;
  std::vector<sft::SupervisedSequenceT<double>> batch = {fx.seq(1)};
  CHECK_THROWS_AS(sft::hybrid_loss(fx.model, batch, -0.1), NumericError);
}

TEST_CASE("loss decomposition L_total - L_text - gamma*L_latent is exactly zero") {
  Fixture fx;
  std::vector<sft::SupervisedSequenceT<double>> batch = {fx.seq(1), fx.seq(2)};
  Tape<double> tape;
  TapeScope<double> scope(tape);
  auto parts = sft::hybrid_loss(fx.model, batch, 0.1);
  // exact when recomposed with the same grouping the loss used
  CHECK(parts.total.item() == parts.text.item() + 0.1 * parts.latent.item());
}

TEST_CASE("perturbing text labels leaves L_latent unchanged and vice versa") {
  Fixture fx;
  auto seq = fx.seq(8);

  auto eval_parts = [&](const sft::SupervisedSequenceT<double>& s) {
    std::vector<sft::SupervisedSequenceT<double>> batch = {s};
    auto parts = sft::hybrid_loss(fx.model, batch, 0.1);
    return std::pair<double, double>{parts.text.item(), parts.latent.item()};
  };

  const auto base = eval_parts(seq);

  // swap one text label for another valid token
  auto text_mutant = seq;
  text_mutant.text_target = seq.text_target;
  for (auto& t : text_mutant.text_target)
    if (t == fx.vocab.think_close) t = fx.vocab.id("now");
  const auto after_text = eval_parts(text_mutant);
  CHECK(after_text.second == base.second);
  CHECK(after_text.first != base.first);

  // perturb a latent target coordinate with inputs fixed: latent loss moves,
  // text loss does not
  auto lat_mutant = fx.seq(8);
  lat_mutant.blocks[0].target.data()[3] += 0.75;
  const auto after_lat = eval_parts(lat_mutant);
  CHECK(after_lat.second != base.second);
  CHECK(after_lat.first == base.first);
}

TEST_CASE("logits at latent positions are never consumed by the loss") {
  Fixture fx;
  auto seq = fx.seq(12);
  auto rows = sft::sequence_input_rows(fx.model, seq);

  auto out1 = fx.model.forward_rows(rows);
  auto t1 = sft::sequence_loss_terms(out1, seq);
  const double base_ce = t1.ce_sum.item();

  auto out2 = fx.model.forward_rows(rows);
  // adversarial garbage into every masked-position logits row
  for (int t = 0; t < seq.length(); ++t) {
    if (seq.text_target[std::size_t(t)] >= 0) continue;
    for (int vtok = 0; vtok < fx.vocab.size(); ++vtok)
      out2.logits.data()[std::size_t(t) * fx.vocab.size() + vtok] += 1e6;
  }
  auto t2 = sft::sequence_loss_terms(out2, seq);
  CHECK(t2.ce_sum.item() == base_ce);
}

TEST_CASE("gamma=0 gradients equal the text-only gradients bitwise") {
  Fixture fx;
  auto grads_with_gamma = [&](double gamma, bool strip_blocks) {
    TransformerT<double> m(fx.cfg, 5);
    auto seq = fx.seq(3);
    if (strip_blocks) seq.blocks.clear();
    std::vector<sft::SupervisedSequenceT<double>> batch = {seq};
    Tape<double> tape;
    TapeScope<double> scope(tape);
    auto parts = sft::hybrid_loss(m, batch, gamma);
    parts.total.backward();
    std::vector<double> flat;
    for (auto& [name, p] : m.parameters())
      flat.insert(flat.end(), p.grad_vec().begin(), p.grad_vec().end());
    return flat;
  };
  const auto a = grads_with_gamma(0.0, false);
  const auto b = grads_with_gamma(0.0, true);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
}

TEST_CASE("hybrid loss gradients match finite differences on the tiny config") {
  Fixture fx(2, 16, 2);
  std::vector<sft::SupervisedSequenceT<double>> batch = {fx.seq(1)};
  auto loss_fn = [&]() {
    return sft::hybrid_loss(fx.model, batch, 0.1).total.item();
  };
  Tape<double> tape;
  {
    TapeScope<double> scope(tape);
    auto parts = sft::hybrid_loss(fx.model, batch, 0.1);
    parts.total.backward();
  }
  auto rep = check_gradients(fx.model.parameters(), loss_fn, 60, 77, 1e-5);
  INFO(rep.worst);
  CHECK(rep.max_rel_err < 1e-4);
}

TEST_CASE("encoder stays frozen through training") {
  Fixture fx;
  const auto fp_before = fx.encoder.fingerprint();
  std::vector<sft::SupervisedSequenceT<double>> seqs;
  for (std::uint64_t s = 0; s < 4; ++s) seqs.push_back(fx.seq(s));
  sft::SftConfig cfg;
  cfg.epochs = 2;
  cfg.batch = 2;
  cfg.lr = 1e-3;
  sft::train_sft(fx.model, seqs, cfg);
  CHECK(fx.encoder.fingerprint() == fp_before);
}

TEST_CASE("ntp baseline: compute-matched length, pads through the head, no latents") {
  Fixture fx;
  const auto latent_seq = fx.seq(5, false);
  const auto ntp_seq = fx.seq(5, true);
  CHECK(ntp_seq.length() == latent_seq.length());
  CHECK(ntp_seq.blocks.empty());
  // the pad tokens and lvr_end are ordinary supervised targets
  int pad_targets = 0, end_targets = 0;
  for (int t : ntp_seq.text_target) {
    pad_targets += (t == fx.vocab.lvr_pad);
    end_targets += (t == fx.vocab.lvr_end);
  }
  CHECK(pad_targets == fx.cfg.k);
  CHECK(end_targets == 1);
  // no injected rows outside the image prompt
  for (int t = ntp_seq.prompt_len; t < ntp_seq.length(); ++t)
    CHECK(ntp_seq.input_ids[std::size_t(t)] >= 0);
}

TEST_CASE("overfit oracle: one sample memorizes to a near-zero text loss") {
  Fixture fx(2, 16, 2);
  std::vector<sft::SupervisedSequenceT<double>> seqs = {fx.seq(7)};
  sft::SftConfig cfg;
  cfg.epochs = 500;
  cfg.batch = 1;
  cfg.lr = 5e-3;
  cfg.warmup_ratio = 0.05;
  cfg.gamma = 0.1;
  cfg.log_every = 5;

  // capture the loss trace through the csv
  const std::string csv = "test_sft_overfit.csv";
  auto last = sft::train_sft(fx.model, seqs, cfg, csv);
  CHECK(last.l_text < 0.05);

  std::ifstream in(csv);
  std::string line;
  std::getline(in, line);  // header
  std::vector<double> totals;
  while (std::getline(in, line)) {
    const auto p1 = line.find(',');
    const auto p4 = line.rfind(',');
    (void)p1;
    (void)p4;
    // columns: step,lr,l_text,l_latent,l_total,grad_norm
    std::vector<std::string> cols;
    std::size_t start = 0;
    for (std::size_t pos = line.find(','); pos != std::string::npos;
         pos = line.find(',', start)) {
      cols.push_back(line.substr(start, pos - start));
      start = pos + 1;
    }
    cols.push_back(line.substr(start));
    totals.push_back(std::stod(cols[4]));
  }
  REQUIRE(totals.size() > 10);
  // L_total keeps an irreducible gamma*L_latent floor; the decrease and the
  // monotone tail are still visible on it
  CHECK(totals.back() < 0.25 * totals.front());
  int drops = 0, moves = 0;
  for (std::size_t i = totals.size() / 4; i + 1 < totals.size(); ++i) {
    ++moves;
    drops += (totals[i + 1] <= totals[i] + 1e-9) ? 1 : 0;
  }
  CHECK(double(drops) / moves > 0.9);
  std::remove(csv.c_str());
}
