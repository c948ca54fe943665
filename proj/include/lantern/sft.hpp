#pragma once

#include <filesystem>
#include <fstream>
#include <numeric>
#include <string>
#include <vector>

#include "lantern/checkpoint.hpp"
#include "lantern/corpus.hpp"
#include "lantern/model.hpp"
#include "lantern/optim.hpp"
#include "lantern/vision.hpp"

namespace lantern::sft {

// Teacher-forced training sequence. Inputs mix token ids with injected rows
// (image patch features and latent targets); text_target carries the shifted
// next-token id or -1 where the position is masked out of L_text. Latent
// blocks point at the position whose hidden state regresses to target row 0.
//
// The mask excludes the prompt, latent positions and the forced <|lvr_end|>;
// <|lvr_start|> stays supervised so the model learns to open latent mode.
template <class T>
struct SupervisedSequenceT {
  std::vector<int> input_ids;    // -1 where the input row is injected
  TensorT<T> injected;           // [n_injected, dim], constant
  std::vector<int> injected_row; // per position, row in `injected` or -1
  std::vector<int> text_target;  // per position, token id or -1
  struct Block {
    int first_latent_pos = 0;    // position of latent input z^(1)
    TensorT<T> target;           // [K, dim] pooled Z_target, constant
  };
  std::vector<Block> blocks;
  int prompt_len = 0;
  std::uint64_t sample_seed = 0;
  TaskFamily family = TaskFamily::DirectAttribution;
  std::vector<int> answer;

  int length() const { return static_cast<int>(input_ids.size()); }
  int text_target_count() const {
    int n = 0;
    for (int t : text_target) n += (t >= 0);
    return n;
  }
};

namespace detail {

template <class T>
struct SeqBuilder {
  SupervisedSequenceT<T> seq;
  std::vector<T> injected_rows;
  int dim;

  explicit SeqBuilder(int d) : dim(d) {}

  void push_token(int id) {
    seq.input_ids.push_back(id);
    seq.injected_row.push_back(-1);
  }
  void push_injected(const T* row) {
    seq.input_ids.push_back(-1);
    seq.injected_row.push_back(int(injected_rows.size() / std::size_t(dim)));
    injected_rows.insert(injected_rows.end(), row, row + dim);
  }
  SupervisedSequenceT<T> finish() {
    const int n = std::max<int>(1, int(injected_rows.size() / std::size_t(dim)));
    injected_rows.resize(std::size_t(n) * dim, T(0));
    seq.injected = TensorT<T>::from({n, dim}, std::move(injected_rows));
    return std::move(seq);
  }
};

}  // namespace detail

// prompt(image patches, question) . <think> pre . <|lvr_start|> [K injected
// Z_target rows] <|lvr_end|> post ... </think> <answer> answer </answer> eos.
// ROI boxes feed only the vision chain; no coordinate ever enters the tokens.
template <class T>
SupervisedSequenceT<T> build_supervised_sequence(const SyntheticSample& sample,
                                                 const Vocabulary& vocab,
                                                 const PatchEncoderT<T>& encoder,
                                                 const ModelConfig& cfg,
                                                 PoolMode pool_mode,
                                                 bool ntp_baseline = false) {
  for (const auto& st : sample.trace)
    if (st.roi.x1 <= st.roi.x0 || st.roi.y1 <= st.roi.y0)
      throw ShapeError("trace step is missing a usable ROI");

  const auto map = encoder.encode(sample.image);
  if (map.patches() != cfg.img_tokens)
    throw ShapeError("image yields " + std::to_string(map.patches()) +
                     " patches, model expects " + std::to_string(cfg.img_tokens));

  detail::SeqBuilder<T> b(cfg.dim);
  b.seq.sample_seed = sample.seed;
  b.seq.family = sample.family;
  b.seq.answer = sample.answer;

  for (int p = 0; p < map.patches(); ++p) b.push_injected(map.values.data() + std::size_t(p) * cfg.dim);
  for (int t : sample.question) b.push_token(t);
  b.seq.prompt_len = b.seq.length();

  b.push_token(vocab.think_open);
  for (const auto& step : sample.trace) {
    for (int t : step.pre_text) b.push_token(t);
    b.push_token(vocab.lvr_start);
    if (ntp_baseline) {
      for (int i = 0; i < cfg.k; ++i) b.push_token(vocab.lvr_pad);
    } else {
      auto z = pool_to_k(extract_roi(map, step.roi, encoder.patch_size()), cfg.k, pool_mode);
      typename SupervisedSequenceT<T>::Block blk;
      blk.first_latent_pos = b.seq.length();
      blk.target = TensorT<T>::from({cfg.k, cfg.dim}, z.values);
      for (int i = 0; i < cfg.k; ++i) b.push_injected(z.vec(i));
      b.seq.blocks.push_back(std::move(blk));
    }
    b.push_token(vocab.lvr_end);
    for (int t : step.post_text) b.push_token(t);
  }
  b.push_token(vocab.think_close);
  b.push_token(vocab.answer_open);
  for (int t : sample.answer) b.push_token(t);
  b.push_token(vocab.answer_close);
  b.push_token(vocab.eos);

  auto seq = b.finish();

  // shifted text targets
  const int S = seq.length();
  seq.text_target.assign(std::size_t(S), -1);
  for (int t = 0; t + 1 < S; ++t) {
    if (t + 1 <= seq.prompt_len - 1) continue;      // next position is still prompt
    const int next_id = seq.input_ids[std::size_t(t + 1)];
    if (next_id < 0) continue;                      // next input is injected
    if (!ntp_baseline && next_id == vocab.lvr_end) continue;  // forced, not predicted
    seq.text_target[std::size_t(t)] = next_id;
  }
  return seq;
}

// Compute-matched control: the latent block becomes K <|lvr_pad|> tokens
// predicted through the LM head; no latent regression anywhere and
// <|lvr_end|> is an ordinary supervised token.
template <class T>
SupervisedSequenceT<T> build_ntp_baseline_sequence(const SyntheticSample& sample,
                                                   const Vocabulary& vocab,
                                                   const PatchEncoderT<T>& encoder,
                                                   const ModelConfig& cfg,
                                                   PoolMode pool_mode) {
  return build_supervised_sequence(sample, vocab, encoder, cfg, pool_mode, true);
}

template <class T>
std::vector<ops::RowRef<T>> sequence_input_rows(const TransformerT<T>& model,
                                                const SupervisedSequenceT<T>& seq) {
  std::vector<ops::RowRef<T>> rows;
  rows.reserve(seq.input_ids.size());
  auto wte = model.embedding_table();
  for (std::size_t p = 0; p < seq.input_ids.size(); ++p) {
    if (seq.input_ids[p] >= 0)
      rows.push_back({wte, seq.input_ids[p]});
    else
      rows.push_back({seq.injected, seq.injected_row[p]});
  }
  return rows;
}

template <class T>
struct LossParts {
  TensorT<T> total, text, latent;  // scalars on the active tape
  int text_tokens = 0;
  int latent_blocks = 0;
};

// per-sequence pieces used by the batch loss
template <class T>
struct SequenceLossTerms {
  TensorT<T> ce_sum;                   // summed masked cross-entropy
  int ce_count = 0;
  std::vector<TensorT<T>> block_losses;  // per block: (1/K) sum ||h - z||^2
};

template <class T>
SequenceLossTerms<T> sequence_loss_terms(const typename TransformerT<T>::FullOut& out,
                                         const SupervisedSequenceT<T>& seq,
                                         bool latent_per_dim_norm = false) {
  SequenceLossTerms<T> terms;
  std::vector<int> positions, targets;
  for (int t = 0; t < seq.length(); ++t) {
    if (seq.text_target[std::size_t(t)] < 0) continue;
    positions.push_back(t);
    targets.push_back(seq.text_target[std::size_t(t)]);
  }
  terms.ce_count = int(positions.size());
  if (!positions.empty()) {
    auto rows = ops::gather_rows(out.logits, positions);
    auto ls = ops::log_softmax_rows(rows);
    std::vector<int> iota(targets.size());
    std::iota(iota.begin(), iota.end(), 0);
    terms.ce_sum = ops::scale(ops::sum(ops::gather_items(ls, iota, targets)), T(-1));
  } else {
    terms.ce_sum = TensorT<T>::scalar(T(0));
  }

  for (const auto& blk : seq.blocks) {
    const int k = blk.target.dim(0);
    std::vector<int> reg_positions(std::size_t(k), 0);
    // the hidden state consuming z^(i-1) (or <|lvr_start|>) regresses to z^(i)
    std::iota(reg_positions.begin(), reg_positions.end(), blk.first_latent_pos - 1);
    auto h = ops::gather_rows(out.hidden, reg_positions);
    auto d = ops::sub(h, blk.target);
    const T denom = latent_per_dim_norm ? T(k) * T(blk.target.dim(1)) : T(k);
    terms.block_losses.push_back(ops::scale(ops::sum(ops::mul(d, d)), T(1) / denom));
  }
  return terms;
}

// L_total = L_text + gamma * L_latent over a batch of sequences.
// L_text: mean CE over all masked text targets in the batch; L_latent: mean
// of the per-block (1/K)*sum-of-squares terms over all blocks in the batch.
template <class T>
LossParts<T> hybrid_loss(const TransformerT<T>& model,
                         const std::vector<SupervisedSequenceT<T>>& batch, T gamma,
                         bool latent_per_dim_norm = false) {
  if (gamma < T(0)) throw NumericError("hybrid_loss: gamma must be >= 0");
  LossParts<T> parts;
  TensorT<T> ce_total = TensorT<T>::scalar(T(0));
  TensorT<T> lat_total = TensorT<T>::scalar(T(0));
  for (const auto& seq : batch) {
    auto out = model.forward_rows(sequence_input_rows(model, seq));
    auto terms = sequence_loss_terms(out, seq, latent_per_dim_norm);
    parts.text_tokens += terms.ce_count;
    ce_total = ops::add(ce_total, terms.ce_sum);
    for (auto& bl : terms.block_losses) {
      lat_total = ops::add(lat_total, bl);
      ++parts.latent_blocks;
    }
  }
  parts.text = parts.text_tokens > 0 ? ops::scale(ce_total, T(1) / T(parts.text_tokens))
                                     : ce_total;
  parts.latent = parts.latent_blocks > 0
                     ? ops::scale(lat_total, T(1) / T(parts.latent_blocks))
                     : lat_total;
  parts.total = ops::add(parts.text, ops::scale(parts.latent, gamma));
  return parts;
}

struct SftConfig {
  double gamma = 0.1;
  double lr = 1e-5;
  double warmup_ratio = 0.05;
  double weight_decay = 0.0;
  int epochs = 4;
  int batch = 8;
  std::uint64_t seed = 0;
  bool ntp_baseline = false;
  bool latent_per_dim_norm = false;
  int log_every = 10;
};

struct StepMetrics {
  long step = 0;
  double lr = 0, l_text = 0, l_latent = 0, l_total = 0, grad_norm = 0;
};

template <class T>
double grad_norm_of(std::vector<std::pair<std::string, TensorT<T>>>& params) {
  double s = 0;
  for (auto& [name, p] : params) {
    if (!p.has_grad()) continue;
    for (T g : p.grad_vec()) s += double(g) * double(g);
  }
  return std::sqrt(s);
}

// Epochs of hybrid loss + AdamW over pre-built sequences. Appends one CSV row
// per step; throws NumericError on NaN/inf referencing the last good
// checkpoint. Returns the metrics of the final step.
template <class T>
StepMetrics train_sft(TransformerT<T>& model,
                      std::vector<SupervisedSequenceT<T>>& sequences,
                      const SftConfig& cfg, const std::string& metrics_csv = "",
                      const std::string& ckpt_dir = "",
                      const CheckpointMeta* meta = nullptr,
                      int checkpoint_every = 0) {
  if (sequences.empty()) throw NumericError("train_sft: empty dataset");
  const long steps_per_epoch = (long(sequences.size()) + cfg.batch - 1) / cfg.batch;
  const long total_steps = steps_per_epoch * cfg.epochs;

  AdamW<T> opt(&model.parameters(), {0.9, 0.999, 1e-8, cfg.weight_decay},
               LrSchedule{cfg.lr, cfg.warmup_ratio, total_steps});

  std::ofstream csv;
  if (!metrics_csv.empty()) {
    csv.open(metrics_csv, std::ios::trunc);
    csv << "step,lr,l_text,l_latent,l_total,grad_norm\n";
  }

  std::string last_good = "(none)";
  StepMetrics last;
  std::vector<std::size_t> order(sequences.size());
  std::iota(order.begin(), order.end(), 0);

  long step = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    // deterministic per-epoch shuffle
    Prng shuffle_rng(mix_seed(cfg.seed, 0x5F0E + std::uint64_t(epoch)));
    for (std::size_t i = order.size(); i > 1; --i) {
      const std::size_t j = shuffle_rng.below(i);
      std::swap(order[i - 1], order[j]);
    }
    for (std::size_t start = 0; start < order.size(); start += std::size_t(cfg.batch)) {
      std::vector<SupervisedSequenceT<T>> batch;
      for (std::size_t i = start; i < std::min(order.size(), start + std::size_t(cfg.batch)); ++i)
        batch.push_back(sequences[order[i]]);

      Tape<T> tape;
      double l_total, l_text, l_latent;
      {
        TapeScope<T> scope(tape);
        auto parts = hybrid_loss(model, batch, T(cfg.gamma), cfg.latent_per_dim_norm);
        l_total = double(parts.total.item());
        l_text = double(parts.text.item());
        l_latent = double(parts.latent.item());
        if (!std::isfinite(l_total))
          throw NumericError("train_sft: non-finite loss at step " + std::to_string(step) +
                             "; last good checkpoint: " + last_good);
        opt.zero_grad();
        parts.total.backward();
      }
      const double gn = grad_norm_of(model.parameters());
      if (!std::isfinite(gn))
        throw NumericError("train_sft: non-finite gradient at step " + std::to_string(step) +
                           "; last good checkpoint: " + last_good);
      opt.step();
      ++step;

      last = {step, opt.last_lr(), l_text, l_latent, l_total, gn};
      if (csv.is_open() && (step % cfg.log_every == 0 || step == total_steps))
        csv << last.step << ',' << last.lr << ',' << last.l_text << ',' << last.l_latent
            << ',' << last.l_total << ',' << last.grad_norm << '\n';

      if (checkpoint_every > 0 && meta && !ckpt_dir.empty() &&
          step % checkpoint_every == 0) {
        const std::string p = ckpt_dir + "/step_" + std::to_string(step) + ".ckpt";
        save_checkpoint(p, model, *meta, &opt);
        last_good = p;
      }
    }
  }
  if (meta && !ckpt_dir.empty()) {
    const std::string p = ckpt_dir + "/final.ckpt";
    save_checkpoint(p, model, *meta, &opt);
  }
  return last;
}

}  // namespace lantern::sft
