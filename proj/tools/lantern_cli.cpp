// lantern: synthetic grid visual-QA, hybrid latent/text transformer training
// (SFT + GRPO), evaluation and inspection tools.

#include <CLI11.hpp>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "lantern/checkpoint.hpp"
#include "lantern/config.hpp"
#include "lantern/corpus.hpp"
#include "lantern/eval.hpp"
#include "lantern/rl.hpp"
#include "lantern/sft.hpp"
#include "lantern/traj_io.hpp"
#include "lantern/verify.hpp"

namespace fs = std::filesystem;
using namespace lantern;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitNumeric = 3;
constexpr int kExitVerify = 4;

struct CliState {
  RunConfig cfg;
  std::string config_path;
  std::vector<std::string> overrides;
};

void apply_config(CliState& st) {
  if (!st.config_path.empty()) load_config_file(st.config_path, st.cfg);
  for (const auto& o : st.overrides) apply_config_override(o, st.cfg);
}

PoolMode pool_mode_of(const RunConfig& cfg) {
  if (cfg.vision_pool_mode == "flatten1d") return PoolMode::Flatten1D;
  if (cfg.vision_pool_mode == "adaptive2d") return PoolMode::Adaptive2D;
  throw ConfigError("config: vision.pool_mode must be flatten1d or adaptive2d, got '" +
                    cfg.vision_pool_mode + "'");
}

void write_run_artifacts(const std::string& outdir, const RunConfig& cfg) {
  fs::create_directories(outdir);
  std::ofstream frozen(outdir + "/config.frozen.cfg");
  frozen << dump_config(cfg);
  std::ofstream info(outdir + "/run_info.txt");
  info << "build_id " << LANTERN_BUILD_ID << "\n";
}

GridConfig grid_of(const RunConfig& cfg) {
  return GridConfig{cfg.data_rows, cfg.data_cols, cfg.data_cell_px, cfg.data_occupancy};
}

// grid geometry of a dataset, taken from its first record
GridConfig grid_of_samples(const std::vector<SyntheticSample>& samples) {
  if (samples.empty()) throw ConfigError("dataset is empty");
  const auto& img = samples.front().image;
  return GridConfig{img.cell_rows, img.cell_cols, img.cell_px, 0.5};
}

ModelConfig model_config_for(const RunConfig& cfg, const GridConfig& grid, int vocab) {
  if ((grid.rows * grid.cell_px) % cfg.vision_patch_size != 0 ||
      (grid.cols * grid.cell_px) % cfg.vision_patch_size != 0)
    throw ConfigError("config: patch size does not divide the image dims");
  ModelConfig mc;
  mc.dim = cfg.model_dim;
  mc.layers = cfg.model_layers;
  mc.heads = cfg.model_heads;
  mc.vocab = vocab;
  mc.k = cfg.model_k;
  mc.max_seq = cfg.model_max_seq;
  mc.img_tokens = (grid.rows * grid.cell_px / cfg.vision_patch_size) *
                  (grid.cols * grid.cell_px / cfg.vision_patch_size);
  mc.validate();
  return mc;
}

std::vector<TaskFamily> parse_families(const std::string& csv) {
  std::vector<TaskFamily> out;
  std::string tok;
  std::istringstream in(csv);
  while (std::getline(in, tok, ',')) {
    if (!tok.empty()) out.push_back(family_from_tag(tok));
  }
  if (out.empty()) throw ConfigError("no task families given (expected e.g. da,rp,ol)");
  return out;
}

int cmd_gen_data(const CliState& state, const std::string& out_path) {
  const auto& cfg = state.cfg;
  const auto families = parse_families(cfg.data_families);
  const auto grid = grid_of(cfg);
  const auto vocab = Vocabulary::build(grid.rows, grid.cols);

  std::vector<SyntheticSample> samples(std::size_t(cfg.data_count));
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic)
#endif
  for (int i = 0; i < cfg.data_count; ++i) {
    const auto fam = families[std::size_t(i) % families.size()];
    samples[std::size_t(i)] =
        generate_sample(cfg.data_seed + std::uint64_t(i), fam, grid, vocab);
  }
  write_dataset(samples, out_path);
  std::cout << "wrote " << samples.size() << " samples to " << out_path << "\n";
  return kExitOk;
}

struct LoadedRun {
  Vocabulary vocab;
  GridConfig grid;
  std::vector<SyntheticSample> train, eval_split;
};

LoadedRun load_data(const std::string& data_path, const std::string& eval_path) {
  LoadedRun run{Vocabulary::build(1, 1), {}, {}, {}};
  run.train = read_dataset(data_path);
  run.grid = grid_of_samples(run.train);
  run.vocab = Vocabulary::build(run.grid.rows, run.grid.cols);
  if (!eval_path.empty()) {
    run.eval_split = read_dataset(eval_path);
    eval::check_split_disjoint(run.train, run.eval_split);
  }
  return run;
}

void print_eval(const eval::EvalResult& res, const std::string& header) {
  std::cout << header << "\n" << eval::table_text(res);
}

int cmd_train_sft(const CliState& state, const std::string& data_path,
                  const std::string& eval_path, const std::string& outdir, bool ntp) {
  const auto& cfg = state.cfg;
  auto run = load_data(data_path, eval_path);
  const auto pool = pool_mode_of(cfg);
  const auto mc = model_config_for(cfg, run.grid, run.vocab.size());

  PatchEncoderT<float> encoder(cfg.vision_encoder_seed, cfg.vision_patch_size, mc.dim);
  TransformerT<float> model(mc, cfg.model_seed);
  if (ntp) model.mutable_config().ntp_baseline = true;

  write_run_artifacts(outdir, cfg);

  std::vector<sft::SupervisedSequenceT<float>> seqs(run.train.size());
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic)
#endif
  for (long i = 0; i < long(run.train.size()); ++i)
    seqs[std::size_t(i)] = sft::build_supervised_sequence(
        run.train[std::size_t(i)], run.vocab, encoder, model.config(), pool, ntp);

  sft::SftConfig tc;
  tc.gamma = cfg.sft_gamma;
  tc.lr = cfg.sft_lr;
  tc.warmup_ratio = cfg.sft_warmup_ratio;
  tc.weight_decay = cfg.sft_weight_decay;
  tc.epochs = cfg.sft_epochs;
  tc.batch = cfg.sft_batch;
  tc.seed = cfg.sft_seed;
  tc.ntp_baseline = ntp;
  tc.latent_per_dim_norm = cfg.sft_latent_per_dim_norm;
  tc.log_every = cfg.sft_log_every;

  CheckpointMeta meta;
  meta.config = model.config();
  meta.pool_mode = pool;
  meta.encoder_seed = cfg.vision_encoder_seed;
  meta.patch_size = cfg.vision_patch_size;
  meta.vocab_tokens = run.vocab.tokens();

  const auto last = sft::train_sft(model, seqs, tc, outdir + "/metrics.csv", outdir,
                                   &meta, /*checkpoint_every=*/0);
  std::cout << "final step " << last.step << ": L_total " << last.l_total << " (L_text "
            << last.l_text << ", L_latent " << last.l_latent << ")\n";
  std::cout << "checkpoint: " << outdir << "/final.ckpt\n";

  if (!run.eval_split.empty()) {
    auto res = eval::evaluate(model, encoder, run.vocab, run.eval_split,
                              eval::LatentEvalMode::Free, pool, cfg.eval_max_new);
    print_eval(res, "held-out evaluation:");
    std::ofstream csv(outdir + "/eval.csv");
    csv << eval::table_csv(res);
  }
  return kExitOk;
}

int cmd_train_rl(const CliState& state, const std::string& ckpt_path,
                 const std::string& data_path, const std::string& eval_path,
                 const std::string& outdir, const std::string& rollout_dump) {
  const auto& cfg = state.cfg;
  auto loaded = load_checkpoint<float>(ckpt_path);
  auto vocab = Vocabulary::from_tokens(loaded.meta.vocab_tokens);
  PatchEncoderT<float> encoder(loaded.meta.encoder_seed, loaded.meta.patch_size,
                               loaded.meta.config.dim);
  auto run = load_data(data_path, eval_path);
  if (vocab.size() != run.vocab.size())
    throw ConfigError("checkpoint vocabulary does not match the dataset grid");

  write_run_artifacts(outdir, cfg);

  auto policy = loaded.model.clone();
  const auto reference = loaded.model.clone();

  rl::RLConfig rc;
  rc.group = cfg.rl_group;
  rc.clip_eps = cfg.rl_clip_eps;
  rc.kl_beta = cfg.rl_kl_beta;
  rc.temperature = cfg.rl_temperature;
  rc.top_p = cfg.rl_top_p;
  rc.lr = cfg.rl_lr;
  rc.warmup_ratio = cfg.rl_warmup_ratio;
  rc.weight_decay = cfg.rl_weight_decay;
  rc.updates = cfg.rl_updates;
  rc.prompts_per_update = cfg.rl_prompts_per_update;
  rc.max_new = cfg.rl_max_new;
  rc.reward.acc = cfg.rl_w_acc;
  rc.reward.fmt = cfg.rl_w_fmt;
  rc.reward.partial_credit = cfg.rl_format_partial_credit;
  rc.seed = cfg.rl_seed;

  auto history =
      rl::train_rl(policy, reference, encoder, vocab, run.train, rc, outdir + "/metrics.csv");
  if (!history.empty()) {
    const auto& h = history.back();
    std::cout << "final update: mean_reward " << h.mean_reward << ", acc_rate "
              << h.acc_rate << ", fmt_rate " << h.fmt_rate << ", kl " << h.mean_kl
              << "\n";
  }

  CheckpointMeta meta = loaded.meta;
  save_checkpoint(outdir + "/final.ckpt", policy, meta);
  std::cout << "checkpoint: " << outdir << "/final.ckpt\n";

  if (!rollout_dump.empty()) {
    // one final greedy pass dumped for inspection
    std::vector<eval::EvalDumpEntry<float>> dump;
    eval::evaluate(policy, encoder, vocab, run.train, eval::LatentEvalMode::Free,
                   loaded.meta.pool_mode, cfg.rl_max_new, &dump);
    std::vector<TrajDumpRecord> records;
    for (const auto& e : dump) records.push_back(to_dump_record(e));
    write_trajectory_dump(rollout_dump, records);
  }

  if (!run.eval_split.empty()) {
    auto res = eval::evaluate(policy, encoder, vocab, run.eval_split,
                              eval::LatentEvalMode::Free, loaded.meta.pool_mode,
                              cfg.eval_max_new);
    print_eval(res, "held-out evaluation:");
    std::ofstream csv(outdir + "/eval.csv");
    csv << eval::table_csv(res);
  }
  return kExitOk;
}

int cmd_eval(const CliState& state, const std::string& ckpt_path,
             const std::string& data_path, const std::string& mode_name,
             const std::string& csv_path, const std::string& dump_path) {
  const auto& cfg = state.cfg;
  auto loaded = load_checkpoint<float>(ckpt_path);
  auto vocab = Vocabulary::from_tokens(loaded.meta.vocab_tokens);
  PatchEncoderT<float> encoder(loaded.meta.encoder_seed, loaded.meta.patch_size,
                               loaded.meta.config.dim);
  auto samples = read_dataset(data_path);

  eval::LatentEvalMode mode;
  if (mode_name == "free")
    mode = eval::LatentEvalMode::Free;
  else if (mode_name == "oracle")
    mode = eval::LatentEvalMode::Oracle;
  else if (mode_name == "zero")
    mode = eval::LatentEvalMode::Zero;
  else
    throw ConfigError("eval mode must be free, oracle or zero; got '" + mode_name + "'");

  std::vector<eval::EvalDumpEntry<float>> dump;
  auto res = eval::evaluate(loaded.model, encoder, vocab, samples, mode,
                            loaded.meta.pool_mode, cfg.eval_max_new,
                            dump_path.empty() ? nullptr : &dump);
  print_eval(res, std::string("evaluation (latent mode: ") + mode_name + "):");
  if (!csv_path.empty()) {
    std::ofstream csv(csv_path);
    csv << eval::table_csv(res);
  }
  if (!dump_path.empty()) {
    std::vector<TrajDumpRecord> records;
    for (const auto& e : dump) records.push_back(to_dump_record(e));
    write_trajectory_dump(dump_path, records);
    std::cout << "trajectories dumped to " << dump_path << "\n";
  }
  return kExitOk;
}

int cmd_ablate_k(const CliState& state, const std::string& data_path,
                 const std::string& eval_path, const std::string& outdir,
                 std::vector<int> k_values) {
  auto cfg = state.cfg;  // mutated per K
  if (k_values.empty()) k_values = {4, 8, 16, 32};
  auto run = load_data(data_path, eval_path);
  if (run.eval_split.empty()) throw ConfigError("ablate-k needs --eval-data");
  write_run_artifacts(outdir, cfg);

  struct Row {
    int k;
    eval::EvalResult res;
  };
  std::vector<Row> rows;
  for (int k : k_values) {
    cfg.model_k = k;
    CliState st{cfg, "", {}};
    const std::string sub = outdir + "/k" + std::to_string(k);
    std::cout << "== training K=" << k << " ==\n";
    cmd_train_sft(st, data_path, "", sub, false);
    auto loaded = load_checkpoint<float>(sub + "/final.ckpt");
    auto vocab = Vocabulary::from_tokens(loaded.meta.vocab_tokens);
    PatchEncoderT<float> encoder(loaded.meta.encoder_seed, loaded.meta.patch_size,
                                 loaded.meta.config.dim);
    rows.push_back({k, eval::evaluate(loaded.model, encoder, vocab, run.eval_split,
                                      eval::LatentEvalMode::Free, loaded.meta.pool_mode,
                                      cfg.eval_max_new)});
  }

  // per-family table over K
  std::vector<TaskFamily> fams;
  for (const auto& [f, fr] : rows.front().res.families) fams.push_back(f);
  std::ostringstream text, csv;
  text << "K     ";
  csv << "k";
  for (auto f : fams) {
    text << "  " << family_tag(f);
    csv << ',' << family_tag(f);
  }
  text << "  overall\n";
  csv << ",overall\n";
  for (const auto& row : rows) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%-5d", row.k);
    text << buf;
    csv << row.k;
    for (auto f : fams) {
      std::snprintf(buf, sizeof(buf), "  %.3f", row.res.family_accuracy(f));
      text << buf;
      csv << ',' << row.res.family_accuracy(f);
    }
    std::snprintf(buf, sizeof(buf), "  %.3f\n", row.res.accuracy);
    text << buf;
    csv << ',' << row.res.accuracy << '\n';
  }
  for (auto f : fams) {
    int best_k = rows.front().k;
    double best = -1;
    bool monotone = true;
    double prev = -1;
    for (const auto& row : rows) {
      const double a = row.res.family_accuracy(f);
      if (a > best) {
        best = a;
        best_k = row.k;
      }
      if (prev >= 0 && a < prev) monotone = false;
      prev = a;
    }
    text << "best K for " << family_tag(f) << ": " << best_k
         << (monotone ? " (monotone in K)" : " (not monotone in K)") << "\n";
  }
  std::cout << text.str();
  std::ofstream tf(outdir + "/ablation.txt");
  tf << text.str();
  std::ofstream cf(outdir + "/ablation.csv");
  cf << csv.str();
  return kExitOk;
}

int cmd_inspect(const std::string& dump_path, const std::string& ckpt_path,
                const std::string& data_path, int limit) {
  const auto records = read_trajectory_dump(dump_path);

  Vocabulary vocab = Vocabulary::build(1, 1);
  std::unique_ptr<PatchEncoderT<double>> encoder;
  PoolMode pool = PoolMode::Flatten1D;
  int model_k = 0;
  if (!ckpt_path.empty()) {
    auto loaded = load_checkpoint<float>(ckpt_path);
    vocab = Vocabulary::from_tokens(loaded.meta.vocab_tokens);
    encoder = std::make_unique<PatchEncoderT<double>>(
        loaded.meta.encoder_seed, loaded.meta.patch_size, loaded.meta.config.dim);
    pool = loaded.meta.pool_mode;
    model_k = loaded.meta.config.k;
  }

  std::vector<SyntheticSample> samples;
  if (!data_path.empty()) samples = read_dataset(data_path);
  auto find_sample = [&](std::uint64_t seed) -> const SyntheticSample* {
    for (const auto& s : samples)
      if (s.seed == seed) return &s;
    return nullptr;
  };

  const int n = std::min<int>(limit, int(records.size()));
  for (int i = 0; i < n; ++i) {
    const auto& r = records[std::size_t(i)];
    std::cout << "[" << i << "] seed=" << r.seed << " family="
              << family_tag(static_cast<TaskFamily>(r.family)) << " acc=" << r.reward_acc
              << (r.truncated ? " (truncated)" : "") << "\n";
    if (ckpt_path.empty()) {
      std::cout << "  (pass --checkpoint to decode tokens and score latents)\n";
      continue;
    }
    std::cout << "  q: " << vocab.decode(r.question) << "\n";
    std::cout << "  gold: " << vocab.decode(r.gold) << "\n  ";

    // flattened Z_target vectors of this sample, for nearest-target cosine
    std::vector<std::vector<double>> targets;
    if (encoder && model_k > 0) {
      if (const auto* smp = find_sample(r.seed)) {
        for (const auto& blk : latent_targets(*encoder, *smp, model_k, pool))
          for (int v = 0; v < blk.k; ++v)
            targets.emplace_back(blk.vec(v), blk.vec(v) + blk.dim);
      }
    }
    auto cosine = [](const std::vector<double>& a, const std::vector<double>& b) {
      double num = 0, na = 0, nb = 0;
      for (std::size_t j = 0; j < a.size(); ++j) {
        num += a[j] * b[j];
        na += a[j] * a[j];
        nb += b[j] * b[j];
      }
      return num / std::max(1e-12, std::sqrt(na) * std::sqrt(nb));
    };

    int lat_idx = 0;
    for (const auto& s : r.steps) {
      if (!s.latent) {
        std::cout << vocab.token(s.token) << ' ';
        continue;
      }
      double norm = 0;
      for (double v : s.z) norm += v * v;
      norm = std::sqrt(norm);
      char buf[80];
      if (!targets.empty()) {
        int best = 0;
        double best_cos = -2;
        for (std::size_t t = 0; t < targets.size(); ++t) {
          if (targets[t].size() != s.z.size()) continue;
          const double c = cosine(targets[t], s.z);
          if (c > best_cos) {
            best_cos = c;
            best = int(t);
          }
        }
        std::snprintf(buf, sizeof(buf), "[z%d |%.2f| cos*=%.3f->t%d] ", lat_idx, norm,
                      best_cos, best);
      } else {
        std::snprintf(buf, sizeof(buf), "[z%d |%.2f|] ", lat_idx, norm);
      }
      std::cout << buf;
      ++lat_idx;
    }
    std::cout << "\n";
  }
  return kExitOk;
}

int cmd_verify() {
  const auto results = verify::run_verification();
  bool all = true;
  for (const auto& r : results) {
    std::printf("[%s] %-26s %s (%.2fs)\n", r.pass ? "PASS" : "FAIL", r.name.c_str(),
                r.detail.c_str(), r.seconds);
    all &= r.pass;
  }
  return all ? kExitOk : kExitVerify;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"lantern: interleaved latent visual reasoning at desk scale"};
  app.require_subcommand(0, 1);

  CliState state;
  bool dump_defaults = false;
  app.add_flag("--dump-defaults", dump_defaults, "print the default config and exit");

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", state.config_path, "config file (sectioned key=value)");
    sub->add_option("--set", state.overrides, "override, e.g. --set sft.gamma=0.2");
  };

  // gen-data
  std::string out_path = "data.lnt", grid_str;
  auto* gen = app.add_subcommand("gen-data", "generate a synthetic dataset");
  add_common(gen);
  gen->add_option("--families", state.cfg.data_families, "comma list: da,rp,ol");
  gen->add_option("--grid", grid_str, "grid as RxC, e.g. 4x4");
  gen->add_option("--count", state.cfg.data_count, "number of samples");
  gen->add_option("--seed", state.cfg.data_seed, "base sample seed");
  gen->add_option("--cell-px", state.cfg.data_cell_px, "cell size in pixels");
  gen->add_option("--occupancy", state.cfg.data_occupancy, "distractor fill rate");
  gen->add_option("--out", out_path, "output dataset path");

  // train-sft
  std::string data_path, eval_path, outdir = "run_sft";
  bool ntp = false;
  double gamma_flag = -1, lr_flag = -1;
  int k_flag = -1, epochs_flag = -1;
  auto* tsft = app.add_subcommand("train-sft", "supervised fine-tuning with the hybrid loss");
  add_common(tsft);
  tsft->add_option("--data", data_path, "training dataset")->required();
  tsft->add_option("--eval-data", eval_path, "held-out dataset for the final eval");
  tsft->add_option("--out", outdir, "output directory");
  tsft->add_flag("--ntp", ntp, "train the next-token-prediction baseline");
  tsft->add_option("--gamma", gamma_flag, "latent loss weight");
  tsft->add_option("--k", k_flag, "latent block length");
  tsft->add_option("--lr", lr_flag, "learning rate");
  tsft->add_option("--epochs", epochs_flag, "epochs");

  // train-rl
  std::string ckpt_path, rollout_dump;
  auto* trl = app.add_subcommand("train-rl", "GRPO with latent-state replay");
  add_common(trl);
  trl->add_option("--checkpoint", ckpt_path, "SFT checkpoint to start from")->required();
  trl->add_option("--data", data_path, "prompt dataset")->required();
  trl->add_option("--eval-data", eval_path, "held-out dataset for the final eval");
  trl->add_option("--out", outdir, "output directory");
  trl->add_option("--rollout-dump", rollout_dump, "dump greedy trajectories after training");

  // eval
  std::string mode_name = "free", csv_path, dump_path;
  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint");
  add_common(ev);
  ev->add_option("--checkpoint", ckpt_path, "checkpoint")->required();
  ev->add_option("--data", data_path, "dataset")->required();
  ev->add_option("--mode", mode_name, "latent mode: free | oracle | zero");
  ev->add_option("--csv", csv_path, "write the result table as CSV");
  ev->add_option("--dump", dump_path, "write decoded trajectories");

  // ablate-k
  std::vector<int> k_values;
  auto* abk = app.add_subcommand("ablate-k", "train and evaluate across latent sizes");
  add_common(abk);
  abk->add_option("--data", data_path, "training dataset")->required();
  abk->add_option("--eval-data", eval_path, "held-out dataset")->required();
  abk->add_option("--out", outdir, "output directory");
  abk->add_option("--k-values", k_values, "latent sizes (default 4 8 16 32)");

  // inspect
  int inspect_limit = 8;
  auto* ins = app.add_subcommand("inspect", "pretty-print a trajectory dump");
  ins->add_option("--dump", dump_path, "trajectory dump")->required();
  ins->add_option("--checkpoint", ckpt_path, "checkpoint for vocab and latent targets");
  ins->add_option("--data", data_path, "dataset for nearest-target cosines");
  ins->add_option("--limit", inspect_limit, "records to print");

  // verify
  auto* ver = app.add_subcommand("verify", "run the gradient-check and oracle suites");
  (void)ver;

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (dump_defaults) {
      std::cout << dump_config(RunConfig{});
      return kExitOk;
    }
    apply_config(state);
    if (!grid_str.empty()) {
      const auto x = grid_str.find('x');
      if (x == std::string::npos)
        throw ConfigError("--grid expects RxC, e.g. 4x4; got '" + grid_str + "'");
      state.cfg.data_rows = std::stoi(grid_str.substr(0, x));
      state.cfg.data_cols = std::stoi(grid_str.substr(x + 1));
    }
    if (gamma_flag >= 0) state.cfg.sft_gamma = gamma_flag;
    if (lr_flag >= 0) state.cfg.sft_lr = lr_flag;
    if (k_flag >= 0) state.cfg.model_k = k_flag;
    if (epochs_flag >= 0) state.cfg.sft_epochs = epochs_flag;

    if (gen->parsed()) return cmd_gen_data(state, out_path);
    if (tsft->parsed()) return cmd_train_sft(state, data_path, eval_path, outdir, ntp);
    if (trl->parsed())
      return cmd_train_rl(state, ckpt_path, data_path, eval_path, outdir, rollout_dump);
    if (ev->parsed())
      return cmd_eval(state, ckpt_path, data_path, mode_name, csv_path, dump_path);
    if (abk->parsed())
      return cmd_ablate_k(state, data_path, eval_path, outdir, k_values);
    if (ins->parsed()) return cmd_inspect(dump_path, ckpt_path, data_path, inspect_limit);
    if (ver->parsed()) return cmd_verify();
    std::cout << app.help();
    return kExitOk;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const DatasetError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const CheckpointError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
