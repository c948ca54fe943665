#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace lantern {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Flat run configuration behind a sectioned key=value file. Every key has a
// typed accessor in the schema table; unknown keys are hard errors that list
// the valid ones.
struct RunConfig {
  // [model]
  int model_dim = 48;
  int model_layers = 3;
  int model_heads = 4;
  int model_k = 8;
  int model_max_seq = 192;
  std::uint64_t model_seed = 1;

  // [vision]
  std::uint64_t vision_encoder_seed = 7;
  int vision_patch_size = 8;
  std::string vision_pool_mode = "flatten1d";  // flatten1d | adaptive2d

  // [data]
  int data_rows = 4;
  int data_cols = 4;
  int data_cell_px = 8;
  double data_occupancy = 0.5;
  std::string data_families = "da";
  int data_count = 2000;
  std::uint64_t data_seed = 0;

  // [sft]
  double sft_gamma = 0.1;
  double sft_lr = 1e-5;
  double sft_warmup_ratio = 0.05;
  double sft_weight_decay = 0.0;
  int sft_epochs = 4;
  int sft_batch = 8;
  int sft_log_every = 10;
  bool sft_latent_per_dim_norm = false;
  std::uint64_t sft_seed = 0;

  // [rl]
  int rl_group = 4;
  int rl_updates = 50;
  int rl_prompts_per_update = 8;
  int rl_max_new = 56;
  double rl_clip_eps = 0.2;
  double rl_kl_beta = 0.1;
  double rl_temperature = 0.6;
  double rl_top_p = 0.85;
  double rl_lr = 5e-6;
  double rl_warmup_ratio = 0.03;
  double rl_weight_decay = 0.0;
  double rl_w_acc = 1.0;
  double rl_w_fmt = 1.0;
  bool rl_format_partial_credit = false;
  std::uint64_t rl_seed = 0;

  // [eval]
  int eval_max_new = 56;
};

// all "section.key" names the schema accepts, in file order
std::vector<std::string> config_keys();

// parse a config file into cfg (missing file -> ConfigError)
void load_config_file(const std::string& path, RunConfig& cfg);

// apply one "section.key=value" override
void apply_config_override(const std::string& assignment, RunConfig& cfg);

// canonical sectioned dump; parseable by load_config_file
std::string dump_config(const RunConfig& cfg);

}  // namespace lantern
