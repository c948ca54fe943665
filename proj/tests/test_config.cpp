#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <fstream>

#include "lantern/config.hpp"

using namespace lantern;

TEST_CASE("defaults carry the published hyperparameters") {
  RunConfig cfg;
  CHECK(cfg.sft_gamma == 0.1);
  CHECK(cfg.sft_lr == 1e-5);
  CHECK(cfg.sft_warmup_ratio == 0.05);
  CHECK(cfg.model_k == 8);
  CHECK(cfg.rl_group == 4);
  CHECK(cfg.rl_temperature == 0.6);
  CHECK(cfg.rl_top_p == 0.85);
  CHECK(cfg.rl_kl_beta == 0.1);
  CHECK(cfg.rl_lr == 5e-6);
  CHECK(cfg.rl_warmup_ratio == 0.03);
  CHECK(cfg.rl_w_acc == 1.0);
  CHECK(cfg.rl_w_fmt == 1.0);
}

TEST_CASE("dump is parseable and round-trips every key") {
  RunConfig cfg;
  cfg.model_dim = 80;
  cfg.sft_gamma = 0.25;
  cfg.rl_updates = 7;
  cfg.vision_pool_mode = "adaptive2d";
  cfg.sft_latent_per_dim_norm = true;

  const std::string path = "test_config_dump.cfg";
  {
    std::ofstream f(path);
    f << dump_config(cfg);
  }
  RunConfig back;
  load_config_file(path, back);
  CHECK(back.model_dim == 80);
  CHECK(back.sft_gamma == 0.25);
  CHECK(back.rl_updates == 7);
  CHECK(back.vision_pool_mode == "adaptive2d");
  CHECK(back.sft_latent_per_dim_norm == true);
  CHECK(dump_config(back) == dump_config(cfg));
  std::remove(path.c_str());
}

TEST_CASE("unknown keys fail and the error lists the valid ones") {
  RunConfig cfg;
  try {
    apply_config_override("sft.gama=0.1", cfg);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("sft.gama") != std::string::npos);
    CHECK(msg.find("sft.gamma") != std::string::npos);
    CHECK(msg.find("model.dim") != std::string::npos);
  }
}

TEST_CASE("type errors name the key") {
  RunConfig cfg;
  CHECK_THROWS_AS(apply_config_override("model.dim=abc", cfg), ConfigError);
  CHECK_THROWS_AS(apply_config_override("sft.gamma=down", cfg), ConfigError);
  CHECK_THROWS_AS(apply_config_override("rl.format_partial_credit=maybe", cfg), ConfigError);
}

TEST_CASE("comments, blanks and sections parse; malformed lines do not") {
  const std::string path = "test_config_parse.cfg";
  {
    std::ofstream f(path);
    f << "# a comment\n\n[model]\ndim = 64  # trailing comment\n\n[sft]\ngamma=0.3\n";
  }
  RunConfig cfg;
  load_config_file(path, cfg);
  CHECK(cfg.model_dim == 64);
  CHECK(cfg.sft_gamma == 0.3);
  {
    std::ofstream f(path);
    f << "[model\ndim = 64\n";
  }
  RunConfig bad;
  CHECK_THROWS_AS(load_config_file(path, bad), ConfigError);
  std::remove(path.c_str());
}

TEST_CASE("config_keys covers the documented key set") {
  const auto keys = config_keys();
  CHECK(keys.size() > 30);
  auto has = [&](const std::string& k) {
    for (const auto& key : keys)
      if (key == k) return true;
    return false;
  };
  for (const char* k : {"sft.gamma", "model.k", "sft.lr", "sft.warmup_ratio",
                        "sft.epochs", "sft.seed", "rl.kl_beta", "data.families"})
    CHECK(has(k));
}
