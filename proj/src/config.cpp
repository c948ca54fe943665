#include "lantern/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>

namespace lantern {

namespace {

struct KeyDef {
  const char* name;  // "section.key"
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%g", v);
  return buf;
}

int parse_int(const std::string& s, const char* key) {
  try {
    std::size_t used = 0;
    const int v = std::stoi(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (...) {
    throw ConfigError(std::string("config: '") + key + "' expects an integer, got '" + s + "'");
  }
}

std::uint64_t parse_u64(const std::string& s, const char* key) {
  try {
    std::size_t used = 0;
    const unsigned long long v = std::stoull(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (...) {
    throw ConfigError(std::string("config: '") + key + "' expects an unsigned integer, got '" + s + "'");
  }
}

double parse_double(const std::string& s, const char* key) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (...) {
    throw ConfigError(std::string("config: '") + key + "' expects a number, got '" + s + "'");
  }
}

bool parse_bool(const std::string& s, const char* key) {
  if (s == "true" || s == "1" || s == "yes") return true;
  if (s == "false" || s == "0" || s == "no") return false;
  throw ConfigError(std::string("config: '") + key + "' expects true/false, got '" + s + "'");
}

#define KEY_INT(name, field)                                              \
  {name, [](const RunConfig& c) { return std::to_string(c.field); },      \
   [](RunConfig& c, const std::string& v) { c.field = parse_int(v, name); }}
#define KEY_U64(name, field)                                              \
  {name, [](const RunConfig& c) { return std::to_string(c.field); },      \
   [](RunConfig& c, const std::string& v) { c.field = parse_u64(v, name); }}
#define KEY_DBL(name, field)                                              \
  {name, [](const RunConfig& c) { return fmt_double(c.field); },          \
   [](RunConfig& c, const std::string& v) { c.field = parse_double(v, name); }}
#define KEY_STR(name, field)                               \
  {name, [](const RunConfig& c) { return c.field; },       \
   [](RunConfig& c, const std::string& v) { c.field = v; }}
#define KEY_BOOL(name, field)                                              \
  {name, [](const RunConfig& c) { return std::string(c.field ? "true" : "false"); }, \
   [](RunConfig& c, const std::string& v) { c.field = parse_bool(v, name); }}

const std::vector<KeyDef>& schema() {
  static const std::vector<KeyDef> defs = {
      KEY_INT("model.dim", model_dim),
      KEY_INT("model.layers", model_layers),
      KEY_INT("model.heads", model_heads),
      KEY_INT("model.k", model_k),
      KEY_INT("model.max_seq", model_max_seq),
      KEY_U64("model.seed", model_seed),
      KEY_U64("vision.encoder_seed", vision_encoder_seed),
      KEY_INT("vision.patch_size", vision_patch_size),
      KEY_STR("vision.pool_mode", vision_pool_mode),
      KEY_INT("data.rows", data_rows),
      KEY_INT("data.cols", data_cols),
      KEY_INT("data.cell_px", data_cell_px),
      KEY_DBL("data.occupancy", data_occupancy),
      KEY_STR("data.families", data_families),
      KEY_INT("data.count", data_count),
      KEY_U64("data.seed", data_seed),
      KEY_DBL("sft.gamma", sft_gamma),
      KEY_DBL("sft.lr", sft_lr),
      KEY_DBL("sft.warmup_ratio", sft_warmup_ratio),
      KEY_DBL("sft.weight_decay", sft_weight_decay),
      KEY_INT("sft.epochs", sft_epochs),
      KEY_INT("sft.batch", sft_batch),
      KEY_INT("sft.log_every", sft_log_every),
      KEY_BOOL("sft.latent_per_dim_norm", sft_latent_per_dim_norm),
      KEY_U64("sft.seed", sft_seed),
      KEY_INT("rl.group", rl_group),
      KEY_INT("rl.updates", rl_updates),
      KEY_INT("rl.prompts_per_update", rl_prompts_per_update),
      KEY_INT("rl.max_new", rl_max_new),
      KEY_DBL("rl.clip_eps", rl_clip_eps),
      KEY_DBL("rl.kl_beta", rl_kl_beta),
      KEY_DBL("rl.temperature", rl_temperature),
      KEY_DBL("rl.top_p", rl_top_p),
      KEY_DBL("rl.lr", rl_lr),
      KEY_DBL("rl.warmup_ratio", rl_warmup_ratio),
      KEY_DBL("rl.weight_decay", rl_weight_decay),
      KEY_DBL("rl.w_acc", rl_w_acc),
      KEY_DBL("rl.w_fmt", rl_w_fmt),
      KEY_BOOL("rl.format_partial_credit", rl_format_partial_credit),
      KEY_U64("rl.seed", rl_seed),
      KEY_INT("eval.max_new", eval_max_new),
  };
  return defs;
}

#undef KEY_INT
#undef KEY_U64
#undef KEY_DBL
#undef KEY_STR
#undef KEY_BOOL

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

[[noreturn]] void unknown_key(const std::string& key) {
  std::string msg = "config: unknown key '" + key + "'. Valid keys:";
  for (const auto& d : schema()) msg += std::string("\n  ") + d.name;
  throw ConfigError(msg);
}

void set_key(RunConfig& cfg, const std::string& key, const std::string& value) {
  for (const auto& d : schema()) {
    if (key == d.name) {
      d.set(cfg, value);
      return;
    }
  }
  unknown_key(key);
}

}  // namespace

std::vector<std::string> config_keys() {
  std::vector<std::string> out;
  for (const auto& d : schema()) out.push_back(d.name);
  return out;
}

void load_config_file(const std::string& path, RunConfig& cfg) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open '" + path + "'");
  std::string line, section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw ConfigError("config: malformed section at " + path + ":" + std::to_string(lineno));
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config: expected key=value at " + path + ":" + std::to_string(lineno));
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const std::string full = section.empty() ? key : section + "." + key;
    set_key(cfg, full, value);
  }
}

void apply_config_override(const std::string& assignment, RunConfig& cfg) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos)
    throw ConfigError("config: override must be section.key=value, got '" + assignment + "'");
  set_key(cfg, trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

std::string dump_config(const RunConfig& cfg) {
  std::ostringstream out;
  std::string section;
  for (const auto& d : schema()) {
    const std::string name = d.name;
    const auto dot = name.find('.');
    const std::string sec = name.substr(0, dot);
    if (sec != section) {
      if (!section.empty()) out << '\n';
      out << '[' << sec << "]\n";
      section = sec;
    }
    out << name.substr(dot + 1) << " = " << d.get(cfg) << '\n';
  }
  return out.str();
}

}  // namespace lantern
