#include <fstream>
#include <sstream>

#include "denseformer/cli.hpp"
#include "json.hpp"

namespace denseformer {

namespace {

using nlohmann::json;

std::size_t get_count(const json& v, const std::string& key) {
  if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0)) {
    throw ConfigError("config key \"" + key + "\": expected a non-negative integer");
  }
  return v.get<std::size_t>();
}

double get_real(const json& v, const std::string& key) {
  if (!v.is_number()) throw ConfigError("config key \"" + key + "\": expected a number");
  return v.get<double>();
}

bool get_bool(const json& v, const std::string& key) {
  if (!v.is_boolean()) throw ConfigError("config key \"" + key + "\": expected true or false");
  return v.get<bool>();
}

void require_object(const json& v, const std::string& key) {
  if (!v.is_object()) throw ConfigError("config key \"" + key + "\": expected an object");
}

[[noreturn]] void unknown(const std::string& key) { throw ConfigError("unknown config key \"" + key + "\""); }

SparsityPattern parse_pattern(const json& j) {
  require_object(j, "model.pattern");
  if (!j.contains("variant")) throw ConfigError("config key \"model.pattern.variant\" is required");
  if (!j["variant"].is_string()) throw ConfigError("config key \"model.pattern.variant\": expected a string");
  SparsityPattern p;
  try {
    p.variant = parse_variant(j["variant"].get<std::string>());
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("config key \"model.pattern.variant\": ") + e.what());
  }
  p.k = 1;
  p.p = 1;
  for (const auto& [key, v] : j.items()) {
    const std::string full = "model.pattern." + key;
    if (key == "variant") continue;
    if (key == "k" && (p.variant == Variant::KxP || p.variant == Variant::LastK)) {
      p.k = get_count(v, full);
    } else if (key == "p" && p.variant == Variant::KxP) {
      p.p = get_count(v, full);
    } else {
      unknown(full);
    }
  }
  if (p.variant == Variant::LastK && !j.contains("k")) throw ConfigError("config key \"model.pattern.k\" is required");
  return p;
}

void parse_model(const json& j, ModelConfig& m) {
  require_object(j, "model");
  for (const auto& [key, v] : j.items()) {
    const std::string full = "model." + key;
    if (key == "depth") m.depth = get_count(v, full);
    else if (key == "n_heads") m.n_heads = get_count(v, full);
    else if (key == "head_dim") m.head_dim = get_count(v, full);
    else if (key == "vocab_size") m.vocab_size = get_count(v, full);
    else if (key == "seq_len") m.seq_len = get_count(v, full);
    else if (key == "mlp_ratio") m.mlp_ratio = get_count(v, full);
    else if (key == "tie_embeddings") m.tie_embeddings = get_bool(v, full);
    else if (key == "pattern") m.pattern = parse_pattern(v);
    else unknown(full);
  }
}

void parse_train(const json& j, TrainConfig& t) {
  require_object(j, "train");
  for (const auto& [key, v] : j.items()) {
    const std::string full = "train." + key;
    if (key == "steps") t.steps = get_count(v, full);
    else if (key == "batch_size") t.batch_size = get_count(v, full);
    else if (key == "seq_len") t.seq_len = get_count(v, full);
    else if (key == "lr_max") t.lr_max = get_real(v, full);
    else if (key == "beta1") t.beta1 = get_real(v, full);
    else if (key == "beta2") t.beta2 = get_real(v, full);
    else if (key == "eps") t.eps = get_real(v, full);
    else if (key == "weight_decay") t.weight_decay = get_real(v, full);
    else if (key == "warmup_frac") t.warmup_frac = get_real(v, full);
    else if (key == "dwa_train_start") t.dwa_train_start = get_count(v, full);
    else if (key == "eval_every") t.eval_every = get_count(v, full);
    else if (key == "eval_batches") t.eval_batches = get_count(v, full);
    else if (key == "snapshot_every") t.snapshot_every = get_count(v, full);
    else if (key == "val_frac") t.val_frac = get_real(v, full);
    else if (key == "seed") t.seed = get_count(v, full);
    else unknown(full);
  }
}

json pattern_json(const SparsityPattern& p) {
  json j;
  j["variant"] = variant_name(p.variant);
  if (p.variant == Variant::KxP || p.variant == Variant::LastK) j["k"] = p.k;
  if (p.variant == Variant::KxP) j["p"] = p.p;
  return j;
}

}  // namespace

RunConfig parse_run_config(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  RunConfig c;
  for (const auto& [key, v] : j.items()) {
    if (key == "model") parse_model(v, c.model);
    else if (key == "train") parse_train(v, c.train);
    else unknown(key);
  }
  try {
    c.model.validate();
    c.train.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("invalid config: ") + e.what());
  }
  if (c.train.seq_len > c.model.seq_len) throw ConfigError("invalid config: train.seq_len exceeds model.seq_len");
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) { return parse_run_config(read_file(path)); }

std::string run_config_json(const RunConfig& c) {
  nlohmann::ordered_json j;
  const auto& m = c.model;
  j["model"]["depth"] = m.depth;
  j["model"]["n_heads"] = m.n_heads;
  j["model"]["head_dim"] = m.head_dim;
  j["model"]["vocab_size"] = m.vocab_size;
  j["model"]["seq_len"] = m.seq_len;
  j["model"]["mlp_ratio"] = m.mlp_ratio;
  j["model"]["tie_embeddings"] = m.tie_embeddings;
  j["model"]["pattern"] = pattern_json(m.pattern);
  const auto& t = c.train;
  j["train"]["steps"] = t.steps;
  j["train"]["batch_size"] = t.batch_size;
  j["train"]["seq_len"] = t.seq_len;
  j["train"]["lr_max"] = t.lr_max;
  j["train"]["beta1"] = t.beta1;
  j["train"]["beta2"] = t.beta2;
  j["train"]["eps"] = t.eps;
  j["train"]["weight_decay"] = t.weight_decay;
  j["train"]["warmup_frac"] = t.warmup_frac;
  j["train"]["dwa_train_start"] = t.dwa_train_start;
  j["train"]["eval_every"] = t.eval_every;
  j["train"]["eval_batches"] = t.eval_batches;
  j["train"]["snapshot_every"] = t.snapshot_every;
  j["train"]["val_frac"] = t.val_frac;
  j["train"]["seed"] = t.seed;
  return j.dump(2) + "\n";
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw std::runtime_error("error reading " + path.string());
  return ss.str();
}

void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw std::runtime_error("error writing " + path.string());
}

}  // namespace denseformer
