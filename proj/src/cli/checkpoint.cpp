#include <bit>
#include <cstring>
#include <map>
#include <sstream>

#include "denseformer/cli.hpp"
#include "json.hpp"

namespace denseformer {

static_assert(std::endian::native == std::endian::little, "checkpoint payload assumes a little-endian host");

using ag::numel_of;
using ag::Shape;
using ag::shape_str;

namespace {

using nlohmann::ordered_json;

constexpr const char* kFormat = "denseformer-checkpoint";
constexpr int kVersion = 1;

struct PayloadWriter {
  ordered_json tensors = ordered_json::object();
  std::string payload;

  void add(const std::string& name, const Shape& shape, std::span<const float> values) {
    ordered_json e;
    e["dtype"] = "f32";
    e["shape"] = shape;
    e["byte_offset"] = payload.size();
    e["byte_length"] = values.size_bytes();
    tensors[name] = std::move(e);
    payload.append(reinterpret_cast<const char*>(values.data()), values.size_bytes());
  }
};

struct TensorEntry {
  Shape shape;
  std::size_t offset = 0;
  std::size_t length = 0;
};

[[noreturn]] void corrupt(const std::string& what) { throw std::runtime_error("corrupt checkpoint: " + what); }

}  // namespace

std::string encode_checkpoint(const Model<float>& model, const TrainConfig& train, const TrainState& state) {
  PayloadWriter w;
  const auto params = model.parameters();
  for (const auto& p : params) w.add(p.name, p.tensor.shape(), p.tensor.data());

  const auto& opt = state.optimizer;
  if (opt.names().size() != params.size()) throw std::logic_error("optimizer state does not match the model");
  ordered_json adam_steps = ordered_json::object();
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& slot = opt.slots()[i];
    adam_steps[opt.names()[i]] = slot.t;
    if (slot.m.empty()) continue;
    w.add("adam.m." + opt.names()[i], params[i].tensor.shape(), slot.m);
    w.add("adam.v." + opt.names()[i], params[i].tensor.shape(), slot.v);
  }

  ordered_json metrics = ordered_json::array();
  for (const auto& r : state.metrics) {
    ordered_json row = ordered_json::array({r.step, r.lr, r.train_loss});
    if (r.val_loss) {
      row.push_back(*r.val_loss);
    } else {
      row.push_back(nullptr);
    }
    metrics.push_back(std::move(row));
  }

  std::ostringstream rng;
  rng << state.rng;

  ordered_json header;
  header["format"] = kFormat;
  header["version"] = kVersion;
  const auto config = ordered_json::parse(run_config_json({model.config(), train}));
  header["model_config"] = config["model"];
  header["train_config"] = config["train"];
  header["step"] = state.step;
  header["rng"] = rng.str();
  header["adam_steps"] = std::move(adam_steps);
  header["metrics"] = std::move(metrics);
  header["tensors"] = std::move(w.tensors);
  header["payload_length"] = w.payload.size();

  const std::string text = header.dump();
  std::string out(8, '\0');
  const std::uint64_t len = text.size();
  std::memcpy(out.data(), &len, sizeof len);
  out += text;
  out += w.payload;
  return out;
}

Checkpoint decode_checkpoint(const std::string& bytes) {
  if (bytes.size() < 8) corrupt("file shorter than the length prefix");
  std::uint64_t len = 0;
  std::memcpy(&len, bytes.data(), sizeof len);
  if (len > bytes.size() - 8) corrupt("header length exceeds file size");
  ordered_json header;
  try {
    header = ordered_json::parse(bytes.substr(8, len));
  } catch (const ordered_json::exception& e) {
    corrupt(std::string("header is not valid JSON: ") + e.what());
  }
  const std::string_view payload(bytes.data() + 8 + len, bytes.size() - 8 - len);

  try {
    if (header.at("format") != kFormat || header.at("version") != kVersion) corrupt("unsupported format");
    ordered_json cfg;
    cfg["model"] = header.at("model_config");
    cfg["train"] = header.at("train_config");
    RunConfig config = parse_run_config(cfg.dump());

    std::map<std::string, TensorEntry> entries;
    std::size_t expected_offset = 0;
    for (const auto& [name, e] : header.at("tensors").items()) {
      if (e.at("dtype") != "f32") corrupt("tensor " + name + " has unsupported dtype");
      TensorEntry t{e.at("shape").get<Shape>(), e.at("byte_offset").get<std::size_t>(),
                    e.at("byte_length").get<std::size_t>()};
      if (t.offset != expected_offset) corrupt("tensor " + name + " is not contiguous with its predecessor");
      if (t.length != numel_of(t.shape) * sizeof(float)) corrupt("tensor " + name + " length does not match shape");
      expected_offset += t.length;
      entries.emplace(name, std::move(t));
    }
    if (expected_offset != payload.size() || header.at("payload_length") != payload.size()) {
      corrupt("payload length does not match the tensor table");
    }
    std::size_t used = 0;
    auto take = [&](const std::string& name, std::span<float> dst, const Shape& shape) {
      const auto it = entries.find(name);
      if (it == entries.end()) corrupt("missing tensor " + name);
      if (it->second.shape != shape) corrupt("tensor " + name + " has shape " + shape_str(it->second.shape));
      std::memcpy(dst.data(), payload.data() + it->second.offset, it->second.length);
      ++used;
    };

    Model<float> model(config.model, 0);
    const auto params = model.parameters();
    for (const auto& p : params) {
      Tensor<float> t = p.tensor;
      take(p.name, t.data(), t.shape());
    }

    TrainState state;
    state.step = header.at("step").get<std::size_t>();
    std::istringstream rng(header.at("rng").get<std::string>());
    rng >> state.rng;
    if (!rng) corrupt("bad rng state");
    state.optimizer = AdamW(params);
    const auto& adam_steps = header.at("adam_steps");
    for (std::size_t i = 0; i < params.size(); ++i) {
      auto& slot = state.optimizer.slots()[i];
      const auto& name = params[i].name;
      slot.t = adam_steps.at(name).get<std::uint64_t>();
      if (!entries.count("adam.m." + name)) continue;
      slot.m.resize(params[i].tensor.size());
      slot.v.resize(params[i].tensor.size());
      take("adam.m." + name, slot.m, params[i].tensor.shape());
      take("adam.v." + name, slot.v, params[i].tensor.shape());
    }
    if (used != entries.size()) corrupt("unknown tensors present");
    for (const auto& row : header.at("metrics")) {
      MetricsRow r;
      r.step = row.at(0).get<std::size_t>();
      r.lr = row.at(1).get<double>();
      r.train_loss = row.at(2).get<double>();
      if (!row.at(3).is_null()) r.val_loss = row.at(3).get<double>();
      state.metrics.push_back(r);
    }
    return Checkpoint{std::move(config), std::move(model), std::move(state)};
  } catch (const ordered_json::exception& e) {
    corrupt(e.what());
  } catch (const ConfigError& e) {
    corrupt(e.what());
  }
}

void save_checkpoint(const std::filesystem::path& path, const Model<float>& model, const TrainConfig& train,
                     const TrainState& state) {
  write_file(path, encode_checkpoint(model, train, state));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) { return decode_checkpoint(read_file(path)); }

}  // namespace denseformer
