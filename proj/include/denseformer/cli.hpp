#pragma once

// Configuration files, checkpoints and the command-line front end.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include "denseformer/config.hpp"
#include "denseformer/model.hpp"
#include "denseformer/trainer.hpp"

namespace denseformer {

// Invalid or unknown configuration content; the message names the key.
struct ConfigError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// {"model": {...}, "train": {...}}; keys mirror the ModelConfig and
// TrainConfig field names, missing keys keep their defaults. The pattern is
// an object such as {"variant": "kxp", "k": 4, "p": 5}.
struct RunConfig {
  ModelConfig model;
  TrainConfig train;

  friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

RunConfig parse_run_config(const std::string& json_text);
RunConfig load_run_config(const std::filesystem::path& path);
std::string run_config_json(const RunConfig& config);

// Binary layout: u64 little-endian header length, UTF-8 JSON header, then
// the raw little-endian f32 payload. Each tensor entry in the header records
// dtype, shape, byte_offset (relative to the payload) and byte_length.
// Optimizer moments are stored as tensors "adam.m.<name>" and
// "adam.v.<name>".
struct Checkpoint {
  RunConfig config;
  Model<float> model;
  TrainState state;
};

std::string encode_checkpoint(const Model<float>& model, const TrainConfig& train, const TrainState& state);
Checkpoint decode_checkpoint(const std::string& bytes);
void save_checkpoint(const std::filesystem::path& path, const Model<float>& model, const TrainConfig& train,
                     const TrainState& state);
Checkpoint load_checkpoint(const std::filesystem::path& path);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::string& content);

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitRuntime = 2;

// Entry point of the denseformer tool. Returns the process exit code.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

// Keeps large tensor buffers in the heap instead of fresh mappings per
// allocation (glibc only; no-op elsewhere).
void configure_allocator();

}  // namespace denseformer
