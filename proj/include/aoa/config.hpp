#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>

#include "aoa/model.hpp"
#include "aoa/training.hpp"

namespace aoa {

// Everything a run needs. feature_dim and vocab_size in `model` are filled in
// from the data at run time.
struct RunConfig {
  std::uint64_t seed = 1;
  std::string features = "data/features.aoaf";
  std::string captions = "data/captions.jsonl";
  std::string split = "data/split.json";
  std::size_t vocab_min_count = 5;
  std::string init;  // checkpoint to start SCST from
  std::size_t eval_beam = 3;
  ModelConfig model;
  TrainConfig train;
};

// Flat "key = value" lines; '#' starts a comment. Unknown keys and
// unparsable values throw ConfigError naming the line.
RunConfig parse_config(const std::string& text, RunConfig base = {});
RunConfig load_config(const std::filesystem::path& path, RunConfig base = {});
// Applies one "key=value" override.
void set_config_value(RunConfig& config, const std::string& key, const std::string& value);
// Every key with its current value, in a fixed order; parse_config of the
// result reproduces `config`.
std::string dump_config(const RunConfig& config);

}  // namespace aoa
