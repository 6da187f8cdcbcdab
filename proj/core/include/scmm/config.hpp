#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "scmm/data.hpp"
#include "scmm/synth.hpp"
#include "scmm/trainer.hpp"

namespace scmm {

struct SplitSource {
  std::filesystem::path annotations;
  std::optional<std::filesystem::path> embeddings;
};

struct DataConfig {
  std::vector<std::string> entities;
  std::map<std::string, SplitSource> splits;  // "train", "valid", "test"
};

struct RunConfig {
  DataConfig data;
  TrainConfig train;
};

/// `overrides` are dotted `key=value` strings applied on top of the file,
/// e.g. "train.stage1.lr=1e-4". Values parse as TOML, falling back to a bare
/// string. Relative data paths resolve against `base_dir`.
RunConfig parse_run_config(std::string_view text, const std::filesystem::path& base_dir,
                           const std::vector<std::string>& overrides = {});
RunConfig load_run_config(const std::filesystem::path& path, const std::vector<std::string>& overrides = {});

/// Loads every configured split and attaches embeddings where given.
Dataset load_run_dataset(const DataConfig& data);

/// Reads the [synth] table.
SynthConfig parse_synth_config(std::string_view text, const std::vector<std::string>& overrides = {});
SynthConfig load_synth_config(const std::filesystem::path& path, const std::vector<std::string>& overrides = {});

}  // namespace scmm
