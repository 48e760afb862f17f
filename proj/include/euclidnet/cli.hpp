#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "euclidnet/error.hpp"
#include "euclidnet/nn.hpp"
#include "euclidnet/train.hpp"

namespace euclidnet {

enum ExitCode : int {
  kExitOk = 0,
  kExitConfig = 1,
  kExitData = 2,
  kExitNumeric = 3,
  kExitCheckpoint = 4,
};

int exit_code_for(ErrorCode code) noexcept;

struct DataPaths {
  std::string train_images;
  std::string train_labels;
  std::string test_images;
  std::string test_labels;
};

struct RunConfig {
  ModelSpec model;
  std::uint64_t model_seed = 1;
  TrainConfig train;
  DataPaths data;
  HomotopySchedule homotopy;
  std::string output_root = "runs";
};

/// Parses TOML with sections [model], [train], [data], [homotopy] and an
/// optional top-level `output`. Relative data paths resolve against the
/// config file's directory.
RunConfig parse_config(std::string_view toml_text, const std::filesystem::path& base_dir = {});
RunConfig load_config(const std::filesystem::path& path);
std::string config_to_toml(const RunConfig& cfg);

/// FNV-1a over the canonical TOML rendering.
std::uint64_t config_hash(const RunConfig& cfg);

/// Runs one subcommand; args excludes the program name. Output and errors go
/// to the given streams.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace euclidnet
