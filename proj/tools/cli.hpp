#pragma once

#include "isoimm/datasets.hpp"
#include "isoimm/evaluation.hpp"
#include "isoimm/training.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace isoimm::cli {

/// Bad configuration. Always names the offending key.
class ConfigError : public std::invalid_argument {
 public:
  ConfigError(const std::string& key, const std::string& message)
      : std::invalid_argument("config key '" + key + "': " + message), key_(key) {}
  const std::string& key() const { return key_; }

 private:
  std::string key_;
};

enum class DatasetKind { SwissRoll, Sphere, File };

struct DataConfig {
  DatasetKind kind = DatasetKind::SwissRoll;
  std::size_t n = 1000;
  double radius = 1.0;
  std::uint64_t seed = 1;
  std::filesystem::path input;  // for DatasetKind::File
  bool normalize = true;
};

struct RunConfig {
  std::string command;
  TrainConfig train;
  DataConfig data;
  EvalOptions eval;
  std::vector<double> gammas{0.01, 0.1, 1.0};
  std::filesystem::path output_dir = "isoimm_out";
  std::filesystem::path output;          // gen: cloud file; empty means <output_dir>/cloud.xyz
  std::filesystem::path checkpoint_dir;  // embed/eval: empty means <output_dir>/checkpoints
};

using Overrides = std::map<std::string, nlohmann::json>;

/// Every accepted key, in manifest order.
const std::vector<std::string>& config_keys();

/// Merge `file` (a JSON object, or a manifest written by a previous run) with
/// `overrides`, apply defaults and validate. Overrides win.
RunConfig parse_config_json(const std::string& command, const nlohmann::json& file, const Overrides& overrides);

/// As above, reading the file first. An empty path means "{}".
RunConfig parse_config(const std::string& command, const std::filesystem::path& path, const Overrides& overrides);

/// The fully resolved config as a flat JSON object using the config keys.
nlohmann::json resolved_json(const RunConfig& cfg);

/// Exit statuses.
inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 1;
inline constexpr int kExitRuntime = 2;

/// Runs one subcommand. Errors are reported on `err` and turned into an exit status.
int run_command(const RunConfig& cfg, std::ostream& out, std::ostream& err);

/// The cloud the config describes (normalization not applied).
PointCloud load_dataset(const DataConfig& data);

nlohmann::json eval_report_json(const EvalReport& r);

}  // namespace isoimm::cli
