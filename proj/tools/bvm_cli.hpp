#pragma once

// Command-line layer: JSON experiment configs, the run directory writer and
// the four commands. Exit codes: 0 ok, 2 config, 3 numerics, 4 chain quality.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "bvm_uq/coverage.hpp"

namespace bvm::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitNumerics = 3;
inline constexpr int kExitQuality = 4;

const char* tool_version();

/// Everything a command needs, parsed from one JSON document.
struct RunConfig {
  ExperimentConfig experiment;
  bool analytic_case = false;  ///< benchmark source, zero theta0: the exact solution is known
  int histogram_bins = 40;
  std::vector<double> sweep_N{1e2, 1e3, 1e4, 1e5};
  nlohmann::json canonical;    ///< effective config after command-line overrides
};

/// Throws ConfigError with the offending key in the message.
RunConfig parse_config(const nlohmann::json& doc);

/// Reads and parses a config file; malformed JSON is reported with line and column.
nlohmann::json load_json(const std::filesystem::path& path);

/// SHA-256 of the canonical (sorted-key, compact) serialization.
std::string config_hash(const nlohmann::json& config);

std::string sha256_hex(const std::string& bytes);

/// Writes files under one directory in call order and remembers them for the manifest.
class RunDirectory {
 public:
  explicit RunDirectory(std::filesystem::path root);

  void write(const std::string& name, const std::string& content);
  void write_json(const std::string& name, const nlohmann::json& j);
  const std::vector<std::string>& outputs() const noexcept { return outputs_; }
  const std::filesystem::path& root() const noexcept { return root_; }

 private:
  std::filesystem::path root_;
  std::vector<std::string> outputs_;
};

struct Options {
  std::string command;
  std::filesystem::path config;
  std::filesystem::path out;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
};

int cmd_forward(const RunConfig& rc, RunDirectory& dir);
int cmd_sample(const RunConfig& rc, RunDirectory& dir);
int cmd_asymptotics(const RunConfig& rc, RunDirectory& dir);
int cmd_coverage(const RunConfig& rc, RunDirectory& dir);

/// Loads the config, applies overrides, dispatches and writes manifest.json.
/// Library errors are mapped to exit codes and reported on stderr.
int run(const Options& opts);

/// Full entry point including argument parsing.
int main(int argc, char** argv);

}  // namespace bvm::cli
