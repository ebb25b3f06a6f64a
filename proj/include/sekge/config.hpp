#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>

#include "sekge/se_gnn.hpp"

namespace sekge {

/// One recognised configuration key. Keys without a default are required.
struct ConfigKey {
  std::string_view name;
  std::optional<std::string_view> default_value;
  std::string_view help;
};

std::span<const ConfigKey> config_schema();

/// Flat key=value settings. Lines starting with '#' and blank lines are
/// ignored; keys prefixed with "checkpoint." are checkpoint metadata and
/// are skipped, so a checkpoint manifest loads as a config file.
class Config {
 public:
  static Config from_file(const std::filesystem::path& path);
  static Config from_string(std::string_view text, std::string_view origin = "<string>");

  /// Rejects keys missing from the schema.
  void set(std::string_view key, std::string_view value);
  std::optional<std::string> get(std::string_view key) const;
  const std::map<std::string, std::string, std::less<>>& values() const { return values_; }

 private:
  std::map<std::string, std::string, std::less<>> values_;
};

/// Every setting of a training run, resolved against schema defaults.
struct TrainConfig {
  // model
  std::size_t n = 200;
  std::size_t layers = 2;
  Composition composition = Composition::mul;
  Activation activation = Activation::tanh;
  std::size_t reshape_rows = 10;
  std::size_t reshape_cols = 20;
  std::size_t channels = 32;
  std::size_t kernel = 3;
  double message_dropout = 0.1;
  double input_dropout = 0.2;
  double feature_dropout = 0.2;
  double hidden_dropout = 0.3;
  double bn_momentum = 0.1;
  // optimisation
  double lr = 3e-4;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::size_t batch_size = 256;
  std::size_t epochs = 500;
  double label_smoothing = 0.1;
  double edge_removal_rate = 0.2;
  bool leakage_removal = true;
  std::uint64_t seed = 42;
  std::size_t eval_every = 1;
  std::size_t patience = 10;
  std::size_t eval_batch_size = 256;
  // data and runtime
  std::string data_dir;
  bool allow_unseen = false;
  std::size_t threads = 1;

  /// Resolves `config` against the schema; missing required keys and
  /// out-of-range values raise UsageError naming the key.
  static TrainConfig from_config(const Config& config);
  /// Canonical key=value lines for every schema key, in schema order.
  std::string to_text() const;
  /// Digest of to_text(); equal signatures mean identical runs.
  std::uint64_t signature() const;
};

/// `--help` text listing every key with its default.
std::string config_help();

}  // namespace sekge
