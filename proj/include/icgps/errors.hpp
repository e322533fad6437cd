#pragma once

#include <stdexcept>
#include <string>

namespace icgps {

// Configuration schema violation; `key_path` is the dotted path of the
// offending or missing key.
struct ConfigError : std::runtime_error {
  std::string key_path;
  ConfigError(std::string path, const std::string& msg)
      : std::runtime_error("config error at '" + path + "': " + msg), key_path(std::move(path)) {}
};

// Malformed input data; `row` is the 1-based CSV row (including header).
struct DataError : std::runtime_error {
  int row;
  DataError(int row_, const std::string& msg)
      : std::runtime_error("data error at row " + std::to_string(row_) + ": " + msg), row(row_) {}
};

struct TrainError : std::runtime_error {
  int epoch;
  TrainError(int epoch_, const std::string& msg)
      : std::runtime_error("training failed at epoch " + std::to_string(epoch_) + ": " + msg),
        epoch(epoch_) {}
};

struct MissingArtifactError : std::runtime_error {
  explicit MissingArtifactError(const std::string& path)
      : std::runtime_error("missing artifact: " + path) {}
};

}  // namespace icgps
