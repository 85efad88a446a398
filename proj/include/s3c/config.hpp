#ifndef S3C_CONFIG_HPP
#define S3C_CONFIG_HPP

#include <filesystem>
#include <string>
#include <string_view>

#include "s3c/learning.hpp"
#include "s3c/pipeline.hpp"

namespace s3c {

/// Everything a command may need, loaded from one flat JSON object such as
///
///   { "units": 100, "epochs": 5, "eta_s": 0.5, "s_mode": "heuristic" }
///
/// Missing keys keep their defaults; unknown keys are rejected. The worker
/// count is a runtime setting (--workers / S3C_WORKERS) and is not part of
/// the document.
struct RunConfig {
  TrainConfig train;
  PoolingConfig pooling;
  Index units = 64;
  double target_sparsity = 0.05;
  bool beta_tied = false;
  double zca_epsilon = 0.01;
  double svm_lambda = 0.0;  // 0 selects lambda on a validation split
  int svm_epochs = 20;
  std::string data_path;
  std::string out_path;

  bool operator==(const RunConfig&) const = default;
};

void validate(const RunConfig& cfg);

RunConfig run_config_from_json(std::string_view text);
std::string run_config_to_json(const RunConfig& cfg);

RunConfig load_run_config(const std::filesystem::path& path);
void save_run_config(const std::filesystem::path& path, const RunConfig& cfg);

}  // namespace s3c

#endif  // S3C_CONFIG_HPP
