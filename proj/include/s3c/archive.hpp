#ifndef S3C_ARCHIVE_HPP
#define S3C_ARCHIVE_HPP

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "s3c/classify.hpp"
#include "s3c/inference.hpp"
#include "s3c/model.hpp"
#include "s3c/pipeline.hpp"

namespace s3c {

inline constexpr int kArchiveFormatVersion = 1;

// Tensor blob: "S3CT", u8 rank, u32 dims[rank], f64 little-endian row-major.
struct Tensor {
  std::vector<std::uint32_t> dims;
  std::vector<double> values;
};

void save_tensor(const std::filesystem::path& path, const Tensor& t);
Tensor load_tensor(const std::filesystem::path& path);

Tensor to_tensor(const Matrix& m);
Tensor to_tensor(const Vector& v);
Matrix tensor_matrix(const Tensor& t);
Vector tensor_vector(const Tensor& t);

// Dataset: "S3CD", u32 rows, u32 cols, f64 little-endian row-major.
void save_matrix(const std::filesystem::path& path, const MatrixRef& m);
void save_matrix_f32(const std::filesystem::path& path, const MatrixRef& m);

/// Reads an S3CD file, or CSV (header row auto-detected) otherwise.
Matrix load_matrix(const std::filesystem::path& path);
Matrix load_csv(const std::filesystem::path& path);

/// Integer labels from a one-column dataset or CSV.
std::vector<int> load_labels(const std::filesystem::path& path);
void save_labels(const std::filesystem::path& path, const std::vector<int>& labels);

/// Directory archive: manifest.json plus one S3CT blob per tensor.
struct ModelArchive {
  ModelParams params;
  std::optional<WhiteningTransform> whitening;
  std::optional<PoolingConfig> pooling;
  std::optional<InferenceConfig> inference;
};

void save_model(const std::filesystem::path& dir, const ModelArchive& archive);
ModelArchive load_model(const std::filesystem::path& dir);

// Standalone whitening archive written by fit-whitening.
void save_whitening(const std::filesystem::path& dir, const WhiteningTransform& t);
WhiteningTransform load_whitening(const std::filesystem::path& dir);

void save_classifier(const std::filesystem::path& dir, const LinearModel& model);
LinearModel load_classifier(const std::filesystem::path& dir);

}  // namespace s3c

#endif  // S3C_ARCHIVE_HPP
