#ifndef S3C_PIPELINE_HPP
#define S3C_PIPELINE_HPP

#include <filesystem>
#include <vector>

#include "s3c/inference.hpp"
#include "s3c/model.hpp"

namespace s3c {

/// Pixels stored interleaved: index ((row * width) + col) * channels + channel.
struct Image {
  Index height = 0;
  Index width = 0;
  Index channels = 0;
  std::vector<double> pixels;

  double at(Index row, Index col, Index ch) const {
    return pixels[static_cast<std::size_t>((row * width + col) * channels + ch)];
  }
};

struct PoolingConfig {
  Index patch_size = 6;
  Index grid = 3;
  Index stride = 1;

  bool operator==(const PoolingConfig&) const = default;
};

void validate(const PoolingConfig& cfg);

struct PatchGrid {
  Index rows = 0;
  Index cols = 0;
};

PatchGrid patch_grid(Index height, Index width, Index patch_size, Index stride);

/// One row per patch position (row-major over positions). Each row flattens a
/// p x p x C patch in (row, column, channel) order.
Matrix extract_patches(const Image& img, Index patch_size, Index stride);

/// eps_cn = 10 for pixel-scale data (max |x| > 1), 10 / 255^2 for unit-scale.
double default_cn_epsilon(const MatrixRef& rows);

/// Per row: (x - mean) / sqrt(var + eps).
Matrix contrast_normalize(const MatrixRef& rows, double eps);

struct WhiteningTransform {
  Vector mean;
  Matrix zca;
  double epsilon = 0.01;
  // Contrast normalization applied to raw patches before whitening.
  bool contrast_normalize = true;
  double cn_epsilon = 10.0;

  bool operator==(const WhiteningTransform&) const = default;
};

/// zca = U (L + eps I)^(-1/2) U^T of the patch covariance.
WhiteningTransform fit_zca(const MatrixRef& rows, double epsilon);
Matrix apply_zca(const WhiteningTransform& t, const MatrixRef& rows);

/// Raw patches -> (contrast normalization) -> whitening, as configured in t.
Matrix preprocess_patches(const WhiteningTransform& t, const MatrixRef& raw);

/// E_Q[h] per patch.
Matrix encode_patches(const ModelParams& params, const MatrixRef& rows,
                      const InferenceConfig& cfg);

/// Splits `extent` positions into `regions` contiguous spans; the trailing
/// (extent mod regions) spans get one extra position each.
std::vector<Index> region_bounds(Index extent, Index regions);

/// Average-pools per-position features (rows ordered row-major over a
/// grid.rows x grid.cols position grid) over a g x g grid of regions.
/// Output: region vectors concatenated in row-major region order.
Vector pool_features(const MatrixRef& features, PatchGrid grid, Index g);

Vector extract_image_features(const ModelParams& params, const WhiteningTransform& t,
                              const Image& img, const PoolingConfig& pooling,
                              const InferenceConfig& cfg);

// Image files: PNG (8-bit gray/RGB/RGBA, scaled to [0, 1]) or raw planar
// "S3CI" (u32 H, W, C then f32 little-endian samples, channel planes).
Image load_image(const std::filesystem::path& path);
void save_raw_image(const std::filesystem::path& path, const Image& img);

}  // namespace s3c

#endif  // S3C_PIPELINE_HPP
