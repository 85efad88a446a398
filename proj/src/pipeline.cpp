#include "s3c/pipeline.hpp"

#include <cmath>

#include "s3c/error.hpp"

namespace s3c {

void validate(const PoolingConfig& cfg) {
  if (cfg.patch_size < 1) fail(ErrorCode::InvalidConfig, "patch_size must be >= 1");
  if (cfg.grid < 1) fail(ErrorCode::InvalidConfig, "grid must be >= 1");
  if (cfg.stride < 1) fail(ErrorCode::InvalidConfig, "stride must be >= 1");
}

PatchGrid patch_grid(Index height, Index width, Index p, Index stride) {
  if (p < 1 || stride < 1) fail(ErrorCode::InvalidConfig, "patch size and stride must be >= 1");
  if (height < p || width < p) {
    fail(ErrorCode::PatchTooLarge, "PatchTooLarge: patch " + std::to_string(p) +
                                       " exceeds image " + std::to_string(height) + "x" +
                                       std::to_string(width));
  }
  return {(height - p) / stride + 1, (width - p) / stride + 1};
}

Matrix extract_patches(const Image& img, Index p, Index stride) {
  const PatchGrid grid = patch_grid(img.height, img.width, p, stride);
  const Index C = img.channels;
  Matrix out(grid.rows * grid.cols, p * p * C);
  Index row = 0;
  for (Index pr = 0; pr < grid.rows; ++pr) {
    for (Index pc = 0; pc < grid.cols; ++pc, ++row) {
      Index k = 0;
      for (Index y = 0; y < p; ++y) {
        for (Index x = 0; x < p; ++x) {
          for (Index ch = 0; ch < C; ++ch) {
            out(row, k++) = img.at(pr * stride + y, pc * stride + x, ch);
          }
        }
      }
    }
  }
  return out;
}

double default_cn_epsilon(const MatrixRef& rows) {
  const double range = rows.size() == 0 ? 0.0 : rows.cwiseAbs().maxCoeff();
  return range > 1.0 ? 10.0 : 10.0 / (255.0 * 255.0);
}

Matrix contrast_normalize(const MatrixRef& rows, double eps) {
  Matrix out(rows.rows(), rows.cols());
  const double n = static_cast<double>(rows.cols());
  for (Index r = 0; r < rows.rows(); ++r) {
    const double mean = rows.row(r).mean();
    const auto centered = rows.row(r).array() - mean;
    const double var = centered.square().sum() / n;
    out.row(r) = centered / std::sqrt(var + eps);
  }
  return out;
}

WhiteningTransform fit_zca(const MatrixRef& rows, double epsilon) {
  const Index M = rows.rows();
  const Index P = rows.cols();
  if (!(epsilon >= 0.0)) fail(ErrorCode::InvalidConfig, "ZCA epsilon must be >= 0");
  if (M < P + 1) {
    fail(ErrorCode::RankDeficient, "RankDeficient: " + std::to_string(M) +
                                       " patches cannot estimate a " + std::to_string(P) +
                                       "-dimensional covariance");
  }
  WhiteningTransform t;
  t.epsilon = epsilon;
  t.mean = rows.colwise().mean().transpose();
  const Matrix centered = rows.rowwise() - t.mean.transpose();
  const Matrix cov = (centered.transpose() * centered) / static_cast<double>(M);
  const Eigen::SelfAdjointEigenSolver<Matrix> eig(cov);
  if (eig.info() != Eigen::Success) fail(ErrorCode::RankDeficient, "eigendecomposition failed");
  const Vector lambda = eig.eigenvalues().cwiseMax(0.0);
  if (epsilon == 0.0 && lambda.minCoeff() < 1e-12) {
    fail(ErrorCode::RankDeficient, "RankDeficient: covariance is singular and epsilon = 0");
  }
  const Vector scale = (lambda.array() + epsilon).rsqrt().matrix();
  const Matrix& U = eig.eigenvectors();
  t.zca = U * scale.asDiagonal() * U.transpose();
  t.zca = 0.5 * (t.zca + t.zca.transpose()).eval();
  return t;
}

Matrix apply_zca(const WhiteningTransform& t, const MatrixRef& rows) {
  if (rows.cols() != t.mean.size()) {
    fail(ErrorCode::DimensionMismatch, "apply_zca: patch dimension " +
                                           std::to_string(rows.cols()) + " != " +
                                           std::to_string(t.mean.size()));
  }
  return (rows.rowwise() - t.mean.transpose()) * t.zca;
}

Matrix preprocess_patches(const WhiteningTransform& t, const MatrixRef& raw) {
  if (!t.contrast_normalize) return apply_zca(t, raw);
  return apply_zca(t, contrast_normalize(raw, t.cn_epsilon));
}

Matrix encode_patches(const ModelParams& params, const MatrixRef& rows,
                      const InferenceConfig& cfg) {
  if (rows.cols() != params.D()) {
    fail(ErrorCode::DimensionMismatch, "encode_patches: patch dimension " +
                                           std::to_string(rows.cols()) + " != model D " +
                                           std::to_string(params.D()));
  }
  InferenceConfig quiet = cfg;
  quiet.record_trace = false;
  return e_step(params, rows, quiet).q.h_hat;
}

std::vector<Index> region_bounds(Index extent, Index regions) {
  std::vector<Index> bounds(static_cast<std::size_t>(regions + 1), 0);
  const Index base = extent / regions;
  const Index extra = extent % regions;
  for (Index k = 0; k < regions; ++k) {
    const Index len = base + (k >= regions - extra ? 1 : 0);
    bounds[static_cast<std::size_t>(k + 1)] = bounds[static_cast<std::size_t>(k)] + len;
  }
  return bounds;
}

Vector pool_features(const MatrixRef& features, PatchGrid grid, Index g) {
  if (g < 1) fail(ErrorCode::InvalidConfig, "pooling grid must be >= 1");
  if (features.rows() != grid.rows * grid.cols) {
    fail(ErrorCode::DimensionMismatch, "pool_features: feature rows do not match position grid");
  }
  if (g > grid.rows || g > grid.cols) {
    fail(ErrorCode::GridTooFine, "GridTooFine: " + std::to_string(g) + "x" + std::to_string(g) +
                                     " regions over " + std::to_string(grid.rows) + "x" +
                                     std::to_string(grid.cols) + " positions");
  }
  const Index N = features.cols();
  const auto ry = region_bounds(grid.rows, g);
  const auto rx = region_bounds(grid.cols, g);
  Vector out = Vector::Zero(g * g * N);
  for (Index a = 0; a < g; ++a) {
    for (Index c = 0; c < g; ++c) {
      auto region = out.segment((a * g + c) * N, N);
      const auto y0 = ry[static_cast<std::size_t>(a)], y1 = ry[static_cast<std::size_t>(a + 1)];
      const auto x0 = rx[static_cast<std::size_t>(c)], x1 = rx[static_cast<std::size_t>(c + 1)];
      for (Index y = y0; y < y1; ++y) {
        for (Index x = x0; x < x1; ++x) region += features.row(y * grid.cols + x).transpose();
      }
      region /= static_cast<double>((y1 - y0) * (x1 - x0));
    }
  }
  return out;
}

Vector extract_image_features(const ModelParams& params, const WhiteningTransform& t,
                              const Image& img, const PoolingConfig& pooling,
                              const InferenceConfig& cfg) {
  validate(pooling);
  const PatchGrid grid = patch_grid(img.height, img.width, pooling.patch_size, pooling.stride);
  const Matrix raw = extract_patches(img, pooling.patch_size, pooling.stride);
  const Matrix white = preprocess_patches(t, raw);
  const Matrix codes = encode_patches(params, white, cfg);
  return pool_features(codes, grid, pooling.grid);
}

}  // namespace s3c
