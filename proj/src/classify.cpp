#include "s3c/classify.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "s3c/error.hpp"
#include "s3c/parallel.hpp"
#include "s3c/rng.hpp"

namespace s3c {

Standardizer Standardizer::fit(const MatrixRef& X) {
  Standardizer s;
  s.mean = X.colwise().mean().transpose();
  const Matrix centered = X.rowwise() - s.mean.transpose();
  s.scale = (centered.cwiseAbs2().colwise().sum() / static_cast<double>(X.rows()))
                .cwiseSqrt()
                .transpose();
  for (Index f = 0; f < s.scale.size(); ++f) {
    if (!(s.scale[f] > 1e-12)) s.scale[f] = 1.0;
  }
  return s;
}

Matrix Standardizer::apply(const MatrixRef& X) const {
  if (empty()) return X;
  return (X.rowwise() - mean.transpose()).array().rowwise() / scale.transpose().array();
}

namespace {

void check_labels(const std::vector<int>& y, Index rows, int classes) {
  if (static_cast<Index>(y.size()) != rows) {
    fail(ErrorCode::DimensionMismatch, "svm: " + std::to_string(y.size()) + " labels for " +
                                           std::to_string(rows) + " rows");
  }
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (y[i] < 0 || y[i] >= classes) {
      fail(ErrorCode::LabelOutOfRange, "LabelOutOfRange: label " + std::to_string(y[i]) +
                                           " at row " + std::to_string(i));
    }
  }
}

}  // namespace

LinearModel svm_train(const MatrixRef& X, const std::vector<int>& y, const SvmOptions& opts) {
  if (X.rows() == 0) fail(ErrorCode::EmptyDataset, "EmptyDataset: no training rows");
  if (!(opts.lambda > 0.0)) fail(ErrorCode::InvalidConfig, "svm lambda must be positive");
  if (opts.epochs < 1) fail(ErrorCode::InvalidConfig, "svm epochs must be >= 1");
  const int max_label = *std::max_element(y.begin(), y.end());
  const int K = opts.num_classes > 0 ? opts.num_classes : max_label + 1;
  check_labels(y, X.rows(), K);

  LinearModel model;
  model.lambda = opts.lambda;
  if (opts.standardize) model.standardizer = Standardizer::fit(X);
  const Matrix Z = model.standardizer.apply(X);
  const Index M = Z.rows();
  const Index F = Z.cols();
  model.weights = Matrix::Zero(K, F);
  model.bias = Vector::Zero(K);

  // Same visiting order for every class.
  std::vector<std::vector<Index>> orders(static_cast<std::size_t>(opts.epochs));
  for (int e = 0; e < opts.epochs; ++e) {
    auto& order = orders[static_cast<std::size_t>(e)];
    order.resize(static_cast<std::size_t>(M));
    std::iota(order.begin(), order.end(), Index{0});
    Rng rng(opts.seed, static_cast<std::uint64_t>(e));
    std::shuffle(order.begin(), order.end(), rng.engine());
  }
  const double radius = 1.0 / std::sqrt(opts.lambda);

  parallel_for(K, opts.workers, [&](Index begin, Index end) {
    for (Index k = begin; k < end; ++k) {
      Vector w = Vector::Zero(F);
      double b = 0.0;
      double t = 0.0;
      for (const auto& order : orders) {
        for (Index i : order) {
          t += 1.0;
          const double eta = 1.0 / (opts.lambda * t);
          const double label = y[static_cast<std::size_t>(i)] == k ? 1.0 : -1.0;
          const double margin = label * (Z.row(i).dot(w) + b);
          const double shrink = 1.0 - eta * opts.lambda;
          w *= shrink;
          b *= shrink;
          if (margin < 1.0) {
            w += (eta * label) * Z.row(i).transpose();
            if (opts.fit_intercept) b += eta * label;
          }
          const double norm = std::sqrt(w.squaredNorm() + b * b);
          if (norm > radius) {
            w *= radius / norm;
            b *= radius / norm;
          }
        }
      }
      model.weights.row(k) = w.transpose();
      model.bias[k] = b;
    }
  });
  return model;
}

Matrix decision_values(const LinearModel& model, const MatrixRef& X) {
  if (X.cols() != model.num_features()) {
    fail(ErrorCode::DimensionMismatch, "classifier expects " +
                                           std::to_string(model.num_features()) +
                                           " features, got " + std::to_string(X.cols()));
  }
  Matrix scores = model.standardizer.apply(X) * model.weights.transpose();
  scores.rowwise() += model.bias.transpose();
  return scores;
}

std::vector<int> svm_predict(const LinearModel& model, const MatrixRef& X) {
  const Matrix scores = decision_values(model, X);
  std::vector<int> out(static_cast<std::size_t>(scores.rows()), 0);
  for (Index r = 0; r < scores.rows(); ++r) {
    Index best = 0;
    for (Index k = 1; k < scores.cols(); ++k) {
      if (scores(r, k) > scores(r, best)) best = k;
    }
    out[static_cast<std::size_t>(r)] = static_cast<int>(best);
  }
  return out;
}

double svm_objective(const LinearModel& model, const MatrixRef& X, const std::vector<int>& y) {
  check_labels(y, X.rows(), static_cast<int>(model.num_classes()));
  const Matrix scores = decision_values(model, X);
  double total = 0.0;
  for (Index k = 0; k < model.num_classes(); ++k) {
    double hinge = 0.0;
    for (Index r = 0; r < scores.rows(); ++r) {
      const double label = y[static_cast<std::size_t>(r)] == k ? 1.0 : -1.0;
      hinge += std::max(0.0, 1.0 - label * scores(r, k));
    }
    total += 0.5 * model.lambda * (model.weights.row(k).squaredNorm() + model.bias[k] * model.bias[k]) +
             hinge / static_cast<double>(scores.rows());
  }
  return total;
}

double accuracy(const std::vector<int>& predicted, const std::vector<int>& truth) {
  if (predicted.size() != truth.size() || truth.empty()) {
    fail(ErrorCode::DimensionMismatch, "accuracy: label vectors differ in length");
  }
  std::size_t hits = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) hits += predicted[i] == truth[i];
  return static_cast<double>(hits) / static_cast<double>(truth.size());
}

}  // namespace s3c
