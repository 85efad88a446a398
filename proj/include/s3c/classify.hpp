#ifndef S3C_CLASSIFY_HPP
#define S3C_CLASSIFY_HPP

#include <cstdint>
#include <vector>

#include "s3c/numeric.hpp"

namespace s3c {

struct Standardizer {
  Vector mean;
  Vector scale;  // divides (x - mean); 1 for constant features

  static Standardizer fit(const MatrixRef& X);
  Matrix apply(const MatrixRef& X) const;
  bool empty() const { return mean.size() == 0; }

  bool operator==(const Standardizer&) const = default;
};

/// One-vs-all linear classifier; class k scores weights.row(k) . x + bias[k]
/// on standardized features.
struct LinearModel {
  Matrix weights;  // K x F
  Vector bias;     // K
  double lambda = 1e-4;
  Standardizer standardizer;  // empty when training did not standardize

  Index num_classes() const { return weights.rows(); }
  Index num_features() const { return weights.cols(); }

  bool operator==(const LinearModel&) const = default;
};

struct SvmOptions {
  double lambda = 1e-4;
  int epochs = 20;
  std::uint64_t seed = 0;
  bool standardize = true;
  // Intercept is learned as a weight on a constant-one feature.
  bool fit_intercept = true;
  int num_classes = 0;  // 0: max label + 1
  int workers = 1;
};

/// Hinge-loss one-vs-all via stochastic subgradient steps of size 1/(lambda t)
/// (Pegasos, with projection onto the ball of radius 1/sqrt(lambda)).
LinearModel svm_train(const MatrixRef& X, const std::vector<int>& y, const SvmOptions& opts);

Matrix decision_values(const LinearModel& model, const MatrixRef& X);

// argmax of decision values; ties go to the lower class index.
std::vector<int> svm_predict(const LinearModel& model, const MatrixRef& X);

/// Sum over classes of lambda/2 ||w_k||^2 + mean hinge loss.
double svm_objective(const LinearModel& model, const MatrixRef& X, const std::vector<int>& y);

double accuracy(const std::vector<int>& predicted, const std::vector<int>& truth);

}  // namespace s3c

#endif  // S3C_CLASSIFY_HPP
