#ifndef S3C_TESTS_SUPPORT_HPP
#define S3C_TESTS_SUPPORT_HPP

#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <unistd.h>

#include "s3c/model.hpp"
#include "s3c/numeric.hpp"
#include "s3c/rng.hpp"

namespace s3c::testing {

inline Vector normal_vector(Rng& rng, Index n, double scale = 1.0) {
  Vector x(n);
  for (Index i = 0; i < n; ++i) x[i] = scale * rng.normal();
  return x;
}

inline Vector uniform_vector(Rng& rng, Index n, double lo, double hi) {
  Vector x(n);
  for (Index i = 0; i < n; ++i) x[i] = lo + (hi - lo) * rng.uniform();
  return x;
}

inline Matrix unit_columns(Rng& rng, Index D, Index N) {
  Matrix W(D, N);
  for (Index j = 0; j < N; ++j) {
    W.col(j) = normal_vector(rng, D);
    W.col(j).normalize();
  }
  return W;
}

inline ModelParams random_params(Rng& rng, Index D, Index N, bool tied = false) {
  ModelParams p;
  p.W = unit_columns(rng, D, N);
  p.b = normal_vector(rng, N, 1.5);
  p.mu = normal_vector(rng, N);
  p.alpha = uniform_vector(rng, N, 0.5, 2.0);
  p.beta = tied ? Vector::Constant(D, 0.5 + 1.5 * rng.uniform()) : uniform_vector(rng, D, 0.5, 2.0);
  p.beta_tied = tied;
  return p;
}

inline ModelParams scalar_params(double b = 0.0, double mu = 0.0, double alpha = 1.0,
                                 double beta = 1.0) {
  return make_params(Matrix::Ones(1, 1), b, mu, alpha, beta);
}

inline Vector vec(std::initializer_list<double> xs) {
  Vector v(static_cast<Index>(xs.size()));
  Index i = 0;
  for (double x : xs) v[i++] = x;
  return v;
}

// Composite trapezoid rule on [lo, hi] with n intervals.
template <typename F>
double trapezoid(F&& f, double lo, double hi, int n) {
  const double h = (hi - lo) / n;
  double sum = 0.5 * (f(lo) + f(hi));
  for (int k = 1; k < n; ++k) sum += f(lo + k * h);
  return sum * h;
}

inline double rel_error(double a, double b) {
  return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)});
}

class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("s3c_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline std::string read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream(path, std::ios::binary) << text;
}

}  // namespace s3c::testing

#endif  // S3C_TESTS_SUPPORT_HPP
