#include <doctest.h>

#include <cstdio>

#include "json.hpp"
#include "s3c/archive.hpp"
#include "s3c/config.hpp"
#include "s3c/error.hpp"
#include "support.hpp"

using namespace s3c;
using namespace s3c::testing;
namespace fs = std::filesystem;

namespace {

ModelArchive sample_archive(bool with_whitening) {
  Rng rng(91);
  ModelArchive a;
  a.params = random_params(rng, 4, 3);
  if (with_whitening) {
    WhiteningTransform t;
    t.mean = normal_vector(rng, 4);
    t.zca = Matrix::Random(4, 4);
    t.zca = (t.zca + t.zca.transpose()).eval();
    t.epsilon = 0.05;
    t.cn_epsilon = 10.0 / (255.0 * 255.0);
    a.whitening = t;
  }
  a.pooling = PoolingConfig{2, 2, 1};
  InferenceConfig cfg;
  cfg.max_iters = 17;
  cfg.s_mode = SlabMode::conjugate_gradient;
  a.inference = cfg;
  return a;
}

std::map<std::string, std::string> snapshot(const fs::path& dir) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::directory_iterator(dir)) files[e.path().filename().string()] = read_bytes(e.path());
  return files;
}

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return ErrorCode::Io;
}

}  // namespace

TEST_SUITE("persistence") {

TEST_CASE("tensor blobs round trip bitwise") {
  TempDir dir;
  Rng rng(92);
  Matrix m(3, 5);
  for (Index k = 0; k < m.size(); ++k) m.data()[k] = rng.normal() * 1e-300;
  m(1, 1) = -0.0;
  save_tensor(dir / "t.s3ct", to_tensor(m));
  const Matrix back = tensor_matrix(load_tensor(dir / "t.s3ct"));
  CHECK(read_bytes(dir / "t.s3ct").size() == 4 + 1 + 2 * 4 + 15 * 8);
  CHECK(std::memcmp(back.data(), m.data(), sizeof(double) * 15) == 0);
}

TEST_CASE("tensor blob layout is little-endian row-major") {
  TempDir dir;
  Matrix m(2, 2);
  m << 1.0, 2.0, 3.0, 4.0;
  save_tensor(dir / "t.s3ct", to_tensor(m));
  const std::string bytes = read_bytes(dir / "t.s3ct");
  CHECK(bytes.substr(0, 4) == "S3CT");
  CHECK(bytes[4] == 2);
  double second = 0.0;
  std::memcpy(&second, bytes.data() + 4 + 1 + 8 + 8, 8);
  CHECK(second == 2.0);
}

TEST_CASE("model archives round trip bitwise") {
  for (bool whitening : {false, true}) {
    TempDir dir;
    const ModelArchive a = sample_archive(whitening);
    save_model(dir / "m1", a);
    const ModelArchive b = load_model(dir / "m1");
    CHECK(b.params == a.params);
    CHECK(b.whitening == a.whitening);
    CHECK(b.pooling == a.pooling);
    CHECK(b.inference == a.inference);
    save_model(dir / "m2", b);
    CHECK(snapshot(dir / "m1") == snapshot(dir / "m2"));
  }
}

TEST_CASE("truncated blobs name the offending file") {
  TempDir dir;
  save_model(dir / "m", sample_archive(false));
  const fs::path blob = dir / "m" / "alpha.s3ct";
  fs::resize_file(blob, fs::file_size(blob) - 3);
  try {
    load_model(dir / "m");
    FAIL("expected CorruptArchive");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::CorruptArchive);
    CHECK(std::string(e.what()).find("alpha.s3ct") != std::string::npos);
  }
}

TEST_CASE("bad magic and trailing bytes are corrupt") {
  TempDir dir;
  save_model(dir / "m", sample_archive(false));
  std::string bytes = read_bytes(dir / "m" / "b.s3ct");
  write_text(dir / "m" / "b.s3ct", bytes + "x");
  CHECK(code_of([&] { load_model(dir / "m"); }) == ErrorCode::CorruptArchive);
  bytes[0] = 'X';
  write_text(dir / "m" / "b.s3ct", bytes);
  CHECK(code_of([&] { load_model(dir / "m"); }) == ErrorCode::CorruptArchive);
}

TEST_CASE("a bumped manifest version names both versions") {
  TempDir dir;
  save_model(dir / "m", sample_archive(false));
  auto manifest = nlohmann::json::parse(read_bytes(dir / "m" / "manifest.json"));
  manifest["format_version"] = 7;
  write_text(dir / "m" / "manifest.json", manifest.dump(2));
  try {
    load_model(dir / "m");
    FAIL("expected VersionMismatch");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::VersionMismatch);
    const std::string what = e.what();
    CHECK(what.find('7') != std::string::npos);
    CHECK(what.find(std::to_string(kArchiveFormatVersion)) != std::string::npos);
  }
}

TEST_CASE("blob shapes must agree with the manifest") {
  TempDir dir;
  save_model(dir / "m", sample_archive(false));
  save_tensor(dir / "m" / "mu.s3ct", to_tensor(Vector(Vector::Zero(5))));
  CHECK(code_of([&] { load_model(dir / "m"); }) == ErrorCode::DimensionMismatch);
}

TEST_CASE("malformed manifests are corrupt archives") {
  TempDir dir;
  save_model(dir / "m", sample_archive(false));
  write_text(dir / "m" / "manifest.json", "{ not json");
  CHECK(code_of([&] { load_model(dir / "m"); }) == ErrorCode::CorruptArchive);
}

TEST_CASE("loaded parameters are validated") {
  TempDir dir;
  ModelArchive a = sample_archive(false);
  save_model(dir / "m", a);
  a.params.W.col(0) *= 2.0;
  save_tensor(dir / "m" / "W.s3ct", to_tensor(a.params.W));
  CHECK(code_of([&] { load_model(dir / "m"); }) == ErrorCode::InvalidParams);
}

TEST_CASE("whitening and classifier archives round trip") {
  TempDir dir;
  const ModelArchive a = sample_archive(true);
  save_whitening(dir / "w", *a.whitening);
  CHECK(load_whitening(dir / "w") == *a.whitening);
  CHECK(code_of([&] { load_model(dir / "w"); }) == ErrorCode::CorruptArchive);

  LinearModel m;
  m.weights = Matrix::Random(3, 4);
  m.bias = Vector::Random(3);
  m.lambda = 1e-3;
  m.standardizer = Standardizer::fit(Matrix::Random(10, 4));
  save_classifier(dir / "c", m);
  CHECK(load_classifier(dir / "c") == m);
}

TEST_CASE("dataset matrices round trip") {
  TempDir dir;
  Matrix m(2, 3);
  m << 1.5, -2.0, 3.25, 1e-300, 0.0, -7.0;
  save_matrix(dir / "m.s3cd", m);
  CHECK(load_matrix(dir / "m.s3cd") == m);
  CHECK(read_bytes(dir / "m.s3cd").size() == 4 + 8 + 6 * 8);
  save_matrix_f32(dir / "m.s3cf", m);
  const Matrix f = load_matrix(dir / "m.s3cf");
  CHECK(f(0, 1) == -2.0);
  CHECK(f(1, 0) == static_cast<double>(static_cast<float>(1e-300)));
}

TEST_CASE("CSV import with and without a header") {
  TempDir dir;
  write_text(dir / "a.csv", "x,y\n1,2\n3.5,-4\n");
  write_text(dir / "b.csv", "1,2\n3.5,-4\n");
  Matrix expected(2, 2);
  expected << 1, 2, 3.5, -4;
  CHECK(load_matrix(dir / "a.csv") == expected);
  CHECK(load_matrix(dir / "b.csv") == expected);
}

TEST_CASE("ragged CSV rows report the line") {
  TempDir dir;
  write_text(dir / "r.csv", "1,2,3\n4,5,6\n7,8\n");
  try {
    load_matrix(dir / "r.csv");
    FAIL("expected RaggedRows");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::RaggedRows);
    CHECK(std::string(e.what()).find("RaggedRows(3)") != std::string::npos);
  }
}

TEST_CASE("empty and truncated matrix files are malformed") {
  TempDir dir;
  write_text(dir / "e.s3cd", "");
  CHECK(code_of([&] { load_matrix(dir / "e.s3cd"); }) == ErrorCode::MalformedHeader);
  write_text(dir / "t.s3cd", std::string("S3CD\x02\x00", 6));
  CHECK(code_of([&] { load_matrix(dir / "t.s3cd"); }) == ErrorCode::MalformedHeader);
  CHECK(code_of([&] { load_matrix(dir / "missing.s3cd"); }) == ErrorCode::Io);
}

TEST_CASE("labels round trip") {
  TempDir dir;
  const std::vector<int> labels{0, 2, 1, 1, 9};
  save_labels(dir / "y.s3cd", labels);
  CHECK(load_labels(dir / "y.s3cd") == labels);
  write_text(dir / "y.csv", "label\n1\n0\n");
  CHECK(load_labels(dir / "y.csv") == std::vector<int>{1, 0});
  write_text(dir / "bad.csv", "0.5\n");
  CHECK_THROWS_AS(load_labels(dir / "bad.csv"), Error);
}

TEST_CASE("run configuration round trips through JSON") {
  RunConfig cfg;
  cfg.train.batch_size = 17;
  cfg.train.learning_rates.beta = 3e-4;
  cfg.train.inference.s_mode = SlabMode::conjugate_gradient;
  cfg.train.inference.clip = false;
  cfg.pooling.grid = 2;
  cfg.units = 12;
  cfg.beta_tied = true;
  cfg.data_path = "data.s3cd";
  CHECK(run_config_from_json(run_config_to_json(cfg)) == cfg);
  TempDir dir;
  save_run_config(dir / "c.json", cfg);
  CHECK(load_run_config(dir / "c.json") == cfg);
}

TEST_CASE("run configuration rejects unknown keys and bad ranges") {
  CHECK(code_of([] { run_config_from_json(R"({"bogus": 1})"); }) == ErrorCode::InvalidConfig);
  CHECK(code_of([] { run_config_from_json(R"({"rho": 2.0})"); }) == ErrorCode::InvalidConfig);
  CHECK(code_of([] { run_config_from_json(R"({"batch_size": 0})"); }) == ErrorCode::InvalidConfig);
  CHECK(code_of([] { run_config_from_json(R"({"s_mode": "newton"})"); }) == ErrorCode::InvalidConfig);
  CHECK(code_of([] { run_config_from_json("[1, 2]"); }) == ErrorCode::InvalidConfig);
  CHECK(code_of([] { run_config_from_json("{"); }) == ErrorCode::InvalidConfig);
  CHECK(run_config_from_json(R"({"units": 5})").units == 5);
}

}  // TEST_SUITE
