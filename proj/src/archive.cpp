#include "s3c/archive.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "binary_io.hpp"
#include "json_codec.hpp"
#include "s3c/error.hpp"

namespace s3c {

namespace fs = std::filesystem;
using detail::json;

namespace {

[[noreturn]] void corrupt(const fs::path& path, const std::string& what) {
  fail(ErrorCode::CorruptArchive, "CorruptArchive(" + path.filename().string() + "): " + what);
}

std::size_t element_count(const std::vector<std::uint32_t>& dims) {
  std::size_t n = 1;
  for (auto d : dims) n *= d;
  return n;
}

void expect_end(std::istream& in, const fs::path& path) {
  if (in.peek() != std::char_traits<char>::eof()) corrupt(path, "trailing bytes after payload");
}

}  // namespace

void save_tensor(const fs::path& path, const Tensor& t) {
  if (t.dims.size() > 255) fail(ErrorCode::DimensionMismatch, "tensor rank exceeds 255");
  if (element_count(t.dims) != t.values.size()) {
    fail(ErrorCode::DimensionMismatch, "tensor payload does not match its dims");
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::Io, "cannot write " + path.string());
  out.write("S3CT", 4);
  detail::write_le(out, static_cast<std::uint8_t>(t.dims.size()));
  for (auto d : t.dims) detail::write_le(out, d);
  for (double x : t.values) detail::write_le(out, x);
  if (!out) fail(ErrorCode::Io, "write failed for " + path.string());
}

Tensor load_tensor(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::Io, "cannot open " + path.string());
  if (!detail::read_magic(in, "S3CT")) corrupt(path, "bad magic");
  std::uint8_t rank = 0;
  if (!detail::read_le(in, rank)) corrupt(path, "truncated header");
  Tensor t;
  t.dims.resize(rank);
  for (auto& d : t.dims) {
    if (!detail::read_le(in, d)) corrupt(path, "truncated header");
  }
  t.values.resize(element_count(t.dims));
  for (auto& x : t.values) {
    if (!detail::read_le(in, x)) corrupt(path, "truncated payload");
  }
  expect_end(in, path);
  return t;
}

Tensor to_tensor(const Matrix& m) {
  Tensor t;
  t.dims = {static_cast<std::uint32_t>(m.rows()), static_cast<std::uint32_t>(m.cols())};
  t.values.reserve(static_cast<std::size_t>(m.size()));
  for (Index r = 0; r < m.rows(); ++r) {
    for (Index c = 0; c < m.cols(); ++c) t.values.push_back(m(r, c));
  }
  return t;
}

Tensor to_tensor(const Vector& v) {
  Tensor t;
  t.dims = {static_cast<std::uint32_t>(v.size())};
  t.values.assign(v.data(), v.data() + v.size());
  return t;
}

Matrix tensor_matrix(const Tensor& t) {
  if (t.dims.size() != 2) fail(ErrorCode::DimensionMismatch, "expected a rank-2 tensor");
  Matrix m(t.dims[0], t.dims[1]);
  std::size_t k = 0;
  for (Index r = 0; r < m.rows(); ++r) {
    for (Index c = 0; c < m.cols(); ++c) m(r, c) = t.values[k++];
  }
  return m;
}

Vector tensor_vector(const Tensor& t) {
  if (t.dims.size() != 1) fail(ErrorCode::DimensionMismatch, "expected a rank-1 tensor");
  return Eigen::Map<const Vector>(t.values.data(), static_cast<Index>(t.values.size()));
}

void save_matrix(const fs::path& path, const MatrixRef& m) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::Io, "cannot write " + path.string());
  out.write("S3CD", 4);
  detail::write_le(out, static_cast<std::uint32_t>(m.rows()));
  detail::write_le(out, static_cast<std::uint32_t>(m.cols()));
  for (Index r = 0; r < m.rows(); ++r) {
    for (Index c = 0; c < m.cols(); ++c) detail::write_le(out, m(r, c));
  }
  if (!out) fail(ErrorCode::Io, "write failed for " + path.string());
}

void save_matrix_f32(const fs::path& path, const MatrixRef& m) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::Io, "cannot write " + path.string());
  out.write("S3CF", 4);
  detail::write_le(out, static_cast<std::uint32_t>(m.rows()));
  detail::write_le(out, static_cast<std::uint32_t>(m.cols()));
  for (Index r = 0; r < m.rows(); ++r) {
    for (Index c = 0; c < m.cols(); ++c) detail::write_le(out, static_cast<float>(m(r, c)));
  }
  if (!out) fail(ErrorCode::Io, "write failed for " + path.string());
}

namespace {

template <typename Scalar>
Matrix read_binary_matrix(std::istream& in, const fs::path& path) {
  std::uint32_t rows = 0, cols = 0;
  if (!detail::read_le(in, rows) || !detail::read_le(in, cols)) {
    fail(ErrorCode::MalformedHeader, "MalformedHeader: truncated header in " + path.string());
  }
  Matrix m(rows, cols);
  for (Index r = 0; r < m.rows(); ++r) {
    for (Index c = 0; c < m.cols(); ++c) {
      Scalar x{};
      if (!detail::read_le(in, x)) corrupt(path, "truncated payload");
      m(r, c) = static_cast<double>(x);
    }
  }
  expect_end(in, path);
  return m;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::stringstream ss(line);
  while (std::getline(ss, field, ',')) fields.push_back(field);
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

bool parse_double(std::string s, double& out) {
  const auto b = s.find_first_not_of(" \t\r");
  const auto e = s.find_last_not_of(" \t\r");
  if (b == std::string::npos) return false;
  s = s.substr(b, e - b + 1);
  const auto res = std::from_chars(s.data(), s.data() + s.size(), out);
  return res.ec == std::errc() && res.ptr == s.data() + s.size();
}

}  // namespace

Matrix load_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::Io, "cannot open " + path.string());
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t line_no = 0;
  std::size_t width = 0;
  bool first = true;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    const auto fields = split_csv(line);
    std::vector<double> values(fields.size());
    bool numeric = true;
    for (std::size_t k = 0; k < fields.size(); ++k) numeric = numeric && parse_double(fields[k], values[k]);
    if (first) {
      first = false;
      width = fields.size();
      if (!numeric) continue;  // header row
    }
    if (fields.size() != width) {
      fail(ErrorCode::RaggedRows, "RaggedRows(" + std::to_string(line_no) + "): expected " +
                                      std::to_string(width) + " fields, got " +
                                      std::to_string(fields.size()));
    }
    if (!numeric) {
      fail(ErrorCode::MalformedHeader, "non-numeric field on line " + std::to_string(line_no) +
                                           " of " + path.string());
    }
    rows.push_back(std::move(values));
  }
  if (first) fail(ErrorCode::MalformedHeader, "MalformedHeader: " + path.string() + " is empty");
  Matrix m(static_cast<Index>(rows.size()), static_cast<Index>(width));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t c = 0; c < width; ++c) m(static_cast<Index>(r), static_cast<Index>(c)) = rows[r][c];
  }
  return m;
}

Matrix load_matrix(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::Io, "cannot open " + path.string());
  char head[4] = {};
  in.read(head, 4);
  const auto got = in.gcount();
  if (got == 0) fail(ErrorCode::MalformedHeader, "MalformedHeader: " + path.string() + " is empty");
  if (got == 4 && std::string_view(head, 4) == "S3CD") return read_binary_matrix<double>(in, path);
  if (got == 4 && std::string_view(head, 4) == "S3CF") return read_binary_matrix<float>(in, path);
  if (path.extension() == ".s3cd") {
    fail(ErrorCode::MalformedHeader, "MalformedHeader: " + path.string() + " lacks the S3CD magic");
  }
  in.close();
  return load_csv(path);
}

std::vector<int> load_labels(const fs::path& path) {
  const Matrix m = load_matrix(path);
  if (m.cols() != 1) fail(ErrorCode::DimensionMismatch, "labels file must have exactly one column");
  std::vector<int> labels(static_cast<std::size_t>(m.rows()));
  for (Index r = 0; r < m.rows(); ++r) {
    const double x = m(r, 0);
    if (x != std::floor(x)) {
      fail(ErrorCode::LabelOutOfRange, "LabelOutOfRange: non-integer label on row " + std::to_string(r));
    }
    labels[static_cast<std::size_t>(r)] = static_cast<int>(x);
  }
  return labels;
}

void save_labels(const fs::path& path, const std::vector<int>& labels) {
  Matrix m(static_cast<Index>(labels.size()), 1);
  for (std::size_t i = 0; i < labels.size(); ++i) m(static_cast<Index>(i), 0) = labels[i];
  save_matrix(path, m);
}

namespace {

constexpr const char* kFormatName = "s3c-archive";
constexpr const char* kCreator = "s3c 0.1.0";

json shape_of(const Tensor& t) {
  json dims = json::array();
  for (auto d : t.dims) dims.push_back(d);
  return dims;
}

class ArchiveWriter {
 public:
  explicit ArchiveWriter(const fs::path& dir) : dir_(dir) {
    fs::create_directories(dir_);
  }

  json put(const std::string& name, const Tensor& t) {
    const std::string file = name + ".s3ct";
    save_tensor(dir_ / file, t);
    return json{{"file", file}, {"shape", shape_of(t)}};
  }

  void finish(const json& manifest) {
    std::ofstream out(dir_ / "manifest.json", std::ios::binary);
    if (!out) fail(ErrorCode::Io, "cannot write manifest in " + dir_.string());
    out << manifest.dump(2) << "\n";
  }

 private:
  fs::path dir_;
};

class ArchiveReader {
 public:
  ArchiveReader(const fs::path& dir, const char* kind) : dir_(dir) {
    const fs::path path = dir_ / "manifest.json";
    std::ifstream in(path);
    if (!in) fail(ErrorCode::Io, "cannot open " + path.string());
    try {
      manifest_ = json::parse(in);
    } catch (const json::parse_error& e) {
      corrupt(path, std::string("manifest is not valid JSON: ") + e.what());
    }
    if (!manifest_.is_object() || manifest_.value("format", "") != kFormatName) {
      corrupt(path, "not an s3c archive manifest");
    }
    const int version = manifest_.value("format_version", -1);
    if (version != kArchiveFormatVersion) {
      fail(ErrorCode::VersionMismatch, "VersionMismatch: archive format_version " +
                                           std::to_string(version) + ", this build reads " +
                                           std::to_string(kArchiveFormatVersion));
    }
    if (manifest_.value("kind", "") != kind) {
      corrupt(path, std::string("expected an archive of kind '") + kind + "'");
    }
  }

  const json& manifest() const { return manifest_; }

  Tensor get(const json& entry) const {
    if (!entry.is_object() || !entry.contains("file") || !entry.contains("shape")) {
      corrupt(dir_ / "manifest.json", "malformed tensor entry");
    }
    const fs::path path = dir_ / entry.at("file").get<std::string>();
    Tensor t = load_tensor(path);
    if (shape_of(t) != entry.at("shape")) {
      fail(ErrorCode::DimensionMismatch, "DimensionMismatch(" + path.filename().string() +
                                             "): blob shape " + shape_of(t).dump() +
                                             " vs manifest " + entry.at("shape").dump());
    }
    return t;
  }

  Matrix matrix(const json& tensors, const char* name) const { return tensor_matrix(get(lookup(tensors, name))); }
  Vector vector(const json& tensors, const char* name) const { return tensor_vector(get(lookup(tensors, name))); }

 private:
  const json& lookup(const json& tensors, const char* name) const {
    if (!tensors.is_object() || !tensors.contains(name)) {
      corrupt(dir_ / "manifest.json", std::string("missing tensor '") + name + "'");
    }
    return tensors.at(name);
  }

  fs::path dir_;
  json manifest_;
};

}  // namespace

namespace {

json whitening_entry(ArchiveWriter& w, const WhiteningTransform& t) {
  return {{"epsilon", t.epsilon},
          {"contrast_normalize", t.contrast_normalize},
          {"cn_epsilon", t.cn_epsilon},
          {"tensors",
           {{"mean", w.put("zca_mean", to_tensor(t.mean))}, {"zca", w.put("zca", to_tensor(t.zca))}}}};
}

WhiteningTransform whitening_from(const ArchiveReader& r, const json& wj) {
  WhiteningTransform t;
  t.epsilon = wj.at("epsilon").get<double>();
  t.contrast_normalize = wj.at("contrast_normalize").get<bool>();
  t.cn_epsilon = wj.at("cn_epsilon").get<double>();
  t.mean = r.vector(wj.at("tensors"), "mean");
  t.zca = r.matrix(wj.at("tensors"), "zca");
  if (t.zca.rows() != t.mean.size() || t.zca.cols() != t.mean.size()) {
    fail(ErrorCode::DimensionMismatch, "DimensionMismatch: whitening mean and matrix disagree");
  }
  return t;
}

// Library errors pass through; JSON access failures mean a damaged manifest.
template <typename Fn>
auto guarded(const fs::path& dir, Fn&& fn) {
  try {
    return fn();
  } catch (const nlohmann::json::exception& e) {
    corrupt(dir / "manifest.json", e.what());
  }
}

}  // namespace

void save_model(const fs::path& dir, const ModelArchive& a) {
  require_valid(a.params);
  const ModelParams& p = a.params;
  ArchiveWriter w(dir);
  json tensors;
  tensors["W"] = w.put("W", to_tensor(p.W));
  tensors["b"] = w.put("b", to_tensor(p.b));
  tensors["mu"] = w.put("mu", to_tensor(p.mu));
  tensors["alpha"] = w.put("alpha", to_tensor(p.alpha));
  tensors["beta"] = w.put("beta", to_tensor(p.beta));

  json manifest{{"format", kFormatName},
                {"format_version", kArchiveFormatVersion},
                {"kind", "model"},
                {"created_by", kCreator},
                {"dims", {{"D", p.D()}, {"N", p.N()}}},
                {"flags", {{"beta_tied", p.beta_tied}, {"has_whitening", a.whitening.has_value()}}},
                {"tensors", tensors}};
  if (a.whitening) manifest["whitening"] = whitening_entry(w, *a.whitening);
  if (a.pooling) manifest["pooling"] = detail::pooling_to_json(*a.pooling);
  if (a.inference) manifest["inference"] = detail::inference_to_json(*a.inference);
  w.finish(manifest);
}

ModelArchive load_model(const fs::path& dir) {
  return guarded(dir, [&] {
  const ArchiveReader r(dir, "model");
  const json& m = r.manifest();
  ModelArchive a;
  const json& tensors = m.at("tensors");
  a.params.W = r.matrix(tensors, "W");
  a.params.b = r.vector(tensors, "b");
  a.params.mu = r.vector(tensors, "mu");
  a.params.alpha = r.vector(tensors, "alpha");
  a.params.beta = r.vector(tensors, "beta");
  a.params.beta_tied = m.at("flags").value("beta_tied", false);
  const auto& dims = m.at("dims");
  if (dims.value("D", Index{-1}) != a.params.D() || dims.value("N", Index{-1}) != a.params.N()) {
    fail(ErrorCode::DimensionMismatch, "DimensionMismatch: manifest dims disagree with W");
  }
  require_valid(a.params);
  if (m.contains("whitening")) a.whitening = whitening_from(r, m.at("whitening"));
  if (m.contains("pooling")) {
    PoolingConfig pc;
    detail::pooling_from_json(m.at("pooling"), pc);
    a.pooling = pc;
  }
  if (m.contains("inference")) {
    InferenceConfig ic;
    detail::inference_from_json(m.at("inference"), ic);
    a.inference = ic;
  }
  return a;
  });
}

void save_whitening(const fs::path& dir, const WhiteningTransform& t) {
  ArchiveWriter w(dir);
  json manifest{{"format", kFormatName},
                {"format_version", kArchiveFormatVersion},
                {"kind", "whitening"},
                {"created_by", kCreator},
                {"dims", {{"P", t.mean.size()}}},
                {"whitening", whitening_entry(w, t)}};
  w.finish(manifest);
}

WhiteningTransform load_whitening(const fs::path& dir) {
  return guarded(dir, [&] {
    const ArchiveReader r(dir, "whitening");
    return whitening_from(r, r.manifest().at("whitening"));
  });
}

void save_classifier(const fs::path& dir, const LinearModel& model) {
  ArchiveWriter w(dir);
  json tensors;
  tensors["weights"] = w.put("weights", to_tensor(model.weights));
  tensors["bias"] = w.put("bias", to_tensor(model.bias));
  if (!model.standardizer.empty()) {
    tensors["feature_mean"] = w.put("feature_mean", to_tensor(model.standardizer.mean));
    tensors["feature_scale"] = w.put("feature_scale", to_tensor(model.standardizer.scale));
  }
  w.finish(json{{"format", kFormatName},
                {"format_version", kArchiveFormatVersion},
                {"kind", "classifier"},
                {"created_by", kCreator},
                {"dims", {{"classes", model.num_classes()}, {"features", model.num_features()}}},
                {"lambda", model.lambda},
                {"flags", {{"standardized", !model.standardizer.empty()}}},
                {"tensors", tensors}});
}

LinearModel load_classifier(const fs::path& dir) {
  return guarded(dir, [&] {
  const ArchiveReader r(dir, "classifier");
  const json& m = r.manifest();
  const json& tensors = m.at("tensors");
  LinearModel model;
  model.weights = r.matrix(tensors, "weights");
  model.bias = r.vector(tensors, "bias");
  model.lambda = m.at("lambda").get<double>();
  if (m.at("flags").value("standardized", false)) {
    model.standardizer.mean = r.vector(tensors, "feature_mean");
    model.standardizer.scale = r.vector(tensors, "feature_scale");
  }
  if (model.bias.size() != model.weights.rows()) {
    fail(ErrorCode::DimensionMismatch, "DimensionMismatch: classifier bias/weights disagree");
  }
  return model;
  });
}

}  // namespace s3c
