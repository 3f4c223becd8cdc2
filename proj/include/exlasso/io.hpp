#pragma once

#include "exlasso/common.hpp"
#include "exlasso/model.hpp"

#include <json.hpp>

#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

namespace exlasso {

/// Malformed input. what() reads "file:line: reason" when a line is known.
class ParseError : public InvalidArgument {
 public:
  ParseError(const std::string& file, std::size_t line, const std::string& reason)
      : InvalidArgument(file + ":" + std::to_string(line) + ": " + reason) {}
  ParseError(const std::string& file, const std::string& reason)
      : InvalidArgument(file + ": " + reason) {}
};

enum class MatrixFormat { Csv, LibSvm };

namespace io_detail {

namespace fs = std::filesystem;

inline std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline bool parse_double(std::string_view tok, double& out) {
  tok = trim(tok);
  if (!tok.empty() && tok.front() == '+') tok.remove_prefix(1);
  if (tok.empty()) return false;
  const auto res = std::from_chars(tok.data(), tok.data() + tok.size(), out);
  return res.ec == std::errc() && res.ptr == tok.data() + tok.size() && std::isfinite(out);
}

inline bool parse_index(std::string_view tok, long long& out) {
  tok = trim(tok);
  if (tok.empty()) return false;
  const auto res = std::from_chars(tok.data(), tok.data() + tok.size(), out);
  return res.ec == std::errc() && res.ptr == tok.data() + tok.size();
}

inline std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    out.push_back(s.substr(start, pos == std::string_view::npos ? pos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

/// Whitespace- or comma-separated tokens.
inline std::vector<std::string_view> tokens(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  auto is_sep = [](char ch) { return ch == ' ' || ch == '\t' || ch == ',' || ch == '\r'; };
  while (i < s.size()) {
    while (i < s.size() && is_sep(s[i])) ++i;
    const std::size_t b = i;
    while (i < s.size() && !is_sep(s[i])) ++i;
    if (i > b) out.push_back(s.substr(b, i - b));
  }
  return out;
}

inline bool is_blank_or_comment(std::string_view s) {
  s = trim(s);
  return s.empty() || s.front() == '#';
}

inline std::ifstream open_in(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw ParseError(p.string(), "cannot open for reading");
  return in;
}

inline std::ofstream open_out(const fs::path& p) {
  std::ofstream out(p, std::ios::trunc);
  if (!out) throw InvalidArgument(p.string() + ": cannot open for writing");
  return out;
}

inline std::string fmt17(double v) {
  char buf[32];
  const int k = std::snprintf(buf, sizeof buf, "%.17g", v);
  return std::string(buf, static_cast<std::size_t>(k));
}

inline void check_written(std::ofstream& out, const fs::path& p) {
  out.flush();
  if (!out) throw InvalidArgument(p.string() + ": write failed");
}

}  // namespace io_detail

// ---------------------------------------------------------------------------
// CSV: one matrix row per line, comma-separated, "." decimal point, values
// written with 17 significant digits. Blank lines and lines starting with '#'
// are skipped.
// ---------------------------------------------------------------------------

inline Matrix read_csv_matrix(const std::filesystem::path& path) {
  auto in = io_detail::open_in(path);
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (io_detail::is_blank_or_comment(line)) continue;
    std::vector<double> row;
    for (auto tok : io_detail::split(line, ',')) {
      double v = 0.0;
      if (!io_detail::parse_double(tok, v)) {
        throw ParseError(path.string(), lineno,
                         "not a number: '" + std::string(io_detail::trim(tok)) + "'");
      }
      row.push_back(v);
    }
    if (!rows.empty() && row.size() != rows.front().size()) {
      throw ParseError(path.string(), lineno,
                       "expected " + std::to_string(rows.front().size()) + " columns, found " +
                           std::to_string(row.size()));
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw ParseError(path.string(), "no data rows");
  Matrix A(static_cast<Index>(rows.size()), static_cast<Index>(rows.front().size()));
  for (Index i = 0; i < A.rows(); ++i) {
    for (Index j = 0; j < A.cols(); ++j) {
      A(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
    }
  }
  return A;
}

inline void write_csv_matrix(const std::filesystem::path& path, const Matrix& A) {
  auto out = io_detail::open_out(path);
  for (Index i = 0; i < A.rows(); ++i) {
    for (Index j = 0; j < A.cols(); ++j) {
      if (j > 0) out << ',';
      out << io_detail::fmt17(A(i, j));
    }
    out << '\n';
  }
  io_detail::check_written(out, path);
}

/// One value per line. Also used for weights files.
inline Vector read_vector(const std::filesystem::path& path) {
  auto in = io_detail::open_in(path);
  std::vector<double> vals;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (io_detail::is_blank_or_comment(line)) continue;
    double v = 0.0;
    if (!io_detail::parse_double(line, v)) {
      throw ParseError(path.string(), lineno,
                       "expected one number, found '" + std::string(io_detail::trim(line)) + "'");
    }
    vals.push_back(v);
  }
  if (vals.empty()) throw ParseError(path.string(), "no values");
  return Eigen::Map<Vector>(vals.data(), static_cast<Index>(vals.size()));
}

inline void write_vector(const std::filesystem::path& path, const Eigen::Ref<const Vector>& v) {
  auto out = io_detail::open_out(path);
  for (Index i = 0; i < v.size(); ++i) out << io_detail::fmt17(v[i]) << '\n';
  io_detail::check_written(out, path);
}

inline Vector read_weights(const std::filesystem::path& path) {
  Vector w = read_vector(path);
  for (Index i = 0; i < w.size(); ++i) {
    if (!(w[i] > 0.0) || !std::isfinite(w[i])) {
      throw ParseError(path.string(), "weight " + std::to_string(i + 1) + " is not positive");
    }
  }
  return w;
}

// ---------------------------------------------------------------------------
// LibSVM: "label idx:val idx:val ..." with 1-based, strictly increasing
// feature indices. Rows are densified.
// ---------------------------------------------------------------------------

struct LibSvmData {
  Matrix A;
  Vector labels;
};

/// n_features <= 0 infers the column count from the largest index seen.
inline LibSvmData read_libsvm(const std::filesystem::path& path, Index n_features = 0) {
  auto in = io_detail::open_in(path);
  struct Entry {
    Index row, col;
    double val;
  };
  std::vector<Entry> entries;
  std::vector<double> labels;
  Index max_col = 0;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (io_detail::is_blank_or_comment(line)) continue;
    auto toks = io_detail::tokens(line);
    double label = 0.0;
    if (!io_detail::parse_double(toks.front(), label)) {
      throw ParseError(path.string(), lineno,
                       "bad label '" + std::string(toks.front()) + "'");
    }
    const Index row = static_cast<Index>(labels.size());
    long long prev = 0;
    for (std::size_t k = 1; k < toks.size(); ++k) {
      const auto colon = toks[k].find(':');
      if (colon == std::string_view::npos) {
        throw ParseError(path.string(), lineno,
                         "expected idx:value, found '" + std::string(toks[k]) + "'");
      }
      long long idx = 0;
      double v = 0.0;
      if (!io_detail::parse_index(toks[k].substr(0, colon), idx) || idx < 1) {
        throw ParseError(path.string(), lineno,
                         "bad feature index in '" + std::string(toks[k]) + "'");
      }
      if (idx <= prev) {
        throw ParseError(path.string(), lineno,
                         "feature indices must be strictly increasing at " + std::to_string(idx));
      }
      if (!io_detail::parse_double(toks[k].substr(colon + 1), v)) {
        throw ParseError(path.string(), lineno,
                         "bad feature value in '" + std::string(toks[k]) + "'");
      }
      if (n_features > 0 && idx > n_features) {
        throw ParseError(path.string(), lineno,
                         "feature index " + std::to_string(idx) + " exceeds " +
                             std::to_string(n_features));
      }
      prev = idx;
      max_col = std::max<Index>(max_col, static_cast<Index>(idx));
      entries.push_back({row, static_cast<Index>(idx - 1), v});
    }
    labels.push_back(label);
  }
  if (labels.empty()) throw ParseError(path.string(), "no data rows");
  const Index n = n_features > 0 ? n_features : max_col;
  if (n == 0) throw ParseError(path.string(), "no features");
  LibSvmData out;
  out.A = Matrix::Zero(static_cast<Index>(labels.size()), n);
  for (const auto& e : entries) out.A(e.row, e.col) = e.val;
  out.labels = Eigen::Map<Vector>(labels.data(), static_cast<Index>(labels.size()));
  return out;
}

inline void write_libsvm(const std::filesystem::path& path, const Matrix& A,
                         const Eigen::Ref<const Vector>& labels) {
  detail::require_size(labels.size(), A.rows(), "write_libsvm labels");
  auto out = io_detail::open_out(path);
  for (Index i = 0; i < A.rows(); ++i) {
    out << io_detail::fmt17(labels[i]);
    for (Index j = 0; j < A.cols(); ++j) {
      if (A(i, j) != 0.0) out << ' ' << (j + 1) << ':' << io_detail::fmt17(A(i, j));
    }
    out << '\n';
  }
  io_detail::check_written(out, path);
}

// ---------------------------------------------------------------------------
// Groups: one group per line, 1-based indices separated by spaces or commas.
// ---------------------------------------------------------------------------

inline GroupPartition read_groups(const std::filesystem::path& path, Index n) {
  auto in = io_detail::open_in(path);
  std::vector<std::vector<Index>> groups;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (io_detail::is_blank_or_comment(line)) continue;
    std::vector<Index> g;
    for (auto tok : io_detail::tokens(line)) {
      long long idx = 0;
      if (!io_detail::parse_index(tok, idx)) {
        throw ParseError(path.string(), lineno, "bad index '" + std::string(tok) + "'");
      }
      if (idx < 1 || idx > n) {
        throw ParseError(path.string(), lineno,
                         "index " + std::to_string(idx) + " out of range 1.." + std::to_string(n));
      }
      g.push_back(static_cast<Index>(idx - 1));
    }
    groups.push_back(std::move(g));
  }
  try {
    return GroupPartition(std::move(groups), n);
  } catch (const InvalidArgument& e) {
    throw ParseError(path.string(), e.what());
  }
}

inline void write_groups(const std::filesystem::path& path, const GroupPartition& partition) {
  auto out = io_detail::open_out(path);
  for (const auto& g : partition.groups()) {
    for (std::size_t k = 0; k < g.size(); ++k) {
      if (k > 0) out << ' ';
      out << (g[k] + 1);
    }
    out << '\n';
  }
  io_detail::check_written(out, path);
}

// ---------------------------------------------------------------------------
// Manifest: a JSON object naming every part of an instance. Paths are
// relative to the manifest's directory.
//
//   {
//     "format_version": 1,
//     "m": 200, "n": 1000,
//     "matrix": "A.csv", "matrix_format": "csv" | "libsvm",
//     "b": "b.csv",          (omitted for libsvm: labels come from the matrix file)
//     "c": "c.csv",          (optional, zero when absent)
//     "weights": "w.txt",    (optional, ones when absent)
//     "groups": "groups.txt",
//     "lambda": 1.5,
//     "loss": "ls" | "logistic"
//   }
// ---------------------------------------------------------------------------

inline constexpr int kManifestVersion = 1;

/// Writes the parts and a manifest named manifest.json into dir; returns the
/// manifest path.
inline std::filesystem::path save_instance(const ProblemInstance& inst,
                                           const std::filesystem::path& dir,
                                           MatrixFormat format = MatrixFormat::Csv) {
  inst.validate();
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw InvalidArgument(dir.string() + ": cannot create directory: " + ec.message());
  nlohmann::json j;
  j["format_version"] = kManifestVersion;
  j["m"] = inst.m();
  j["n"] = inst.n();
  if (format == MatrixFormat::Csv) {
    write_csv_matrix(dir / "A.csv", inst.A);
    write_vector(dir / "b.csv", inst.b);
    j["matrix"] = "A.csv";
    j["matrix_format"] = "csv";
    j["b"] = "b.csv";
  } else {
    write_libsvm(dir / "data.libsvm", inst.A, inst.b);
    j["matrix"] = "data.libsvm";
    j["matrix_format"] = "libsvm";
  }
  if (!inst.c.isZero(0.0)) {
    write_vector(dir / "c.csv", inst.c);
    j["c"] = "c.csv";
  }
  write_vector(dir / "w.txt", inst.w);
  write_groups(dir / "groups.txt", inst.partition);
  j["weights"] = "w.txt";
  j["groups"] = "groups.txt";
  j["lambda"] = inst.lambda;
  j["loss"] = std::string(to_string(inst.loss));
  const auto manifest = dir / "manifest.json";
  auto out = io_detail::open_out(manifest);
  out << j.dump(2) << '\n';
  io_detail::check_written(out, manifest);
  return manifest;
}

inline ProblemInstance load_instance(const std::filesystem::path& manifest) {
  const std::string mf = manifest.string();
  nlohmann::json j;
  {
    auto in = io_detail::open_in(manifest);
    try {
      j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError(mf, e.what());
    }
  }
  auto field = [&](const char* key) -> const nlohmann::json& {
    if (!j.contains(key)) throw ParseError(mf, std::string("missing field '") + key + "'");
    return j.at(key);
  };
  try {
    const int version = field("format_version").get<int>();
    if (version != kManifestVersion) {
      throw ParseError(mf, "unsupported format_version " + std::to_string(version));
    }
    const auto base = manifest.parent_path();
    const auto fmt = field("matrix_format").get<std::string>();
    const Index n_decl = j.value("n", Index{0});
    ProblemInstance inst;
    if (fmt == "csv") {
      inst.A = read_csv_matrix(base / field("matrix").get<std::string>());
      inst.b = read_vector(base / field("b").get<std::string>());
    } else if (fmt == "libsvm") {
      LibSvmData d = read_libsvm(base / field("matrix").get<std::string>(), n_decl);
      inst.A = std::move(d.A);
      inst.b = j.contains("b") ? read_vector(base / j.at("b").get<std::string>())
                               : std::move(d.labels);
    } else {
      throw ParseError(mf, "unknown matrix_format '" + fmt + "'");
    }
    if (j.contains("m") && j.at("m").get<Index>() != inst.A.rows()) {
      throw ParseError(mf, "declared m does not match the matrix");
    }
    if (n_decl != 0 && n_decl != inst.A.cols()) {
      throw ParseError(mf, "declared n does not match the matrix");
    }
    const Index n = inst.A.cols();
    inst.c = j.contains("c") ? read_vector(base / j.at("c").get<std::string>())
                             : Vector::Zero(n);
    inst.w = j.contains("weights") ? read_weights(base / j.at("weights").get<std::string>())
                                   : Vector::Ones(n);
    inst.partition = read_groups(base / field("groups").get<std::string>(), n);
    inst.lambda = field("lambda").get<double>();
    const auto loss = parse_loss_kind(field("loss").get<std::string>());
    if (!loss) throw ParseError(mf, "unknown loss '" + field("loss").get<std::string>() + "'");
    inst.loss = *loss;
    try {
      inst.validate();
    } catch (const InvalidArgument& e) {
      throw ParseError(mf, e.what());
    }
    return inst;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(mf, e.what());
  }
}

}  // namespace exlasso
