#include "rsvd/matrix_io.hpp"

#include <bit>
#include <charconv>
#include <cstring>
#include <fstream>
#include <sstream>
#include <vector>

namespace rsvd::io {

namespace fs = std::filesystem;

namespace {

constexpr char kMagic[4] = {'R', 'S', 'V', 'D'};
constexpr std::size_t kHeaderBytes = 12;

static_assert(std::endian::native == std::endian::little, "binary matrix codec assumes a little-endian host");

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

double parse_double(std::string_view field, std::size_t line) {
  field = trim(field);
  if (!field.empty() && field.front() == '+') field.remove_prefix(1);
  double value = 0.0;
  const auto* first = field.data();
  const auto* last = field.data() + field.size();
  const auto [ptr, ec] = std::from_chars(first, last, value);
  if (field.empty() || ec != std::errc() || ptr != last)
    throw FormatError("CSV line " + std::to_string(line) + ": cannot parse '" + std::string(field) + "'");
  if (!std::isfinite(value)) throw FormatError("CSV line " + std::to_string(line) + ": non-finite value");
  return value;
}

}  // namespace

DataMatrix parse_csv(std::istream& in) {
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view view = trim(line);
    if (view.empty()) continue;
    std::vector<double> row;
    std::size_t start = 0;
    for (;;) {
      const std::size_t comma = view.find(',', start);
      row.push_back(parse_double(view.substr(start, comma == std::string_view::npos ? view.npos : comma - start),
                                 line_no));
      if (comma == std::string_view::npos) break;
      start = comma + 1;
    }
    if (!rows.empty() && row.size() != rows.front().size())
      throw FormatError("CSV line " + std::to_string(line_no) + ": expected " + std::to_string(rows.front().size()) +
                        " fields, got " + std::to_string(row.size()));
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw FormatError("CSV input is empty");
  DataMatrix m(static_cast<Index>(rows.size()), static_cast<Index>(rows.front().size()));
  for (Index i = 0; i < m.rows(); ++i)
    for (Index j = 0; j < m.cols(); ++j) m(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
  return m;
}

DataMatrix read_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path.string());
  return parse_csv(in);
}

std::string format_csv(const DataMatrix& m) {
  std::string out;
  char buf[64];
  for (Index i = 0; i < m.rows(); ++i) {
    for (Index j = 0; j < m.cols(); ++j) {
      if (j) out.push_back(',');
      const auto res = std::to_chars(buf, buf + sizeof buf, m(i, j));
      out.append(buf, res.ptr);
    }
    out.push_back('\n');
  }
  return out;
}

void write_csv(const fs::path& path, const DataMatrix& m) { write_file_atomic(path, format_csv(m)); }

DataMatrix decode_binary(std::string_view bytes) {
  if (bytes.size() < kHeaderBytes || std::memcmp(bytes.data(), kMagic, 4) != 0)
    throw FormatError("binary matrix: missing RSVD magic");
  std::uint32_t rows = 0;
  std::uint32_t cols = 0;
  std::memcpy(&rows, bytes.data() + 4, 4);
  std::memcpy(&cols, bytes.data() + 8, 4);
  const std::uint64_t count = std::uint64_t(rows) * cols;
  if (bytes.size() != kHeaderBytes + count * sizeof(double))
    throw FormatError("binary matrix: payload size does not match " + std::to_string(rows) + "x" +
                      std::to_string(cols) + " header");
  if (rows == 0 || cols == 0) throw FormatError("binary matrix: zero dimension");
  DataMatrix m(rows, cols);
  const char* p = bytes.data() + kHeaderBytes;
  for (Index i = 0; i < m.rows(); ++i)
    for (Index j = 0; j < m.cols(); ++j) {
      double v;
      std::memcpy(&v, p, sizeof v);
      p += sizeof v;
      if (!std::isfinite(v)) throw FormatError("binary matrix: non-finite value");
      m(i, j) = v;
    }
  return m;
}

std::string encode_binary(const DataMatrix& m) {
  if (m.rows() > 0xFFFFFFFFll || m.cols() > 0xFFFFFFFFll) throw ContractError("binary matrix: dimension overflow");
  std::string out(kHeaderBytes + static_cast<std::size_t>(m.size()) * sizeof(double), '\0');
  std::memcpy(out.data(), kMagic, 4);
  const auto rows = static_cast<std::uint32_t>(m.rows());
  const auto cols = static_cast<std::uint32_t>(m.cols());
  std::memcpy(out.data() + 4, &rows, 4);
  std::memcpy(out.data() + 8, &cols, 4);
  char* p = out.data() + kHeaderBytes;
  for (Index i = 0; i < m.rows(); ++i)
    for (Index j = 0; j < m.cols(); ++j) {
      const double v = m(i, j);
      std::memcpy(p, &v, sizeof v);
      p += sizeof v;
    }
  return out;
}

DataMatrix read_binary(const fs::path& path) { return decode_binary(read_file(path)); }

void write_binary(const fs::path& path, const DataMatrix& m) { write_file_atomic(path, encode_binary(m)); }

DataMatrix read_matrix(const fs::path& path) {
  const std::string bytes = read_file(path);
  if (bytes.size() >= 4 && std::memcmp(bytes.data(), kMagic, 4) == 0) return decode_binary(bytes);
  std::istringstream in(bytes);
  return parse_csv(in);
}

nlohmann::ordered_json model_to_json(const RSvdModel<double>& model) {
  nlohmann::ordered_json doc;
  std::vector<double> lambda;
  std::vector<std::vector<double>> u;
  std::vector<std::vector<double>> v;
  for (const auto& t : model.triples) {
    lambda.push_back(t.lambda);
    u.emplace_back(t.u.data(), t.u.data() + t.u.size());
    v.emplace_back(t.v.data(), t.v.data() + t.v.size());
  }
  doc["lambda"] = lambda;
  doc["u"] = u;
  doc["v"] = v;
  doc["sigma2"] = model.sigma2;
  doc["alpha"] = model.config.alpha;
  doc["converged"] = model.converged;
  doc["iterations"] = model.iterations;
  doc["rank"] = model.rank();
  doc["truncated"] = model.truncated;
  doc["component_sigma2"] = model.component_sigma2;
  doc["tol"] = model.config.tol;
  doc["max_iter"] = model.config.max_iter;
  return doc;
}

RSvdModel<double> model_from_json(const nlohmann::json& doc) {
  try {
    RSvdModel<double> m;
    const auto lambda = doc.at("lambda").get<std::vector<double>>();
    const auto u = doc.at("u").get<std::vector<std::vector<double>>>();
    const auto v = doc.at("v").get<std::vector<std::vector<double>>>();
    if (u.size() != lambda.size() || v.size() != lambda.size())
      throw FormatError("model JSON: lambda/u/v lengths disagree");
    for (std::size_t k = 0; k < lambda.size(); ++k) {
      SvdTriple<double> t;
      t.lambda = lambda[k];
      t.u = Eigen::Map<const Eigen::VectorXd>(u[k].data(), static_cast<Index>(u[k].size()));
      t.v = Eigen::Map<const Eigen::VectorXd>(v[k].data(), static_cast<Index>(v[k].size()));
      m.triples.push_back(std::move(t));
    }
    m.sigma2 = doc.at("sigma2").get<double>();
    m.config.alpha = doc.at("alpha").get<double>();
    m.config.rank = static_cast<Index>(lambda.size());
    m.converged = doc.at("converged").get<std::vector<bool>>();
    m.iterations = doc.at("iterations").get<std::vector<int>>();
    if (doc.contains("truncated")) m.truncated = doc["truncated"].get<bool>();
    if (doc.contains("component_sigma2")) m.component_sigma2 = doc["component_sigma2"].get<std::vector<double>>();
    if (doc.contains("tol")) m.config.tol = doc["tol"].get<double>();
    if (doc.contains("max_iter")) m.config.max_iter = doc["max_iter"].get<int>();
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("model JSON: ") + e.what());
  }
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file_atomic(const fs::path& path, std::string_view contents) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("cannot write " + tmp.string());
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) throw FormatError("short write to " + tmp.string());
  }
  fs::rename(tmp, path);
}

std::string dump_json(const nlohmann::ordered_json& doc) { return doc.dump(2) + "\n"; }

}  // namespace rsvd::io
