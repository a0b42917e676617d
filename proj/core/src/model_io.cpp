#include "arrayloc/model_io.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include "arrayloc/errors.hpp"

namespace arrayloc {
namespace {

constexpr const char* kMagic = "arrayloc-model";
constexpr int kVersion = 1;

std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void write_matrix(std::ostream& out, const std::string& name, const Eigen::MatrixXd& m) {
  out << "matrix " << name << ' ' << m.rows() << ' ' << m.cols() << '\n';
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      if (c > 0) out << ' ';
      out << fmt_double(m(r, c));
    }
    out << '\n';
  }
}

double parse_double(const std::string& tok) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(tok, &used);
  } catch (const std::exception&) {
    throw DataError("model file: bad number '" + tok + "'");
  }
  if (used != tok.size()) throw DataError("model file: bad number '" + tok + "'");
  return v;
}

struct ParsedModel {
  std::string kind;
  std::map<std::string, std::string> fields;
  std::map<std::string, Eigen::MatrixXd> matrices;

  const std::string& field(const std::string& key) const {
    auto it = fields.find(key);
    if (it == fields.end()) throw DataError("model file: missing field '" + key + "'");
    return it->second;
  }
  long long integer(const std::string& key) const {
    const std::string& s = field(key);
    long long v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) throw DataError("model file: bad integer for " + key);
    return v;
  }
  const Eigen::MatrixXd& matrix(const std::string& name) const {
    auto it = matrices.find(name);
    if (it == matrices.end()) throw DataError("model file: missing matrix '" + name + "'");
    return it->second;
  }
};

ParsedModel parse(std::istream& in) {
  ParsedModel pm;
  std::string line;
  if (!std::getline(in, line)) throw DataError("model file: empty input");
  {
    std::istringstream is(line);
    std::string magic;
    int version = 0;
    if (!(is >> magic >> version) || magic != kMagic) throw DataError("model file: bad header");
    if (version != kVersion) throw DataError("model file: unsupported version " + std::to_string(version));
  }
  bool ended = false;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream is(line);
    std::string key;
    is >> key;
    if (key == "end") {
      ended = true;
      break;
    }
    if (key == "matrix") {
      std::string name;
      Eigen::Index rows = 0, cols = 0;
      if (!(is >> name >> rows >> cols) || rows < 0 || cols < 0) throw DataError("model file: bad matrix header");
      Eigen::MatrixXd m(rows, cols);
      for (Eigen::Index r = 0; r < rows; ++r) {
        if (!std::getline(in, line)) throw DataError("model file: truncated matrix " + name);
        std::istringstream rs(line);
        std::string tok;
        for (Eigen::Index c = 0; c < cols; ++c) {
          if (!(rs >> tok)) throw DataError("model file: short row in matrix " + name);
          m(r, c) = parse_double(tok);
        }
        if (rs >> tok) throw DataError("model file: long row in matrix " + name);
      }
      pm.matrices[name] = std::move(m);
      continue;
    }
    std::string value;
    std::getline(is >> std::ws, value);
    if (key == "kind") {
      pm.kind = value;
    } else {
      pm.fields[key] = value;
    }
  }
  if (!ended) throw DataError("model file: missing 'end'");
  return pm;
}

}  // namespace

void write_model(std::ostream& out, const AffineMap& map) {
  out << kMagic << ' ' << kVersion << '\n';
  out << "kind affine\n";
  out << "arrays " << map.arrays << '\n';
  out << "active " << map.active << '\n';
  out << "room_dim " << map.room_dim() << '\n';
  out << "distinct_points " << map.report.distinct_points << '\n';
  out << "location_span " << map.report.location_span << '\n';
  out << "normal_matrix_rank " << map.report.normal_matrix_rank << '\n';
  write_matrix(out, "offset", map.offset);
  write_matrix(out, "coeffs", map.coeffs);
  out << "end\n";
}

void write_model(std::ostream& out, const PcaModel& model) {
  out << kMagic << ' ' << kVersion << '\n';
  out << "kind pca\n";
  out << "components " << model.components() << '\n';
  out << "rank " << model.rank << '\n';
  write_matrix(out, "basis", model.basis);
  write_matrix(out, "singular_values", model.singular_values);
  out << "end\n";
}

Model read_model(std::istream& in) {
  const ParsedModel pm = parse(in);
  if (pm.kind == "affine") {
    AffineMap map;
    map.arrays = static_cast<std::size_t>(pm.integer("arrays"));
    map.active = static_cast<ActiveMask>(pm.integer("active"));
    map.report.distinct_points = static_cast<std::size_t>(pm.integer("distinct_points"));
    map.report.location_span = static_cast<Eigen::Index>(pm.integer("location_span"));
    map.report.normal_matrix_rank = static_cast<Eigen::Index>(pm.integer("normal_matrix_rank"));
    const Eigen::MatrixXd& offset = pm.matrix("offset");
    if (offset.cols() != 1) throw DataError("model file: offset must be a column");
    map.offset = offset.col(0);
    map.coeffs = pm.matrix("coeffs");
    const auto room_dim = pm.integer("room_dim");
    if (room_dim != map.offset.size() || map.coeffs.rows() != room_dim ||
        map.coeffs.cols() != 3 * static_cast<Eigen::Index>(popcount(map.active)) || map.arrays == 0 ||
        map.arrays > kMaxArrays || (map.active & ~full_mask(map.arrays)) != 0) {
      throw DataError("model file: inconsistent affine map dimensions");
    }
    map.report.line_degenerate = map.report.location_span < room_dim;
    return map;
  }
  if (pm.kind == "pca") {
    PcaModel model;
    model.basis = pm.matrix("basis");
    const Eigen::MatrixXd& sv = pm.matrix("singular_values");
    if (sv.cols() != 1) throw DataError("model file: singular_values must be a column");
    model.singular_values = sv.col(0);
    model.rank = static_cast<Eigen::Index>(pm.integer("rank"));
    if (pm.integer("components") != model.basis.cols() || model.basis.rows() % 3 != 0) {
      throw DataError("model file: inconsistent PCA dimensions");
    }
    return model;
  }
  throw DataError("model file: unknown kind '" + pm.kind + "'");
}

void save_model(const std::filesystem::path& path, const Model& model) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write model file " + path.string());
  std::visit([&](const auto& m) { write_model(out, m); }, model);
  if (!out) throw DataError("failed writing model file " + path.string());
}

Model load_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open model file " + path.string());
  return read_model(in);
}

}  // namespace arrayloc
