#include "arrayloc/csv_io.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <istream>
#include <limits>
#include <ostream>

#include "arrayloc/errors.hpp"

namespace arrayloc {
namespace {

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

double to_double(const std::string& s, const char* what) {
  if (s == "nan" || s == "NaN" || s == "-nan") return std::numeric_limits<double>::quiet_NaN();
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw DataError(std::string("CSV: bad ") + what + " value '" + s + "'");
  }
  return v;
}

std::int64_t to_int(const std::string& s, const char* what) {
  std::int64_t v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw DataError(std::string("CSV: bad ") + what + " value '" + s + "'");
  }
  return v;
}

void write_doa_header(std::ostream& out, std::size_t arrays) {
  for (std::size_t m = 0; m < arrays; ++m) out << ",d" << m << "_x,d" << m << "_y,d" << m << "_z";
  for (std::size_t m = 0; m < arrays; ++m) out << ",m" << m;
}

void write_doa(std::ostream& out, const Eigen::VectorXd& values, const std::vector<bool>& active) {
  for (Eigen::Index i = 0; i < values.size(); ++i) out << ',' << num(values(i));
  for (bool a : active) out << ',' << (a ? 1 : 0);
}

// Parses 3M DOA values followed by M mask bits starting at `first`.
ConcatenatedDoa read_doa(const std::vector<std::string>& f, std::size_t first, std::size_t arrays,
                         std::int64_t ts) {
  ConcatenatedDoa d;
  d.timestamp_ms = ts;
  d.values.resize(3 * static_cast<Eigen::Index>(arrays));
  for (std::size_t i = 0; i < 3 * arrays; ++i) d.values(static_cast<Eigen::Index>(i)) = to_double(f[first + i], "DOA");
  d.active.resize(arrays);
  for (std::size_t m = 0; m < arrays; ++m) {
    const std::string& bit = f[first + 3 * arrays + m];
    if (bit != "0" && bit != "1") throw DataError("CSV: mask bits must be 0 or 1");
    d.active[m] = bit == "1";
  }
  d.validate();
  return d;
}

struct Header {
  std::vector<std::string> names;
  std::size_t arrays = 0;
};

// Counts trailing mask columns m0..m{M-1} and checks the DOA block before
// them.
Header parse_header(const std::string& line, std::size_t leading) {
  Header h;
  h.names = split_csv_line(line);
  if (h.names.size() < leading) throw DataError("CSV: header too short");
  const std::size_t rest = h.names.size() - leading;
  if (rest % 4 != 0 || rest == 0) throw DataError("CSV: DOA/mask column count must be 4M");
  h.arrays = rest / 4;
  for (std::size_t m = 0; m < h.arrays; ++m) {
    if (h.names[leading + 3 * h.arrays + m] != "m" + std::to_string(m)) throw DataError("CSV: bad mask column names");
  }
  return h;
}

}  // namespace

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string_view v(line);
  if (!v.empty() && v.back() == '\r') v.remove_suffix(1);
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = v.find(',', start);
    out.emplace_back(v.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

void write_calibration_csv(std::ostream& out, const CalibrationSet& cal) {
  cal.validate();
  const char* axes[] = {"r_x", "r_y", "r_z"};
  out << "timestamp_ms,point_id";
  for (int i = 0; i < cal.room_dim(); ++i) out << ',' << axes[i];
  write_doa_header(out, cal.arrays);
  out << '\n';
  for (const auto& seg : cal.segments) {
    for (Eigen::Index c = seg.begin; c < seg.end; ++c) {
      const std::int64_t ts = cal.timestamps_ms.empty() ? 0 : cal.timestamps_ms[static_cast<std::size_t>(c)];
      out << ts << ',' << seg.point_id;
      for (int i = 0; i < cal.room_dim(); ++i) out << ',' << num(cal.locations(i, c));
      std::vector<bool> active(cal.arrays);
      for (std::size_t m = 0; m < cal.arrays; ++m) {
        active[m] = !cal.doas.col(c).segment<3>(3 * static_cast<Eigen::Index>(m)).isZero(0.0);
      }
      write_doa(out, cal.doas.col(c), active);
      out << '\n';
    }
  }
}

CalibrationSet read_calibration_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw DataError("CSV: empty calibration file");
  const auto names = split_csv_line(line);
  if (names.size() < 4 || names[0] != "timestamp_ms" || names[1] != "point_id" || names[2] != "r_x" ||
      names[3] != "r_y") {
    throw DataError("CSV: not a calibration file");
  }
  const int room_dim = names.size() > 4 && names[4] == "r_z" ? 3 : 2;
  const Header h = parse_header(line, 2 + static_cast<std::size_t>(room_dim));

  std::vector<std::vector<double>> loc_cols;
  std::vector<Eigen::VectorXd> doa_cols;
  CalibrationSet cal;
  cal.arrays = h.arrays;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split_csv_line(line);
    if (f.size() != h.names.size()) throw DataError("CSV: row has the wrong number of fields");
    const std::int64_t ts = to_int(f[0], "timestamp");
    const int id = static_cast<int>(to_int(f[1], "point_id"));
    std::vector<double> loc;
    for (int i = 0; i < room_dim; ++i) loc.push_back(to_double(f[2 + static_cast<std::size_t>(i)], "location"));
    const ConcatenatedDoa d = read_doa(f, 2 + static_cast<std::size_t>(room_dim), h.arrays, ts);
    const auto col = static_cast<Eigen::Index>(doa_cols.size());
    if (cal.segments.empty() || cal.segments.back().point_id != id) {
      cal.segments.push_back({id, col, col + 1});
    } else {
      cal.segments.back().end = col + 1;
    }
    cal.timestamps_ms.push_back(ts);
    loc_cols.push_back(std::move(loc));
    doa_cols.push_back(d.values);
  }
  const auto cols = static_cast<Eigen::Index>(doa_cols.size());
  cal.doas.resize(3 * static_cast<Eigen::Index>(h.arrays), cols);
  cal.locations.resize(room_dim, cols);
  for (Eigen::Index c = 0; c < cols; ++c) {
    cal.doas.col(c) = doa_cols[static_cast<std::size_t>(c)];
    for (int i = 0; i < room_dim; ++i) cal.locations(i, c) = loc_cols[static_cast<std::size_t>(c)][static_cast<std::size_t>(i)];
  }
  cal.validate();
  return cal;
}

void write_joined_csv(std::ostream& out, const std::vector<JoinedRow>& rows, int room_dim) {
  const char* axes[] = {"r_x", "r_y", "r_z"};
  const std::size_t arrays = rows.empty() ? 0 : rows.front().doa.arrays();
  out << "timestamp_ms,point_id";
  for (int i = 0; i < room_dim; ++i) out << ',' << axes[i];
  write_doa_header(out, arrays);
  out << '\n';
  for (const auto& r : rows) {
    out << r.bin_start_ms << ",-1";
    for (int i = 0; i < room_dim; ++i) out << ",nan";
    write_doa(out, r.doa.values, r.doa.active);
    out << '\n';
  }
}

std::vector<JoinedRow> read_joined_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw DataError("CSV: empty joined-row file");
  const auto names = split_csv_line(line);
  if (names.size() < 4 || names[0] != "timestamp_ms" || names[1] != "point_id") {
    throw DataError("CSV: not a joined-row file");
  }
  std::size_t leading = 2;
  while (leading < names.size() && names[leading].rfind("r_", 0) == 0) ++leading;
  const Header h = parse_header(line, leading);
  std::vector<JoinedRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split_csv_line(line);
    if (f.size() != h.names.size()) throw DataError("CSV: row has the wrong number of fields");
    const std::int64_t ts = to_int(f[0], "timestamp");
    rows.push_back({ts, read_doa(f, leading, h.arrays, ts)});
  }
  return rows;
}

void write_ground_truth_csv(std::ostream& out, const std::vector<GroundTruthRecord>& records) {
  const std::size_t arrays = records.empty() ? 0 : records.front().emitted.arrays();
  out << "timestamp_ms,true_x,true_y,true_z";
  write_doa_header(out, arrays);
  out << '\n';
  for (const auto& r : records) {
    out << r.timestamp_ms << ',' << num(r.true_position.x()) << ',' << num(r.true_position.y()) << ','
        << num(r.true_position.z());
    write_doa(out, r.emitted.values, r.emitted.active);
    out << '\n';
  }
}

std::vector<GroundTruthRow> read_ground_truth_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw DataError("CSV: empty ground-truth file");
  const auto names = split_csv_line(line);
  if (names.size() < 4 || names[0] != "timestamp_ms" || names[1] != "true_x") {
    throw DataError("CSV: not a ground-truth file");
  }
  const Header h = parse_header(line, 4);
  std::vector<GroundTruthRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split_csv_line(line);
    if (f.size() != h.names.size()) throw DataError("CSV: row has the wrong number of fields");
    GroundTruthRow r;
    r.timestamp_ms = to_int(f[0], "timestamp");
    r.position = Vec3(to_double(f[1], "true_x"), to_double(f[2], "true_y"), to_double(f[3], "true_z"));
    r.emitted = read_doa(f, 4, h.arrays, r.timestamp_ms);
    rows.push_back(std::move(r));
  }
  return rows;
}

void write_estimates_csv(std::ostream& out, const EstimateTable& t) {
  out << "bin_start_ms";
  for (const auto& c : t.columns) out << ',' << c;
  out << ",active_count,method\n";
  for (Eigen::Index r = 0; r < t.rows(); ++r) {
    out << t.timestamps_ms[static_cast<std::size_t>(r)];
    for (Eigen::Index c = 0; c < t.values.cols(); ++c) out << ',' << num(t.values(r, c));
    out << ',' << t.active_counts[static_cast<std::size_t>(r)] << ',' << t.methods[static_cast<std::size_t>(r)]
        << '\n';
  }
}

EstimateTable read_estimates_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw DataError("CSV: empty estimates file");
  const auto names = split_csv_line(line);
  if (names.size() < 4 || names.front() != "bin_start_ms" || names[names.size() - 2] != "active_count" ||
      names.back() != "method") {
    throw DataError("CSV: not an estimates file");
  }
  EstimateTable t;
  t.columns.assign(names.begin() + 1, names.end() - 2);
  std::vector<std::vector<double>> vals;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split_csv_line(line);
    if (f.size() != names.size()) throw DataError("CSV: row has the wrong number of fields");
    t.timestamps_ms.push_back(to_int(f[0], "bin_start_ms"));
    std::vector<double> v;
    for (std::size_t c = 0; c < t.columns.size(); ++c) v.push_back(to_double(f[1 + c], "estimate"));
    vals.push_back(std::move(v));
    t.active_counts.push_back(static_cast<int>(to_int(f[f.size() - 2], "active_count")));
    t.methods.push_back(f.back());
  }
  t.values.resize(static_cast<Eigen::Index>(vals.size()), static_cast<Eigen::Index>(t.columns.size()));
  for (std::size_t r = 0; r < vals.size(); ++r)
    for (std::size_t c = 0; c < t.columns.size(); ++c)
      t.values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = vals[r][c];
  return t;
}

}  // namespace arrayloc
