#include "commands.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <csignal>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <set>
#include <sstream>
#include <stdexcept>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "arrayloc/csv_io.hpp"
#include "arrayloc/errors.hpp"
#include "arrayloc/evaluation.hpp"
#include "arrayloc/fusion.hpp"
#include "arrayloc/fusion_center.hpp"
#include "arrayloc/model_io.hpp"
#include "arrayloc/room_sim.hpp"
#include "arrayloc/scenario_io.hpp"
#include "arrayloc/sphere_grid.hpp"
#include "arrayloc/tracker.hpp"
#include "arrayloc/wav.hpp"
#include "arrayloc/wire_server.hpp"
#include "svg.hpp"

namespace arrayloc::cli {
namespace {

// Exceptions thrown by command bodies carry their exit code and a short kind
// tag for the stderr diagnostic.
struct Failure : std::runtime_error {
  Failure(int code, std::string kind, const std::string& message)
      : std::runtime_error(message), code(code), kind(std::move(kind)) {}
  int code;
  std::string kind;
};

[[noreturn]] void config_error(const std::string& message) {
  throw Failure(kExitInvalidConfig, "invalid-config", message);
}

[[noreturn]] void data_error(const std::string& message) { throw Failure(kExitDataError, "data-error", message); }

std::string quote(const std::string& s) {
  std::string q = "\"";
  for (char c : s) {
    if (c == '"' || c == '\\') q += '\\';
    q += c == '\n' ? ' ' : c;
  }
  return q + '"';
}

void diagnostic(std::ostream& err, const char* level, const std::string& kind, const std::string& message) {
  err << "arrayloc: " << level << " kind=" << kind << " message=" << quote(message) << '\n';
}

// Output sink: a file, or `out` when the path is "-".
class Sink {
 public:
  Sink(const std::string& path, std::ostream& fallback) {
    if (path == "-") {
      stream_ = &fallback;
      return;
    }
    file_.open(path, std::ios::binary | std::ios::trunc);
    if (!file_) throw Failure(kExitDataError, "io-error", "cannot write " + path);
    stream_ = &file_;
  }
  std::ostream& stream() { return *stream_; }
  void close() {
    stream_->flush();
    if (!*stream_) throw Failure(kExitDataError, "io-error", "write failed");
  }

 private:
  std::ofstream file_;
  std::ostream* stream_ = nullptr;
};

std::ifstream open_input(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) data_error("cannot read " + path);
  return in;
}

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string join_values(const Eigen::VectorXd& v) {
  std::string s;
  for (Eigen::Index i = 0; i < v.size(); ++i) s += (i ? " " : "") + num(v(i));
  return s;
}

std::string join_ids(const std::vector<int>& ids) {
  std::string s;
  for (std::size_t i = 0; i < ids.size(); ++i) s += (i ? "," : "") + std::to_string(ids[i]);
  return s;
}

Scenario load_scenario_or_default(const std::string& path) {
  if (path.empty()) return default_paper_scenario();
  auto in = open_input(path);
  return read_scenario(in);
}

std::vector<int> subset_for_scenario(const Scenario& scn, const std::string& spec) {
  if (spec == "all") return scn.point_ids();
  if (spec == "table" || spec == "chair") {
    auto ids = scn.point_ids(spec);
    if (!ids.empty()) return ids;
  }
  auto ids = parse_subset(spec);
  for (int id : ids) scn.point(id);
  return ids;
}

CalibrationSet select_subset(const CalibrationSet& cal, const std::string& spec) {
  if (spec == "all") return cal;
  const auto wanted = parse_subset(spec);
  const auto present = cal.point_ids();
  for (int id : wanted) {
    if (std::find(present.begin(), present.end(), id) == present.end()) {
      config_error("calibration point " + std::to_string(id) + " is not in the calibration file");
    }
  }
  return cal.subset(wanted);
}

CalibrationSet load_calibration(const std::string& path) {
  auto in = open_input(path);
  auto cal = read_calibration_csv(in);
  cal.validate();
  return cal;
}

// Repeats a trajectory: closed paths loop, open paths ping-pong.
Trajectory repeated(const Trajectory& t, int times) {
  Trajectory r = t;
  if (times <= 1 || t.waypoints.size() < 2) return r;
  const bool closed = (t.waypoints.front() - t.waypoints.back()).norm() < 1e-12;
  for (int k = 1; k < times; ++k) {
    if (closed) {
      r.waypoints.insert(r.waypoints.end(), t.waypoints.begin() + 1, t.waypoints.end());
    } else if (k % 2 == 1) {
      r.waypoints.insert(r.waypoints.end(), t.waypoints.rbegin() + 1, t.waypoints.rend());
    } else {
      r.waypoints.insert(r.waypoints.end(), t.waypoints.begin() + 1, t.waypoints.end());
    }
  }
  return r;
}

std::vector<JoinedRow> load_joined(const std::string& capture, const std::string& store_dir, const std::string& joined,
                                   std::size_t arrays, std::int64_t bin_ms, std::ostream& err) {
  const int sources = !capture.empty() + !store_dir.empty() + !joined.empty();
  if (sources != 1) config_error("give exactly one of --capture, --store, --joined");
  if (!joined.empty()) {
    auto in = open_input(joined);
    return read_joined_csv(in);
  }
  JoinOptions opts;
  opts.bin_ms = bin_ms;
  if (!capture.empty()) {
    DoaStore store(arrays);
    auto in = open_input(capture);
    store.ingest_stream(in);
    const auto c = store.counters();
    if (c.rejected > 0) {
      diagnostic(err, "warning", "rejected-lines", std::to_string(c.rejected) + " capture lines were rejected");
    }
    return store.join_bins(TimeRange::all(), opts);
  }
  if (!std::filesystem::is_directory(store_dir)) data_error("store directory " + store_dir + " does not exist");
  DoaStore store(std::filesystem::path(store_dir), arrays);
  return store.join_bins(TimeRange::all(), opts);
}

AffineMap load_affine(const std::string& path) {
  auto model = load_model(path);
  if (!std::holds_alternative<AffineMap>(model)) config_error("method/model mismatch: " + path + " is not an affine model");
  return std::get<AffineMap>(model);
}

PcaModel load_pca(const std::string& path) {
  auto model = load_model(path);
  if (!std::holds_alternative<PcaModel>(model)) config_error("method/model mismatch: " + path + " is not a PCA model");
  return std::get<PcaModel>(model);
}

// Reference pair from the mean DOA of one calibration point.
ReferencePair reference_from_calibration(const CalibrationSet& cal, int point_id, const PcaModel* model) {
  for (std::size_t s = 0; s < cal.segments.size(); ++s) {
    const auto& seg = cal.segments[s];
    if (seg.point_id != point_id) continue;
    Eigen::VectorXd mean = cal.doas.middleCols(seg.begin, seg.size()).rowwise().mean();
    std::vector<std::optional<DoaVector>> per_array(cal.arrays);
    for (std::size_t m = 0; m < cal.arrays; ++m) {
      per_array[m] = DoaVector::normalized(mean.segment<3>(3 * static_cast<Eigen::Index>(m)));
    }
    auto d = concat_doas(per_array, 0);
    return ReferencePair::make(std::move(d), cal.locations.col(seg.begin), model);
  }
  config_error("reference point " + std::to_string(point_id) + " is not in the calibration file");
}

// ---------------------------------------------------------------------------

struct SimulateArgs {
  std::string scenario, trajectory = "rectangle-1234", truth, capture, calibration, write_scenario;
  std::string subset = "all", dropout;
  std::uint64_t seed = 0;
  double noise_deg = 0.0, dropout_prob = 0.0, dwell_s = 30.0, energy = 10.0;
  bool quantize = false;
  int repeat = 1;
  std::int64_t period_ms = 64, start_ms = 0;
  CLI::Option *seed_opt = nullptr, *noise_opt = nullptr, *quantize_opt = nullptr, *prob_opt = nullptr,
              *start_opt = nullptr;
};

void cmd_simulate(const SimulateArgs& a, std::ostream& out, std::ostream& err) {
  Scenario scn = load_scenario_or_default(a.scenario);
  if (a.seed_opt->count()) scn.seed = a.seed;
  if (a.noise_opt->count()) scn.noise_deg = a.noise_deg;
  if (a.quantize_opt->count()) scn.quantize = a.quantize;
  if (a.start_opt->count()) scn.start_ms = a.start_ms;
  if (!a.dropout.empty()) scn.dropout.kind = parse_dropout_kind(a.dropout);
  if (a.prob_opt->count()) scn.dropout.probability = a.dropout_prob;
  if (a.repeat < 1) config_error("--repeat must be at least 1");
  scn.validate();

  if (!a.write_scenario.empty()) {
    Sink s(a.write_scenario, out);
    write_scenario(s.stream(), scn);
    s.close();
  }
  if (!a.calibration.empty()) {
    const auto ids = subset_for_scenario(scn, a.subset);
    const auto cal = synthesize_calibration(scn, a.dwell_s, a.period_ms, ids);
    Sink s(a.calibration, out);
    write_calibration_csv(s.stream(), cal);
    s.close();
    err << "arrayloc: info command=simulate calibration_columns=" << cal.columns() << " points=" << join_ids(ids)
        << '\n';
  }
  if (a.truth.empty() && a.capture.empty()) {
    if (a.calibration.empty() && a.write_scenario.empty()) {
      config_error("simulate needs at least one of --truth, --capture, --calibration, --write-scenario");
    }
    return;
  }
  bool found = false;
  for (auto& t : scn.trajectories) {
    if (t.name == a.trajectory) {
      t = repeated(t, a.repeat);
      found = true;
    }
  }
  if (!found) config_error("scenario has no trajectory named " + a.trajectory);
  const auto records = synthesize_doa_stream(scn, a.trajectory, a.period_ms);
  if (!a.truth.empty()) {
    Sink s(a.truth, out);
    write_ground_truth_csv(s.stream(), records);
    s.close();
  }
  if (!a.capture.empty()) {
    Sink s(a.capture, out);
    std::vector<std::uint64_t> seq(scn.arrays(), 0);
    std::size_t lines = 0;
    for (const auto& r : records) {
      for (const auto& w : to_wire_records(r.emitted, seq, a.energy)) {
        s.stream() << format_wire_line(w) << '\n';
        ++lines;
      }
    }
    s.close();
    err << "arrayloc: info command=simulate records=" << records.size() << " wire_lines=" << lines << '\n';
  }
}

// ---------------------------------------------------------------------------

struct CalibrateArgs {
  std::string calibration, method = "both", subset = "all", affine_out, pca_out, report = "-", spectrum;
  int components = 2;
};

void cmd_calibrate(const CalibrateArgs& a, std::ostream& out, std::ostream& err) {
  const bool do_affine = a.method == "affine" || a.method == "both";
  const bool do_pca = a.method == "pca" || a.method == "both";
  if (do_affine && a.affine_out.empty()) config_error("method " + a.method + " needs --affine-out");
  if (do_pca && a.pca_out.empty()) config_error("method " + a.method + " needs --pca-out");

  const CalibrationSet cal = select_subset(load_calibration(a.calibration), a.subset);
  const auto ids = cal.point_ids();
  const std::size_t needed = static_cast<std::size_t>(cal.room_dim()) + 1;
  if (ids.size() < 2) {
    config_error("calibration needs at least 2 distinct points (N+1 = " + std::to_string(needed) +
                 " for a full " + std::to_string(cal.room_dim()) + "-D map); subset " + a.subset + " has " +
                 std::to_string(ids.size()));
  }

  std::ostringstream report;
  report << "method " << a.method << '\n';
  report << "subset " << a.subset << '\n';
  report << "points " << join_ids(ids) << '\n';
  report << "columns " << cal.columns() << '\n';
  report << "arrays " << cal.arrays << '\n';
  report << "room_dim " << cal.room_dim() << '\n';
  std::vector<std::string> warnings;

  if (do_affine) {
    const AffineMap map = fit_affine(cal, full_mask(cal.arrays));
    Eigen::MatrixXd fitted = (map.coeffs * cal.doas).colwise() + map.offset;
    const Eigen::VectorXd res = (fitted - cal.locations).colwise().norm();
    report << "affine_distinct_points " << map.report.distinct_points << '\n';
    report << "affine_location_span " << map.report.location_span << '\n';
    report << "affine_normal_matrix_rank " << map.report.normal_matrix_rank << '\n';
    report << "affine_normal_singular_values " << join_values(map.report.normal_matrix_singular_values) << '\n';
    report << "affine_rank_deficient " << map.report.rank_deficient << '\n';
    report << "affine_line_degenerate " << map.report.line_degenerate << '\n';
    report << "affine_residual_rmse_m " << num(std::sqrt(res.squaredNorm() / static_cast<double>(res.size())))
           << '\n';
    report << "affine_residual_max_m " << num(res.maxCoeff()) << '\n';
    for (const auto& w : map.report.warnings) warnings.push_back(w);
    save_model(a.affine_out, map);
  }

  if (do_pca) {
    const PcaModel model = fit_pca(cal, a.components);
    const Eigen::VectorXd sq = model.singular_values.array().square();
    const double total = sq.sum();
    report << "pca_components " << model.components() << '\n';
    report << "pca_rank " << model.rank << '\n';
    report << "pca_singular_values " << join_values(model.singular_values) << '\n';
    report << "pca_energy_share " << join_values(total > 0 ? Eigen::VectorXd(sq / total) : sq) << '\n';
    if (model.singular_values.size() >= 3 && model.singular_values(0) > 0) {
      report << "pca_sigma3_over_sigma1 " << num(model.singular_values(2) / model.singular_values(0)) << '\n';
    }
    save_model(a.pca_out, model);
    if (!a.spectrum.empty()) {
      Sink s(a.spectrum, out);
      s.stream() << "index,singular_value,energy_share,cumulative_share\n";
      double cum = 0.0;
      for (Eigen::Index i = 0; i < sq.size(); ++i) {
        const double share = total > 0 ? sq(i) / total : 0.0;
        cum += share;
        s.stream() << i + 1 << ',' << num(model.singular_values(i)) << ',' << num(share) << ',' << num(cum) << '\n';
      }
      s.close();
    }
  }

  for (const auto& w : warnings) {
    report << "warning " << w << '\n';
    diagnostic(err, "warning", "calibration", w);
  }
  Sink s(a.report, out);
  s.stream() << report.str();
  s.close();
}

// ---------------------------------------------------------------------------

struct MapArgs {
  std::string capture, store, joined, method = "affine", affine, pca, calibration, subset = "all", out = "-", svg;
  int reference_point = 0;
  bool reuse_full_offset = false;
  std::size_t arrays = 5;
  std::int64_t bin_ms = 64;
  CLI::Option* arrays_opt = nullptr;
};

void cmd_map(const MapArgs& a, std::ostream& out, std::ostream& err) {
  static const std::set<std::string> methods = {"affine", "affine-missing", "pca", "pca-to-room", "reference"};
  if (!methods.count(a.method)) config_error("unknown method " + a.method);
  const bool needs_affine = a.method == "affine" || a.method == "pca-to-room" || a.method == "reference";
  const bool needs_pca = a.method == "pca" || a.method == "pca-to-room";
  const bool needs_cal = a.method == "affine-missing" || a.method == "pca-to-room" || a.method == "reference";
  const bool needs_ref = a.method == "pca-to-room" || a.method == "reference";
  if (needs_affine && a.affine.empty()) config_error("method " + a.method + " needs --affine");
  if (needs_pca && a.pca.empty()) config_error("method " + a.method + " needs --pca");
  if (needs_cal && a.calibration.empty()) config_error("method " + a.method + " needs --calibration");
  if (needs_ref && a.reference_point == 0) config_error("method " + a.method + " needs --reference-point");

  std::optional<AffineMap> affine;
  std::optional<PcaModel> pca;
  std::optional<CalibrationSet> cal;
  if (needs_affine) affine = load_affine(a.affine);
  if (needs_pca) pca = load_pca(a.pca);
  if (needs_cal) cal = select_subset(load_calibration(a.calibration), a.subset);
  if (a.method == "pca-to-room" && affine->active != full_mask(affine->arrays)) {
    config_error("method pca-to-room needs an affine model fit on all arrays");
  }

  std::size_t arrays = a.arrays;
  if (!a.arrays_opt->count()) {
    if (affine) arrays = affine->arrays;
    else if (cal) arrays = cal->arrays;
    else if (pca) arrays = static_cast<std::size_t>(pca->basis.rows() / 3);
  }
  const auto rows = load_joined(a.capture, a.store, a.joined, arrays, a.bin_ms, err);
  for (const auto& r : rows) {
    if (r.doa.arrays() != arrays) data_error("joined rows have " + std::to_string(r.doa.arrays()) + " arrays, expected " +
                                             std::to_string(arrays));
  }

  std::optional<ReferencePair> ref;
  if (needs_ref) ref = reference_from_calibration(*cal, a.reference_point, pca ? &*pca : nullptr);

  EstimateTable table;
  const int dim = pca && a.method == "pca" ? static_cast<int>(pca->components())
                                           : (affine ? affine->room_dim() : cal->room_dim());
  if (a.method == "pca") {
    for (int j = 0; j < dim; ++j) table.columns.push_back("a" + std::to_string(j + 1));
  } else {
    static const char* names[] = {"x", "y", "z"};
    for (int j = 0; j < dim; ++j) table.columns.push_back(j < 3 ? names[j] : "r" + std::to_string(j + 1));
  }

  AffineMapCache cache(a.reuse_full_offset);
  std::vector<Eigen::VectorXd> values;
  std::size_t skipped = 0, partial = 0;
  for (const auto& r : rows) {
    Eigen::VectorXd v;
    try {
      if (a.method == "affine") {
        v = map_affine(*affine, r.doa);
      } else if (a.method == "affine-missing") {
        v = map_with_missing(*cal, r.doa, cache);
      } else if (a.method == "pca") {
        auto p = project_pca(*pca, r.doa);
        partial += p.partial;
        v = p.coefficients;
      } else if (a.method == "pca-to-room") {
        auto p = project_pca(*pca, r.doa);
        partial += p.partial;
        v = pca_to_room(*affine, *pca, *ref, p.coefficients);
      } else {
        v = map_from_reference(*affine, *ref, r.doa);
      }
    } catch (const ActiveSetMismatch&) {
      ++skipped;
      continue;
    } catch (const NoObservation&) {
      ++skipped;
      continue;
    }
    table.timestamps_ms.push_back(r.bin_start_ms);
    table.active_counts.push_back(static_cast<int>(r.doa.active_count()));
    table.methods.push_back(a.method);
    values.push_back(std::move(v));
  }
  table.values.resize(static_cast<Eigen::Index>(values.size()), dim);
  for (std::size_t i = 0; i < values.size(); ++i) table.values.row(static_cast<Eigen::Index>(i)) = values[i].transpose();

  if (skipped) {
    diagnostic(err, "warning", "skipped-rows",
               std::to_string(skipped) + " bins lack arrays the " + a.method + " map needs and were skipped");
  }
  if (partial) {
    diagnostic(err, "warning", "partial-projection",
               std::to_string(partial) + " bins were projected with zero placeholders for missing arrays");
  }
  Sink s(a.out, out);
  write_estimates_csv(s.stream(), table);
  s.close();
  err << "arrayloc: info command=map rows=" << rows.size() << " mapped=" << values.size() << " skipped=" << skipped
      << '\n';

  if (!a.svg.empty() && dim >= 2) {
    SvgSeries series{a.method, "#1f77b4", table.values.leftCols(2), false};
    Sink svg(a.svg, out);
    write_scatter_svg(svg.stream(), {series}, "mapped trajectory (" + a.method + ")", table.columns[0],
                      table.columns[1]);
    svg.close();
  }
}

// ---------------------------------------------------------------------------

struct EvaluateArgs {
  std::string estimates, truth, report = "-", affine, pca, closed = "auto", svg;
  double turn_deg = 30.0;
};

void cmd_evaluate(const EvaluateArgs& a, std::ostream& out, std::ostream&) {
  if (a.closed != "auto" && a.closed != "yes" && a.closed != "no") config_error("--closed must be auto, yes or no");
  if (a.affine.empty() != a.pca.empty()) config_error("--affine and --pca must be given together");
  EstimateTable est;
  std::vector<GroundTruthRow> truth;
  {
    auto in = open_input(a.estimates);
    est = read_estimates_csv(in);
  }
  {
    auto in = open_input(a.truth);
    truth = read_ground_truth_csv(in);
  }
  std::map<std::int64_t, const GroundTruthRow*> by_ts;
  for (const auto& t : truth) by_ts[t.timestamp_ms] = &t;

  const Eigen::Index n = est.rows();
  if (n == 0) data_error("estimates file has no rows");
  const bool pca_units = !est.columns.empty() && est.columns.front().rfind('a', 0) == 0;
  const Eigen::Index dim = static_cast<Eigen::Index>(est.columns.size());
  const Eigen::Index truth_dim = pca_units ? 2 : dim;
  if (truth_dim > 3) data_error("estimates have more than 3 room coordinates");

  Eigen::MatrixXd truth_pts(n, truth_dim);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto ts = est.timestamps_ms[static_cast<std::size_t>(i)];
    auto it = by_ts.find(ts);
    if (it == by_ts.end()) {
      data_error("timestamp misalignment: estimate at " + std::to_string(ts) + " ms has no ground-truth record");
    }
    truth_pts.row(i) = it->second->position.head(truth_dim).transpose();
  }

  std::ostringstream r;
  r << "rows " << n << '\n';
  r << "units " << (pca_units ? "pca" : "m") << '\n';
  if (!pca_units) {
    const auto m = position_errors(est.values, truth_pts);
    r << "rmse_m " << num(m.rmse) << '\n';
    r << "bias_m " << join_values(m.bias) << '\n';
  }

  const auto legs = legs_from_heading(truth_pts, a.turn_deg);
  const int leg_count = legs.empty() ? 0 : legs.back() + 1;
  bool closed = a.closed == "yes";
  if (a.closed == "auto") {
    // The last sample may stop short of the start by under one period.
    const double extent = (truth_pts.colwise().maxCoeff() - truth_pts.colwise().minCoeff()).norm();
    closed = (truth_pts.row(0) - truth_pts.row(n - 1)).norm() < 0.05 * extent;
  }
  r << "legs " << leg_count << '\n';
  std::optional<ShapeMetrics> est_shape, true_shape;
  if (leg_count >= 2) {
    est_shape = polygon_shape(est.values.leftCols(std::min<Eigen::Index>(dim, 2)), legs, closed);
    true_shape = polygon_shape(truth_pts.leftCols(2), legs, closed);
    r << "side_lengths_true " << join_values(Eigen::Map<const Eigen::VectorXd>(
                                      true_shape->sides.data(), static_cast<Eigen::Index>(true_shape->sides.size())))
      << '\n';
    r << "side_lengths_est " << join_values(Eigen::Map<const Eigen::VectorXd>(
                                     est_shape->sides.data(), static_cast<Eigen::Index>(est_shape->sides.size())))
      << '\n';
    r << "side_ratio_true " << num(true_shape->long_short_ratio) << '\n';
    r << "side_ratio_est " << num(est_shape->long_short_ratio) << '\n';
    if (true_shape->long_short_ratio > 0) {
      r << "side_ratio_rel_error " << num(est_shape->long_short_ratio / true_shape->long_short_ratio - 1.0) << '\n';
    }
    if (!pca_units && est_shape->corners.size() == true_shape->corners.size()) {
      for (std::size_t c = 0; c < est_shape->corners.size(); ++c) {
        r << "corner_bias_m " << c << ' ' << join_values(est_shape->corners[c] - true_shape->corners[c]) << '\n';
      }
    }
    if (est_shape->corners.size() == true_shape->corners.size() && est_shape->corners.size() >= 3) {
      r << "corner_order_preserved "
        << same_cyclic_order(angular_order(est_shape->corners), angular_order(true_shape->corners)) << '\n';
    }
  }

  if (pca_units) {
    // Meters per PCA unit along the long sides: the shape estimate divides
    // the true long side by the traced one; the fit and model estimates
    // apply a PCA-to-room matrix to the traced long-side displacements.
    const auto fit = fit_linear(est.values, truth_pts);
    r << "pca_fit_coeffs " << join_values(Eigen::Map<const Eigen::VectorXd>(fit.coeffs.data(), fit.coeffs.size()))
      << '\n';
    std::vector<Eigen::VectorXd> long_steps;
    if (est_shape && est_shape->sides.size() == true_shape->sides.size() && est_shape->corners.size() >= 2) {
      double mean_side = 0.0;
      for (double side : true_shape->sides) mean_side += side / static_cast<double>(true_shape->sides.size());
      const std::size_t nc = est_shape->corners.size();
      for (std::size_t i = 0; i < est_shape->sides.size(); ++i) {
        if (true_shape->sides[i] > mean_side) {
          long_steps.push_back(est_shape->corners[(i + 1) % nc] - est_shape->corners[i]);
        }
      }
    }
    auto scale_along = [&](const Eigen::MatrixXd& c) {
      double sum = 0.0;
      for (const auto& step : long_steps) sum += (c * step).norm() / step.norm();
      return sum / static_cast<double>(long_steps.size());
    };
    if (!long_steps.empty() && est_shape->long_side > 0) {
      const double shape_scale = true_shape->long_side / est_shape->long_side;
      const double fit_scale = scale_along(fit.coeffs);
      r << "pca_scale_m_per_unit " << num(shape_scale) << '\n';
      r << "pca_scale_fit_m_per_unit " << num(fit_scale) << '\n';
      r << "pca_scale_fit_rel_diff " << num(std::abs(shape_scale - fit_scale) / fit_scale) << '\n';
      if (!a.affine.empty()) {
        const AffineMap map = load_affine(a.affine);
        const PcaModel model = load_pca(a.pca);
        const Eigen::MatrixXd c = pca_room_matrix(map, model);
        if (c.cols() != dim) data_error("PCA model components do not match the estimate columns");
        const double model_scale = scale_along(c.topRows(std::min<Eigen::Index>(c.rows(), truth_dim)));
        r << "pca_scale_model_m_per_unit " << num(model_scale) << '\n';
        r << "pca_scale_model_rel_diff " << num(std::abs(model_scale - fit_scale) / fit_scale) << '\n';
      }
    }
  }

  Sink s(a.report, out);
  s.stream() << r.str();
  s.close();

  if (!a.svg.empty() && dim >= 2) {
    std::vector<SvgSeries> series;
    if (!pca_units) series.push_back({"truth", "#2ca02c", truth_pts.leftCols(2), true});
    series.push_back({"estimate", "#1f77b4", est.values.leftCols(2), false});
    Sink svg(a.svg, out);
    write_scatter_svg(svg.stream(), series, "estimates vs ground truth", est.columns[0], est.columns[1]);
    svg.close();
  }
}

// ---------------------------------------------------------------------------

std::atomic<bool> g_stop{false};
extern "C" void on_stop_signal(int) { g_stop.store(true); }

struct ServeArgs {
  std::string bind = "127.0.0.1", store;
  int port = 9400;
  std::size_t arrays = 5;
  double duration_s = 0.0;
};

void cmd_serve(const ServeArgs& a, std::ostream& out, std::ostream& err) {
  if (a.port < 0 || a.port > 65535) config_error("--port out of range");
  std::unique_ptr<DoaStore> store = a.store.empty() ? std::make_unique<DoaStore>(a.arrays)
                                                    : std::make_unique<DoaStore>(std::filesystem::path(a.store), a.arrays);
  ServerOptions opts;
  opts.bind_address = a.bind;
  opts.port = static_cast<std::uint16_t>(a.port);
  WireServer server(*store, opts);
  try {
    server.start();
  } catch (const std::system_error& e) {
    throw Failure(kExitDataError, "socket-error", e.what());
  }
  out << "listening " << a.bind << ' ' << server.port() << std::endl;

  g_stop.store(false);
  auto old_int = std::signal(SIGINT, on_stop_signal);
  auto old_term = std::signal(SIGTERM, on_stop_signal);
  const auto deadline = std::chrono::steady_clock::now() + std::chrono::duration<double>(a.duration_s);
  while (!g_stop.load() && (a.duration_s <= 0.0 || std::chrono::steady_clock::now() < deadline)) {
    std::this_thread::sleep_for(std::chrono::milliseconds(50));
  }
  std::signal(SIGINT, old_int);
  std::signal(SIGTERM, old_term);
  server.stop();
  const auto c = store->counters();
  err << "arrayloc: info command=serve connections=" << server.connections_accepted() << " received=" << c.received
      << " ingested=" << c.ingested << " rejected=" << c.rejected << " duplicates=" << c.duplicates
      << " sequence_gaps=" << c.sequence_gaps << " partial_lines=" << c.partial_lines << '\n';
}

struct ReplayArgs {
  std::string capture, host = "127.0.0.1";
  int port = 9400;
};

void cmd_replay(const ReplayArgs& a, std::ostream&, std::ostream& err) {
  if (a.port <= 0 || a.port > 65535) config_error("--port out of range");
  auto in = open_input(a.capture);
  std::size_t sent = 0;
  try {
    sent = replay_capture(in, a.host, static_cast<std::uint16_t>(a.port));
  } catch (const std::system_error& e) {
    throw Failure(kExitDataError, "socket-error", e.what());
  }
  err << "arrayloc: info command=replay lines=" << sent << '\n';
}

// ---------------------------------------------------------------------------

struct LocalizeArgs {
  std::string wav, raw, format = "s16le", out = "-";
  int channels = 8, array_id = 0, mics = 8;
  double rate = 16000.0, diameter = 0.10, energy_floor = -1.0;
  std::int64_t start_ms = 0, bin_ms = 64;
};

void cmd_localize(const LocalizeArgs& a, std::ostream& out, std::ostream& err) {
  if (a.wav.empty() == a.raw.empty()) config_error("give exactly one of --wav, --raw");
  if (a.array_id < 0) config_error("--array-id must be non-negative");
  AudioBuffer audio;
  if (!a.wav.empty()) {
    audio = read_wav(std::filesystem::path(a.wav));
  } else {
    RawFormat fmt;
    if (a.format == "s16le") fmt = RawFormat::s16le;
    else if (a.format == "f32le") fmt = RawFormat::f32le;
    else config_error("--format must be s16le or f32le");
    auto in = open_input(a.raw);
    audio = read_raw_pcm(in, static_cast<std::size_t>(a.channels), a.rate, fmt);
  }
  ArrayGeometry geom = ArrayGeometry::circular(static_cast<std::size_t>(a.mics), a.diameter);
  geom.sample_rate = audio.sample_rate;
  if (static_cast<std::size_t>(audio.samples.rows()) != geom.mic_count()) {
    data_error("audio has " + std::to_string(audio.samples.rows()) + " channels, the array has " +
               std::to_string(geom.mic_count()) + " microphones");
  }
  FrontendConfig cfg;
  cfg.bin_ms = a.bin_ms;
  if (a.energy_floor >= 0.0) cfg.tracker.min_energy = a.energy_floor;
  DoaFrontend frontend(default_grid(), geom, cfg);
  BinStats stats;
  const auto records = frontend.process(audio.samples, a.start_ms, &stats);
  Sink s(a.out, out);
  std::uint64_t seq = 0;
  for (const auto& rec : records) {
    WireRecord w;
    w.timestamp_ms = rec.timestamp_ms;
    w.array_id = a.array_id;
    w.dx = rec.doa.x();
    w.dy = rec.doa.y();
    w.dz = rec.doa.z();
    w.energy = rec.energy;
    w.seq = seq++;
    s.stream() << format_wire_line(w) << '\n';
  }
  s.close();
  err << "arrayloc: info command=localize records=" << records.size()
      << " dropped_zero_norm=" << stats.bins_dropped_zero_norm << '\n';
}

struct GridArgs {
  int level = 4;
  std::string out = "-";
};

void cmd_grid(const GridArgs& a, std::ostream& out, std::ostream& err) {
  const auto grid = build_halfsphere_grid(a.level);
  Sink s(a.out, out);
  write_grid_csv(s.stream(), grid);
  s.close();
  const auto nn = nearest_neighbor_angles(grid);
  err << "arrayloc: info command=grid points=" << grid.size()
      << " nn_max_deg=" << num(nn.empty() ? 0.0 : *std::max_element(nn.begin(), nn.end())) << '\n';
}

// ---------------------------------------------------------------------------

// Appends the entries of a JSON config object as command-line tokens. Scalar
// top-level entries apply to every command; an object under a subcommand's
// name applies to that subcommand only.
void append_config(std::vector<std::string>& args, const std::string& path, const std::string& subcommand) {
  std::ifstream in(path);
  if (!in) config_error("cannot read config file " + path);
  nlohmann::json cfg;
  try {
    in >> cfg;
  } catch (const nlohmann::json::exception& e) {
    config_error("config file " + path + " is not valid JSON: " + e.what());
  }
  if (!cfg.is_object()) config_error("config file " + path + " must hold a JSON object");
  auto emit = [&](const std::string& key, const nlohmann::json& v) {
    const std::string flag = "--" + key;
    if (v.is_boolean()) {
      args.push_back(flag + "=" + (v.get<bool>() ? "true" : "false"));
    } else if (v.is_string()) {
      args.push_back(flag);
      args.push_back(v.get<std::string>());
    } else if (v.is_number()) {
      args.push_back(flag);
      args.push_back(v.dump());
    } else {
      config_error("config entry " + key + " must be a string, number or boolean");
    }
  };
  for (auto it = cfg.begin(); it != cfg.end(); ++it) {
    if (it.value().is_object()) continue;
    emit(it.key(), it.value());
  }
  if (!subcommand.empty() && cfg.contains(subcommand) && cfg[subcommand].is_object()) {
    for (auto it = cfg[subcommand].begin(); it != cfg[subcommand].end(); ++it) emit(it.key(), it.value());
  }
}

}  // namespace

std::vector<int> parse_subset(const std::string& spec) {
  if (spec == "table") return {1, 2, 3, 4, 5, 6};
  if (spec == "chair") return {7, 8, 9, 10, 11};
  if (spec == "all") return {1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11};
  std::vector<int> ids;
  std::stringstream ss(spec);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      const int id = std::stoi(item, &used);
      if (used != item.size()) throw std::invalid_argument(item);
      ids.push_back(id);
    } catch (const std::exception&) {
      config_error("bad calibration subset '" + spec + "': use table, chair, all or a comma-separated id list");
    }
  }
  if (ids.empty()) config_error("empty calibration subset");
  std::vector<int> sorted = ids;
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
    config_error("calibration subset '" + spec + "' repeats a point");
  }
  return ids;
}

int run(const std::vector<std::string>& input, std::ostream& out, std::ostream& err) {
  CLI::App app{"Sound source localization from distributed microphone arrays", "arrayloc"};
  app.require_subcommand(1);
  app.fallthrough();
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  std::string config_path;
  app.add_option("--config", config_path, "JSON file whose entries override command-line flags");

  auto make = [&](const char* name, const char* help) {
    auto* sub = app.add_subcommand(name, help);
    sub->option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
    return sub;
  };

  SimulateArgs sim;
  auto* s = make("simulate", "Synthesize ground truth, a wire capture and/or a calibration set");
  s->add_option("--scenario", sim.scenario, "Scenario JSON (default: built-in office layout)");
  s->add_option("--trajectory", sim.trajectory, "Trajectory name")->capture_default_str();
  s->add_option("--truth", sim.truth, "Ground-truth CSV output");
  s->add_option("--capture", sim.capture, "Wire-format capture output");
  s->add_option("--calibration", sim.calibration, "Calibration CSV output");
  s->add_option("--subset", sim.subset, "Calibration points: table, chair, all or ids")->capture_default_str();
  s->add_option("--dwell-s", sim.dwell_s, "Seconds recorded per calibration point")->capture_default_str();
  s->add_option("--write-scenario", sim.write_scenario, "Write the effective scenario as JSON");
  sim.seed_opt = s->add_option("--seed", sim.seed, "Random seed");
  sim.noise_opt = s->add_option("--noise-deg", sim.noise_deg, "DOA noise standard deviation, degrees");
  sim.quantize_opt = s->add_option("--quantize", sim.quantize, "Snap DOAs to the half-sphere grid (true/false)");
  s->add_option("--dropout", sim.dropout, "none, one_of_arrays or independent");
  sim.prob_opt = s->add_option("--dropout-prob", sim.dropout_prob, "Dropout probability");
  s->add_option("--repeat", sim.repeat, "Traverse the trajectory this many times")->capture_default_str();
  s->add_option("--period-ms", sim.period_ms, "Record period")->capture_default_str();
  sim.start_opt = s->add_option("--start-ms", sim.start_ms, "Timestamp of the first record");
  s->add_option("--energy", sim.energy, "Energy field of emitted wire records")->capture_default_str();

  CalibrateArgs cal;
  auto* c = make("calibrate", "Fit affine and/or PCA models on a calibration CSV");
  c->add_option("--calibration", cal.calibration, "Calibration CSV")->required();
  c->add_option("--method", cal.method, "affine, pca or both")
      ->check(CLI::IsMember({"affine", "pca", "both"}))
      ->capture_default_str();
  c->add_option("--subset", cal.subset, "Calibration points: table, chair, all or ids")->capture_default_str();
  c->add_option("--components", cal.components, "PCA components")->capture_default_str();
  c->add_option("--affine-out", cal.affine_out, "Affine model output");
  c->add_option("--pca-out", cal.pca_out, "PCA model output");
  c->add_option("--report", cal.report, "Fit report output ('-' for stdout)")->capture_default_str();
  c->add_option("--spectrum", cal.spectrum, "Singular-value spectrum CSV output");

  MapArgs map;
  auto* m = make("map", "Map joined observations to room or PCA coordinates");
  m->add_option("--capture", map.capture, "Wire-format capture input");
  m->add_option("--store", map.store, "Persistent store directory input");
  m->add_option("--joined", map.joined, "Joined-rows CSV input");
  m->add_option("--method", map.method, "affine, affine-missing, pca, pca-to-room or reference")
      ->capture_default_str();
  m->add_option("--affine", map.affine, "Affine model file");
  m->add_option("--pca", map.pca, "PCA model file");
  m->add_option("--calibration", map.calibration, "Calibration CSV");
  m->add_option("--subset", map.subset, "Calibration points used by affine-missing")->capture_default_str();
  m->add_option("--reference-point", map.reference_point, "Calibration point used as reference");
  m->add_flag("--reuse-full-offset", map.reuse_full_offset, "Keep the all-array offset for partial active sets");
  map.arrays_opt = m->add_option("--arrays", map.arrays, "Array count of the capture");
  m->add_option("--bin-ms", map.bin_ms, "Join bin width")->capture_default_str();
  m->add_option("--out", map.out, "Estimates CSV output ('-' for stdout)")->capture_default_str();
  m->add_option("--svg", map.svg, "Scatter plot output");

  EvaluateArgs ev;
  auto* e = make("evaluate", "Compare estimates with ground truth");
  e->add_option("--estimates", ev.estimates, "Estimates CSV")->required();
  e->add_option("--truth", ev.truth, "Ground-truth CSV")->required();
  e->add_option("--report", ev.report, "Metrics output ('-' for stdout)")->capture_default_str();
  e->add_option("--affine", ev.affine, "Affine model for the PCA scale check");
  e->add_option("--pca", ev.pca, "PCA model for the PCA scale check");
  e->add_option("--closed", ev.closed, "Closed path: auto, yes or no")->capture_default_str();
  e->add_option("--turn-deg", ev.turn_deg, "Heading change that starts a new leg")->capture_default_str();
  e->add_option("--svg", ev.svg, "Scatter plot output");

  ServeArgs sv;
  auto* v = make("serve", "Run the fusion-center wire endpoint");
  v->add_option("--bind", sv.bind, "Bind address")->capture_default_str();
  v->add_option("--port", sv.port, "TCP port (0 picks one)")->capture_default_str();
  v->add_option("--store", sv.store, "Persistent store directory (default: in memory)");
  v->add_option("--arrays", sv.arrays, "Array count")->capture_default_str();
  v->add_option("--duration-s", sv.duration_s, "Stop after this many seconds (0: until signalled)");

  ReplayArgs rp;
  auto* r = make("replay", "Stream a capture file to a wire endpoint");
  r->add_option("--capture", rp.capture, "Capture file")->required();
  r->add_option("--host", rp.host, "Endpoint host")->capture_default_str();
  r->add_option("--port", rp.port, "Endpoint port")->capture_default_str();

  LocalizeArgs lz;
  auto* l = make("localize", "Run the DOA front end on multichannel audio and emit wire records");
  l->add_option("--wav", lz.wav, "WAV input");
  l->add_option("--raw", lz.raw, "Headerless interleaved PCM input");
  l->add_option("--format", lz.format, "Raw sample format: s16le or f32le")->capture_default_str();
  l->add_option("--channels", lz.channels, "Raw channel count")->capture_default_str();
  l->add_option("--rate", lz.rate, "Raw sample rate")->capture_default_str();
  l->add_option("--mics", lz.mics, "Microphones on the circular array")->capture_default_str();
  l->add_option("--diameter", lz.diameter, "Circular array diameter, meters")->capture_default_str();
  l->add_option("--array-id", lz.array_id, "array_id field of the output")->capture_default_str();
  l->add_option("--start-ms", lz.start_ms, "Timestamp of the first sample")->capture_default_str();
  l->add_option("--bin-ms", lz.bin_ms, "Record bin width")->capture_default_str();
  l->add_option("--min-energy", lz.energy_floor, "Tracker energy threshold (default 0.15 per pair)");
  l->add_option("--out", lz.out, "Capture output ('-' for stdout)")->capture_default_str();

  GridArgs gr;
  auto* g = make("grid", "Export the half-sphere DOA grid");
  g->add_option("--level", gr.level, "Subdivision level")->capture_default_str();
  g->add_option("--out", gr.out, "CSV output ('-' for stdout)")->capture_default_str();

  try {
    std::vector<std::string> args;
    std::string cfg;
    std::string sub;
    for (std::size_t i = 1; i < input.size(); ++i) {
      const std::string& a = input[i];
      if (a == "--config") {
        if (i + 1 >= input.size()) config_error("--config needs a file");
        cfg = input[++i];
        continue;
      }
      if (a.rfind("--config=", 0) == 0) {
        cfg = a.substr(9);
        continue;
      }
      if (sub.empty()) {
        for (auto* candidate : app.get_subcommands({})) {
          if (candidate->get_name() == a) sub = a;
        }
      }
      args.push_back(a);
    }
    if (!cfg.empty()) append_config(args, cfg, sub);

    std::vector<const char*> argv;
    argv.push_back(input.empty() ? "arrayloc" : input[0].c_str());
    for (const auto& a : args) argv.push_back(a.c_str());
    try {
      app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::CallForHelp&) {
      out << app.help();
      return kExitOk;
    } catch (const CLI::CallForAllHelp&) {
      out << app.help("", CLI::AppFormatMode::All);
      return kExitOk;
    } catch (const CLI::ParseError& pe) {
      diagnostic(err, "error", "invalid-config", pe.what());
      err << "arrayloc: exit code=" << kExitInvalidConfig << '\n';
      return kExitInvalidConfig;
    }

    if (s->parsed()) cmd_simulate(sim, out, err);
    else if (c->parsed()) cmd_calibrate(cal, out, err);
    else if (m->parsed()) cmd_map(map, out, err);
    else if (e->parsed()) cmd_evaluate(ev, out, err);
    else if (v->parsed()) cmd_serve(sv, out, err);
    else if (r->parsed()) cmd_replay(rp, out, err);
    else if (l->parsed()) cmd_localize(lz, out, err);
    else if (g->parsed()) cmd_grid(gr, out, err);
    return kExitOk;
  } catch (const Failure& f) {
    diagnostic(err, "error", f.kind, f.what());
    err << "arrayloc: exit code=" << f.code << '\n';
    return f.code;
  } catch (const InvalidArgument& ex) {
    diagnostic(err, "error", "invalid-config", ex.what());
    err << "arrayloc: exit code=" << kExitInvalidConfig << '\n';
    return kExitInvalidConfig;
  } catch (const std::exception& ex) {
    // DataError, ActiveSetMismatch, NoObservation and I/O failures.
    diagnostic(err, "error", "data-error", ex.what());
    err << "arrayloc: exit code=" << kExitDataError << '\n';
    return kExitDataError;
  }
}

}  // namespace arrayloc::cli
