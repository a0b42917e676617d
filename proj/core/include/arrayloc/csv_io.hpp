#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "arrayloc/fusion.hpp"
#include "arrayloc/fusion_center.hpp"
#include "arrayloc/room_sim.hpp"

namespace arrayloc {

// All CSV writers print doubles with 17 significant digits, so reading a
// file back reproduces the written values exactly.

/// timestamp_ms,point_id,r_x,r_y[,r_z],d0_x,d0_y,d0_z,...,m0,...
void write_calibration_csv(std::ostream& out, const CalibrationSet& cal);
/// Consecutive rows with the same point_id form one segment.
CalibrationSet read_calibration_csv(std::istream& in);

/// Joined rows in the calibration layout: point_id -1, locations NaN.
void write_joined_csv(std::ostream& out, const std::vector<JoinedRow>& rows, int room_dim = 2);
std::vector<JoinedRow> read_joined_csv(std::istream& in);

/// timestamp_ms,true_x,true_y,true_z,d0_x,d0_y,d0_z,...,m0,...
void write_ground_truth_csv(std::ostream& out, const std::vector<GroundTruthRecord>& records);

struct GroundTruthRow {
  std::int64_t timestamp_ms = 0;
  Vec3 position = Vec3::Zero();
  ConcatenatedDoa emitted;
};
std::vector<GroundTruthRow> read_ground_truth_csv(std::istream& in);

/// Mapped positions (room meters or PCA units).
struct EstimateTable {
  std::vector<std::string> columns;  ///< coordinate column names, e.g. x,y or a1,a2
  std::vector<std::int64_t> timestamps_ms;
  Eigen::MatrixXd values;  ///< rows x columns.size()
  std::vector<int> active_counts;
  std::vector<std::string> methods;

  Eigen::Index rows() const { return values.rows(); }
};

/// bin_start_ms,<columns...>,active_count,method
void write_estimates_csv(std::ostream& out, const EstimateTable& table);
EstimateTable read_estimates_csv(std::istream& in);

/// Splits one CSV line on commas (no quoting).
std::vector<std::string> split_csv_line(const std::string& line);

}  // namespace arrayloc
