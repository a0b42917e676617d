#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>

#include "arrayloc/room_sim.hpp"

namespace arrayloc {

// Scenario files are JSON. See docs/scenario-format.md for the schema. Each
// array is given either by "orientation" (3x3, rows) or by "facing" and
// "up" vectors; trajectories list "waypoints" or "waypoint_ids" referring to
// calibration points.

Scenario read_scenario(std::istream& in);
void write_scenario(std::ostream& out, const Scenario& scenario);

Scenario load_scenario(const std::filesystem::path& path);
void save_scenario(const std::filesystem::path& path, const Scenario& scenario);

DropoutKind parse_dropout_kind(const std::string& name);
std::string to_string(DropoutKind kind);

}  // namespace arrayloc
