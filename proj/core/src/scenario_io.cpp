#include "arrayloc/scenario_io.hpp"

#include <fstream>

#include "arrayloc/errors.hpp"
#include "json.hpp"

namespace arrayloc {

using nlohmann::json;

namespace {

Vec3 to_vec3(const json& j, const char* what) {
  if (!j.is_array() || j.size() != 3) throw DataError(std::string("scenario: ") + what + " must be a 3-vector");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

json from_vec3(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

}  // namespace

DropoutKind parse_dropout_kind(const std::string& name) {
  if (name == "none") return DropoutKind::none;
  if (name == "one_of_arrays") return DropoutKind::one_of_arrays;
  if (name == "independent") return DropoutKind::independent;
  throw InvalidArgument("unknown dropout kind '" + name + "'");
}

std::string to_string(DropoutKind kind) {
  switch (kind) {
    case DropoutKind::none: return "none";
    case DropoutKind::one_of_arrays: return "one_of_arrays";
    case DropoutKind::independent: return "independent";
  }
  return "none";
}

Scenario read_scenario(std::istream& in) {
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw DataError(std::string("scenario: ") + e.what());
  }
  Scenario s;
  try {
    if (j.contains("room")) {
      s.room_min = to_vec3(j["room"].at("min"), "room.min");
      s.room_max = to_vec3(j["room"].at("max"), "room.max");
    }
    s.room_dim = j.value("room_dim", 2);
    s.noise_deg = j.value("noise_deg", 2.0);
    s.quantize = j.value("quantize", false);
    s.seed = j.value("seed", std::uint64_t{1});
    s.start_ms = j.value("start_ms", std::int64_t{0});
    if (j.contains("dropout")) {
      const json& d = j["dropout"];
      s.dropout.kind = parse_dropout_kind(d.value("kind", std::string("none")));
      s.dropout.probability = d.value("probability", 0.0);
      s.dropout.allow_empty = d.value("allow_empty", false);
    }
    for (const json& a : j.at("arrays")) {
      const Vec3 pos = to_vec3(a.at("position"), "array position");
      if (a.contains("orientation")) {
        ArrayPose pose;
        pose.position = pos;
        const json& o = a["orientation"];
        if (!o.is_array() || o.size() != 3) throw DataError("scenario: orientation must be 3x3");
        for (int r = 0; r < 3; ++r) pose.orientation.row(r) = to_vec3(o[static_cast<std::size_t>(r)], "orientation row");
        pose.validate();
        s.poses.push_back(pose);
      } else {
        s.poses.push_back(ArrayPose::looking(pos, to_vec3(a.at("facing"), "facing"), to_vec3(a.at("up"), "up")));
      }
    }
    for (const json& p : j.at("calibration_points")) {
      s.calibration_points.push_back(
          {p.at("id").get<int>(), to_vec3(p.at("position"), "calibration point"), p.value("group", std::string())});
    }
    if (j.contains("trajectories")) {
      for (const json& t : j["trajectories"]) {
        Trajectory traj;
        traj.name = t.at("name").get<std::string>();
        traj.speed_mps = t.value("speed_mps", 0.1);
        if (t.contains("waypoint_ids")) {
          for (const json& id : t["waypoint_ids"]) traj.waypoints.push_back(s.point(id.get<int>()).position);
        } else {
          for (const json& w : t.at("waypoints")) traj.waypoints.push_back(to_vec3(w, "waypoint"));
        }
        s.trajectories.push_back(std::move(traj));
      }
    }
  } catch (const json::exception& e) {
    throw DataError(std::string("scenario: ") + e.what());
  }
  s.validate();
  return s;
}

void write_scenario(std::ostream& out, const Scenario& s) {
  json j;
  j["room"] = {{"min", from_vec3(s.room_min)}, {"max", from_vec3(s.room_max)}};
  j["room_dim"] = s.room_dim;
  j["noise_deg"] = s.noise_deg;
  j["quantize"] = s.quantize;
  j["seed"] = s.seed;
  j["start_ms"] = s.start_ms;
  j["dropout"] = {{"kind", to_string(s.dropout.kind)},
                  {"probability", s.dropout.probability},
                  {"allow_empty", s.dropout.allow_empty}};
  j["arrays"] = json::array();
  for (const auto& p : s.poses) {
    json o = json::array();
    for (int r = 0; r < 3; ++r) o.push_back(from_vec3(p.orientation.row(r).transpose()));
    j["arrays"].push_back({{"position", from_vec3(p.position)}, {"orientation", o}});
  }
  j["calibration_points"] = json::array();
  for (const auto& p : s.calibration_points) {
    j["calibration_points"].push_back({{"id", p.id}, {"position", from_vec3(p.position)}, {"group", p.group}});
  }
  j["trajectories"] = json::array();
  for (const auto& t : s.trajectories) {
    json w = json::array();
    for (const auto& v : t.waypoints) w.push_back(from_vec3(v));
    j["trajectories"].push_back({{"name", t.name}, {"speed_mps", t.speed_mps}, {"waypoints", w}});
  }
  out << j.dump(2) << '\n';
}

Scenario load_scenario(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open scenario file " + path.string());
  return read_scenario(in);
}

void save_scenario(const std::filesystem::path& path, const Scenario& scenario) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write scenario file " + path.string());
  write_scenario(out, scenario);
}

}  // namespace arrayloc
