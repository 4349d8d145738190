#include "domlearn/world.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include <nlohmann/json.hpp>

namespace domlearn {

namespace {

std::string fmt3(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  return buf;
}

std::string vec_text(const double* v, std::size_t n) {
  std::string s = "[";
  for (std::size_t i = 0; i < n; ++i) {
    if (i) s += ", ";
    s += fmt3(v[i]);
  }
  return s + "]";
}

double dist3(const Vec3& a, const Vec3& b) {
  double dx = a[0] - b[0], dy = a[1] - b[1], dz = a[2] - b[2];
  return std::sqrt(dx * dx + dy * dy + dz * dz);
}

}  // namespace

const Part* WorldState::find_part(std::string_view name) const {
  for (const auto& p : parts) {
    if (p.name == name) return &p;
  }
  return nullptr;
}

Part* WorldState::find_part(std::string_view name) {
  for (auto& p : parts) {
    if (p.name == name) return &p;
  }
  return nullptr;
}

bool WorldState::has_object(std::string_view name) const {
  if (find_part(name)) return true;
  if (robot && robot->name == name) return true;
  if (table && table->name == name) return true;
  return false;
}

double state_distance(const WorldState& a, const WorldState& b) {
  if (a.discrete || b.discrete) {
    return a.atoms == b.atoms ? 0.0 : std::numeric_limits<double>::infinity();
  }
  double d = 0.0;
  for (const auto& p : a.parts) {
    const Part* q = b.find_part(p.name);
    if (!q) return std::numeric_limits<double>::infinity();
    d = std::max(d, dist3(p.center, q->center));
  }
  if (a.robot && b.robot) d = std::max(d, dist3(a.robot->gripper_center, b.robot->gripper_center));
  return d;
}

std::string dump_scene(const WorldState& w) {
  std::string out;
  if (w.discrete) {
    for (const auto& a : w.atoms) out += a.str() + "\n";
    return out;
  }
  if (w.robot) {
    out += w.robot->name + "\n";
    out += "- gripper_center: " + vec_text(w.robot->gripper_center.data(), 3) + "\n";
    out += std::string("- gripper_closed: ") + (w.robot->gripper_closed ? "True" : "False") + "\n";
  }
  if (w.table) {
    out += w.table->name + "\n";
    out += "- surface_z: " + fmt3(w.table->surface_z) + "\n";
  }
  for (const auto& p : w.parts) {
    out += p.name + "\n";
    out += "- center: " + vec_text(p.center.data(), 3) + "\n";
    out += "- orientation: " + vec_text(p.orientation.data(), 3) + "\n";
  }
  return out;
}

std::string dump_variables(const WorldState& w) {
  std::string out;
  if (w.robot) {
    out += "-" + w.robot->name + ": Robot(gripper_center=" + vec_text(w.robot->gripper_center.data(), 3) +
           ", gripper_closed=" + (w.robot->gripper_closed ? "True" : "False") + ")\n";
  }
  if (w.table) out += "-" + w.table->name + ": Table(surface_z=" + fmt3(w.table->surface_z) + ")\n";
  for (const auto& p : w.parts) {
    out += "-" + p.name + ": Part(bounding_box=" + vec_text(p.bbox.data(), 6) +
           ", center=" + vec_text(p.center.data(), 3) + ", orientation=" + vec_text(p.orientation.data(), 3) +
           ")\n";
  }
  return out;
}

void to_json(nlohmann::json& j, const WorldState& w) {
  j = nlohmann::json::object();
  if (w.discrete) {
    j["atoms"] = nlohmann::json::array();
    for (const auto& a : w.atoms) j["atoms"].push_back(a.str());
    return;
  }
  auto parts = nlohmann::json::array();
  for (const auto& p : w.parts) {
    parts.push_back({{"name", p.name}, {"center", p.center}, {"orientation", p.orientation}, {"bbox", p.bbox}});
  }
  j["parts"] = parts;
  if (w.robot) {
    j["robot"] = {{"name", w.robot->name},
                  {"gripper_center", w.robot->gripper_center},
                  {"gripper_closed", w.robot->gripper_closed}};
  }
  if (w.table) j["table"] = {{"name", w.table->name}, {"surface_z", w.table->surface_z}};
}

void from_json(const nlohmann::json& j, WorldState& w) {
  w = WorldState{};
  if (j.contains("atoms")) {
    w.discrete = true;
    for (const auto& a : j.at("atoms")) w.atoms.insert(parse_ground_atom(a.get<std::string>()));
    return;
  }
  for (const auto& p : j.value("parts", nlohmann::json::array())) {
    Part part;
    part.name = p.at("name").get<std::string>();
    part.center = p.at("center").get<Vec3>();
    part.orientation = p.at("orientation").get<Vec3>();
    part.bbox = p.at("bbox").get<std::array<double, 6>>();
    w.parts.push_back(std::move(part));
  }
  if (j.contains("robot")) {
    RobotState r;
    r.name = j["robot"].at("name").get<std::string>();
    r.gripper_center = j["robot"].at("gripper_center").get<Vec3>();
    r.gripper_closed = j["robot"].at("gripper_closed").get<bool>();
    w.robot = r;
  }
  if (j.contains("table")) {
    TableState t;
    t.name = j["table"].at("name").get<std::string>();
    t.surface_z = j["table"].at("surface_z").get<double>();
    w.table = t;
  }
}

std::string SkillCall::str() const {
  std::string s = name + "(";
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (i) s += ", ";
    s += "'" + args[i] + "'";
  }
  return s + ")";
}

SkillCall parse_skill_call(std::string_view text) {
  GroundAtom a = parse_ground_atom(text);
  return {a.predicate, a.args};
}

std::string SkillSignature::python_signature() const {
  std::string s = "def " + name + "(";
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (i) s += ", ";
    s += params[i].name + ": str";
  }
  return s + "):";
}

void to_json(nlohmann::json& j, const SkillCall& s) { j = {{"name", s.name}, {"args", s.args}}; }

void from_json(const nlohmann::json& j, SkillCall& s) {
  s.name = j.at("name").get<std::string>();
  s.args = j.value("args", std::vector<std::string>{});
}

}  // namespace domlearn
