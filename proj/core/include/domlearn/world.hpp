#pragma once

// Low-level world state shared by environments, classifiers and datasets.

#include <array>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "domlearn/symbolic.hpp"

namespace domlearn {

using Vec3 = std::array<double, 3>;

struct Part {
  std::string name;
  Vec3 center{};
  /// roll, pitch, yaw in radians.
  Vec3 orientation{};
  /// x_min, y_min, z_min, x_max, y_max, z_max.
  std::array<double, 6> bbox{};

  double top() const { return bbox[5]; }
  double bottom() const { return bbox[2]; }
  friend bool operator==(const Part&, const Part&) = default;
};

struct RobotState {
  std::string name = "arm";
  Vec3 gripper_center{};
  bool gripper_closed = false;
  friend bool operator==(const RobotState&, const RobotState&) = default;
};

struct TableState {
  std::string name = "table";
  double surface_z = 0.0;
  friend bool operator==(const TableState&, const TableState&) = default;
};

/// Either a discrete symbolic state or a continuous tabletop scene.
struct WorldState {
  bool discrete = false;
  SymbolicState atoms;

  std::vector<Part> parts;
  std::optional<RobotState> robot;
  std::optional<TableState> table;

  const Part* find_part(std::string_view name) const;
  Part* find_part(std::string_view name);
  bool has_object(std::string_view name) const;

  friend bool operator==(const WorldState&, const WorldState&) = default;
};

/// Largest Euclidean position difference over parts and the gripper.
/// Discrete states are 0 apart when equal and infinitely apart otherwise.
double state_distance(const WorldState& a, const WorldState& b);

/// Pose listing used in oracle prompts:
///   arm
///   - gripper_center: [0.567, 0.055, 0.124]
std::string dump_scene(const WorldState& w);
/// One "-name: Part(bounding_box=[...], ...)" line per object.
std::string dump_variables(const WorldState& w);

void to_json(nlohmann::json& j, const WorldState& w);
void from_json(const nlohmann::json& j, WorldState& w);

/// A call to an executable skill, e.g. hover_above_part('lamp_bulb').
struct SkillCall {
  std::string name;
  std::vector<std::string> args;

  std::string str() const;
  friend auto operator<=>(const SkillCall&, const SkillCall&) = default;
};

/// Accepts "name(a, 'b')" or "(name a b)".
SkillCall parse_skill_call(std::string_view text);

struct SkillParam {
  std::string name;
  /// Operator parameter this argument binds in a discrete environment;
  /// empty means positional.
  std::string binds;
};

struct SkillSignature {
  std::string name;
  std::vector<SkillParam> params;

  /// "def hover_above_part(part: str):"
  std::string python_signature() const;
};

void to_json(nlohmann::json& j, const SkillCall& s);
void from_json(const nlohmann::json& j, SkillCall& s);

}  // namespace domlearn
