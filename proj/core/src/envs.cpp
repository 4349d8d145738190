#include "domlearn/envs.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include <nlohmann/json.hpp>

namespace domlearn {

namespace {

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

double dist_xy(const Vec3& a, const Vec3& b) { return std::hypot(a[0] - b[0], a[1] - b[1]); }

double wrap_angle(double a) {
  double r = std::fmod(a + std::numbers::pi, 2 * std::numbers::pi);
  if (r < 0) r += 2 * std::numbers::pi;
  return r - std::numbers::pi;
}

void shift(Part& p, const Vec3& d) {
  for (int i = 0; i < 3; ++i) {
    p.center[i] += d[i];
    p.bbox[i] += d[i];
    p.bbox[i + 3] += d[i];
  }
}

}  // namespace

SkillResult Environment::execute(const SkillCall& skill) {
  if (!find_skill(skill.name)) throw UnknownSkill("unknown skill '" + skill.name + "'");
  ++interactions_;
  auto err = run(skill);
  return {true_state(), err};
}

void Environment::push_snapshot() { snapshots_.push_back(capture()); }

void Environment::restore_snapshot() {
  if (snapshots_.empty()) throw Error("no snapshot to restore");
  load(*snapshots_.back());
}

void Environment::pop_snapshot() {
  if (!snapshots_.empty()) snapshots_.pop_back();
}

const SkillSignature* Environment::find_skill(std::string_view name) const {
  for (const auto& s : skills()) {
    if (s.name == name) return &s;
  }
  return nullptr;
}

// ---------------------------------------------------------------- discrete

DiscreteEnv::DiscreteEnv(std::string id, DomainModel hidden, Problem problem, std::vector<SkillSignature> skills)
    : id_(std::move(id)),
      domain_(std::move(hidden)),
      problem_(std::move(problem)),
      skills_(std::move(skills)),
      objects_(all_objects(domain_, problem_.objects)),
      state_(problem_.init) {
  if (skills_.empty()) skills_ = default_skills(domain_);
}

std::vector<SkillSignature> DiscreteEnv::default_skills(const DomainModel& d) {
  std::vector<SkillSignature> out;
  for (const auto& op : d.operators) {
    SkillSignature s{op.name, {}};
    for (const auto& p : op.params) s.params.push_back({p.name.substr(1), ""});
    out.push_back(std::move(s));
  }
  return out;
}

WorldState DiscreteEnv::true_state() const {
  WorldState w;
  w.discrete = true;
  w.atoms = state_;
  return w;
}

std::optional<Action> DiscreteEnv::resolve(const SkillCall& skill, std::string* why) const {
  auto fail = [&](std::string msg) -> std::optional<Action> {
    if (why) *why = std::move(msg);
    return std::nullopt;
  };
  const SkillSignature* sig = find_skill(skill.name);
  if (!sig) return fail("unknown skill '" + skill.name + "'");
  const OperatorDef* op = domain_.find_operator(skill.name);
  if (!op) return fail("skill '" + skill.name + "' has no implementation");
  if (skill.args.size() != sig->params.size()) {
    return fail("invalid parameterization: " + skill.name + " takes " + std::to_string(sig->params.size()) +
                " arguments, got " + std::to_string(skill.args.size()));
  }
  std::vector<std::optional<std::string>> fixed(op->arity());
  for (std::size_t i = 0; i < skill.args.size(); ++i) {
    const auto& arg = skill.args[i];
    bool known = std::any_of(objects_.begin(), objects_.end(), [&](const TypedVar& o) { return o.name == arg; });
    if (!known) return fail("invalid parameterization: unknown object '" + arg + "'");
    std::size_t idx = i;
    if (!sig->params[i].binds.empty()) {
      auto pi = op->param_index(sig->params[i].binds);
      if (!pi) return fail("skill parameter binds unknown variable " + sig->params[i].binds);
      idx = *pi;
    }
    if (idx >= fixed.size()) return fail("invalid parameterization of " + skill.name);
    fixed[idx] = arg;
  }
  auto matches = [&](const Action& a) {
    if (a.op != op->name) return false;
    for (std::size_t i = 0; i < fixed.size(); ++i) {
      if (fixed[i] && a.args[i] != *fixed[i]) return false;
    }
    return true;
  };
  for (const auto& a : applicable(domain_, state_, problem_.objects)) {
    if (matches(a)) return a;
  }
  // Explain with the first type-compatible candidate.
  for (const auto& a : all_bindings(domain_, problem_.objects)) {
    if (!matches(a)) continue;
    GroundOperator g = instantiate(domain_, a);
    auto missing = unsatisfied(g, state_);
    std::string text;
    for (const auto& m : missing) text += (text.empty() ? "" : ", ") + m;
    return fail(skill.str() + " cannot be executed: " + text + " not satisfied");
  }
  return fail("invalid parameterization: arguments of " + skill.str() + " have the wrong types");
}

namespace {

struct AtomsSnapshot : Environment::Snapshot {
  SymbolicState state;
};

struct SceneSnapshot : Environment::Snapshot {
  WorldState state;
  std::optional<std::string> attached;
  std::set<std::pair<std::string, std::string>> assembled;
};

}  // namespace

std::unique_ptr<Environment::Snapshot> DiscreteEnv::capture() const {
  auto s = std::make_unique<AtomsSnapshot>();
  s->state = state_;
  return s;
}

void DiscreteEnv::load(const Snapshot& s) { state_ = dynamic_cast<const AtomsSnapshot&>(s).state; }

std::optional<std::string> DiscreteEnv::run(const SkillCall& skill) {
  std::string why;
  auto a = resolve(skill, &why);
  if (!a) return why;
  state_ = apply(domain_, state_, *a);
  return std::nullopt;
}

// ---------------------------------------------------------------- tabletop

void from_json(const nlohmann::json& j, TabletopScene& s) {
  s = TabletopScene{};
  for (const auto& p : j.at("parts")) {
    PartSpec ps;
    ps.name = p.at("name").get<std::string>();
    ps.center = p.at("center").get<Vec3>();
    ps.orientation = p.value("orientation", Vec3{});
    ps.size = p.at("size").get<Vec3>();
    s.parts.push_back(ps);
  }
  if (j.contains("gripper_center")) s.gripper_center = j["gripper_center"].get<Vec3>();
  s.gripper_closed = j.value("gripper_closed", false);
  s.surface_z = j.value("surface_z", s.surface_z);
  s.robot = j.value("robot", s.robot);
  s.table = j.value("table", s.table);
}

void to_json(nlohmann::json& j, const TabletopScene& s) {
  auto parts = nlohmann::json::array();
  for (const auto& p : s.parts) {
    parts.push_back({{"name", p.name}, {"center", p.center}, {"orientation", p.orientation}, {"size", p.size}});
  }
  j = {{"parts", parts},
       {"gripper_center", s.gripper_center},
       {"gripper_closed", s.gripper_closed},
       {"surface_z", s.surface_z},
       {"robot", s.robot},
       {"table", s.table}};
}

TabletopScene lamp_scene() {
  TabletopScene s;
  s.parts = {
      {"lamp_base", {0.455, 0.050, 0.017}, {3.140, -0.000, -1.380}, {0.100, 0.100, 0.064}},
      {"lamp_bulb", {0.433, 0.195, 0.015}, {-3.140, 1.420, 0.040}, {0.120, 0.060, 0.060}},
      {"lamp_hood", {0.459, -0.110, 0.035}, {3.140, -0.000, 1.540}, {0.088, 0.088, 0.100}},
  };
  return s;
}

TabletopEnv::TabletopEnv(TabletopScene scene, NoiseConfig noise, TabletopRules rules)
    : skills_(lamp_skills()), noise_(noise), rules_(rules) {
  state_.robot = RobotState{scene.robot, scene.gripper_center, scene.gripper_closed};
  state_.table = TableState{scene.table, scene.surface_z};
  objects_.push_back({scene.robot, "robot"});
  objects_.push_back({scene.table, "table"});
  for (const auto& ps : scene.parts) {
    Part p;
    p.name = ps.name;
    p.center = ps.center;
    p.orientation = ps.orientation;
    for (int i = 0; i < 3; ++i) {
      p.bbox[i] = ps.center[i] - ps.size[i] / 2;
      p.bbox[i + 3] = ps.center[i] + ps.size[i] / 2;
    }
    state_.parts.push_back(p);
    objects_.push_back({ps.name, "part"});
  }
}

std::vector<SkillSignature> TabletopEnv::lamp_skills() {
  return {
      {"hover_above_part", {{"part", ""}}},
      {"set_gripper_around_part", {{"part", ""}}},
      {"move_linear_up", {}},
      {"open_gripper", {}},
      {"close_gripper", {}},
      {"align_orientation_for_assembly", {{"held_part", ""}, {"fixed_part", ""}}},
      {"screw_touching_parts_together", {{"held_part", ""}, {"fixed_part", ""}}},
      {"move_linear_down_until_touching", {{"held_part", ""}, {"fixed_part", ""}}},
  };
}

std::vector<std::string> TabletopEnv::ground_truth_predicates() {
  return {"on_table", "holding", "assembled", "hovering_above", "gripper_around", "gripper_closed", "aligned",
          "touching"};
}

WorldState add_noise(const WorldState& w, const NoiseConfig& noise, std::uint64_t seed) {
  if (w.discrete) return w;
  WorldState out = w;
  std::mt19937_64 rng(splitmix(seed));
  std::normal_distribution<double> unit(0.0, 1.0);
  for (auto& p : out.parts) {
    Vec3 d{unit(rng) * noise.sigma_pos, unit(rng) * noise.sigma_pos, unit(rng) * noise.sigma_pos};
    shift(p, d);
    for (auto& a : p.orientation) a += unit(rng) * noise.sigma_ang;
  }
  if (out.robot) {
    for (auto& c : out.robot->gripper_center) c += unit(rng) * noise.sigma_pos;
  }
  return out;
}

WorldState TabletopEnv::observe(std::uint64_t noise_seed) const {
  if (noise_.sigma_pos == 0.0 && noise_.sigma_ang == 0.0) return state_;
  return add_noise(state_, noise_, splitmix(noise_seed) ^ splitmix(interactions() + 1));
}

SymbolicState TabletopEnv::ground_truth_atoms() const {
  SymbolicState s;
  const RobotState& r = *state_.robot;
  const TableState& t = *state_.table;
  const TabletopRules& k = rules_;
  if (r.gripper_closed) s.insert({"gripper_closed", {r.name}});
  for (const auto& [a, b] : assembled_) s.insert({"assembled", {a, b}});
  for (const auto& p : state_.parts) {
    bool held = attached_ && *attached_ == p.name;
    if (held) s.insert({"holding", {r.name, p.name}});
    if (std::abs(p.bottom() - t.surface_z) < k.contact_eps) s.insert({"on_table", {p.name, t.name}});
    double dxy = dist_xy(r.gripper_center, p.center);
    if (!held && dxy < k.pos_eps && std::abs(r.gripper_center[2] - (p.top() + k.hover_height)) < k.pos_eps) {
      s.insert({"hovering_above", {r.name, p.name}});
    }
    if (!r.gripper_closed && dxy < k.grasp_xy && std::abs(r.gripper_center[2] - p.top()) <= k.grasp_z) {
      s.insert({"gripper_around", {r.name, p.name}});
    }
    for (const auto& q : state_.parts) {
      if (q.name == p.name) continue;
      double pxy = dist_xy(p.center, q.center);
      if (pxy >= k.pos_eps) continue;
      if (std::abs(p.bottom() - q.top()) < k.contact_eps) s.insert({"touching", {p.name, q.name}});
      bool angles = std::abs(wrap_angle(p.orientation[0] - q.orientation[0])) < k.angle_eps &&
                    std::abs(wrap_angle(p.orientation[1] - q.orientation[1])) < k.angle_eps;
      double gap = p.bottom() - q.top();
      if (held && angles && gap >= -k.contact_eps && gap <= k.align_clearance + k.contact_eps) s.insert({"aligned", {p.name, q.name}});
    }
  }
  return s;
}

std::unique_ptr<Environment::Snapshot> TabletopEnv::capture() const {
  auto s = std::make_unique<SceneSnapshot>();
  s->state = state_;
  s->attached = attached_;
  s->assembled = assembled_;
  return s;
}

void TabletopEnv::load(const Snapshot& snap) {
  const auto& s = dynamic_cast<const SceneSnapshot&>(snap);
  state_ = s.state;
  attached_ = s.attached;
  assembled_ = s.assembled;
}

void TabletopEnv::move_gripper(const Vec3& to) {
  Vec3& g = state_.robot->gripper_center;
  Vec3 d{to[0] - g[0], to[1] - g[1], to[2] - g[2]};
  g = to;
  if (attached_) shift(*state_.find_part(*attached_), d);
}

void TabletopEnv::drop(Part& p) {
  double dz = state_.table->surface_z - p.bottom();
  if (dz < 0) shift(p, {0, 0, dz});
}

std::optional<std::string> TabletopEnv::run(const SkillCall& skill) {
  const SkillSignature* sig = find_skill(skill.name);
  if (skill.args.size() != sig->params.size()) {
    return "invalid parameterization: " + skill.name + " takes " + std::to_string(sig->params.size()) +
           " arguments";
  }
  std::vector<Part*> parts;
  for (const auto& a : skill.args) {
    Part* p = state_.find_part(a);
    if (!p) return "invalid parameterization: unknown part '" + a + "'";
    parts.push_back(p);
  }
  RobotState& r = *state_.robot;
  const TabletopRules& k = rules_;
  const std::string& name = skill.name;

  auto require_held = [&](const Part& p) -> std::optional<std::string> {
    if (!attached_ || *attached_ != p.name) return "the robot is not holding " + p.name;
    return std::nullopt;
  };

  if (name == "hover_above_part") {
    Part& p = *parts[0];
    if (attached_) return "cannot hover above " + p.name + " while holding " + *attached_;
    move_gripper({p.center[0], p.center[1], p.top() + k.hover_height});
  } else if (name == "set_gripper_around_part") {
    Part& p = *parts[0];
    if (r.gripper_closed) return "gripper is closed; it cannot be placed around " + p.name;
    bool hovering = dist_xy(r.gripper_center, p.center) < k.pos_eps &&
                    std::abs(r.gripper_center[2] - (p.top() + k.hover_height)) < k.pos_eps;
    if (!hovering) return "unreachable pose: gripper must hover above " + p.name + " first";
    move_gripper({p.center[0], p.center[1], p.top() - k.grasp_depth});
  } else if (name == "close_gripper") {
    r.gripper_closed = true;
    if (!attached_) {
      const Part* best = nullptr;
      double best_d = 0;
      for (const auto& p : state_.parts) {
        bool fixed = std::any_of(assembled_.begin(), assembled_.end(),
                                 [&](const auto& e) { return e.first == p.name || e.second == p.name; });
        if (fixed) continue;
        double dxy = dist_xy(r.gripper_center, p.center);
        double dz = std::abs(r.gripper_center[2] - p.top());
        if (dxy < k.grasp_xy && dz <= k.grasp_z && (!best || dxy + dz < best_d)) {
          best = &p;
          best_d = dxy + dz;
        }
      }
      if (best) attached_ = best->name;
    }
  } else if (name == "open_gripper") {
    r.gripper_closed = false;
    if (attached_) {
      Part& p = *state_.find_part(*attached_);
      attached_.reset();
      drop(p);
    }
  } else if (name == "move_linear_up") {
    Vec3 g = r.gripper_center;
    g[2] += k.lift;
    move_gripper(g);
  } else if (name == "align_orientation_for_assembly") {
    Part& held = *parts[0];
    Part& fixed = *parts[1];
    if (held.name == fixed.name) return "invalid parameterization: a part cannot be assembled with itself";
    if (auto e = require_held(held)) return e;
    held.orientation[0] = fixed.orientation[0];
    held.orientation[1] = fixed.orientation[1];
    Vec3 d{fixed.center[0] - held.center[0], fixed.center[1] - held.center[1],
           fixed.top() + k.align_clearance - held.bottom()};
    shift(held, d);
    for (int i = 0; i < 3; ++i) r.gripper_center[i] += d[i];
  } else if (name == "move_linear_down_until_touching") {
    Part& held = *parts[0];
    Part& fixed = *parts[1];
    if (auto e = require_held(held)) return e;
    if (dist_xy(held.center, fixed.center) >= k.pos_eps) return held.name + " is not above " + fixed.name;
    if (held.bottom() < fixed.top() - k.contact_eps) return held.name + " is below the top of " + fixed.name;
    Vec3 g = r.gripper_center;
    g[2] -= held.bottom() - fixed.top();
    move_gripper(g);
  } else if (name == "screw_touching_parts_together") {
    Part& held = *parts[0];
    Part& fixed = *parts[1];
    if (auto e = require_held(held)) return e;
    bool touching = dist_xy(held.center, fixed.center) < k.pos_eps &&
                    std::abs(held.bottom() - fixed.top()) < k.contact_eps;
    if (!touching) return held.name + " and " + fixed.name + " are not touching";
    assembled_.insert({held.name, fixed.name});
    attached_.reset();
    r.gripper_closed = false;
    r.gripper_center[2] += k.retreat;
  }
  return std::nullopt;
}

}  // namespace domlearn
