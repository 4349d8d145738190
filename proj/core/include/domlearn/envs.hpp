#pragma once

// Deterministic simulators behind a common skill-execution interface.

#include <cstdint>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "domlearn/error.hpp"
#include "domlearn/symbolic.hpp"
#include "domlearn/world.hpp"

namespace domlearn {

/// The skill name is not in the environment's library. No interaction is
/// counted.
class UnknownSkill : public Error {
 public:
  using Error::Error;
};

struct SkillResult {
  WorldState state;
  /// Set when the skill raised; the state is then unchanged.
  std::optional<std::string> error;

  bool ok() const { return !error; }
};

struct NoiseConfig {
  double sigma_pos = 0.005;
  double sigma_ang = 0.02;
};

class Environment {
 public:
  virtual ~Environment() = default;

  virtual std::string id() const = 0;
  virtual const std::vector<SkillSignature>& skills() const = 0;
  virtual const std::vector<TypedVar>& objects() const = 0;

  /// Runs one skill. Throws UnknownSkill; every other failure is returned in
  /// the result and still counts as an interaction.
  SkillResult execute(const SkillCall& skill);

  /// Ground-truth low-level state.
  virtual WorldState true_state() const = 0;
  /// Perceived state. Noise depends only on (seed, interaction count).
  virtual WorldState observe(std::uint64_t noise_seed) const = 0;
  /// Exact symbolic state. Test and labeling oracle only.
  virtual SymbolicState ground_truth_atoms() const = 0;

  std::size_t interactions() const { return interactions_; }

  /// Snapshot stack for retrying from a checkpoint.
  void push_snapshot();
  /// Restores the most recent snapshot and keeps it on the stack.
  void restore_snapshot();
  void pop_snapshot();
  std::size_t snapshot_depth() const { return snapshots_.size(); }

  const SkillSignature* find_skill(std::string_view name) const;

  struct Snapshot {
    virtual ~Snapshot() = default;
  };

 protected:
  virtual std::unique_ptr<Snapshot> capture() const = 0;
  virtual void load(const Snapshot& s) = 0;
  /// Returns an error text on failure, leaving the state unchanged.
  virtual std::optional<std::string> run(const SkillCall& skill) = 0;

 private:
  std::size_t interactions_ = 0;
  std::vector<std::unique_ptr<Snapshot>> snapshots_;
};

/// Interprets a hidden PDDL domain. Each skill maps to the operator of the
/// same name; skill arguments bind operator parameters (positionally or via
/// SkillParam::binds) and the remaining parameters take the first applicable
/// binding in lexicographic order.
class DiscreteEnv : public Environment {
 public:
  DiscreteEnv(std::string id, DomainModel hidden, Problem problem, std::vector<SkillSignature> skills);

  /// One skill per operator with all parameters positional.
  static std::vector<SkillSignature> default_skills(const DomainModel& d);

  std::string id() const override { return id_; }
  const std::vector<SkillSignature>& skills() const override { return skills_; }
  const std::vector<TypedVar>& objects() const override { return objects_; }
  WorldState true_state() const override;
  WorldState observe(std::uint64_t) const override { return true_state(); }
  SymbolicState ground_truth_atoms() const override { return state_; }

  const DomainModel& hidden_domain() const { return domain_; }
  const Problem& problem() const { return problem_; }

  /// The ground action a skill call resolves to in the current state.
  std::optional<Action> resolve(const SkillCall& skill, std::string* why = nullptr) const;

 protected:
  std::unique_ptr<Snapshot> capture() const override;
  void load(const Snapshot& s) override;
  std::optional<std::string> run(const SkillCall& skill) override;

 private:
  std::string id_;
  DomainModel domain_;
  Problem problem_;
  std::vector<SkillSignature> skills_;
  std::vector<TypedVar> objects_;
  SymbolicState state_;
};

/// Rule constants of the kinematic tabletop. Distances in meters.
struct TabletopRules {
  double hover_height = 0.10;     // gripper above part top when hovering
  double grasp_depth = 0.02;      // gripper below part top when around it
  double grasp_xy = 0.03;         // close_gripper xy capture radius
  double grasp_z = 0.05;          // close_gripper vertical capture window
  double lift = 0.10;             // move_linear_up distance
  double retreat = 0.10;          // gripper retreat after screwing
  double align_clearance = 0.03;  // held bottom above fixed top after aligning
  double pos_eps = 0.01;          // hovering/aligned xy tolerance
  double contact_eps = 0.005;     // touching/on-table vertical tolerance
  double angle_eps = 0.1;
};

struct PartSpec {
  std::string name;
  Vec3 center{};
  Vec3 orientation{};
  Vec3 size{};
};

struct TabletopScene {
  std::vector<PartSpec> parts;
  Vec3 gripper_center{0.567, 0.055, 0.124};
  bool gripper_closed = false;
  double surface_z = -0.016;
  std::string robot = "arm";
  std::string table = "table";
};

void from_json(const nlohmann::json& j, TabletopScene& s);
void to_json(nlohmann::json& j, const TabletopScene& s);

/// The lamp scene: base, bulb and hood resting on the table.
TabletopScene lamp_scene();

/// Kinematic gripper-and-parts simulator. Ground-truth predicates:
/// on_table, holding, assembled, hovering_above, gripper_around,
/// gripper_closed, aligned, touching.
class TabletopEnv : public Environment {
 public:
  explicit TabletopEnv(TabletopScene scene, NoiseConfig noise = {}, TabletopRules rules = {});

  static std::vector<SkillSignature> lamp_skills();
  static std::vector<std::string> ground_truth_predicates();

  std::string id() const override { return "tabletop"; }
  const std::vector<SkillSignature>& skills() const override { return skills_; }
  const std::vector<TypedVar>& objects() const override { return objects_; }
  WorldState true_state() const override { return state_; }
  WorldState observe(std::uint64_t noise_seed) const override;
  SymbolicState ground_truth_atoms() const override;

  const NoiseConfig& noise() const { return noise_; }
  void set_noise(NoiseConfig n) { noise_ = n; }
  const TabletopRules& rules() const { return rules_; }

 protected:
  std::unique_ptr<Snapshot> capture() const override;
  void load(const Snapshot& s) override;
  std::optional<std::string> run(const SkillCall& skill) override;

 private:
  void move_gripper(const Vec3& to);
  void drop(Part& p);

  std::vector<SkillSignature> skills_;
  std::vector<TypedVar> objects_;
  NoiseConfig noise_;
  TabletopRules rules_;
  WorldState state_;
  std::optional<std::string> attached_;
  std::set<std::pair<std::string, std::string>> assembled_;
};

/// Adds seeded zero-mean Gaussian noise to every pose.
WorldState add_noise(const WorldState& w, const NoiseConfig& noise, std::uint64_t seed);

}  // namespace domlearn
