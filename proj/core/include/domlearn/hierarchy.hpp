#pragma once

// Hierarchical domain models: subproblems, cross-level alignment, operator
// realignment, decomposition keys and directory serialization.

#include <compare>
#include <cstddef>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "domlearn/error.hpp"
#include "domlearn/planner.hpp"
#include "domlearn/symbolic.hpp"
#include "domlearn/world.hpp"

namespace domlearn {

/// The subproblem goal would be empty.
class DegenerateSubproblem : public Error {
 public:
  using Error::Error;
};

/// An operator rewrite failed validation twice.
class OracleRejection : public Error {
 public:
  using Error::Error;
};

/// init = s_i, goal ⟨s_next \ s_i, s_i \ s_next⟩.
Problem make_subproblem(const SymbolicState& s_i, const SymbolicState& s_next, const std::vector<TypedVar>& objects,
                        const std::string& name = "subproblem", const std::string& domain = "");

enum class MismatchKind { Overshoot, SideEffect };
std::string_view to_string(MismatchKind k);

/// Overshoot when every argument of `extra` is bound by `a`.
MismatchKind classify_mismatch(const GroundAtom& extra, const Action& a);

struct MisalignmentReport {
  Action action;
  EffectSet expected;
  EffectSet observed;
  std::set<GroundAtom> overshoots;
  std::set<GroundAtom> side_effects;
  /// Expected literals missing from the observed effects.
  EffectSet underachieved;

  bool has_extras() const { return !overshoots.empty() || !side_effects.empty(); }
};

void to_json(nlohmann::json& j, const MisalignmentReport& r);

/// Compares eff(a) with the subplan effects, both restricted to `upper`.
/// Returns nullopt when they are equal.
std::optional<MisalignmentReport> check_alignment(const Action& a, const EffectSet& expected,
                                                  const EffectSet& subplan_effects,
                                                  const std::set<std::string>& upper);

/// Replaces the objects of `atom` by the parameters of `op` they are bound
/// to in `a`. Nullopt when an argument is not bound.
std::optional<AtomPattern> lift_atom(const GroundAtom& atom, const OperatorDef& op, const Action& a);

/// Rewrite request for side effects. `feedback` is empty on the first
/// attempt and carries the validation error on the second.
using OperatorRewrite =
    std::function<OperatorDef(const OperatorDef& op, const MisalignmentReport& report, const std::string& feedback)>;

/// Adds overshoots to the effects of `op` through the action binding. Side
/// effects go through `rewrite`; the result must validate against `domain`
/// and add a parameter compatible with every unbound object. Throws
/// OracleRejection after two failed rewrites.
OperatorDef realign_operator(const OperatorDef& op, const MisalignmentReport& report, const DomainModel& domain,
                             const std::vector<TypedVar>& objects, const OperatorRewrite& rewrite = {});

/// Operator name plus ordered parameter types.
struct DecompositionKey {
  std::string op;
  std::vector<std::string> param_types;

  std::string str() const;
  friend auto operator<=>(const DecompositionKey&, const DecompositionKey&) = default;
};

DecompositionKey decomposition_key(const OperatorDef& op);

/// One node of a learned hierarchy. `plan` holds the executed actions;
/// each index is either a child or a leaf binding.
struct HierarchyNode {
  std::size_t level = 0;
  DomainModel domain;
  Problem problem;
  Plan plan;
  std::map<std::size_t, std::unique_ptr<HierarchyNode>> children;
  std::map<std::size_t, SkillCall> leaf_bindings;

  std::size_t depth() const;
  std::size_t node_count() const;
  /// Throws Error on a violated structural invariant.
  void check_invariants() const;
};

/// Writes `dir/level-0/{domain.pddl,problem.pddl,plan.txt,skills.json}` and
/// `children/<index>/...` below it.
void save_hierarchy(const HierarchyNode& root, const std::string& dir);
HierarchyNode load_hierarchy(const std::string& dir);

}  // namespace domlearn
