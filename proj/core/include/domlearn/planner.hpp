#pragma once

// Forward-search planner and plan validator.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "domlearn/symbolic.hpp"

namespace domlearn {

enum class PlanProvenance { Search, OracleFallback };

struct Plan {
  std::vector<Action> actions;
  PlanProvenance provenance = PlanProvenance::Search;

  std::size_t size() const { return actions.size(); }
  bool empty() const { return actions.empty(); }
  friend bool operator==(const Plan&, const Plan&) = default;
};

/// Parses one action per line, either "(op a b)" or "op(a, b)". Blank lines
/// and ';' comments are skipped.
std::vector<Action> parse_plan(std::string_view text);
std::string print_plan(const std::vector<Action>& actions);

/// Dense bit-vector state over the atom universe of a GroundedTask.
using StateBits = std::vector<std::uint64_t>;

struct StateBitsHash {
  std::size_t operator()(const StateBits& bits) const noexcept;
};

/// Domain grounded over a fixed object set. Actions are ordered by operator
/// name, then binding. When an initial state is supplied, actions whose
/// static preconditions are false in it are dropped.
class GroundedTask {
 public:
  struct Op {
    Action action;
    std::vector<std::uint32_t> pre_pos;
    std::vector<std::uint32_t> pre_neg;
    std::vector<std::uint32_t> add;
    std::vector<std::uint32_t> del;
  };

  GroundedTask(const DomainModel& d, const std::vector<TypedVar>& objects,
               const SymbolicState* init = nullptr);

  std::size_t atom_count() const { return atoms_.size(); }
  const std::vector<Op>& ops() const { return ops_; }
  /// Operator names (sorted) and, per name, the indices into ops().
  const std::vector<std::string>& operator_names() const { return op_names_; }
  const std::vector<std::vector<std::size_t>>& ops_by_operator() const { return ops_by_operator_; }

  std::optional<std::uint32_t> atom_id(const GroundAtom& atom) const;
  const GroundAtom& atom(std::uint32_t id) const { return atoms_[id]; }

  /// Atoms outside the universe are ignored.
  StateBits encode(const SymbolicState& s) const;
  SymbolicState decode(const StateBits& bits) const;

  static bool test(const StateBits& bits, std::uint32_t id) {
    return (bits[id >> 6] >> (id & 63)) & 1u;
  }
  static void set(StateBits& bits, std::uint32_t id) { bits[id >> 6] |= std::uint64_t{1} << (id & 63); }
  static void reset(StateBits& bits, std::uint32_t id) {
    bits[id >> 6] &= ~(std::uint64_t{1} << (id & 63));
  }

  bool applicable(const Op& op, const StateBits& s) const;
  void apply(const Op& op, StateBits& s) const;

 private:
  std::vector<GroundAtom> atoms_;
  std::unordered_map<std::string, std::uint32_t> atom_index_;
  std::vector<Op> ops_;
  std::vector<std::string> op_names_;
  std::vector<std::vector<std::size_t>> ops_by_operator_;
};

enum class SearchStatus { Solved, Unsolvable, BudgetExhausted };

std::string_view to_string(SearchStatus status);

struct SearchOptions {
  /// Maximum node expansions.
  std::size_t node_budget = 100'000;
  /// Expansions without heuristic improvement before switching to
  /// breadth-first order.
  std::size_t plateau_limit = 5'000;
};

struct SearchResult {
  SearchStatus status = SearchStatus::Unsolvable;
  Plan plan;
  std::size_t expanded = 0;
  std::size_t generated = 0;
  bool fell_back_to_breadth_first = false;
};

/// Greedy best-first search on the additive relaxed-goal heuristic.
SearchResult search_plan(const DomainModel& d, const Problem& p, const SearchOptions& options = {});

enum class StepStatus { Ok, PreconditionFailure, InvalidAction };

struct TraceStep {
  SymbolicState before;
  Action action;
  StepStatus status = StepStatus::Ok;
  /// Unsatisfied literals, or the reason an action is invalid.
  std::vector<std::string> missing;
};

struct ValidationTrace {
  std::vector<TraceStep> steps;
  SymbolicState final_state;
  bool goal_achieved = false;

  std::size_t ok_steps() const;
  /// No step failed.
  bool executable() const;
  bool valid() const { return executable() && goal_achieved; }
  std::optional<std::size_t> first_failure() const;
};

/// Replays `plan` from p.init. The first failing step terminates the trace;
/// final_state is the state before that step.
ValidationTrace validate_plan(const DomainModel& d, const Problem& p, const Plan& plan);

/// state_diff(init, final). Throws PreconditionViolation.
EffectSet joint_effects(const DomainModel& d, const SymbolicState& init, const Plan& plan);

}  // namespace domlearn
