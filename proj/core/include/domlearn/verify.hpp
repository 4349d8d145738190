#pragma once

// Motion verification of leaf actions and the global recovery reasoner.

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "domlearn/envs.hpp"
#include "domlearn/grounding.hpp"
#include "domlearn/hierarchy.hpp"
#include "domlearn/oracle.hpp"
#include "domlearn/symbolic.hpp"

namespace domlearn {

enum class FailurePhase { PreconditionCheck, SkillException, EffectMismatch };
std::string_view to_string(FailurePhase p);

struct FailureReport {
  Action action;
  SkillCall skill;
  FailurePhase phase = FailurePhase::EffectMismatch;
  /// Set for EffectMismatch only.
  EffectSet expected;
  EffectSet observed;
  /// Action headers from the top level down to the failing action.
  std::vector<std::string> path;
  std::size_t level = 0;
  std::string exception;
  /// Unsatisfied precondition literals for PreconditionCheck.
  std::vector<std::string> missing;
  SymbolicState state_before;
};

void to_json(nlohmann::json& j, const FailureReport& r);

/// "- (atom): True -> False" lines, deletions first.
std::string change_lines(const EffectSet& e);

/// Failure section of the reasoner request.
std::string failure_text(const FailureReport& r);

/// Maps a perceived world state to atoms of the state-based predicates.
using Perceiver = std::function<SymbolicState(const WorldState& x)>;

struct Verified {
  Transition transition;
  SymbolicState before;
  SymbolicState after;
};

using VerifyResult = std::variant<Verified, FailureReport>;

/// Checks state-based preconditions on the perceived state, runs the skill
/// and compares eff(a) with the perceived change, both restricted to
/// `state_based`. A precondition failure runs no skill.
VerifyResult verify_leaf(const Action& a, const SkillCall& skill, Environment& env, const DomainModel& domain,
                         const Perceiver& perceive, const std::set<std::string>& state_based,
                         std::uint64_t noise_seed = 0);

struct ReasonerContext {
  std::string domain_description;
  /// Nested "- (action)" lines of the decomposition chain.
  std::string hierarchy;
  /// Printed operator of the failing action.
  std::string operator_text;
};

/// Two-turn reasoner exchange: the analysis request, then the fix-type
/// question. The decision must name a known fix type and only operators in
/// `known_operators`; one re-ask, then UnparseableDecision.
RecoveryDecision decide_recovery(const FailureReport& report, const ReasonerContext& context,
                                 const std::set<std::string>& known_operators, OracleSession& session);

/// JSON-lines trail of failures, decisions and misalignments.
class AuditLog {
 public:
  explicit AuditLog(std::ostream* sink = nullptr) : sink_(sink) {}

  void failure(const FailureReport& r);
  void decision(const FailureReport& r, const RecoveryDecision& d);
  void misalignment(const MisalignmentReport& r, const std::string& repair);
  void note(const std::string& kind, const std::string& text);

  const std::vector<std::string>& lines() const { return lines_; }

 private:
  void emit(const nlohmann::json& j);

  std::ostream* sink_;
  std::vector<std::string> lines_;
};

}  // namespace domlearn
