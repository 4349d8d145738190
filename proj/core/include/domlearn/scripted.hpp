#pragma once

// Rule-based oracle answering every role from a knowledge file, used to
// record golden transcripts and to run the pipeline without a model.

#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "domlearn/envs.hpp"
#include "domlearn/oracle.hpp"
#include "domlearn/symbolic.hpp"

namespace domlearn {

struct ScriptedTask {
  std::string instruction;
  Goal goal;
  /// State-independent atoms the domain author declares.
  SymbolicState static_atoms;
};

struct ScriptedDecomposition {
  std::vector<PredicateSchema> predicates;
  std::vector<OperatorDef> actions;
};

struct ScriptedDecision {
  FixType type = FixType::PddlFix;
  std::vector<std::string> operators;
};

/// Knowledge file layout (JSON):
///   predicates      [{"decl", "kind", "description"}]
///   actions         ["(:action ...)"]
///   translations    {op: ["skill(var_type, ...)"]}; default is the
///                   same-named skill over every parameter
///   decompositions  {op: {"predicates": [...], "actions": [...]}}
///   classifiers     {predicate: "program" | "none"}
///   fixes           {op: "(:action ...)"} replacing the generic repair
///   decisions       {op: {"type_of_fix", "operators"}}
struct ScriptedKnowledge {
  std::string description;
  std::vector<PredicateSchema> predicates;
  std::vector<OperatorDef> actions;
  std::map<std::string, std::vector<SkillCall>> translations;
  std::map<std::string, ScriptedDecomposition> decompositions;
  std::map<std::string, std::string> classifiers;
  std::map<std::string, OperatorDef> fixes;
  std::map<std::string, ScriptedDecision> decisions;
  std::vector<ScriptedTask> tasks;
  /// Domain used to answer plan requests.
  std::optional<DomainModel> reference;

  static ScriptedKnowledge from_json(const nlohmann::json& j);
  static ScriptedKnowledge load(const std::string& path);
};

/// Answers:
///   Domain          the knowledge actions missing from the request, the
///                   task's goal and static atoms; fix requests get the
///                   generic repair
///   Decompose       the knowledge decomposition of the high-level action
///   Translate       the knowledge mapping of the action
///   Reasoner        an analysis, then a decision from the failure kind:
///                   effect mismatch → pddl-fix, skill exception →
///                   incorrect-instantiation, precondition → prior-skills
///   ClassifierGen   the knowledge program, or `none`
///   ClassifierRefine the current program unchanged
///   PlanFallback    a search plan in the reference domain
///   PseudoLabel     the environment's ground truth
///
/// The generic repair lifts the unexpected ground-truth changes of the
/// failing action into its effects, adding a typed parameter for every
/// object outside the binding, and drops expected changes that did not
/// happen.
class ScriptedOracle : public Oracle {
 public:
  explicit ScriptedOracle(ScriptedKnowledge knowledge);

  /// Environment whose ground truth answers labeling requests.
  void set_environment(const Environment* env) { env_ = env; }

  std::string complete(OracleRole role, const std::vector<Message>& request) override;

 private:
  std::string domain(const std::string& user) const;
  std::string decompose(const std::string& user) const;
  std::string translate(const std::string& user) const;
  std::string reasoner(const std::vector<Message>& request) const;
  std::string classifier_gen(const std::string& user) const;
  std::string classifier_refine(const std::string& user) const;
  std::string plan(const std::string& user) const;
  std::string label(const std::string& user) const;
  std::string fix(const std::string& user) const;

  ScriptedKnowledge k_;
  const Environment* env_ = nullptr;
};

/// The repaired operator: ground-truth changes missing from `expected` are
/// added as effects, expected changes missing from `observed` are removed.
OperatorDef generic_fix(const OperatorDef& op, const Action& failing, const EffectSet& expected,
                        const EffectSet& observed, const std::vector<TypedVar>& objects);

/// {"decl", "kind": "state"|"other", "description"}.
PredicateSchema predicate_from_json(const nlohmann::json& j);

/// Reads "- (atom): True -> False" lines back into an effect set.
EffectSet parse_change_lines(const std::string& text);

}  // namespace domlearn
