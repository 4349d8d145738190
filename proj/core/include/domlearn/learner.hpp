#pragma once

// Recursive domain learning: oracle-proposed operators, planning, leaf
// verification, decomposition with reuse, alignment repair and recovery.

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "domlearn/classifier.hpp"
#include "domlearn/envs.hpp"
#include "domlearn/error.hpp"
#include "domlearn/grounding.hpp"
#include "domlearn/hierarchy.hpp"
#include "domlearn/oracle.hpp"
#include "domlearn/planner.hpp"
#include "domlearn/symbolic.hpp"
#include "domlearn/verify.hpp"

namespace domlearn {

class BudgetExhausted : public Error {
 public:
  BudgetExhausted(std::string budget, const std::string& message) : Error(message), budget_(std::move(budget)) {}
  /// "interactions" or "replans".
  const std::string& budget() const { return budget_; }

 private:
  std::string budget_;
};

/// The traversal cannot continue: no plan, depth limit, or a failed repair.
class LearningFailure : public Error {
 public:
  using Error::Error;
};

struct Budgets {
  std::size_t interactions = 10;
  std::size_t replans = 20;
};

struct LearnerConfig {
  Budgets budgets;
  std::size_t max_depth = 4;
  std::uint64_t noise_seed = 0;
  std::string domain_description;
  /// Ground state-based predicates through learned classifiers. When false
  /// (discrete environments) the perceived atoms are used directly.
  bool use_classifiers = false;
  RefineLoopConfig refine;
  DedupConfig dedup;
  SearchOptions search;
};

struct TaskRequest {
  std::string name;
  std::string instruction;
};

struct ClassifierSummary {
  std::string predicate;
  double f_min = 0.0;
  double f_avg = 0.0;
  std::vector<std::string> actions;
};

struct TaskOutcome {
  std::string name;
  bool success = false;
  std::string failure;
  /// "interactions" or "replans" when a budget ran out.
  std::string exhausted;
  std::size_t interactions = 0;
  std::size_t replans = 0;
  std::size_t recoveries = 0;
  std::size_t realignments = 0;
  std::map<std::string, std::size_t> oracle_calls;
  Goal goal;
  /// Executed top-level actions.
  std::vector<Action> plan;
  std::vector<ClassifierSummary> classifiers;
};

void to_json(nlohmann::json& j, const TaskOutcome& t);

/// A cached decomposition: the lower-level domain and the skills the
/// translator proposed for the operator.
struct Decomposition {
  DomainModel domain;
  std::vector<SkillCall> skills;
  /// Key of the decomposition this one was first requested from; unset for
  /// the top level.
  std::optional<DecompositionKey> parent;
};

class Learner {
 public:
  /// `initial` holds the types and the given predicates; it may be empty of
  /// operators.
  Learner(OracleSession& session, LearnerConfig config, DomainModel initial, AuditLog* audit = nullptr);

  /// Learns on one task in `env`. Knowledge carries over between calls;
  /// counters are per task.
  TaskOutcome run_task(const TaskRequest& task, Environment& env);

  const DomainModel& domain() const { return top_; }
  const HierarchyNode* hierarchy() const { return root_.get(); }
  const ClassifierRegistry& classifiers() const { return registry_; }
  const std::vector<Transition>& dataset() const { return dataset_; }
  const std::map<DecompositionKey, Decomposition>& decompositions() const { return decompositions_; }
  const std::map<DecompositionKey, std::vector<SkillCall>>& translations() const { return translations_; }
  /// Predicates the oracle declared ungroundable; kept symbolically.
  const std::set<std::string>& ungrounded() const { return ungrounded_; }

 private:
  struct Frame {
    HierarchyNode* node = nullptr;
    std::optional<DecompositionKey> origin;
    std::optional<Action> action;
  };
  enum class StepKind { Ok, Replan };
  struct Step {
    StepKind kind = StepKind::Ok;
    std::size_t level = 0;
  };

  std::set<std::string> perceivable(const DomainModel& d) const;
  SymbolicState perceive(const WorldState& x, const std::set<std::string>& predicates) const;
  SymbolicState current_state(const DomainModel& d) const;
  void advance_tracked(const DomainModel& d, const Action& a);

  void ensure_classifiers(const DomainModel& d);
  PromptContext domain_context() const;
  void domain_round();
  Plan plan_node(HierarchyNode& node, const SymbolicState& s);
  Step run_node(HierarchyNode& node);
  Step run_action(HierarchyNode& node, const Action& action);
  Step run_leaf(HierarchyNode& node, const Action& action, const SkillCall& call);
  const std::vector<SkillCall>& translation(const HierarchyNode& node, const OperatorDef& op);
  DomainModel decomposition(const HierarchyNode& node, const OperatorDef& op, const Action& action,
                            const SymbolicState& s_i, const Problem& sub, const std::vector<SkillCall>& skills);
  Step recover(FailureReport report);
  Step repair_alignment(HierarchyNode& node, const OperatorDef& op, const MisalignmentReport& report);
  DomainEdit request_fix(std::size_t frame, const Action& failing, const std::string& failure,
                         const std::vector<std::string>& ops);
  void apply_fix(std::size_t frame, const DomainEdit& edit);
  void replace_operator(std::size_t frame, const OperatorDef& op);
  /// Adds predicates to the frame's level and every level below it.
  void add_predicates(std::size_t frame, const std::vector<PredicateSchema>& preds);
  bool descends_from(const DecompositionKey& key, const DecompositionKey& ancestor) const;
  void count_replan();
  void record_transition(const Verified& v);
  void refine_classifiers(TaskOutcome& out);
  std::string hierarchy_text() const;
  std::size_t used_interactions() const;

  OracleSession& session_;
  LearnerConfig cfg_;
  AuditLog* audit_;
  AuditLog own_audit_;

  DomainModel top_;
  std::map<DecompositionKey, Decomposition> decompositions_;
  std::map<DecompositionKey, std::vector<SkillCall>> translations_;
  std::set<DecompositionKey> force_decompose_;
  ClassifierRegistry registry_;
  std::map<std::string, std::size_t> registered_at_;
  std::set<std::string> ungrounded_;
  std::vector<Transition> dataset_;

  // Per task.
  Environment* env_ = nullptr;
  const TaskRequest* task_ = nullptr;
  Goal goal_;
  SymbolicState tracked_;
  std::size_t start_interactions_ = 0;
  std::size_t replans_ = 0;
  std::size_t recoveries_ = 0;
  std::size_t realignments_ = 0;
  std::vector<Frame> frames_;
  std::unique_ptr<HierarchyNode> root_;
};

/// "(holding ?r - robot ?p - part): state. description" lines.
std::string predicate_lines(const DomainModel& d);
/// Fenced "(:action ...)" blocks of every operator.
std::string action_blocks(const DomainModel& d);
/// "- child - parent" lines of the type tree.
std::string type_lines(const TypeTree& t);
std::string object_line(const std::vector<TypedVar>& objects);
/// "<var>_<type>" placeholder per operator parameter, comma separated.
std::string variable_tokens(const OperatorDef& op);
/// Replaces variable placeholders in `templ` with the action's objects.
SkillCall bind_skill(const SkillCall& templ, const OperatorDef& op, const Action& a);
/// Skill call with bare arguments, e.g. hover_above_part(p_part).
std::string template_str(const SkillCall& templ);

/// Applies a domain response to `d`: new predicates first, then action
/// additions, replacements and deletions.
void apply_domain_edit(DomainModel& d, const DomainEdit& edit);

}  // namespace domlearn
