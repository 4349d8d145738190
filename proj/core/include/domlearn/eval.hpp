#pragma once

// Exploration-walk similarity, manifests and the task-learning harness.

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "domlearn/envs.hpp"
#include "domlearn/error.hpp"
#include "domlearn/learner.hpp"
#include "domlearn/oracle.hpp"
#include "domlearn/planner.hpp"
#include "domlearn/symbolic.hpp"

namespace domlearn {

class TaskUnsolvableInReference : public Error {
 public:
  using Error::Error;
};

class VocabularyMismatch : public Error {
 public:
  explicit VocabularyMismatch(std::vector<std::string> unmatched);
  const std::vector<std::string>& unmatched() const { return unmatched_; }

 private:
  std::vector<std::string> unmatched_;
};

/// `d` with only the operators whose canonical name is in `operators`.
DomainModel restrict_operators(const DomainModel& d, const std::set<std::string>& operators);

/// Operators (canonical names) of a reference solution of `task`. Throws
/// TaskUnsolvableInReference.
std::set<std::string> reference_operators(const DomainModel& reference, const Problem& task,
                                          const SearchOptions& options = {});

/// `d` restricted to the operators of a reference solution of `task`.
DomainModel bootstrap_task_domain(const DomainModel& d, const DomainModel& reference, const Problem& task,
                                  const SearchOptions& options = {});

/// Random walk from p.init: each step picks an operator uniformly among those
/// with an applicable action, then one of its applicable actions uniformly.
/// Stops at `max_len` or when nothing applies.
std::vector<Action> sample_walk(const DomainModel& d, const Problem& p, std::size_t max_len, std::mt19937_64& rng);

/// Same as sample_walk over an already grounded task.
std::vector<Action> sample_walk(const GroundedTask& g, const StateBits& init, std::size_t max_len,
                                std::mt19937_64& rng);

/// `p` with its atoms renamed to the predicates of `d` by canonical name.
/// Init atoms without a counterpart are dropped.
Problem to_vocabulary(const Problem& p, const DomainModel& d);

/// 2pq / (p + q), 0 when both are 0.
double harmonic_mean(double p, double q);

struct EWConfig {
  std::size_t walks = 500;
  /// Reference solution length + 2 when unset.
  std::optional<std::size_t> max_len;
  std::uint64_t seed = 0;
};

struct EWTaskScore {
  std::string task;
  /// Share of walks sampled in the learned domain that execute in the
  /// reference domain.
  double learned_to_reference = 0.0;
  double reference_to_learned = 0.0;
  double harmonic = 0.0;
  std::size_t walk_length = 0;
  /// The learned domain's plan for the task is valid in the reference.
  bool solved = false;
};

struct EWReport {
  std::vector<EWTaskScore> tasks;
  double aggregate = 0.0;
  double success_rate = 0.0;
};

void to_json(nlohmann::json& j, const EWReport& r);

/// Throws VocabularyMismatch when a predicate of either domain has no
/// canonical counterpart in the other.
EWReport ew_score(const DomainModel& learned, const DomainModel& reference, const std::vector<Problem>& tasks,
                  const EWConfig& cfg = {});

struct ManifestTask {
  std::string name;
  std::string instruction;
  /// Discrete environments: the task problem.
  std::optional<Problem> problem;
  /// Goal checked against ground truth.
  Goal goal;
};

struct Manifest {
  std::string name;
  std::string directory;
  std::string kind;  // "discrete" or "tabletop"
  std::string description;
  DomainModel initial;
  /// Hidden domain of a discrete environment.
  std::optional<DomainModel> reference;
  TabletopScene scene;
  NoiseConfig noise{0.0, 0.0};
  Budgets budgets;
  std::string script;
  std::string transcript;
  std::vector<ManifestTask> tasks;

  static Manifest load(const std::string& path);
  std::unique_ptr<Environment> make_environment(const ManifestTask& task) const;
};

struct RunOptions {
  std::optional<Budgets> budgets;
  std::uint64_t seed = 0;
  std::string oracle = "scripted";
  /// Transcript file written while running; empty for none.
  std::string record;
  /// Directory receiving the hierarchy, classifiers and audit log.
  std::string output;
  std::size_t ew_walks = 500;
};

struct TaskReport {
  TaskOutcome outcome;
  /// Ground truth of the final environment state satisfies the task goal.
  bool goal_reached = false;
};

struct RunReport {
  std::string manifest;
  std::string oracle;
  Budgets budgets;
  std::uint64_t seed = 0;
  std::vector<TaskReport> tasks;
  std::optional<EWReport> ew;
  /// Why EW could not be computed, if it was attempted.
  std::string ew_error;
  std::string domain;
  std::vector<std::string> decompositions;
  std::map<std::string, std::size_t> oracle_calls;
  std::string transcript;

  bool all_succeeded() const;
};

void to_json(nlohmann::json& j, const RunReport& r);

/// Oracle named by `kind` (scripted, replay, live) for a manifest.
std::unique_ptr<Oracle> make_oracle(const std::string& kind, const Manifest& m);

/// Learns the manifest's tasks in order with one shared learner. A scripted
/// oracle is pointed at each task's environment for labeling.
RunReport run_learning(const Manifest& m, Oracle& oracle, const RunOptions& options = {});

}  // namespace domlearn
