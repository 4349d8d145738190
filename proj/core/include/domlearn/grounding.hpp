#pragma once

// Transition datasets, pseudo-labels, classifier scoring, hyperparameter
// search and refinement gating.

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "domlearn/classifier.hpp"
#include "domlearn/error.hpp"
#include "domlearn/symbolic.hpp"
#include "domlearn/world.hpp"

namespace domlearn {

class OracleUnavailable : public Error {
 public:
  using Error::Error;
};

class NoRelevantAtoms : public Error {
 public:
  using Error::Error;
};

class EmptySearchSpace : public Error {
 public:
  using Error::Error;
};

class UnparseableResponse : public Error {
 public:
  using Error::Error;
};

/// One recorded skill execution.
struct Transition {
  WorldState x;
  SkillCall skill;
  WorldState x_next;
  /// Pseudo-labels of x_next over the state-based predicates.
  std::optional<SymbolicState> labels;
  /// Pseudo-labels of x; set for the start state of a task.
  std::optional<SymbolicState> x_labels;
};

void to_json(nlohmann::json& j, const Transition& t);
void from_json(const nlohmann::json& j, Transition& t);

/// JSON-lines, one transition per line.
std::vector<Transition> read_transitions(std::istream& in);
void write_transitions(std::ostream& out, const std::vector<Transition>& data);

struct DedupConfig {
  double tau_sim = 0.01;
};

/// Labels a perceived state reached by `skill`. Throws OracleUnavailable.
using Labeler = std::function<SymbolicState(const WorldState& x, const SkillCall& skill, const WorldState& x_next)>;

struct PseudoLabelResult {
  std::vector<Transition> data;
  std::size_t oracle_calls = 0;
  /// Class index of every transition.
  std::vector<std::size_t> class_of;
};

/// Groups transitions by identical skill call and x_next within τ_sim of the
/// class's first member (state_distance), labels each class's first member
/// through the oracle and copies that label to the rest. Transitions that
/// already carry labels seed their class and are never relabeled.
PseudoLabelResult pseudo_label(std::vector<Transition> batch, const Labeler& labeler, const DedupConfig& cfg = {});

/// A perceived state with its pseudo-label.
struct Sample {
  const WorldState* state;
  const SymbolicState* labels;
};

/// Every labeled state in `data`: x of transitions with x_labels, then x_next
/// of labeled transitions, in dataset order.
std::vector<Sample> labeled_samples(const std::vector<Transition>& data);

struct Confusion {
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
};

struct F1Report {
  std::map<GroundAtom, double> per_atom;
  std::map<GroundAtom, Confusion> confusion;
  double f_min = 0.0;
  double f_avg = 0.0;
};

double f1_from(const Confusion& c);

/// Per-atom F1 of `c` against the pseudo-labels over candidate_atoms of each
/// sample. Atoms never predicted or labeled true are skipped. Throws
/// NoRelevantAtoms if nothing is left to score.
F1Report f1_scores(const ClassifierProgram& c, const HyperAssignment& theta, const std::vector<Transition>& data,
                   const ClassifierRegistry* registry = nullptr);

enum class RefineAction { Keep, OptimizeHypers, OracleRefine };
const char* to_string(RefineAction a);

RefineAction refine_decision(double f_min, double tau_hp = 0.9, double tau_llm = 0.6);

struct SearchBounds {
  double lo = 0.0;
  double hi = 0.0;
};

struct SearchConfig {
  std::size_t samples = 200;
  std::uint64_t seed = 0;
  /// Per-hyperparameter bounds; missing entries use [d/10, 10d] around the
  /// reference value d, or [-1, 1] when d == 0.
  std::map<std::string, SearchBounds> bounds;
  /// Reference point for bounds, robustness and closeness; the program
  /// defaults when unset.
  std::optional<HyperAssignment> reference;
};

struct ScoredAssignment {
  HyperAssignment theta;
  double score = 0.0;
};

struct OptimizeResult {
  HyperAssignment theta;
  double score = 0.0;
  double robustness = 0.0;
  /// Reference first, then the samples in draw order.
  std::vector<ScoredAssignment> pool;
  std::vector<std::string> warnings;
};

/// Average F1 used by the optimizer. A θ with nothing to score predicts and
/// matches "always false", and scores 1.
double average_f1(const ClassifierProgram& c, const HyperAssignment& theta, const std::vector<Transition>& data,
                  const ClassifierRegistry* registry = nullptr);

/// Seeded log-uniform random search. Among the best-scoring pool members,
/// keeps those of maximal robustness and returns the one closest to the
/// reference in summed relative distance.
OptimizeResult optimize_hypers(const ClassifierProgram& c, const std::vector<Transition>& data,
                               const SearchConfig& cfg = {}, const ClassifierRegistry* registry = nullptr);

/// min over pool members scoring differently from θ of min_k
/// |θ'_k − θ_k| / |θ_k^ref|; +infinity when every member scores the same.
/// A zero reference value uses absolute change and appends a warning.
/// Throws Error if θ is not in the pool.
double robustness(const HyperAssignment& theta, const std::vector<ScoredAssignment>& pool,
                  const HyperAssignment& reference, std::vector<std::string>* warnings = nullptr);

struct Candidate {
  ClassifierProgram program;
  HyperAssignment theta;
};

struct AcceptDecision {
  bool keep_new = false;
  double old_score = 0.0;
  double new_score = 0.0;
};

/// The new candidate is kept unless it scores strictly lower.
AcceptDecision accept_refinement(const Candidate& old_c, const Candidate& new_c,
                                 const std::vector<Transition>& data, const ClassifierRegistry* registry = nullptr);

struct Mismatch {
  std::size_t sample = 0;
  GroundAtom atom;
  bool predicted = false;
  bool labeled = false;
  const WorldState* state = nullptr;
};

/// Up to `limit` disagreements, in dataset order, at most one per sample.
std::vector<Mismatch> find_mismatches(const ClassifierProgram& c, const HyperAssignment& theta,
                                      const std::vector<Transition>& data, const ClassifierRegistry* registry,
                                      std::size_t limit = 3);

/// Refinement request in the error-report layout: current program, then per
/// sample the labeler and classifier verdicts, referenced classifier results
/// and the scene variables.
std::string refinement_prompt(const ClassifierProgram& c, const std::vector<Mismatch>& mismatches,
                              const ClassifierRegistry* registry, const std::string& domain_description = "");

/// Program text from a response's "# Fixed Code" section; a fenced block
/// inside the section wins.
std::optional<std::string> fixed_code_section(const std::string& response);

using RefineOracle = std::function<std::string(const std::string& prompt)>;

struct RefineOutcome {
  Candidate chosen;
  bool accepted = false;
  AcceptDecision decision;
  std::size_t oracle_calls = 0;
};

/// Asks for a fixed program (two attempts), then gates it with
/// accept_refinement. Throws UnparseableResponse when both replies fail to
/// parse.
RefineOutcome oracle_refine(const Candidate& current, const std::vector<Transition>& data,
                            const ClassifierRegistry* registry, const RefineOracle& oracle,
                            const std::string& domain_description = "", std::size_t max_attempts = 2);

struct RefineRound {
  RefineAction action = RefineAction::Keep;
  double f_min = 0.0;
  double f_avg = 0.0;
  bool changed = false;
};

struct RefineLoopConfig {
  double tau_hp = 0.9;
  double tau_llm = 0.6;
  std::size_t max_rounds = 5;
  SearchConfig search;
};

struct RefineLoopResult {
  Candidate chosen;
  std::vector<RefineRound> rounds;
  double f_min = 0.0;
  double f_avg = 0.0;
  std::size_t oracle_calls = 0;
  std::vector<std::string> warnings;
};

/// Scores, decides, optimizes or asks the oracle, and repeats until Keep, no
/// change, or the round limit. Each search round is centered on the current
/// θ. A null oracle stops the loop at an OracleRefine decision.
RefineLoopResult refine_classifier(const Candidate& start, const std::vector<Transition>& data,
                                   const ClassifierRegistry* registry, const RefineOracle& oracle,
                                   const RefineLoopConfig& cfg = {}, const std::string& domain_description = "");

}  // namespace domlearn
