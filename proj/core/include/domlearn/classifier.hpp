#pragma once

// Classifier expression language grounding state-based predicates in
// continuous world states.
//
//   # The held part is aligned with the fixed part.
//   aligned(p1: part, p2: part){pos_tol=0.01 m, angle_tol=0.1 rad} :=
//       dist_xy(p1, p2) <= pos_tol
//       && |angle_diff(roll(p1), roll(p2))| <= angle_tol
//       && |angle_diff(pitch(p1), pitch(p2))| <= angle_tol
//
// Accessors: center, orientation, bbox, roll, pitch, yaw, top, bottom,
// gripper_center, gripper_closed, surface_z, robot(), table().
// Functions: angle_diff, abs, sqrt, min, max, dist, dist_xy, norm, x, y, z.
// Operators: || && ! (also or/and/not), comparisons, + - * /, |e|, v[i].
// Any registered classifier may be called by name with object arguments.

#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "domlearn/error.hpp"
#include "domlearn/symbolic.hpp"
#include "domlearn/world.hpp"

namespace domlearn {

class UnknownAccessor : public Error {
 public:
  using Error::Error;
};

class CyclicReference : public Error {
 public:
  using Error::Error;
};

class MissingObject : public Error {
 public:
  using Error::Error;
};

class NumericDomainError : public Error {
 public:
  using Error::Error;
};

enum class ValueType { Bool, Num, Vec, Obj };

struct Expr;
using ExprPtr = std::shared_ptr<const Expr>;

struct Expr {
  enum class Kind { Number, Boolean, Param, Hyper, Builtin, Classifier, Unary, Binary, Abs, Index, Vector };

  Kind kind = Kind::Number;
  double number = 0.0;
  bool boolean = false;
  /// Parameter, hyperparameter, function or classifier name; operator text
  /// for Unary and Binary.
  std::string name;
  std::size_t slot = 0;  // parameter index or vector index
  std::vector<ExprPtr> args;
  ValueType type = ValueType::Num;
  std::size_t width = 0;  // vector length when type == Vec
};

struct HyperParam {
  std::string name;
  double default_value = 0.0;
  std::string unit;
};

/// Hyperparameter name → value.
using HyperAssignment = std::map<std::string, double>;

struct ClassifierProgram {
  std::string predicate;
  /// Argument names. Types are optional and restrict atom enumeration.
  std::vector<TypedVar> params;
  std::vector<HyperParam> hypers;
  std::string description;
  ExprPtr body;
  /// Classifiers called from the body.
  std::set<std::string> dependencies;

  HyperAssignment defaults() const;
  const HyperParam* find_hyper(std::string_view name) const;
};

class ClassifierRegistry;

/// Parses and type-checks one program. Calls must name classifiers already in
/// `registry`; a call that would close a dependency cycle is rejected.
ClassifierProgram parse_classifier(std::string_view text, const ClassifierRegistry* registry = nullptr);

/// Canonical text; parse_classifier(print_classifier(c)) == c structurally.
std::string print_classifier(const ClassifierProgram& c);
std::string print_expr(const Expr& e);

/// Language summary shown to oracles that write or repair programs.
std::string dsl_reference();

/// Minimal signed angle difference in [-pi, pi).
double angle_diff(double a, double b);

/// Evaluates `c` on `atom` in `w`. Sub-classifiers use their registered θ.
/// Missing hyperparameters in `theta` fall back to the program defaults.
bool eval_classifier(const ClassifierProgram& c, const GroundAtom& atom, const WorldState& w,
                     const HyperAssignment& theta, const ClassifierRegistry* registry = nullptr);

/// Object kind in a continuous scene: "robot", "table", "part", or empty.
std::string object_kind(const WorldState& w, std::string_view name);

/// Every atom of `c` over pairwise-distinct objects of `w` whose kind matches
/// the parameter type (untyped or "object" parameters match any kind).
std::vector<GroundAtom> candidate_atoms(const ClassifierProgram& c, const WorldState& w);

/// Named classifiers with their current hyperparameters.
class ClassifierRegistry {
 public:
  struct Entry {
    ClassifierProgram program;
    HyperAssignment theta;
  };

  /// Adds or replaces a program. `theta` defaults to the program defaults.
  /// Throws UnknownAccessor for unregistered dependencies and
  /// CyclicReference if the replacement closes a cycle.
  void put(ClassifierProgram program, std::optional<HyperAssignment> theta = std::nullopt);
  void set_theta(std::string_view predicate, HyperAssignment theta);
  bool erase(std::string_view predicate);

  const Entry* find(std::string_view predicate) const;
  bool contains(std::string_view predicate) const { return find(predicate) != nullptr; }
  /// Predicates in registration order.
  const std::vector<std::string>& order() const { return order_; }
  std::size_t size() const { return entries_.size(); }

  /// True if `from` reaches `to` through dependencies.
  bool depends_on(std::string_view from, std::string_view to) const;

  bool evaluate(const GroundAtom& atom, const WorldState& w) const;
  /// All true atoms of the registered predicates in `predicates` (all when
  /// empty) over candidate_atoms.
  SymbolicState ground(const WorldState& w, const std::set<std::string>& predicates = {}) const;

  /// One "<predicate>.cls" source per program plus manifest.json holding the
  /// order and current θ.
  void save(const std::string& directory) const;
  static ClassifierRegistry load(const std::string& directory);

 private:
  std::map<std::string, Entry, std::less<>> entries_;
  std::vector<std::string> order_;
};

}  // namespace domlearn
