#pragma once

// Symbolic data model: predicate schemas, ground atoms, closed-world states,
// lifted operators, domains, problems and the set algebra over states.

#include <compare>
#include <cstddef>
#include <initializer_list>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "domlearn/error.hpp"

namespace domlearn {

inline constexpr std::string_view kRootType = "object";
/// Anonymous variable. Allowed only inside negative preconditions, where it
/// reads as "for no object".
inline constexpr std::string_view kWildcard = "?_";

enum class PredicateKind { StateBased, StateIndependent };

std::string_view to_string(PredicateKind kind);

struct TypedVar {
  std::string name;
  std::string type{kRootType};

  friend auto operator<=>(const TypedVar&, const TypedVar&) = default;
};

struct PredicateSchema {
  std::string name;
  std::vector<TypedVar> params;
  PredicateKind kind = PredicateKind::StateBased;
  std::string description;

  std::size_t arity() const { return params.size(); }
  bool state_based() const { return kind == PredicateKind::StateBased; }

  friend bool operator==(const PredicateSchema&, const PredicateSchema&) = default;
};

struct GroundAtom {
  std::string predicate;
  std::vector<std::string> args;

  /// Canonical text form, e.g. "(at package_0 location_2)".
  std::string str() const;

  friend auto operator<=>(const GroundAtom&, const GroundAtom&) = default;
};

/// Parses "(p a b)" or "p(a, b)". Throws SyntaxError.
GroundAtom parse_ground_atom(std::string_view text);

/// Closed-world symbolic state: the set of atoms that hold.
class SymbolicState {
 public:
  using const_iterator = std::set<GroundAtom>::const_iterator;

  SymbolicState() = default;
  SymbolicState(std::initializer_list<GroundAtom> atoms) : atoms_(atoms) {}
  explicit SymbolicState(std::set<GroundAtom> atoms) : atoms_(std::move(atoms)) {}

  bool contains(const GroundAtom& atom) const { return atoms_.count(atom) != 0; }
  bool empty() const { return atoms_.empty(); }
  std::size_t size() const { return atoms_.size(); }
  const_iterator begin() const { return atoms_.begin(); }
  const_iterator end() const { return atoms_.end(); }
  const std::set<GroundAtom>& atoms() const { return atoms_; }

  void insert(GroundAtom atom) { atoms_.insert(std::move(atom)); }
  void erase(const GroundAtom& atom) { atoms_.erase(atom); }

  /// Atoms whose predicate is in `predicates`.
  SymbolicState restricted_to(const std::set<std::string>& predicates) const;

  SymbolicState operator|(const SymbolicState& other) const;
  SymbolicState operator-(const SymbolicState& other) const;
  SymbolicState operator&(const SymbolicState& other) const;
  bool is_subset_of(const SymbolicState& other) const;

  std::string str() const;

  friend bool operator==(const SymbolicState&, const SymbolicState&) = default;

 private:
  std::set<GroundAtom> atoms_;
};

/// ⟨add, del⟩ pair of atom sets.
struct EffectSet {
  SymbolicState add;
  SymbolicState del;

  bool empty() const { return add.empty() && del.empty(); }
  EffectSet restricted_to(const std::set<std::string>& predicates) const;
  friend bool operator==(const EffectSet&, const EffectSet&) = default;
};

struct Goal {
  SymbolicState positive;
  SymbolicState negative;

  bool empty() const { return positive.empty() && negative.empty(); }
  friend bool operator==(const Goal&, const Goal&) = default;
};

/// Atom over terms; a term starting with '?' is a variable.
struct AtomPattern {
  std::string predicate;
  std::vector<std::string> args;

  std::string str() const;
  friend auto operator<=>(const AtomPattern&, const AtomPattern&) = default;
};

struct Literal {
  AtomPattern atom;
  bool negated = false;

  bool is_equality() const { return atom.predicate == "="; }
  std::string str() const;
  friend auto operator<=>(const Literal&, const Literal&) = default;
};

struct OperatorDef {
  std::string name;
  std::vector<TypedVar> params;
  std::vector<Literal> precondition;
  std::vector<AtomPattern> add;
  std::vector<AtomPattern> del;
  std::string description;

  std::size_t arity() const { return params.size(); }
  std::optional<std::size_t> param_index(std::string_view variable) const;

  friend bool operator==(const OperatorDef& a, const OperatorDef& b) {
    return a.name == b.name && a.params == b.params &&
           a.precondition == b.precondition && a.add == b.add && a.del == b.del;
  }
};

/// Type tree stored as child → parent. The root "object" is implicit.
class TypeTree {
 public:
  void add(const std::string& type, const std::string& parent = std::string{kRootType});
  bool contains(std::string_view type) const;
  /// True when `type` equals `ancestor` or descends from it.
  bool is_subtype(std::string_view type, std::string_view ancestor) const;
  const std::map<std::string, std::string>& parents() const { return parent_; }

  friend bool operator==(const TypeTree&, const TypeTree&) = default;

 private:
  std::map<std::string, std::string> parent_;
};

struct DomainModel {
  std::string name;
  std::vector<std::string> requirements;
  TypeTree types;
  std::vector<TypedVar> constants;
  std::vector<PredicateSchema> predicates;
  std::vector<OperatorDef> operators;

  const PredicateSchema* find_predicate(std::string_view name) const;
  const OperatorDef* find_operator(std::string_view name) const;
  OperatorDef* find_operator(std::string_view name);
  std::set<std::string> predicate_names() const;
  std::set<std::string> state_based_predicates() const;

  /// Throws UnknownPredicate/UnknownObjectType/ArityMismatch/SyntaxError on
  /// any violated invariant.
  void validate() const;
  void validate_operator(const OperatorDef& op) const;

  friend bool operator==(const DomainModel& a, const DomainModel& b);
};

struct Problem {
  std::string name;
  std::string domain;
  std::vector<TypedVar> objects;
  SymbolicState init;
  Goal goal;

  const TypedVar* find_object(std::string_view name) const;
  friend bool operator==(const Problem&, const Problem&) = default;
};

struct Action {
  std::string op;
  std::vector<std::string> args;

  std::string str() const;
  friend auto operator<=>(const Action&, const Action&) = default;
};

/// Operator instantiated with a binding; equality constraints already resolved.
struct GroundOperator {
  Action action;
  SymbolicState pre_pos;
  SymbolicState pre_neg;
  /// Negative preconditions with wildcard arguments (kWildcard).
  std::vector<AtomPattern> pre_neg_wildcard;
  bool equality_ok = true;
  std::vector<std::string> equality_failures;
  SymbolicState add;
  SymbolicState del;
};

/// Objects available to a problem: problem objects plus domain constants.
std::vector<TypedVar> all_objects(const DomainModel& d, const std::vector<TypedVar>& objects);

/// Binds `action` to its operator. Throws UnknownOperator/ArityMismatch, and
/// TypeMismatch when `objects` is given and a binding is not type-compatible.
GroundOperator instantiate(const DomainModel& d, const Action& action,
                           const std::vector<TypedVar>* objects = nullptr);

/// Unsatisfied precondition literals of `g` in `s`, canonical text.
std::vector<std::string> unsatisfied(const GroundOperator& g, const SymbolicState& s);

/// (s \ del) ∪ add, without a precondition check.
SymbolicState apply_effects(const SymbolicState& s, const GroundOperator& g);

/// All actions applicable in `s`, ordered by operator name then binding.
std::vector<Action> applicable(const DomainModel& d, const SymbolicState& s,
                               const std::vector<TypedVar>& objects);

/// Every type-compatible binding of every operator in the same order.
std::vector<Action> all_bindings(const DomainModel& d, const std::vector<TypedVar>& objects);

SymbolicState apply(const DomainModel& d, const SymbolicState& s, const Action& a);

EffectSet state_diff(const SymbolicState& from, const SymbolicState& to);
SymbolicState apply_diff(const SymbolicState& s, const EffectSet& e);

bool goal_satisfied(const SymbolicState& s, const Goal& g);

/// Lowercase, '-' → '_'. Used when matching vocabularies across domains.
std::string canonical_name(std::string_view name);

}  // namespace domlearn
