#pragma once

// PDDL reader and canonical printer for the STRIPS + :typing +
// :negative-preconditions + :equality fragment.
//
// Predicate declarations may carry a same-line comment that records the
// predicate kind and description, e.g.
//   (holding ?r - robot ?p - part) ; state. The robot holds the part.
// The printer always emits this comment so learned domains round-trip.

#include <cstddef>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "domlearn/symbolic.hpp"

namespace domlearn {

struct SExpr {
  bool is_list = false;
  std::string atom;  // lowercased
  std::vector<SExpr> items;
  std::size_t line = 1;
  std::size_t column = 1;
  std::size_t end_line = 1;

  bool is_atom(std::string_view text) const { return !is_list && atom == text; }
};

struct SExprDocument {
  std::vector<SExpr> roots;
  /// Comment text (after ';', untrimmed) keyed by line.
  std::map<std::size_t, std::string> comments;
};

/// Throws SyntaxError on unbalanced parentheses.
SExprDocument read_sexprs(std::string_view text);

DomainModel parse_domain(std::string_view text);
Problem parse_problem(std::string_view text, const DomainModel& d,
                      std::vector<std::string>* warnings = nullptr);

/// Parses a single "(:action ...)" block. The result is not validated
/// against any domain.
OperatorDef parse_operator(std::string_view text);

/// "a b - t ?x - u" → typed names; untyped names get "object".
std::vector<TypedVar> parse_typed_vars(std::string_view text);

/// "(holding ?r - robot ?p - part)" → schema with StateBased kind.
PredicateSchema parse_predicate_decl(std::string_view text);

/// Parses a precondition or effect formula body.
std::vector<Literal> parse_literals(const SExpr& formula, bool effect);

std::string print_domain(const DomainModel& d);
std::string print_problem(const Problem& p);
/// One "(:action ...)" block, every line prefixed by `indent` spaces.
std::string print_operator(const OperatorDef& op, std::size_t indent = 0);
std::string print_typed_list(const std::vector<TypedVar>& vars);
/// "(and l1 l2 ...)" or "()" when empty.
std::string print_conjunction(const std::vector<Literal>& literals);

}  // namespace domlearn
