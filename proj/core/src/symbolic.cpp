#include "domlearn/symbolic.hpp"

#include <algorithm>
#include <cctype>
#include <sstream>

namespace domlearn {

SyntaxError::SyntaxError(const std::string& message, std::size_t line, std::size_t column,
                         std::vector<std::string> expected)
    : Error([&] {
        std::ostringstream out;
        out << line << ":" << column << ": " << message;
        if (!expected.empty()) {
          out << " (expected one of:";
          for (const auto& e : expected) out << " " << e;
          out << ")";
        }
        return out.str();
      }()),
      detail_(message),
      line_(line),
      column_(column),
      expected_(std::move(expected)) {}

PreconditionViolation::PreconditionViolation(std::vector<std::string> missing)
    : Error([&] {
        std::string msg = "precondition violated:";
        for (const auto& m : missing) msg += " " + m;
        return msg;
      }()),
      missing_(std::move(missing)) {}

std::string_view to_string(PredicateKind kind) {
  return kind == PredicateKind::StateBased ? "state" : "other";
}

namespace {

std::string join_call(std::string_view head, const std::vector<std::string>& args) {
  std::string out = "(";
  out += head;
  for (const auto& a : args) {
    out += ' ';
    out += a;
  }
  out += ')';
  return out;
}

bool is_variable(std::string_view term) { return !term.empty() && term.front() == '?'; }

}  // namespace

std::string GroundAtom::str() const { return join_call(predicate, args); }

GroundAtom parse_ground_atom(std::string_view text) {
  auto trim = [](std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
  };
  std::string_view s = trim(text);
  std::vector<std::string> parts;
  auto split_into = [&](std::string_view body, bool commas) {
    std::string cur;
    for (char c : body) {
      bool sep = std::isspace(static_cast<unsigned char>(c)) || (commas && c == ',');
      if (sep) {
        if (!cur.empty()) parts.push_back(cur);
        cur.clear();
      } else if (c != '\'' && c != '"') {
        cur += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
      }
    }
    if (!cur.empty()) parts.push_back(cur);
  };
  if (s.size() >= 2 && s.front() == '(' && s.back() == ')') {
    split_into(s.substr(1, s.size() - 2), false);
  } else {
    auto open = s.find('(');
    if (open == std::string_view::npos || s.back() != ')') {
      throw SyntaxError("malformed atom '" + std::string(text) + "'", 1, 1, {"(", "name("});
    }
    split_into(s.substr(0, open), false);
    if (parts.size() != 1) throw SyntaxError("malformed atom head", 1, 1);
    split_into(s.substr(open + 1, s.size() - open - 2), true);
  }
  if (parts.empty()) throw SyntaxError("empty atom", 1, 1, {"predicate name"});
  GroundAtom atom;
  atom.predicate = parts.front();
  atom.args.assign(parts.begin() + 1, parts.end());
  return atom;
}

SymbolicState SymbolicState::restricted_to(const std::set<std::string>& predicates) const {
  SymbolicState out;
  for (const auto& a : atoms_) {
    if (predicates.count(a.predicate)) out.insert(a);
  }
  return out;
}

SymbolicState SymbolicState::operator|(const SymbolicState& other) const {
  SymbolicState out = *this;
  for (const auto& a : other) out.insert(a);
  return out;
}

SymbolicState SymbolicState::operator-(const SymbolicState& other) const {
  SymbolicState out;
  std::set_difference(atoms_.begin(), atoms_.end(), other.atoms_.begin(), other.atoms_.end(),
                      std::inserter(out.atoms_, out.atoms_.end()));
  return out;
}

SymbolicState SymbolicState::operator&(const SymbolicState& other) const {
  SymbolicState out;
  std::set_intersection(atoms_.begin(), atoms_.end(), other.atoms_.begin(), other.atoms_.end(),
                        std::inserter(out.atoms_, out.atoms_.end()));
  return out;
}

bool SymbolicState::is_subset_of(const SymbolicState& other) const {
  return std::includes(other.atoms_.begin(), other.atoms_.end(), atoms_.begin(), atoms_.end());
}

std::string SymbolicState::str() const {
  std::string out;
  for (const auto& a : atoms_) {
    if (!out.empty()) out += ' ';
    out += a.str();
  }
  return out;
}

EffectSet EffectSet::restricted_to(const std::set<std::string>& predicates) const {
  return {add.restricted_to(predicates), del.restricted_to(predicates)};
}

std::string AtomPattern::str() const { return join_call(predicate, args); }

std::string Literal::str() const {
  return negated ? "(not " + atom.str() + ")" : atom.str();
}

std::optional<std::size_t> OperatorDef::param_index(std::string_view variable) const {
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].name == variable) return i;
  }
  return std::nullopt;
}

void TypeTree::add(const std::string& type, const std::string& parent) {
  if (type == kRootType) return;
  parent_[type] = parent;
}

bool TypeTree::contains(std::string_view type) const {
  return type == kRootType || parent_.count(std::string(type)) != 0;
}

bool TypeTree::is_subtype(std::string_view type, std::string_view ancestor) const {
  if (ancestor == kRootType) return true;
  std::string cur(type);
  // Bounded walk so a malformed cycle cannot hang.
  for (std::size_t guard = 0; guard <= parent_.size() + 1; ++guard) {
    if (cur == ancestor) return true;
    auto it = parent_.find(cur);
    if (it == parent_.end()) return false;
    cur = it->second;
  }
  return false;
}

const PredicateSchema* DomainModel::find_predicate(std::string_view n) const {
  for (const auto& p : predicates) {
    if (p.name == n) return &p;
  }
  return nullptr;
}

const OperatorDef* DomainModel::find_operator(std::string_view n) const {
  for (const auto& o : operators) {
    if (o.name == n) return &o;
  }
  return nullptr;
}

OperatorDef* DomainModel::find_operator(std::string_view n) {
  for (auto& o : operators) {
    if (o.name == n) return &o;
  }
  return nullptr;
}

std::set<std::string> DomainModel::predicate_names() const {
  std::set<std::string> out;
  for (const auto& p : predicates) out.insert(p.name);
  return out;
}

std::set<std::string> DomainModel::state_based_predicates() const {
  std::set<std::string> out;
  for (const auto& p : predicates) {
    if (p.state_based()) out.insert(p.name);
  }
  return out;
}

void DomainModel::validate_operator(const OperatorDef& op) const {
  std::set<std::string> seen;
  for (const auto& p : op.params) {
    if (!seen.insert(p.name).second) {
      throw SyntaxError("duplicate parameter " + p.name + " in action " + op.name, 0, 0);
    }
    if (!types.contains(p.type)) {
      throw UnknownObjectType("action " + op.name + ": unknown type '" + p.type + "'");
    }
  }
  auto is_constant = [&](const std::string& t) {
    return std::any_of(constants.begin(), constants.end(),
                       [&](const TypedVar& c) { return c.name == t; });
  };
  auto check_atom = [&](const AtomPattern& atom, bool allow_wildcard) {
    if (atom.predicate != "=") {
      const PredicateSchema* schema = find_predicate(atom.predicate);
      if (!schema) {
        throw UnknownPredicate("action " + op.name + ": unknown predicate '" + atom.predicate + "'");
      }
      if (schema->arity() != atom.args.size()) {
        throw ArityMismatch("action " + op.name + ": " + atom.str() + " expects " +
                            std::to_string(schema->arity()) + " arguments");
      }
    } else if (atom.args.size() != 2) {
      throw ArityMismatch("action " + op.name + ": equality takes two arguments");
    }
    for (const auto& t : atom.args) {
      if (t == kWildcard) {
        if (!allow_wildcard) {
          throw SyntaxError("action " + op.name + ": anonymous variable ?_ only allowed in "
                            "negative preconditions", 0, 0);
        }
        continue;
      }
      if (is_variable(t)) {
        if (!op.param_index(t)) {
          throw SyntaxError("action " + op.name + ": unbound variable " + t, 0, 0);
        }
      } else if (!is_constant(t)) {
        throw UnknownObject("action " + op.name + ": unknown constant '" + t + "'");
      }
    }
  };
  for (const auto& l : op.precondition) check_atom(l.atom, l.negated && !l.is_equality());
  for (const auto& a : op.add) check_atom(a, false);
  for (const auto& a : op.del) check_atom(a, false);
}

void DomainModel::validate() const {
  std::set<std::string> names;
  for (const auto& p : predicates) {
    if (!names.insert(p.name).second) {
      throw SyntaxError("duplicate predicate " + p.name, 0, 0);
    }
    std::set<std::string> params;
    for (const auto& v : p.params) {
      if (!params.insert(v.name).second) {
        throw SyntaxError("duplicate parameter " + v.name + " in predicate " + p.name, 0, 0);
      }
      if (!types.contains(v.type)) {
        throw UnknownObjectType("predicate " + p.name + ": unknown type '" + v.type + "'");
      }
    }
  }
  for (const auto& [child, parent] : types.parents()) {
    if (!types.contains(parent)) throw UnknownObjectType("unknown parent type '" + parent + "'");
  }
  names.clear();
  for (const auto& op : operators) {
    if (!names.insert(op.name).second) throw SyntaxError("duplicate action " + op.name, 0, 0);
    validate_operator(op);
  }
}

bool operator==(const DomainModel& a, const DomainModel& b) {
  auto sorted_preds = [](std::vector<PredicateSchema> v) {
    std::sort(v.begin(), v.end(),
              [](const auto& x, const auto& y) { return x.name < y.name; });
    return v;
  };
  auto sorted_reqs = [](std::vector<std::string> v) {
    std::sort(v.begin(), v.end());
    return v;
  };
  return a.name == b.name && sorted_reqs(a.requirements) == sorted_reqs(b.requirements) &&
         a.types == b.types && a.constants == b.constants &&
         sorted_preds(a.predicates) == sorted_preds(b.predicates) && a.operators == b.operators;
}

const TypedVar* Problem::find_object(std::string_view n) const {
  for (const auto& o : objects) {
    if (o.name == n) return &o;
  }
  return nullptr;
}

std::string Action::str() const { return join_call(op, args); }

std::vector<TypedVar> all_objects(const DomainModel& d, const std::vector<TypedVar>& objects) {
  std::vector<TypedVar> out = objects;
  for (const auto& c : d.constants) {
    bool dup = std::any_of(out.begin(), out.end(), [&](const auto& o) { return o.name == c.name; });
    if (!dup) out.push_back(c);
  }
  return out;
}

GroundOperator instantiate(const DomainModel& d, const Action& action,
                           const std::vector<TypedVar>* objects) {
  const OperatorDef* op = d.find_operator(action.op);
  if (!op) throw UnknownOperator("unknown action '" + action.op + "'");
  if (op->arity() != action.args.size()) {
    throw ArityMismatch(action.str() + ": " + op->name + " takes " + std::to_string(op->arity()) +
                        " arguments");
  }
  if (objects) {
    for (std::size_t i = 0; i < op->params.size(); ++i) {
      auto it = std::find_if(objects->begin(), objects->end(),
                             [&](const TypedVar& o) { return o.name == action.args[i]; });
      if (it == objects->end()) throw UnknownObject(action.str() + ": unknown object " + action.args[i]);
      if (!d.types.is_subtype(it->type, op->params[i].type)) {
        throw TypeMismatch(action.str() + ": " + action.args[i] + " is not a " + op->params[i].type);
      }
    }
  }
  auto bind = [&](const std::string& term) -> std::string {
    if (term == kWildcard || !is_variable(term)) return term;
    auto idx = op->param_index(term);
    if (!idx) throw SyntaxError("unbound variable " + term + " in " + op->name, 0, 0);
    return action.args[*idx];
  };
  auto ground = [&](const AtomPattern& p) {
    GroundAtom g;
    g.predicate = p.predicate;
    for (const auto& t : p.args) g.args.push_back(bind(t));
    return g;
  };

  GroundOperator g;
  g.action = action;
  for (const auto& lit : op->precondition) {
    if (lit.is_equality()) {
      std::string lhs = bind(lit.atom.args.at(0));
      std::string rhs = bind(lit.atom.args.at(1));
      bool holds = (lhs == rhs) != lit.negated;
      if (!holds) {
        g.equality_ok = false;
        g.equality_failures.push_back(lit.negated ? "(not (= " + lhs + " " + rhs + "))"
                                                  : "(= " + lhs + " " + rhs + ")");
      }
      continue;
    }
    bool wildcard = std::find(lit.atom.args.begin(), lit.atom.args.end(), kWildcard) !=
                    lit.atom.args.end();
    if (wildcard) {
      AtomPattern p;
      p.predicate = lit.atom.predicate;
      for (const auto& t : lit.atom.args) p.args.push_back(bind(t));
      g.pre_neg_wildcard.push_back(std::move(p));
    } else if (lit.negated) {
      g.pre_neg.insert(ground(lit.atom));
    } else {
      g.pre_pos.insert(ground(lit.atom));
    }
  }
  for (const auto& a : op->add) g.add.insert(ground(a));
  for (const auto& a : op->del) g.del.insert(ground(a));
  return g;
}

namespace {

bool wildcard_matches(const AtomPattern& p, const GroundAtom& a) {
  if (p.predicate != a.predicate || p.args.size() != a.args.size()) return false;
  for (std::size_t i = 0; i < p.args.size(); ++i) {
    if (p.args[i] != kWildcard && p.args[i] != a.args[i]) return false;
  }
  return true;
}

}  // namespace

std::vector<std::string> unsatisfied(const GroundOperator& g, const SymbolicState& s) {
  std::vector<std::string> missing = g.equality_failures;
  for (const auto& a : g.pre_pos) {
    if (!s.contains(a)) missing.push_back(a.str());
  }
  for (const auto& a : g.pre_neg) {
    if (s.contains(a)) missing.push_back("(not " + a.str() + ")");
  }
  for (const auto& p : g.pre_neg_wildcard) {
    for (const auto& a : s) {
      if (wildcard_matches(p, a)) {
        missing.push_back("(not " + p.str() + ") [holds: " + a.str() + "]");
        break;
      }
    }
  }
  return missing;
}

SymbolicState apply_effects(const SymbolicState& s, const GroundOperator& g) {
  return (s - g.del) | g.add;
}

std::vector<Action> all_bindings(const DomainModel& d, const std::vector<TypedVar>& objects) {
  std::vector<TypedVar> pool = all_objects(d, objects);
  std::sort(pool.begin(), pool.end(), [](const auto& a, const auto& b) { return a.name < b.name; });
  std::vector<const OperatorDef*> ops;
  for (const auto& op : d.operators) ops.push_back(&op);
  std::sort(ops.begin(), ops.end(), [](auto* a, auto* b) { return a->name < b->name; });

  std::vector<Action> out;
  for (const OperatorDef* op : ops) {
    std::vector<std::vector<const std::string*>> candidates(op->arity());
    bool feasible = true;
    for (std::size_t i = 0; i < op->arity(); ++i) {
      for (const auto& o : pool) {
        if (d.types.is_subtype(o.type, op->params[i].type)) candidates[i].push_back(&o.name);
      }
      if (candidates[i].empty()) feasible = false;
    }
    if (!feasible) continue;
    std::vector<std::size_t> idx(op->arity(), 0);
    while (true) {
      Action a{op->name, {}};
      for (std::size_t i = 0; i < idx.size(); ++i) a.args.push_back(*candidates[i][idx[i]]);
      out.push_back(std::move(a));
      std::size_t k = idx.size();
      bool carry = true;
      while (carry && k > 0) {
        --k;
        if (++idx[k] < candidates[k].size()) {
          carry = false;
        } else {
          idx[k] = 0;
        }
      }
      if (carry) break;
    }
  }
  return out;
}

std::vector<Action> applicable(const DomainModel& d, const SymbolicState& s,
                               const std::vector<TypedVar>& objects) {
  std::vector<Action> out;
  for (auto& a : all_bindings(d, objects)) {
    GroundOperator g = instantiate(d, a);
    if (g.equality_ok && unsatisfied(g, s).empty()) out.push_back(std::move(a));
  }
  return out;
}

SymbolicState apply(const DomainModel& d, const SymbolicState& s, const Action& a) {
  GroundOperator g = instantiate(d, a);
  auto missing = unsatisfied(g, s);
  if (!missing.empty()) throw PreconditionViolation(std::move(missing));
  return apply_effects(s, g);
}

EffectSet state_diff(const SymbolicState& from, const SymbolicState& to) {
  return {to - from, from - to};
}

SymbolicState apply_diff(const SymbolicState& s, const EffectSet& e) {
  return (s - e.del) | e.add;
}

bool goal_satisfied(const SymbolicState& s, const Goal& g) {
  return g.positive.is_subset_of(s) && (g.negative & s).empty();
}

std::string canonical_name(std::string_view name) {
  std::string out;
  out.reserve(name.size());
  for (char c : name) {
    out += c == '-' ? '_' : static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  }
  return out;
}

}  // namespace domlearn
