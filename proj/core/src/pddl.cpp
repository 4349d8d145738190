#include "domlearn/pddl.hpp"

#include <algorithm>
#include <cctype>
#include <set>
#include <sstream>

namespace domlearn {

namespace {

std::string lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

std::string trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return std::string(s);
}

[[noreturn]] void fail(const SExpr& at, const std::string& msg,
                       std::vector<std::string> expected = {}) {
  throw SyntaxError(msg, at.line, at.column, std::move(expected));
}

const SExpr& expect_list(const SExpr& e, const std::string& what) {
  if (!e.is_list) fail(e, "expected " + what, {"("});
  return e;
}

const std::string& expect_atom(const SExpr& e, const std::string& what) {
  if (e.is_list) fail(e, "expected " + what + ", got a list", {what});
  return e.atom;
}

const std::set<std::string>& supported_requirements() {
  static const std::set<std::string> kSupported{":strips", ":typing", ":negative-preconditions",
                                                ":equality"};
  return kSupported;
}

/// `a b - t c` → typed vars. Rejects `either`.
std::vector<TypedVar> parse_typed_list(const std::vector<SExpr>& items, std::size_t begin,
                                       std::size_t end) {
  std::vector<TypedVar> out;
  std::vector<std::string> pending;
  for (std::size_t i = begin; i < end; ++i) {
    const SExpr& e = items[i];
    if (e.is_list) {
      if (!e.items.empty() && e.items.front().is_atom("either")) {
        throw UnsupportedFeature("either-types are outside the supported fragment");
      }
      fail(e, "unexpected list in typed list", {"name", "-"});
    }
    if (e.atom == "-") {
      if (i + 1 >= end) fail(e, "missing type after '-'", {"type name"});
      const SExpr& t = items[++i];
      if (t.is_list) {
        if (!t.items.empty() && t.items.front().is_atom("either")) {
          throw UnsupportedFeature("either-types are outside the supported fragment");
        }
        fail(t, "expected type name", {"type name"});
      }
      if (pending.empty()) fail(e, "'-' without preceding names", {"name"});
      for (auto& n : pending) out.push_back({std::move(n), t.atom});
      pending.clear();
    } else {
      pending.push_back(e.atom);
    }
  }
  for (auto& n : pending) out.push_back({std::move(n), std::string(kRootType)});
  return out;
}

AtomPattern parse_atom_pattern(const SExpr& e) {
  expect_list(e, "atom");
  if (e.items.empty()) fail(e, "empty atom", {"predicate name"});
  AtomPattern p;
  p.predicate = expect_atom(e.items.front(), "predicate name");
  for (std::size_t i = 1; i < e.items.size(); ++i) {
    p.args.push_back(expect_atom(e.items[i], "term"));
  }
  return p;
}

void collect_literals(const SExpr& f, bool effect, std::vector<Literal>& out) {
  if (!f.is_list) fail(f, "expected formula", {"("});
  if (f.items.empty()) return;
  const SExpr& head = f.items.front();
  if (head.is_list) fail(head, "expected connective or predicate", {"and", "not", "predicate"});
  const std::string& h = head.atom;
  if (h == "and") {
    for (std::size_t i = 1; i < f.items.size(); ++i) collect_literals(f.items[i], effect, out);
    return;
  }
  if (h == "not") {
    if (f.items.size() != 2) fail(f, "'not' takes exactly one argument");
    const SExpr& inner = f.items[1];
    if (inner.is_list && !inner.items.empty() && !inner.items.front().is_list) {
      const std::string& ih = inner.items.front().atom;
      if (ih == "and" || ih == "or" || ih == "not" || ih == "forall" || ih == "exists" ||
          ih == "imply" || ih == "when") {
        throw UnsupportedFeature("'not' over '" + ih + "' is outside the supported fragment");
      }
    }
    Literal l{parse_atom_pattern(inner), true};
    if (effect && l.is_equality()) fail(f, "equality is not allowed in effects");
    out.push_back(std::move(l));
    return;
  }
  static const std::set<std::string> kUnsupported{
      "or", "imply", "forall", "exists", "when", "increase", "decrease", "assign",
      "scale-up", "scale-down", "preference"};
  if (kUnsupported.count(h)) {
    throw UnsupportedFeature("'" + h + "' is outside the supported fragment (line " +
                             std::to_string(f.line) + ")");
  }
  Literal l{parse_atom_pattern(f), false};
  if (effect && l.is_equality()) fail(f, "equality is not allowed in effects");
  out.push_back(std::move(l));
}

OperatorDef parse_action(const SExpr& e) {
  // (:action name :parameters (...) :precondition F :effect F)
  if (e.items.size() < 2) fail(e, "action without a name", {"action name"});
  OperatorDef op;
  op.name = expect_atom(e.items[1], "action name");
  for (std::size_t i = 2; i < e.items.size(); ++i) {
    const SExpr& key = e.items[i];
    const std::string& k = expect_atom(key, "action keyword");
    if (i + 1 >= e.items.size()) fail(key, "missing value for " + k);
    const SExpr& value = e.items[++i];
    if (k == ":parameters") {
      expect_list(value, "parameter list");
      op.params = parse_typed_list(value.items, 0, value.items.size());
      for (const auto& p : op.params) {
        if (p.name.empty() || p.name.front() != '?') fail(value, "parameter must be a variable: " + p.name);
      }
    } else if (k == ":precondition") {
      collect_literals(value, false, op.precondition);
    } else if (k == ":effect") {
      std::vector<Literal> effects;
      collect_literals(value, true, effects);
      for (auto& l : effects) (l.negated ? op.del : op.add).push_back(std::move(l.atom));
    } else {
      fail(key, "unknown action keyword " + k, {":parameters", ":precondition", ":effect"});
    }
  }
  return op;
}

void check_requirements(const SExpr& section, std::vector<std::string>& reqs) {
  for (std::size_t i = 1; i < section.items.size(); ++i) {
    const std::string& r = expect_atom(section.items[i], "requirement");
    if (!supported_requirements().count(r)) {
      throw UnsupportedFeature("requirement " + r + " is outside the supported fragment");
    }
    reqs.push_back(r);
  }
}

PredicateKind kind_from_comment(const std::string& comment, std::string& description) {
  std::string c = trim(comment);
  std::string lc = lower(c);
  auto take_rest = [&](std::size_t n) {
    std::string rest = c.substr(n);
    std::size_t k = 0;
    while (k < rest.size() && (rest[k] == '.' || rest[k] == ':' || rest[k] == ' ')) ++k;
    description = trim(rest.substr(k));
  };
  if (lc.rfind("other", 0) == 0) {
    take_rest(5);
    return PredicateKind::StateIndependent;
  }
  if (lc.rfind("state", 0) == 0) take_rest(5);
  return PredicateKind::StateBased;
}

void validate_with_location(const DomainModel& d, const OperatorDef& op, const SExpr& where) {
  try {
    d.validate_operator(op);
  } catch (const SyntaxError& err) {
    throw SyntaxError(err.detail(), where.line, where.column, err.expected());
  }
}

}  // namespace

SExprDocument read_sexprs(std::string_view text) {
  SExprDocument doc;
  std::vector<SExpr> stack;
  std::size_t line = 1, col = 1;
  std::size_t i = 0;
  auto advance = [&](char c) {
    if (c == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  };
  auto push_item = [&](SExpr item) {
    if (stack.empty()) {
      doc.roots.push_back(std::move(item));
    } else {
      stack.back().items.push_back(std::move(item));
    }
  };
  while (i < text.size()) {
    char c = text[i];
    if (c == ';') {
      std::size_t start = i + 1;
      while (i < text.size() && text[i] != '\n') ++i;
      doc.comments[line] += std::string(text.substr(start, i - start));
      col += i - start + 1;
      continue;
    }
    if (std::isspace(static_cast<unsigned char>(c))) {
      advance(c);
      ++i;
      continue;
    }
    if (c == '(') {
      SExpr list;
      list.is_list = true;
      list.line = line;
      list.column = col;
      stack.push_back(std::move(list));
      advance(c);
      ++i;
      continue;
    }
    if (c == ')') {
      if (stack.empty()) throw SyntaxError("unbalanced ')'", line, col);
      SExpr done = std::move(stack.back());
      stack.pop_back();
      done.end_line = line;
      push_item(std::move(done));
      advance(c);
      ++i;
      continue;
    }
    SExpr atom;
    atom.line = line;
    atom.column = col;
    std::size_t start = i;
    while (i < text.size() && !std::isspace(static_cast<unsigned char>(text[i])) &&
           text[i] != '(' && text[i] != ')' && text[i] != ';') {
      ++i;
    }
    atom.atom = lower(text.substr(start, i - start));
    atom.end_line = line;
    col += i - start;
    push_item(std::move(atom));
  }
  if (!stack.empty()) {
    throw SyntaxError("unbalanced '(' opened here", stack.back().line, stack.back().column, {")"});
  }
  return doc;
}

std::vector<Literal> parse_literals(const SExpr& formula, bool effect) {
  std::vector<Literal> out;
  collect_literals(formula, effect, out);
  return out;
}

OperatorDef parse_operator(std::string_view text) {
  SExprDocument doc = read_sexprs(text);
  if (doc.roots.size() != 1) {
    throw SyntaxError("expected exactly one (:action ...) block", 1, 1, {"(:action"});
  }
  const SExpr& e = doc.roots.front();
  if (!e.is_list || e.items.empty() || !e.items.front().is_atom(":action")) {
    fail(e, "expected (:action ...)", {"(:action"});
  }
  return parse_action(e);
}

std::vector<TypedVar> parse_typed_vars(std::string_view text) {
  SExprDocument doc = read_sexprs(text);
  return parse_typed_list(doc.roots, 0, doc.roots.size());
}

PredicateSchema parse_predicate_decl(std::string_view text) {
  SExprDocument doc = read_sexprs(text);
  if (doc.roots.size() != 1) throw SyntaxError("expected one predicate declaration", 1, 1, {"("});
  const SExpr& e = expect_list(doc.roots.front(), "predicate declaration");
  if (e.items.empty()) fail(e, "empty predicate declaration", {"predicate name"});
  PredicateSchema p;
  p.name = expect_atom(e.items.front(), "predicate name");
  p.params = parse_typed_list(e.items, 1, e.items.size());
  for (const auto& v : p.params) {
    if (v.name.empty() || v.name[0] != '?') fail(e, "predicate parameter must be a variable", {"?var"});
  }
  return p;
}

DomainModel parse_domain(std::string_view text) {
  SExprDocument doc = read_sexprs(text);
  if (doc.roots.size() != 1) throw SyntaxError("expected a single (define ...) form", 1, 1, {"(define"});
  const SExpr& root = doc.roots.front();
  if (!root.is_list || root.items.size() < 2 || !root.items[0].is_atom("define")) {
    fail(root, "expected (define (domain ...) ...)", {"define"});
  }
  const SExpr& header = expect_list(root.items[1], "(domain NAME)");
  if (header.items.size() != 2 || !header.items[0].is_atom("domain")) {
    fail(header, "expected (domain NAME)", {"domain"});
  }
  DomainModel d;
  d.name = expect_atom(header.items[1], "domain name");

  std::vector<const SExpr*> actions;
  for (std::size_t i = 2; i < root.items.size(); ++i) {
    const SExpr& section = expect_list(root.items[i], "domain section");
    if (section.items.empty()) fail(section, "empty section");
    const std::string& key = expect_atom(section.items[0], "section keyword");
    if (key == ":requirements") {
      check_requirements(section, d.requirements);
    } else if (key == ":types") {
      for (const auto& t : parse_typed_list(section.items, 1, section.items.size())) {
        d.types.add(t.name, t.type);
      }
    } else if (key == ":constants") {
      auto consts = parse_typed_list(section.items, 1, section.items.size());
      d.constants.insert(d.constants.end(), consts.begin(), consts.end());
    } else if (key == ":predicates") {
      for (std::size_t j = 1; j < section.items.size(); ++j) {
        const SExpr& decl = expect_list(section.items[j], "predicate declaration");
        if (decl.items.empty()) fail(decl, "empty predicate declaration", {"predicate name"});
        PredicateSchema p;
        p.name = expect_atom(decl.items[0], "predicate name");
        p.params = parse_typed_list(decl.items, 1, decl.items.size());
        auto c = doc.comments.find(decl.end_line);
        if (c != doc.comments.end()) p.kind = kind_from_comment(c->second, p.description);
        d.predicates.push_back(std::move(p));
      }
    } else if (key == ":action") {
      actions.push_back(&section);
    } else if (key == ":durative-action" || key == ":functions" || key == ":derived" ||
               key == ":process" || key == ":event") {
      throw UnsupportedFeature(key + " is outside the supported fragment (line " +
                               std::to_string(section.line) + ")");
    } else {
      fail(section.items[0], "unknown domain section " + key,
           {":requirements", ":types", ":constants", ":predicates", ":action"});
    }
  }
  for (const auto* a : actions) {
    OperatorDef op = parse_action(*a);
    validate_with_location(d, op, *a);
    d.operators.push_back(std::move(op));
  }
  d.validate();
  return d;
}

Problem parse_problem(std::string_view text, const DomainModel& d,
                      std::vector<std::string>* warnings) {
  SExprDocument doc = read_sexprs(text);
  if (doc.roots.size() != 1) throw SyntaxError("expected a single (define ...) form", 1, 1, {"(define"});
  const SExpr& root = doc.roots.front();
  if (!root.is_list || root.items.size() < 2 || !root.items[0].is_atom("define")) {
    fail(root, "expected (define (problem ...) ...)", {"define"});
  }
  const SExpr& header = expect_list(root.items[1], "(problem NAME)");
  if (header.items.size() != 2 || !header.items[0].is_atom("problem")) {
    fail(header, "expected (problem NAME)", {"problem"});
  }
  Problem p;
  p.name = expect_atom(header.items[1], "problem name");
  const SExpr* init = nullptr;
  const SExpr* goal = nullptr;
  for (std::size_t i = 2; i < root.items.size(); ++i) {
    const SExpr& section = expect_list(root.items[i], "problem section");
    if (section.items.empty()) fail(section, "empty section");
    const std::string& key = expect_atom(section.items[0], "section keyword");
    if (key == ":domain") {
      if (section.items.size() != 2) fail(section, "expected (:domain NAME)");
      p.domain = expect_atom(section.items[1], "domain name");
    } else if (key == ":objects") {
      auto objs = parse_typed_list(section.items, 1, section.items.size());
      p.objects.insert(p.objects.end(), objs.begin(), objs.end());
    } else if (key == ":init") {
      init = &section;
    } else if (key == ":goal") {
      if (section.items.size() != 2) fail(section, "expected (:goal FORMULA)");
      goal = &section.items[1];
    } else if (key == ":metric" || key == ":constraints") {
      throw UnsupportedFeature(key + " is outside the supported fragment");
    } else {
      fail(section.items[0], "unknown problem section " + key, {":domain", ":objects", ":init", ":goal"});
    }
  }
  for (const auto& o : p.objects) {
    if (!d.types.contains(o.type)) {
      throw UnknownObjectType("object " + o.name + " has unknown type '" + o.type + "'");
    }
  }
  std::vector<TypedVar> universe = all_objects(d, p.objects);
  auto resolve = [&](const AtomPattern& pat, const SExpr& where) {
    const PredicateSchema* schema = d.find_predicate(pat.predicate);
    if (!schema) throw UnknownPredicate("unknown predicate '" + pat.predicate + "' at line " + std::to_string(where.line));
    if (schema->arity() != pat.args.size()) {
      throw ArityMismatch(pat.str() + ": " + pat.predicate + " takes " + std::to_string(schema->arity()) + " arguments");
    }
    GroundAtom g{pat.predicate, {}};
    for (std::size_t k = 0; k < pat.args.size(); ++k) {
      const std::string& name = pat.args[k];
      auto it = std::find_if(universe.begin(), universe.end(), [&](const auto& o) { return o.name == name; });
      if (it == universe.end()) throw UnknownObject("unknown object '" + name + "' in " + pat.str());
      if (!d.types.is_subtype(it->type, schema->params[k].type)) {
        throw TypeMismatch(pat.str() + ": " + name + " is not a " + schema->params[k].type);
      }
      g.args.push_back(name);
    }
    return g;
  };
  if (init) {
    for (std::size_t i = 1; i < init->items.size(); ++i) {
      const SExpr& e = init->items[i];
      std::vector<Literal> lits;
      collect_literals(e, true, lits);
      for (const auto& l : lits) {
        if (l.negated) {
          if (warnings) warnings->push_back("dropping negated initial atom " + l.str() + " (closed world)");
          continue;
        }
        p.init.insert(resolve(l.atom, e));
      }
    }
  }
  if (goal) {
    for (const auto& l : parse_literals(*goal, false)) {
      if (l.is_equality()) fail(*goal, "equality is not allowed in goals");
      (l.negated ? p.goal.negative : p.goal.positive).insert(resolve(l.atom, *goal));
    }
    if (!(p.goal.positive & p.goal.negative).empty()) {
      throw SyntaxError("goal requires an atom to be both true and false", goal->line, goal->column);
    }
  }
  return p;
}

std::string print_typed_list(const std::vector<TypedVar>& vars) {
  std::string out;
  for (const auto& v : vars) {
    if (!out.empty()) out += ' ';
    out += v.name + " - " + v.type;
  }
  return out;
}

std::string print_conjunction(const std::vector<Literal>& literals) {
  if (literals.empty()) return "()";
  std::string out = "(and";
  for (const auto& l : literals) out += " " + l.str();
  return out + ")";
}

std::string print_operator(const OperatorDef& op, std::size_t indent) {
  std::string pad(indent, ' ');
  std::vector<Literal> eff;
  for (const auto& a : op.add) eff.push_back({a, false});
  for (const auto& a : op.del) eff.push_back({a, true});
  std::ostringstream out;
  out << pad << "(:action " << op.name << "\n"
      << pad << "  :parameters (" << print_typed_list(op.params) << ")\n"
      << pad << "  :precondition " << print_conjunction(op.precondition) << "\n"
      << pad << "  :effect " << print_conjunction(eff) << ")";
  return out.str();
}

std::string print_domain(const DomainModel& d) {
  std::ostringstream out;
  out << "(define (domain " << d.name << ")\n";
  if (!d.requirements.empty()) {
    std::vector<std::string> reqs = d.requirements;
    std::sort(reqs.begin(), reqs.end());
    reqs.erase(std::unique(reqs.begin(), reqs.end()), reqs.end());
    out << "  (:requirements";
    for (const auto& r : reqs) out << " " << r;
    out << ")\n";
  }
  if (!d.types.parents().empty()) {
    std::map<std::string, std::vector<std::string>> by_parent;
    for (const auto& [child, parent] : d.types.parents()) by_parent[parent].push_back(child);
    out << "  (:types\n";
    for (const auto& [parent, children] : by_parent) {
      out << "   ";
      for (const auto& c : children) out << " " << c;
      out << " - " << parent << "\n";
    }
    out << "  )\n";
  }
  if (!d.constants.empty()) {
    out << "  (:constants\n";
    for (const auto& c : d.constants) out << "    " << c.name << " - " << c.type << "\n";
    out << "  )\n";
  }
  std::vector<const PredicateSchema*> preds;
  for (const auto& p : d.predicates) preds.push_back(&p);
  std::sort(preds.begin(), preds.end(), [](auto* a, auto* b) { return a->name < b->name; });
  out << "  (:predicates\n";
  for (const auto* p : preds) {
    out << "    (" << p->name;
    if (!p->params.empty()) out << " " << print_typed_list(p->params);
    out << ") ; " << to_string(p->kind);
    if (!p->description.empty()) out << ". " << p->description;
    out << "\n";
  }
  out << "  )\n";
  for (const auto& op : d.operators) out << print_operator(op, 2) << "\n";
  out << ")\n";
  return out.str();
}

std::string print_problem(const Problem& p) {
  std::ostringstream out;
  out << "(define (problem " << p.name << ")\n";
  out << "  (:domain " << p.domain << ")\n";
  out << "  (:objects\n";
  for (const auto& o : p.objects) out << "    " << o.name << " - " << o.type << "\n";
  out << "  )\n";
  out << "  (:init\n";
  for (const auto& a : p.init) out << "    " << a.str() << "\n";
  out << "  )\n";
  std::vector<Literal> goal;
  for (const auto& a : p.goal.positive) goal.push_back({{a.predicate, a.args}, false});
  for (const auto& a : p.goal.negative) goal.push_back({{a.predicate, a.args}, true});
  out << "  (:goal " << (goal.empty() ? "(and)" : print_conjunction(goal)) << ")\n";
  out << ")\n";
  return out.str();
}

}  // namespace domlearn
