#include "domlearn/hierarchy.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "domlearn/pddl.hpp"

namespace domlearn {

namespace fs = std::filesystem;

namespace {

std::string read_file(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw Error("cannot read " + p.string());
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream out(p);
  if (!out) throw Error("cannot write " + p.string());
  out << text;
}

nlohmann::json atoms_json(const SymbolicState& s) {
  auto a = nlohmann::json::array();
  for (const auto& x : s) a.push_back(x.str());
  return a;
}

nlohmann::json effects_json(const EffectSet& e) { return {{"add", atoms_json(e.add)}, {"del", atoms_json(e.del)}}; }

void add_unique(std::vector<AtomPattern>& list, const AtomPattern& p) {
  if (std::find(list.begin(), list.end(), p) == list.end()) list.push_back(p);
}

void remove_pattern(std::vector<AtomPattern>& list, const AtomPattern& p) {
  list.erase(std::remove(list.begin(), list.end(), p), list.end());
}

void save_node(const HierarchyNode& n, const fs::path& dir) {
  fs::create_directories(dir);
  write_file(dir / "domain.pddl", print_domain(n.domain));
  write_file(dir / "problem.pddl", print_problem(n.problem));
  write_file(dir / "plan.txt", print_plan(n.plan.actions));
  nlohmann::json skills = nlohmann::json::object();
  for (const auto& [i, s] : n.leaf_bindings) skills[std::to_string(i)] = s;
  write_file(dir / "skills.json", skills.dump(2) + "\n");
  for (const auto& [i, c] : n.children) save_node(*c, dir / "children" / std::to_string(i));
}

HierarchyNode load_node(const fs::path& dir, std::size_t level) {
  HierarchyNode n;
  n.level = level;
  n.domain = parse_domain(read_file(dir / "domain.pddl"));
  n.problem = parse_problem(read_file(dir / "problem.pddl"), n.domain);
  n.plan.actions = parse_plan(read_file(dir / "plan.txt"));
  auto skills = nlohmann::json::parse(read_file(dir / "skills.json"));
  for (auto it = skills.begin(); it != skills.end(); ++it) {
    n.leaf_bindings[std::stoul(it.key())] = it.value().get<SkillCall>();
  }
  fs::path kids = dir / "children";
  if (fs::exists(kids)) {
    for (const auto& e : fs::directory_iterator(kids)) {
      std::size_t i = std::stoul(e.path().filename().string());
      n.children[i] = std::make_unique<HierarchyNode>(load_node(e.path(), level + 1));
    }
  }
  return n;
}

}  // namespace

Problem make_subproblem(const SymbolicState& s_i, const SymbolicState& s_next, const std::vector<TypedVar>& objects,
                        const std::string& name, const std::string& domain) {
  if (s_i == s_next) throw DegenerateSubproblem("subproblem goal is empty: the action changes nothing");
  Problem p;
  p.name = name;
  p.domain = domain;
  p.objects = objects;
  p.init = s_i;
  p.goal.positive = s_next - s_i;
  p.goal.negative = s_i - s_next;
  return p;
}

std::string_view to_string(MismatchKind k) { return k == MismatchKind::Overshoot ? "overshoot" : "side-effect"; }

MismatchKind classify_mismatch(const GroundAtom& extra, const Action& a) {
  for (const auto& arg : extra.args) {
    if (std::find(a.args.begin(), a.args.end(), arg) == a.args.end()) return MismatchKind::SideEffect;
  }
  return MismatchKind::Overshoot;
}

void to_json(nlohmann::json& j, const MisalignmentReport& r) {
  j = {{"action", r.action.str()},
       {"expected", effects_json(r.expected)},
       {"observed", effects_json(r.observed)},
       {"overshoots", atoms_json(SymbolicState(r.overshoots))},
       {"side_effects", atoms_json(SymbolicState(r.side_effects))},
       {"underachieved", effects_json(r.underachieved)}};
}

std::optional<MisalignmentReport> check_alignment(const Action& a, const EffectSet& expected,
                                                  const EffectSet& subplan_effects,
                                                  const std::set<std::string>& upper) {
  MisalignmentReport r;
  r.action = a;
  r.expected = expected.restricted_to(upper);
  r.observed = subplan_effects.restricted_to(upper);
  if (r.expected == r.observed) return std::nullopt;
  SymbolicState extra = (r.observed.add - r.expected.add) | (r.observed.del - r.expected.del);
  for (const auto& x : extra) {
    (classify_mismatch(x, a) == MismatchKind::Overshoot ? r.overshoots : r.side_effects).insert(x);
  }
  r.underachieved.add = r.expected.add - r.observed.add;
  r.underachieved.del = r.expected.del - r.observed.del;
  return r;
}

std::optional<AtomPattern> lift_atom(const GroundAtom& atom, const OperatorDef& op, const Action& a) {
  AtomPattern p{atom.predicate, {}};
  for (const auto& arg : atom.args) {
    auto it = std::find(a.args.begin(), a.args.end(), arg);
    if (it == a.args.end()) return std::nullopt;
    std::size_t i = static_cast<std::size_t>(it - a.args.begin());
    if (i >= op.params.size()) return std::nullopt;
    p.args.push_back(op.params[i].name);
  }
  return p;
}

OperatorDef realign_operator(const OperatorDef& op, const MisalignmentReport& report, const DomainModel& domain,
                             const std::vector<TypedVar>& objects, const OperatorRewrite& rewrite) {
  OperatorDef out = op;
  for (const auto& x : report.overshoots) {
    auto pat = lift_atom(x, op, report.action);
    if (!pat) continue;
    if (report.observed.add.contains(x)) {
      add_unique(out.add, *pat);
      remove_pattern(out.del, *pat);
    }
    if (report.observed.del.contains(x)) {
      add_unique(out.del, *pat);
      remove_pattern(out.add, *pat);
    }
  }
  if (report.side_effects.empty()) return out;
  if (!rewrite) throw OracleRejection("side effects of " + op.name + " need an operator rewrite");

  std::set<std::string> unbound;
  for (const auto& x : report.side_effects) {
    for (const auto& arg : x.args) {
      if (std::find(report.action.args.begin(), report.action.args.end(), arg) == report.action.args.end()) {
        unbound.insert(arg);
      }
    }
  }
  auto type_of = [&](const std::string& obj) -> std::string {
    for (const auto& o : objects) {
      if (o.name == obj) return o.type;
    }
    throw UnknownObject("unknown object '" + obj + "'");
  };

  std::string feedback;
  for (int attempt = 0; attempt < 2; ++attempt) {
    try {
      OperatorDef cand = rewrite(out, report, feedback);
      if (canonical_name(cand.name) != canonical_name(op.name)) {
        throw Error("rewrite renamed " + op.name + " to " + cand.name);
      }
      domain.validate_operator(cand);
      for (const auto& obj : unbound) {
        std::string t = type_of(obj);
        bool found = std::any_of(cand.params.begin(), cand.params.end(), [&](const TypedVar& v) {
          bool old = std::any_of(out.params.begin(), out.params.end(), [&](const TypedVar& o) { return o.name == v.name; });
          return !old && domain.types.is_subtype(t, v.type);
        });
        if (!found) throw Error("rewrite of " + op.name + " has no new parameter for " + obj + " - " + t);
      }
      return cand;
    } catch (const Error& e) {
      feedback = e.what();
    }
  }
  throw OracleRejection("rewrite of " + op.name + " failed validation twice: " + feedback);
}

std::string DecompositionKey::str() const {
  std::string s = op + "(";
  for (std::size_t i = 0; i < param_types.size(); ++i) s += (i ? ", " : "") + param_types[i];
  return s + ")";
}

DecompositionKey decomposition_key(const OperatorDef& op) {
  DecompositionKey k{op.name, {}};
  for (const auto& p : op.params) k.param_types.push_back(p.type);
  return k;
}

std::size_t HierarchyNode::depth() const {
  std::size_t d = 0;
  for (const auto& [i, c] : children) d = std::max(d, c->depth());
  return d + 1;
}

std::size_t HierarchyNode::node_count() const {
  std::size_t n = 1;
  for (const auto& [i, c] : children) n += c->node_count();
  return n;
}

void HierarchyNode::check_invariants() const {
  for (const auto& [i, c] : children) {
    if (leaf_bindings.count(i)) throw Error("plan index " + std::to_string(i) + " is both a child and a leaf");
    if (i >= plan.size()) throw Error("child index " + std::to_string(i) + " outside the plan");
    if (c->level != level + 1) throw Error("child level mismatch at index " + std::to_string(i));
    for (const auto& p : domain.predicates) {
      const PredicateSchema* q = c->domain.find_predicate(p.name);
      if (!q || q->arity() != p.arity()) throw Error("child domain drops predicate " + p.name);
    }
    if (c->problem.objects != problem.objects) throw Error("child objects differ at index " + std::to_string(i));
    c->check_invariants();
  }
  for (const auto& [i, s] : leaf_bindings) {
    if (i >= plan.size()) throw Error("leaf index " + std::to_string(i) + " outside the plan");
  }
}

void save_hierarchy(const HierarchyNode& root, const std::string& dir) { save_node(root, fs::path(dir) / "level-0"); }

HierarchyNode load_hierarchy(const std::string& dir) { return load_node(fs::path(dir) / "level-0", 0); }

}  // namespace domlearn
