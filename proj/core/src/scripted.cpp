#include "domlearn/scripted.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "domlearn/classifier.hpp"
#include "domlearn/grounding.hpp"
#include "domlearn/pddl.hpp"
#include "domlearn/planner.hpp"

namespace domlearn {

namespace {

std::string trim(std::string_view s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return std::string(s.substr(a, b - a));
}

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  std::string l;
  while (std::getline(in, l)) out.push_back(l);
  return out;
}

// Text between `open` and the next `close`, or empty.
std::string between(const std::string& text, const std::string& open, const std::string& close) {
  std::size_t a = text.find(open);
  if (a == std::string::npos) return "";
  a += open.size();
  std::size_t b = text.find(close, a);
  return text.substr(a, b == std::string::npos ? std::string::npos : b - a);
}

std::vector<std::string> fenced_blocks(const std::string& text) {
  std::vector<std::string> out;
  std::string body;
  bool in = false;
  for (const auto& l : lines_of(text)) {
    if (trim(l).rfind("```", 0) == 0) {
      if (in) out.push_back(body);
      body.clear();
      in = !in;
      continue;
    }
    if (in) body += l + "\n";
  }
  return out;
}

std::vector<OperatorDef> operators_in(const std::string& text) {
  std::vector<OperatorDef> out;
  for (const auto& b : fenced_blocks(text)) {
    if (b.find("(:action") == std::string::npos) continue;
    out.push_back(parse_operator(b));
  }
  return out;
}

std::set<std::string> declared_predicates(const std::string& section) {
  std::set<std::string> out;
  for (const auto& l : lines_of(section)) {
    std::size_t open = l.find('(');
    if (open == std::string::npos) continue;
    std::size_t end = l.find_first_of(" )", open + 1);
    out.insert(l.substr(open + 1, end - open - 1));
  }
  return out;
}

std::string first_user(const std::vector<Message>& request) {
  for (const auto& m : request) {
    if (m.role == "user") return m.content;
  }
  return request.empty() ? "" : request.back().content;
}

std::string sec(const std::string& text, const std::string& heading) {
  return find_section(text, heading).value_or("");
}

std::string predicate_item(const PredicateSchema& p) {
  std::string decl = "(" + p.name;
  if (!p.params.empty()) decl += " " + print_typed_list(p.params);
  return "- " + decl + "): " + (p.state_based() ? "state" : "other") + ". " + p.description + "\n";
}

std::string action_item(std::size_t i, const OperatorDef& op, const std::string& mode) {
  return std::to_string(i) + ". " + op.name + ": " + mode + "\n    - Description: " +
         (op.description.empty() ? op.name : op.description) + "\n    - PDDL Definition:\n        ```pddl\n" +
         print_operator(op, 8) + "\n        ```\n";
}

std::string fix_name(const OperatorDef& op) { return canonical_name(op.name); }

std::vector<OperatorDef> operators_from_json(const nlohmann::json& j) {
  std::vector<OperatorDef> out;
  for (const auto& t : j) out.push_back(parse_operator(t.get<std::string>()));
  return out;
}

const nlohmann::json& object_field(const nlohmann::json& j, const char* key) {
  static const nlohmann::json empty = nlohmann::json::object();
  auto it = j.find(key);
  return it == j.end() ? empty : *it;
}

}  // namespace

PredicateSchema predicate_from_json(const nlohmann::json& j) {
  PredicateSchema p = parse_predicate_decl(j.at("decl").get<std::string>());
  std::string kind = j.value("kind", "state");
  p.kind = kind == "state" ? PredicateKind::StateBased : PredicateKind::StateIndependent;
  p.description = j.value("description", "");
  return p;
}

ScriptedKnowledge ScriptedKnowledge::from_json(const nlohmann::json& j) {
  ScriptedKnowledge k;
  k.description = j.value("description", "");
  for (const auto& p : j.value("predicates", nlohmann::json::array())) k.predicates.push_back(predicate_from_json(p));
  if (j.contains("actions")) k.actions = operators_from_json(j["actions"]);
  for (const auto& [op, calls] : object_field(j, "translations").items()) {
    for (const auto& c : calls) k.translations[op].push_back(parse_skill_call(c.get<std::string>()));
  }
  for (const auto& [op, d] : object_field(j, "decompositions").items()) {
    ScriptedDecomposition dec;
    for (const auto& p : d.value("predicates", nlohmann::json::array())) dec.predicates.push_back(predicate_from_json(p));
    if (d.contains("actions")) dec.actions = operators_from_json(d["actions"]);
    k.decompositions[op] = std::move(dec);
  }
  for (const auto& [p, prog] : object_field(j, "classifiers").items()) {
    k.classifiers[p] = prog.get<std::string>();
  }
  for (const auto& [op, text] : object_field(j, "fixes").items()) {
    k.fixes[op] = parse_operator(text.get<std::string>());
  }
  for (const auto& [op, d] : object_field(j, "decisions").items()) {
    auto t = parse_fix_type(d.at("type_of_fix").get<std::string>());
    if (!t) throw Error("unknown fix type in decision for " + op);
    k.decisions[op] = ScriptedDecision{*t, d.at("operators").get<std::vector<std::string>>()};
  }
  return k;
}

ScriptedKnowledge ScriptedKnowledge::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read " + path);
  return from_json(nlohmann::json::parse(in));
}

EffectSet parse_change_lines(const std::string& text) {
  EffectSet e;
  for (const auto& raw : lines_of(text)) {
    std::string l = trim(raw);
    if (l.rfind("- (", 0) != 0) continue;
    std::size_t colon = l.rfind("):");
    if (colon == std::string::npos) continue;
    std::string atom = l.substr(2, colon - 1);
    std::string change = trim(l.substr(colon + 2));
    if (atom == "(no change)") continue;
    GroundAtom a = parse_ground_atom(atom);
    if (change == "True -> False") e.del.insert(a);
    if (change == "False -> True") e.add.insert(a);
  }
  return e;
}

OperatorDef generic_fix(const OperatorDef& op, const Action& failing, const EffectSet& expected,
                        const EffectSet& observed, const std::vector<TypedVar>& objects) {
  OperatorDef out = op;
  std::map<std::string, std::string> fresh;
  auto lift = [&](const GroundAtom& x) {
    AtomPattern p{x.predicate, {}};
    for (const auto& arg : x.args) {
      auto it = std::find(failing.args.begin(), failing.args.end(), arg);
      if (it != failing.args.end() && static_cast<std::size_t>(it - failing.args.begin()) < op.params.size()) {
        p.args.push_back(op.params[static_cast<std::size_t>(it - failing.args.begin())].name);
        continue;
      }
      auto f = fresh.find(arg);
      if (f == fresh.end()) {
        auto obj = std::find_if(objects.begin(), objects.end(), [&](const TypedVar& o) { return o.name == arg; });
        std::string type = obj == objects.end() ? std::string(kRootType) : obj->type;
        std::string var = "?" + type + std::to_string(fresh.size() + 1);
        out.params.push_back({var, type});
        f = fresh.emplace(arg, var).first;
      }
      p.args.push_back(f->second);
    }
    return p;
  };
  auto add_to = [](std::vector<AtomPattern>& list, const AtomPattern& p) {
    if (std::find(list.begin(), list.end(), p) == list.end()) list.push_back(p);
  };
  auto drop = [](std::vector<AtomPattern>& list, const AtomPattern& p) {
    list.erase(std::remove(list.begin(), list.end(), p), list.end());
  };
  for (const auto& x : observed.add - expected.add) {
    AtomPattern p = lift(x);
    add_to(out.add, p);
    drop(out.del, p);
  }
  for (const auto& x : observed.del - expected.del) {
    AtomPattern p = lift(x);
    add_to(out.del, p);
    drop(out.add, p);
  }
  for (const auto& x : expected.add - observed.add) drop(out.add, lift(x));
  for (const auto& x : expected.del - observed.del) drop(out.del, lift(x));
  return out;
}

ScriptedOracle::ScriptedOracle(ScriptedKnowledge knowledge) : k_(std::move(knowledge)) {}

std::string ScriptedOracle::complete(OracleRole role, const std::vector<Message>& request) {
  const std::string user = first_user(request);
  switch (role) {
    case OracleRole::Domain: return domain(user);
    case OracleRole::Decompose: return decompose(user);
    case OracleRole::Translate: return translate(user);
    case OracleRole::Reasoner: return reasoner(request);
    case OracleRole::ClassifierGen: return classifier_gen(user);
    case OracleRole::ClassifierRefine: return classifier_refine(user);
    case OracleRole::PlanFallback: return plan(user);
    case OracleRole::PseudoLabel: return label(user);
  }
  return "";
}

std::string ScriptedOracle::domain(const std::string& user) const {
  if (find_section(user, "### Operators to Edit")) return fix(user);
  std::set<std::string> have;
  for (const auto& op : operators_in(sec(user, "### Actions"))) have.insert(fix_name(op));
  std::set<std::string> preds = declared_predicates(sec(user, "### Predicates"));

  std::string instruction = trim(sec(user, "### User Instruction"));
  const ScriptedTask* task = nullptr;
  for (const auto& t : k_.tasks) {
    if (trim(t.instruction) == instruction) task = &t;
  }
  if (!task && k_.tasks.size() == 1) task = &k_.tasks.front();

  std::string out = "### Explanation\nThe actions below use the skill library to reach the instructed goal.\n\n";
  std::string actions;
  std::size_t n = 0;
  for (const auto& op : k_.actions) {
    if (!have.count(fix_name(op))) actions += action_item(++n, op, "add");
  }
  if (!actions.empty()) out += "### Change/Add Action(s)\n" + actions + "\n";
  std::string new_preds;
  for (const auto& p : k_.predicates) {
    if (!preds.count(p.name)) new_preds += predicate_item(p);
  }
  if (!new_preds.empty()) out += "### Change/Add Predicate Definitions\n" + new_preds + "\n";
  out += "### Change Initial State\n";
  if (!task || task->static_atoms.empty()) out += "None\n";
  if (task) {
    for (const auto& a : task->static_atoms) out += a.str() + ": true\n";
  }
  out += "\n### Change Goal State\n";
  if (!task || task->goal.empty()) out += "None\n";
  if (task) {
    for (const auto& a : task->goal.positive) out += a.str() + ": true\n";
    for (const auto& a : task->goal.negative) out += a.str() + ": false\n";
  }
  return out;
}

std::string ScriptedOracle::decompose(const std::string& user) const {
  if (find_section(user, "### Operators to Edit")) return fix(user);
  std::string header = between(user, "### High-level Action `", "`");
  std::string op = parse_ground_atom(header).predicate;
  std::string out = "### Explanation\nLower-level actions, one per suggested skill.\n\n";
  auto it = k_.decompositions.find(op);
  if (it == k_.decompositions.end()) return out;
  std::set<std::string> preds = declared_predicates(sec(user, "### Predicates"));
  out += "### Change/Add Action(s)\n";
  std::size_t n = 0;
  for (const auto& a : it->second.actions) out += action_item(++n, a, "add");
  out += "\n### Change/Add Predicate Definitions\n";
  for (const auto& p : it->second.predicates) {
    if (!preds.count(p.name)) out += predicate_item(p);
  }
  return out;
}

std::string ScriptedOracle::translate(const std::string& user) const {
  std::string op = between(user, "PDDL action `", "`");
  std::vector<std::string> vars;
  {
    std::istringstream in(between(user, "from variables import ", "`"));
    std::string v;
    while (std::getline(in, v, ',')) {
      if (!trim(v).empty()) vars.push_back(trim(v));
    }
  }
  std::vector<SkillCall> calls;
  auto it = k_.translations.find(op);
  if (it != k_.translations.end()) {
    calls = it->second;
  } else {
    calls.push_back({canonical_name(op), vars});
  }
  std::string out = "# Outline Current State\nThe preconditions of " + op + " hold.\n# Action Description\n" + op +
                    " is reached by the skills below.\n# Skill Mapping\n";
  for (const auto& c : calls) {
    out += "- " + c.name + "(";
    for (std::size_t i = 0; i < c.args.size(); ++i) out += (i ? ", " : "") + c.args[i];
    out += ")\n";
  }
  return out;
}

std::string ScriptedOracle::reasoner(const std::vector<Message>& request) const {
  const std::string content = first_user(request);
  bool mismatch = content.find("Execution Failure:") != std::string::npos;
  bool exception = content.find("Skill Exception:") != std::string::npos;
  std::size_t at = content.find("Current Operator\n");
  std::string op = at == std::string::npos ? "" : between(content.substr(at), "(:action ", "\n");
  op = trim(op);
  if (request.size() < 3) {
    std::string why = mismatch    ? "the operator's effects do not match the observed change"
                      : exception ? "the skill raised an exception for its arguments"
                                  : "a precondition of the operator does not hold";
    return "### Analysis\nThe failing action is " + op + "; " + why + ".\n";
  }
  ScriptedDecision d{mismatch ? FixType::PddlFix : exception ? FixType::IncorrectInstantiation : FixType::PriorSkills,
                     {op}};
  auto it = k_.decisions.find(op);
  if (it != k_.decisions.end()) d = it->second;
  nlohmann::json j = {{"type_of_fix", std::string(to_string(d.type))}, {"operators", d.operators}};
  return "The operator definition is the most probable cause.\n```json\n" + j.dump(4) + "\n```\n";
}

std::string ScriptedOracle::classifier_gen(const std::string& user) const {
  std::string decl = between(user, "Predicate: (", "\n");
  std::string name = decl.substr(0, decl.find_first_of(" )"));
  auto it = k_.classifiers.find(name);
  std::string out = "# Requirements to Check\n- the geometric relation named by " + name + "\n# Predicate Grounding\n";
  if (it == k_.classifiers.end() || trim(it->second) == "none") {
    return out + "none\n# Grounder Description\nThe predicate cannot be decided from poses.\n";
  }
  return out + "```dsl\n" + trim(it->second) + "\n```\n# Grounder Description\nChecks the poses for " + name + ".\n";
}

std::string ScriptedOracle::classifier_refine(const std::string& user) const {
  std::string program = between(user, dsl_reference() + "\n", "This is a function");
  return "# Error Analysis\nThe disagreements come from perception noise.\n# Suggested Fixes\nNone.\n# Fixed Code\n```dsl\n" +
         trim(program) + "\n```\n";
}

std::string ScriptedOracle::plan(const std::string& user) const {
  std::string domain_text = between(user, "Domain:\n```pddl\n", "```");
  std::string problem_text = between(user, "Problem:\n```pddl\n", "```");
  DomainModel d = k_.reference ? *k_.reference : parse_domain(domain_text);
  Problem p = parse_problem(problem_text, d);
  SearchResult r = search_plan(d, p);
  std::string out = "### Plan\n";
  for (const auto& a : r.plan.actions) out += a.str() + "\n";
  return out;
}

std::string ScriptedOracle::label(const std::string& user) const {
  if (!env_) throw OracleUnavailable("scripted labeler has no environment");
  SymbolicState truth = env_->ground_truth_atoms();
  std::string out;
  for (const auto& l : lines_of(between(user, "Predicates:\n", "For every listed"))) {
    std::string t = trim(l);
    if (t.empty()) continue;
    GroundAtom a = parse_ground_atom(t);
    out += a.str() + (truth.contains(a) ? ": true\n" : ": false\n");
  }
  return out;
}

std::string ScriptedOracle::fix(const std::string& user) const {
  std::string failure = sec(user, "### Verification Failure");
  Action failing;
  {
    std::string header = trim(between(failure, "Action: ", "\n"));
    if (!header.empty()) {
      GroundAtom a = parse_ground_atom(header);
      failing = {a.predicate, a.args};
    }
  }
  EffectSet expected = parse_change_lines(between(failure, "Expected Change:\n", "Ground Truth Change:"));
  EffectSet observed = parse_change_lines(between(failure + "\n", "Ground Truth Change:\n", "\n\n"));
  std::vector<TypedVar> objects = parse_typed_vars(trim(sec(user, "### Objects")));
  std::vector<OperatorDef> current = operators_in(sec(user, "### Actions"));

  std::string out = "### Explanation\nThe effects now match the ground-truth change.\n\n### Change/Add Action(s)\n";
  std::size_t n = 0;
  for (const auto& raw : lines_of(sec(user, "### Operators to Edit"))) {
    std::string name = trim(raw);
    if (name.rfind("- ", 0) == 0) name = trim(name.substr(2));
    if (name.empty()) continue;
    auto fx = k_.fixes.find(name);
    if (fx != k_.fixes.end()) {
      out += action_item(++n, fx->second, "edit");
      continue;
    }
    auto it = std::find_if(current.begin(), current.end(),
                           [&](const OperatorDef& op) { return canonical_name(op.name) == canonical_name(name); });
    if (it == current.end()) continue;
    OperatorDef op = *it;
    if (canonical_name(op.name) == canonical_name(failing.op)) op = generic_fix(op, failing, expected, observed, objects);
    out += action_item(++n, op, "edit");
  }
  return out;
}

}  // namespace domlearn
