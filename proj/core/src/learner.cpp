#include "domlearn/learner.hpp"

#include <algorithm>

#include <nlohmann/json.hpp>

#include "domlearn/pddl.hpp"

namespace domlearn {

namespace {

std::string bare(const std::string& var) { return var.size() > 1 && var[0] == '?' ? var.substr(1) : var; }

std::string unquote(std::string s) {
  if (s.size() >= 2 && (s.front() == '\'' || s.front() == '"') && s.back() == s.front()) return s.substr(1, s.size() - 2);
  return s;
}

std::string atom_lines(const SymbolicState& s) {
  std::string out;
  for (const auto& a : s) out += a.str() + "\n";
  return out.empty() ? "None\n" : out;
}

std::string goal_text(const Goal& g) {
  std::string out = "(and";
  for (const auto& a : g.negative) out += " (not " + a.str() + ")";
  for (const auto& a : g.positive) out += " " + a.str();
  return out + ")";
}

std::string or_none(const std::string& s) { return s.empty() ? "None" : s; }

std::string fenced(const OperatorDef& op) { return "```pddl\n" + print_operator(op) + "\n```"; }

std::string signature_of(const PredicateSchema& p) {
  std::string s = p.name + "(";
  for (std::size_t i = 0; i < p.params.size(); ++i) {
    s += (i ? ", " : "") + bare(p.params[i].name) + ": " + p.params[i].type;
  }
  return s + ")";
}

std::string declaration(const PredicateSchema& p) {
  std::string s = "(" + p.name;
  if (!p.params.empty()) s += " " + print_typed_list(p.params);
  return s + ")";
}

std::string skills_block(const Environment& env) {
  std::string out;
  for (const auto& s : env.skills()) out += s.python_signature() + "\n    ...\n";
  return out;
}

std::string skill_library(const Environment& env) {
  std::string out;
  for (const auto& s : env.skills()) out += "- " + s.python_signature() + "\n";
  return out;
}

OperatorDef* find_canonical(DomainModel& d, const std::string& name) {
  for (auto& op : d.operators) {
    if (canonical_name(op.name) == canonical_name(name)) return &op;
  }
  return nullptr;
}

void check_atoms(const DomainModel& d, const std::vector<std::pair<GroundAtom, AtomChange>>& changes,
                 const std::string& section) {
  for (const auto& [atom, ch] : changes) {
    const PredicateSchema* p = d.find_predicate(atom.predicate);
    if (!p) throw ParseFailure(section, "unknown predicate '" + atom.predicate + "'");
    if (p->arity() != atom.args.size()) throw ParseFailure(section, "wrong arity in " + atom.str());
  }
}

void validated(const DomainModel& d, const std::string& section) {
  try {
    d.validate();
  } catch (const ParseFailure&) {
    throw;
  } catch (const Error& e) {
    throw ParseFailure(section, e.what());
  }
}

constexpr const char* kActionSection = "### Change/Add Action(s)";

}  // namespace

void to_json(nlohmann::json& j, const TaskOutcome& t) {
  auto plan = nlohmann::json::array();
  for (const auto& a : t.plan) plan.push_back(a.str());
  auto goal = nlohmann::json::array();
  for (const auto& a : t.goal.negative) goal.push_back("(not " + a.str() + ")");
  for (const auto& a : t.goal.positive) goal.push_back(a.str());
  auto cls = nlohmann::json::array();
  for (const auto& c : t.classifiers) {
    cls.push_back({{"predicate", c.predicate}, {"f_min", c.f_min}, {"f_avg", c.f_avg}, {"rounds", c.actions}});
  }
  j = {{"name", t.name},
       {"success", t.success},
       {"failure", t.failure},
       {"exhausted", t.exhausted},
       {"interactions", t.interactions},
       {"replans", t.replans},
       {"recoveries", t.recoveries},
       {"realignments", t.realignments},
       {"oracle_calls", t.oracle_calls},
       {"goal", goal},
       {"plan", plan},
       {"classifiers", cls}};
}

std::string predicate_lines(const DomainModel& d) {
  std::string out;
  for (const auto& p : d.predicates) {
    out += "- " + declaration(p) + ": " + (p.state_based() ? "state" : "other") + ". " + p.description + "\n";
  }
  return out;
}

std::string action_blocks(const DomainModel& d) {
  std::string out;
  for (const auto& op : d.operators) out += fenced(op) + "\n";
  return out;
}

std::string type_lines(const TypeTree& t) {
  std::string out;
  for (const auto& [child, parent] : t.parents()) out += "- " + child + " - " + parent + "\n";
  return out.empty() ? "- object\n" : out;
}

std::string object_line(const std::vector<TypedVar>& objects) { return print_typed_list(objects); }

std::string variable_tokens(const OperatorDef& op) {
  std::string out;
  for (std::size_t i = 0; i < op.params.size(); ++i) {
    out += (i ? ", " : "") + bare(op.params[i].name) + "_" + op.params[i].type;
  }
  return out;
}

SkillCall bind_skill(const SkillCall& templ, const OperatorDef& op, const Action& a) {
  SkillCall out{templ.name, {}};
  for (const auto& raw : templ.args) {
    std::string t = unquote(raw);
    std::string bound = t;
    for (std::size_t i = 0; i < op.params.size() && i < a.args.size(); ++i) {
      std::string b = bare(op.params[i].name);
      if (t == b + "_" + op.params[i].type || t == b || t == op.params[i].name) {
        bound = a.args[i];
        break;
      }
    }
    out.args.push_back(bound);
  }
  return out;
}

std::string template_str(const SkillCall& templ) {
  std::string s = templ.name + "(";
  for (std::size_t i = 0; i < templ.args.size(); ++i) s += (i ? ", " : "") + unquote(templ.args[i]);
  return s + ")";
}

void apply_domain_edit(DomainModel& d, const DomainEdit& edit) {
  for (const auto& p : edit.predicates) {
    if (!d.find_predicate(p.name)) d.predicates.push_back(p);
  }
  for (const auto& a : edit.actions) {
    if (a.mode == EditMode::Delete) {
      d.operators.erase(std::remove_if(d.operators.begin(), d.operators.end(),
                                       [&](const OperatorDef& op) { return canonical_name(op.name) == canonical_name(a.name); }),
                        d.operators.end());
      continue;
    }
    if (!a.op) continue;
    OperatorDef op = *a.op;
    if (op.description.empty()) op.description = a.description;
    if (OperatorDef* old = find_canonical(d, op.name)) {
      *old = op;
    } else {
      d.operators.push_back(op);
    }
  }
}

Learner::Learner(OracleSession& session, LearnerConfig config, DomainModel initial, AuditLog* audit)
    : session_(session), cfg_(std::move(config)), audit_(audit ? audit : &own_audit_), top_(std::move(initial)) {
  if (top_.requirements.empty()) top_.requirements = {":strips", ":typing", ":negative-preconditions", ":equality"};
}

std::size_t Learner::used_interactions() const { return env_->interactions() - start_interactions_; }

std::set<std::string> Learner::perceivable(const DomainModel& d) const {
  std::set<std::string> out;
  for (const auto& p : d.predicates) {
    if (!p.state_based() || ungrounded_.count(p.name)) continue;
    if (cfg_.use_classifiers && !registry_.contains(p.name)) continue;
    out.insert(p.name);
  }
  return out;
}

SymbolicState Learner::perceive(const WorldState& x, const std::set<std::string>& predicates) const {
  if (predicates.empty()) return {};
  if (!cfg_.use_classifiers || x.discrete) return x.atoms.restricted_to(predicates);
  return registry_.ground(x, predicates);
}

SymbolicState Learner::current_state(const DomainModel& d) const {
  std::set<std::string> seen = perceivable(d);
  std::set<std::string> rest;
  for (const auto& name : d.predicate_names()) {
    if (!seen.count(name)) rest.insert(name);
  }
  return perceive(env_->observe(cfg_.noise_seed), seen) | tracked_.restricted_to(rest);
}

void Learner::advance_tracked(const DomainModel& d, const Action& a) {
  std::set<std::string> seen = perceivable(d);
  GroundOperator g = instantiate(d, a, &env_->objects());
  for (const auto& x : g.del) {
    if (!seen.count(x.predicate)) tracked_.erase(x);
  }
  for (const auto& x : g.add) {
    if (!seen.count(x.predicate)) tracked_.insert(x);
  }
}

void Learner::ensure_classifiers(const DomainModel& d) {
  if (!cfg_.use_classifiers) return;
  for (const auto& p : d.predicates) {
    if (!p.state_based() || registry_.contains(p.name) || ungrounded_.count(p.name)) continue;
    std::string known;
    for (const auto& name : registry_.order()) known += print_classifier(registry_.find(name)->program);
    PromptContext ctx{{"api", dsl_reference()},
                      {"signature", signature_of(p)},
                      {"predicate", declaration(p) + ": " + p.description},
                      {"known", known},
                      {"domain_description", cfg_.domain_description}};
    auto check = [&](const std::string& r) {
      ClassifierResponse c = parse_classifier_response(OracleRole::ClassifierGen, r);
      if (!c.program) return;
      ClassifierProgram prog;
      try {
        prog = parse_classifier(*c.program, &registry_);
      } catch (const Error& e) {
        throw ParseFailure("# Predicate Grounding", e.what());
      }
      if (prog.predicate != p.name) {
        throw ParseFailure("# Predicate Grounding", "expected a classifier named " + p.name + ", got " + prog.predicate);
      }
      if (prog.params.size() != p.arity()) throw ParseFailure("# Predicate Grounding", "wrong arity for " + p.name);
    };
    try {
      ClassifierResponse c = parse_classifier_response(
          OracleRole::ClassifierGen, session_.ask(OracleRole::ClassifierGen, build_prompt(OracleRole::ClassifierGen, ctx), check));
      if (!c.program) {
        ungrounded_.insert(p.name);
        audit_->note("ungrounded", p.name);
        continue;
      }
      ClassifierProgram prog = parse_classifier(*c.program, &registry_);
      if (prog.description.empty()) prog.description = c.description;
      registry_.put(std::move(prog));
      registered_at_[p.name] = dataset_.size();
    } catch (const ParseFailure& e) {
      ungrounded_.insert(p.name);
      audit_->note("ungrounded", p.name + ": " + e.what());
    }
  }
}

void Learner::add_predicates(std::size_t frame, const std::vector<PredicateSchema>& preds) {
  if (preds.empty()) return;
  auto add = [&](DomainModel& d) {
    for (const auto& p : preds) {
      if (!d.find_predicate(p.name)) d.predicates.push_back(p);
    }
  };
  for (std::size_t i = frame; i < frames_.size(); ++i) add(frames_[i].node->domain);
  std::optional<DecompositionKey> origin = frame < frames_.size() ? frames_[frame].origin : std::nullopt;
  if (!origin) add(top_);
  for (auto& [key, dec] : decompositions_) {
    if (!origin || descends_from(key, *origin)) add(dec.domain);
  }
}

bool Learner::descends_from(const DecompositionKey& key, const DecompositionKey& ancestor) const {
  std::optional<DecompositionKey> k = key;
  for (std::size_t guard = 0; k && guard <= decompositions_.size(); ++guard) {
    if (*k == ancestor) return true;
    auto it = decompositions_.find(*k);
    if (it == decompositions_.end()) return false;
    k = it->second.parent;
  }
  return false;
}

PromptContext Learner::domain_context() const {
  return {{"instruction", task_->instruction},
          {"domain_description", cfg_.domain_description},
          {"predicates", or_none(predicate_lines(top_))},
          {"actions", or_none(action_blocks(top_))},
          {"types", type_lines(top_.types)},
          {"objects", object_line(env_->objects())},
          {"skill_library", skill_library(*env_)},
          {"initial_state", atom_lines(current_state(top_))}};
}

void Learner::domain_round() {
  auto check = [&](const std::string& r) {
    DomainEdit e = parse_domain_response(r);
    DomainModel tmp = top_;
    apply_domain_edit(tmp, e);
    validated(tmp, kActionSection);
    check_atoms(tmp, e.init_changes, "### Change Initial State");
    check_atoms(tmp, e.goal_changes, "### Change Goal State");
  };
  DomainEdit e = parse_domain_response(
      session_.ask(OracleRole::Domain, build_prompt(OracleRole::Domain, domain_context()), check));
  add_predicates(0, e.predicates);
  DomainEdit ops = e;
  ops.predicates.clear();
  apply_domain_edit(top_, ops);
  std::set<std::string> seen = perceivable(top_);
  for (const auto& [atom, ch] : e.init_changes) {
    if (seen.count(atom.predicate)) continue;
    if (ch == AtomChange::True) tracked_.insert(atom);
    else tracked_.erase(atom);
  }
  for (const auto& [atom, ch] : e.goal_changes) {
    goal_.positive.erase(atom);
    goal_.negative.erase(atom);
    if (ch == AtomChange::True) goal_.positive.insert(atom);
    if (ch == AtomChange::False) goal_.negative.insert(atom);
  }
  audit_->note("domain", print_domain(top_));
}

void Learner::count_replan() {
  ++replans_;
  if (replans_ > cfg_.budgets.replans) {
    throw BudgetExhausted("replans", "replanning budget of " + std::to_string(cfg_.budgets.replans) + " exhausted");
  }
}

Plan Learner::plan_node(HierarchyNode& node, const SymbolicState& s) {
  Problem p = node.problem;
  p.init = s;
  SearchResult r = search_plan(node.domain, p, cfg_.search);
  if (r.status == SearchStatus::Solved) return r.plan;

  PromptContext ctx{{"domain", print_domain(node.domain)}, {"problem", print_problem(p)}};
  auto check = [&](const std::string& text) {
    Plan plan{parse_plan_response(text), PlanProvenance::OracleFallback};
    ValidationTrace t = validate_plan(node.domain, p, plan);
    if (!t.valid()) {
      std::string why = t.executable() ? "the plan does not reach the goal" : "a step is not applicable";
      if (auto i = t.first_failure()) {
        why += ": " + t.steps[*i].action.str();
        for (const auto& m : t.steps[*i].missing) why += " " + m;
      }
      throw ParseFailure("### Plan", why);
    }
  };
  try {
    std::string text = session_.ask(OracleRole::PlanFallback, build_prompt(OracleRole::PlanFallback, ctx), check);
    return Plan{parse_plan_response(text), PlanProvenance::OracleFallback};
  } catch (const ParseFailure& e) {
    throw LearningFailure("no plan at level " + std::to_string(node.level) + " (search: " +
                          std::string(to_string(r.status)) + "; fallback: " + e.what() + ")");
  }
}

Learner::Step Learner::run_node(HierarchyNode& node) {
  for (std::size_t round = 0;; ++round) {
    if (round) count_replan();
    SymbolicState s = current_state(node.domain);
    if (goal_satisfied(s, node.problem.goal)) return {};
    Plan plan = plan_node(node, s);
    bool again = false;
    for (const auto& a : plan.actions) {
      Step st = run_action(node, a);
      if (st.kind == StepKind::Replan) {
        if (st.level < node.level) return st;
        again = true;
        break;
      }
    }
    if (!again && goal_satisfied(current_state(node.domain), node.problem.goal)) return {};
  }
}

const std::vector<SkillCall>& Learner::translation(const HierarchyNode& node, const OperatorDef& op) {
  DecompositionKey key = decomposition_key(op);
  auto it = translations_.find(key);
  if (it != translations_.end()) return it->second;
  bool more = force_decompose_.count(key) != 0;
  PromptContext ctx{{"skills", skills_block(*env_)},
                    {"objects", object_line(env_->objects())},
                    {"predicates", or_none(predicate_lines(node.domain))},
                    {"action", fenced(op)},
                    {"action_name", op.name},
                    {"variables", variable_tokens(op)}};
  if (more) {
    ctx["feedback"] =
        "The previous mapping of this action to a single skill failed verification. Map the action to a sequence of "
        "several skills.";
  }
  auto check = [&](const std::string& r) {
    std::vector<SkillCall> calls = parse_translate_response(r);
    for (const auto& c : calls) {
      const SkillSignature* sig = env_->find_skill(c.name);
      if (!sig) throw ParseFailure("# Skill Mapping", "unknown skill '" + c.name + "'");
      if (sig->params.size() != c.args.size()) {
        throw ParseFailure("# Skill Mapping", c.name + " takes " + std::to_string(sig->params.size()) + " argument(s)");
      }
    }
    if (more && calls.size() < 2) throw ParseFailure("# Skill Mapping", "the action needs more than one skill");
  };
  std::vector<SkillCall> calls = parse_translate_response(
      session_.ask(OracleRole::Translate, build_prompt(OracleRole::Translate, ctx), check));
  force_decompose_.erase(key);
  return translations_[key] = std::move(calls);
}

DomainModel Learner::decomposition(const HierarchyNode& node, const OperatorDef& op, const Action& action,
                                   const SymbolicState& s_i, const Problem& sub, const std::vector<SkillCall>& skills) {
  DecompositionKey key = decomposition_key(op);
  auto it = decompositions_.find(key);
  if (it != decompositions_.end()) {
    for (const auto& p : node.domain.predicates) {
      if (!it->second.domain.find_predicate(p.name)) it->second.domain.predicates.push_back(p);
    }
    return it->second.domain;
  }
  DomainModel base;
  base.name = node.domain.name + "-" + op.name;
  base.requirements = node.domain.requirements;
  base.types = node.domain.types;
  base.constants = node.domain.constants;
  base.predicates = node.domain.predicates;

  std::string suggested;
  for (const auto& s : skills) suggested += template_str(s) + "\n";
  PromptContext ctx{{"action_header", action.str()},
                    {"action", fenced(op)},
                    {"predicates", or_none(predicate_lines(node.domain))},
                    {"actions", "None"},
                    {"types", type_lines(node.domain.types)},
                    {"objects", object_line(env_->objects())},
                    {"initial_state", atom_lines(s_i)},
                    {"goal_state", goal_text(sub.goal)},
                    {"skill_library", skill_library(*env_)},
                    {"suggested", suggested}};
  auto build = [&](const DomainEdit& e) {
    DomainModel d = base;
    apply_domain_edit(d, e);
    return d;
  };
  auto check = [&](const std::string& r) {
    DomainModel d = build(parse_domain_response(r));
    validated(d, kActionSection);
    if (d.operators.empty()) throw ParseFailure(kActionSection, "no lower-level actions were defined");
  };
  DomainModel d = build(parse_domain_response(
      session_.ask(OracleRole::Decompose, build_prompt(OracleRole::Decompose, ctx), check)));
  std::optional<DecompositionKey> parent = frames_.empty() ? std::nullopt : frames_.back().origin;
  decompositions_[key] = Decomposition{d, skills, parent};
  audit_->note("decomposition", key.str());
  return d;
}

Learner::Step Learner::run_action(HierarchyNode& node, const Action& action) {
  OperatorDef op = *node.domain.find_operator(action.op);
  frames_.back().action = action;
  std::vector<SkillCall> templ = translation(node, op);
  if (templ.size() == 1) return run_leaf(node, action, bind_skill(templ[0], op, action));

  auto fail_here = [&](const std::string& why, EffectSet expected, EffectSet observed, const SymbolicState& before) {
    FailureReport r;
    r.action = action;
    r.skill = templ.empty() ? SkillCall{"(none)", {}} : bind_skill(templ.front(), op, action);
    r.phase = FailurePhase::EffectMismatch;
    r.exception = why;
    r.expected = std::move(expected);
    r.observed = std::move(observed);
    r.level = node.level;
    r.state_before = before.restricted_to(perceivable(node.domain));
    return recover(std::move(r));
  };

  if (templ.empty()) return fail_here("the translation returned no skills", {}, {}, current_state(node.domain));
  if (node.level + 1 >= cfg_.max_depth) {
    throw LearningFailure("decomposing " + action.str() + " would exceed the maximum depth of " +
                          std::to_string(cfg_.max_depth));
  }
  SymbolicState s_i = current_state(node.domain);
  SymbolicState s_next = apply_effects(s_i, instantiate(node.domain, action, &env_->objects()));
  Problem sub;
  try {
    sub = make_subproblem(s_i, s_next, env_->objects(), node.problem.name + "-" + action.op);
  } catch (const DegenerateSubproblem& e) {
    return fail_here(e.what(), {}, {}, s_i);
  }
  DomainModel child_domain = decomposition(node, op, action, s_i, sub, templ);
  ensure_classifiers(child_domain);

  auto child = std::make_unique<HierarchyNode>();
  child->level = node.level + 1;
  child->domain = std::move(child_domain);
  child->problem = sub;
  child->problem.domain = child->domain.name;

  struct FrameGuard {
    std::vector<Frame>& frames;
    ~FrameGuard() { frames.pop_back(); }
  };
  Step st;
  {
    frames_.push_back({child.get(), decomposition_key(op), std::nullopt});
    FrameGuard guard{frames_};
    st = run_node(*child);
  }
  if (st.kind == StepKind::Replan) return st;

  SymbolicState after = current_state(node.domain);
  EffectSet expected = state_diff(s_i, s_next);
  EffectSet observed = state_diff(s_i, after);
  std::size_t idx = node.plan.actions.size();
  node.plan.actions.push_back(action);
  node.children[idx] = std::move(child);
  advance_tracked(node.domain, action);

  auto mis = check_alignment(action, expected, observed, perceivable(node.domain));
  if (!mis) return {};
  if (!mis->underachieved.empty()) {
    audit_->misalignment(*mis, "recovery");
    return fail_here("the lower-level plan did not reach every effect of " + action.str(), mis->expected,
                     mis->observed, s_i);
  }
  return repair_alignment(node, op, *mis);
}

Learner::Step Learner::repair_alignment(HierarchyNode& node, const OperatorDef& op, const MisalignmentReport& report) {
  std::size_t frame = frames_.size() - 1;
  OperatorRewrite rewrite = [&](const OperatorDef&, const MisalignmentReport& r, const std::string& feedback) {
    std::string failure = "Misalignment:\nThe lower-level plan changed objects that are not parameters of the action.\n"
                          "Expected Change:\n" +
                          change_lines(r.expected) + "\nGround Truth Change:\n" + change_lines(r.observed);
    if (!feedback.empty()) failure += "\nThe previous rewrite was rejected: " + feedback + "\n";
    DomainEdit e = request_fix(frame, r.action, failure, {op.name});
    for (const auto& a : e.actions) {
      if (a.op && canonical_name(a.op->name) == canonical_name(op.name)) return *a.op;
    }
    throw Error("the response does not redefine " + op.name);
  };
  OperatorDef fixed = realign_operator(op, report, node.domain, env_->objects(), rewrite);
  replace_operator(frame, fixed);
  ++realignments_;
  audit_->misalignment(report, report.side_effects.empty() ? "mechanical" : "rewrite");
  return {StepKind::Replan, node.level};
}

Learner::Step Learner::run_leaf(HierarchyNode& node, const Action& action, const SkillCall& call) {
  std::set<std::string> seen = perceivable(node.domain);
  const SkillSignature* sig = env_->find_skill(call.name);
  if (!sig || sig->params.size() != call.args.size()) {
    FailureReport r;
    r.action = action;
    r.skill = call;
    r.phase = FailurePhase::SkillException;
    r.exception = sig ? "invalid parameterization: " + call.name + " takes " + std::to_string(sig->params.size()) +
                            " argument(s)"
                      : "unknown skill '" + call.name + "'";
    r.level = node.level;
    r.state_before = current_state(node.domain).restricted_to(seen);
    return recover(std::move(r));
  }
  if (used_interactions() >= cfg_.budgets.interactions) {
    throw BudgetExhausted("interactions", "interaction budget of " + std::to_string(cfg_.budgets.interactions) +
                                              " exhausted before " + call.str());
  }
  Perceiver perceiver = [&](const WorldState& x) { return perceive(x, seen); };
  env_->push_snapshot();
  VerifyResult result;
  try {
    result = verify_leaf(action, call, *env_, node.domain, perceiver, seen, cfg_.noise_seed);
  } catch (...) {
    env_->pop_snapshot();
    throw;
  }
  if (auto* v = std::get_if<Verified>(&result)) {
    env_->pop_snapshot();
    std::size_t idx = node.plan.actions.size();
    node.plan.actions.push_back(action);
    node.leaf_bindings[idx] = call;
    advance_tracked(node.domain, action);
    record_transition(*v);
    return {};
  }
  env_->restore_snapshot();
  env_->pop_snapshot();
  FailureReport r = std::get<FailureReport>(std::move(result));
  r.level = node.level;
  return recover(std::move(r));
}

void Learner::record_transition(const Verified& v) {
  dataset_.push_back(v.transition);
  if (!cfg_.use_classifiers || registry_.size() == 0) return;
  Labeler labeler = [&](const WorldState&, const SkillCall&, const WorldState& x_next) {
    std::vector<GroundAtom> atoms;
    for (const auto& name : registry_.order()) {
      for (auto& a : candidate_atoms(registry_.find(name)->program, x_next)) atoms.push_back(std::move(a));
    }
    std::string listing;
    for (const auto& a : atoms) listing += a.str() + "\n";
    auto check = [&](const std::string& r) {
      auto labels = parse_label_response(r);
      for (const auto& a : atoms) {
        if (!labels.count(a)) throw ParseFailure("labels", "no answer for " + a.str());
      }
    };
    try {
      auto labels = parse_label_response(session_.ask(
          OracleRole::PseudoLabel,
          build_prompt(OracleRole::PseudoLabel, {{"scene", dump_scene(x_next)}, {"predicates", listing}}), check));
      SymbolicState s;
      for (const auto& a : atoms) {
        if (labels.at(a)) s.insert(a);
      }
      return s;
    } catch (const ParseFailure& e) {
      throw OracleUnavailable(e.what());
    }
  };
  try {
    dataset_ = pseudo_label(std::move(dataset_), labeler, cfg_.dedup).data;
  } catch (const OracleUnavailable& e) {
    audit_->note("unlabeled", e.what());
  }
}

std::string Learner::hierarchy_text() const {
  std::string out;
  for (std::size_t i = 0; i < frames_.size(); ++i) {
    std::string pad(4 * i, ' ');
    const HierarchyNode& n = *frames_[i].node;
    for (std::size_t j = 0; j < n.plan.actions.size(); ++j) {
      out += pad + "- " + n.plan.actions[j].str();
      auto leaf = n.leaf_bindings.find(j);
      if (leaf != n.leaf_bindings.end()) out += ": " + leaf->second.str();
      out += "\n";
    }
    if (frames_[i].action) out += pad + "- " + frames_[i].action->str() + "\n";
  }
  return out;
}

DomainEdit Learner::request_fix(std::size_t frame, const Action& failing, const std::string& failure,
                                const std::vector<std::string>& ops) {
  HierarchyNode& n = *frames_[frame].node;
  std::string to_edit;
  for (const auto& o : ops) to_edit += "- " + o + "\n";
  std::string summary = "Action: " + failing.str() + "\n" + failure;
  PromptContext ctx;
  OracleRole role = OracleRole::Domain;
  if (frame == 0) {
    ctx = domain_context();
    ctx["actions"] = or_none(action_blocks(n.domain));
  } else {
    role = OracleRole::Decompose;
    const Frame& parent = frames_[frame - 1];
    const OperatorDef* pop = parent.node->domain.find_operator(parent.action->op);
    std::string suggested;
    auto dec = decompositions_.find(*frames_[frame].origin);
    if (dec != decompositions_.end()) {
      for (const auto& s : dec->second.skills) suggested += template_str(s) + "\n";
    }
    ctx = {{"action_header", parent.action->str()},
           {"action", fenced(*pop)},
           {"predicates", or_none(predicate_lines(n.domain))},
           {"actions", or_none(action_blocks(n.domain))},
           {"types", type_lines(n.domain.types)},
           {"objects", object_line(env_->objects())},
           {"initial_state", atom_lines(n.problem.init)},
           {"goal_state", goal_text(n.problem.goal)},
           {"skill_library", skill_library(*env_)},
           {"suggested", or_none(suggested)}};
  }
  ctx["failure"] = summary;
  ctx["operators_to_edit"] = to_edit;
  auto check = [&](const std::string& r) {
    DomainEdit e = parse_domain_response(r);
    if (std::none_of(e.actions.begin(), e.actions.end(), [](const ActionEdit& a) { return a.op.has_value(); })) {
      throw ParseFailure(kActionSection, "no edited action definition");
    }
    DomainModel tmp = n.domain;
    apply_domain_edit(tmp, e);
    validated(tmp, kActionSection);
  };
  return parse_domain_response(session_.ask(role, build_prompt(role, ctx), check));
}

void Learner::apply_fix(std::size_t frame, const DomainEdit& edit) {
  add_predicates(frame, edit.predicates);
  DomainEdit ops = edit;
  ops.predicates.clear();
  ops.init_changes.clear();
  ops.goal_changes.clear();
  apply_domain_edit(frames_[frame].node->domain, ops);
  if (const auto& origin = frames_[frame].origin) {
    apply_domain_edit(decompositions_.at(*origin).domain, ops);
  } else {
    apply_domain_edit(top_, ops);
  }
  for (const auto& a : ops.actions) audit_->note("fix", a.name);
}

void Learner::replace_operator(std::size_t frame, const OperatorDef& op) {
  ActionEdit a{op.name, EditMode::Edit, op.description, op};
  apply_fix(frame, DomainEdit{"", {a}, {}, {}, {}});
}

Learner::Step Learner::recover(FailureReport report) {
  ++recoveries_;
  for (const auto& f : frames_) {
    if (f.action) report.path.push_back(f.action->str());
  }
  audit_->failure(report);
  std::set<std::string> known;
  for (const auto& f : frames_) {
    for (const auto& op : f.node->domain.operators) known.insert(op.name);
  }
  const HierarchyNode& node = *frames_.back().node;
  const OperatorDef* op = node.domain.find_operator(report.action.op);
  ReasonerContext ctx{cfg_.domain_description, hierarchy_text(), print_operator(*op)};
  RecoveryDecision d = decide_recovery(report, ctx, known, session_);
  audit_->decision(report, d);
  DecompositionKey key = decomposition_key(*op);

  switch (d.type) {
    case FixType::PddlFix:
    case FixType::PriorSkills: {
      std::map<std::size_t, std::vector<std::string>> by_frame;
      for (const auto& name : d.operators) {
        for (std::size_t i = frames_.size(); i-- > 0;) {
          if (frames_[i].node->domain.find_operator(name)) {
            by_frame[i].push_back(name);
            break;
          }
        }
      }
      std::size_t retry = report.level;
      std::string failure = failure_text(report);
      for (const auto& [i, ops] : by_frame) {
        apply_fix(i, request_fix(i, report.action, failure, ops));
        retry = std::min(retry, frames_[i].node->level);
      }
      return {StepKind::Replan, retry};
    }
    case FixType::IncorrectInstantiation:
      translations_.erase(key);
      return {StepKind::Replan, report.level};
    case FixType::MultipleSkills:
      translations_.erase(key);
      force_decompose_.insert(key);
      return {StepKind::Replan, report.level};
  }
  return {StepKind::Replan, report.level};
}

void Learner::refine_classifiers(TaskOutcome& out) {
  if (!cfg_.use_classifiers) return;
  RefineOracle oracle = [&](const std::string& prompt) {
    return session_.ask(OracleRole::ClassifierRefine, build_prompt(OracleRole::ClassifierRefine, {{"report", prompt}}));
  };
  std::vector<std::string> order = registry_.order();
  for (const auto& name : order) {
    std::size_t from = registered_at_.count(name) ? registered_at_[name] : 0;
    if (from >= dataset_.size()) continue;
    std::vector<Transition> slice(dataset_.begin() + static_cast<std::ptrdiff_t>(from), dataset_.end());
    for (auto& t : slice) t.x_labels.reset();
    const ClassifierRegistry::Entry* e = registry_.find(name);
    try {
      RefineLoopResult r = refine_classifier(Candidate{e->program, e->theta}, slice, &registry_, oracle, cfg_.refine,
                                             cfg_.domain_description);
      registry_.put(r.chosen.program, r.chosen.theta);
      ClassifierSummary s{name, r.f_min, r.f_avg, {}};
      for (const auto& round : r.rounds) s.actions.push_back(to_string(round.action));
      out.classifiers.push_back(std::move(s));
    } catch (const NoRelevantAtoms&) {
    } catch (const Error& ex) {
      audit_->note("refine", name + ": " + ex.what());
    }
  }
}

TaskOutcome Learner::run_task(const TaskRequest& task, Environment& env) {
  TaskOutcome out;
  out.name = task.name;
  env_ = &env;
  task_ = &task;
  goal_ = {};
  tracked_ = {};
  start_interactions_ = env.interactions();
  replans_ = recoveries_ = realignments_ = 0;
  frames_.clear();
  root_.reset();
  auto calls_before = session_.call_counts();

  try {
    if (cfg_.budgets.interactions == 0) throw BudgetExhausted("interactions", "interaction budget is 0");
    ensure_classifiers(top_);
    domain_round();
    ensure_classifiers(top_);
    root_ = std::make_unique<HierarchyNode>();
    root_->level = 0;
    root_->domain = top_;
    root_->problem = Problem{task.name, top_.name, env.objects(), current_state(top_), goal_};
    frames_.push_back({root_.get(), std::nullopt, std::nullopt});
    run_node(*root_);
    out.success = goal_satisfied(current_state(top_), goal_);
    if (!out.success) out.failure = "goal not reached";
  } catch (const BudgetExhausted& e) {
    out.exhausted = e.budget();
    out.failure = e.what();
  } catch (const Error& e) {
    out.failure = e.what();
  }
  frames_.clear();
  if (root_) {
    root_->domain = top_;
    out.plan = root_->plan.actions;
  }
  refine_classifiers(out);

  out.goal = goal_;
  out.interactions = used_interactions();
  out.replans = replans_;
  out.recoveries = recoveries_;
  out.realignments = realignments_;
  for (const auto& [role, n] : session_.call_counts()) {
    std::size_t before = calls_before.count(role) ? calls_before.at(role) : 0;
    if (n > before) out.oracle_calls[role] = n - before;
  }
  audit_->note("task", task.name + (out.success ? " solved" : " failed: " + out.failure));
  env_ = nullptr;
  task_ = nullptr;
  return out;
}

}  // namespace domlearn
