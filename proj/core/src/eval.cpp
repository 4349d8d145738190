#include "domlearn/eval.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "domlearn/pddl.hpp"
#include "domlearn/scripted.hpp"

namespace domlearn {

namespace fs = std::filesystem;

namespace {

std::string read_text(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw Error("cannot read " + p.string());
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

const nlohmann::json& object_field(const nlohmann::json& j, const char* key) {
  static const nlohmann::json empty = nlohmann::json::object();
  auto it = j.find(key);
  return it == j.end() ? empty : *it;
}

std::string join(const std::vector<std::string>& v) {
  std::string out;
  for (const auto& s : v) out += (out.empty() ? "" : ", ") + s;
  return out;
}

std::map<std::string, std::string> predicate_map(const DomainModel& d) {
  std::map<std::string, std::string> m;
  for (const auto& p : d.predicates) m.emplace(canonical_name(p.name), p.name);
  return m;
}

GroundAtom rename_atom(const GroundAtom& a, const std::map<std::string, std::string>& names) {
  auto it = names.find(canonical_name(a.predicate));
  GroundAtom out = a;
  if (it != names.end()) out.predicate = it->second;
  return out;
}

Action rename_action(const Action& a, const DomainModel& d) {
  Action out = a;
  std::string c = canonical_name(a.op);
  for (const auto& op : d.operators) {
    if (canonical_name(op.name) == c) {
      out.op = op.name;
      break;
    }
  }
  return out;
}

double share_executable(const DomainModel& from, const Problem& p_from, const DomainModel& to, const Problem& p_to,
                        std::size_t walks, std::size_t max_len, std::mt19937_64& rng) {
  GroundedTask g(from, all_objects(from, p_from.objects), &p_from.init);
  StateBits init = g.encode(p_from.init);
  std::size_t ok = 0;
  for (std::size_t i = 0; i < walks; ++i) {
    Plan walk;
    for (const auto& a : sample_walk(g, init, max_len, rng)) walk.actions.push_back(rename_action(a, to));
    if (validate_plan(to, p_to, walk).executable()) ++ok;
  }
  return static_cast<double>(ok) / static_cast<double>(walks);
}

void check_vocabulary(const DomainModel& a, const DomainModel& b) {
  auto ma = predicate_map(a), mb = predicate_map(b);
  std::vector<std::string> unmatched;
  for (const auto& [c, name] : ma) {
    if (!mb.count(c)) unmatched.push_back(name);
  }
  for (const auto& [c, name] : mb) {
    if (!ma.count(c)) unmatched.push_back(name);
  }
  if (!unmatched.empty()) throw VocabularyMismatch(std::move(unmatched));
}

}  // namespace

VocabularyMismatch::VocabularyMismatch(std::vector<std::string> unmatched)
    : Error("predicates without a counterpart: " + join(unmatched)), unmatched_(std::move(unmatched)) {}

DomainModel restrict_operators(const DomainModel& d, const std::set<std::string>& operators) {
  DomainModel out = d;
  out.operators.clear();
  for (const auto& op : d.operators) {
    if (operators.count(canonical_name(op.name))) out.operators.push_back(op);
  }
  return out;
}

std::set<std::string> reference_operators(const DomainModel& reference, const Problem& task,
                                          const SearchOptions& options) {
  auto r = search_plan(reference, to_vocabulary(task, reference), options);
  if (r.status != SearchStatus::Solved) {
    throw TaskUnsolvableInReference("task " + task.name + " is " + std::string(to_string(r.status)) +
                                    " in the reference domain");
  }
  std::set<std::string> ops;
  for (const auto& a : r.plan.actions) ops.insert(canonical_name(a.op));
  return ops;
}

DomainModel bootstrap_task_domain(const DomainModel& d, const DomainModel& reference, const Problem& task,
                                  const SearchOptions& options) {
  return restrict_operators(d, reference_operators(reference, task, options));
}

std::vector<Action> sample_walk(const GroundedTask& g, const StateBits& init, std::size_t max_len,
                                std::mt19937_64& rng) {
  std::vector<Action> walk;
  StateBits s = init;
  const auto& by_op = g.ops_by_operator();
  std::vector<std::vector<std::size_t>> enabled;
  while (walk.size() < max_len) {
    enabled.clear();
    for (const auto& ids : by_op) {
      std::vector<std::size_t> ok;
      for (std::size_t i : ids) {
        if (g.applicable(g.ops()[i], s)) ok.push_back(i);
      }
      if (!ok.empty()) enabled.push_back(std::move(ok));
    }
    if (enabled.empty()) break;
    const auto& pick = enabled[std::uniform_int_distribution<std::size_t>(0, enabled.size() - 1)(rng)];
    std::size_t i = pick[std::uniform_int_distribution<std::size_t>(0, pick.size() - 1)(rng)];
    g.apply(g.ops()[i], s);
    walk.push_back(g.ops()[i].action);
  }
  return walk;
}

std::vector<Action> sample_walk(const DomainModel& d, const Problem& p, std::size_t max_len, std::mt19937_64& rng) {
  GroundedTask g(d, all_objects(d, p.objects), &p.init);
  return sample_walk(g, g.encode(p.init), max_len, rng);
}

Problem to_vocabulary(const Problem& p, const DomainModel& d) {
  auto names = predicate_map(d);
  Problem out = p;
  out.domain = d.name;
  out.init = {};
  for (const auto& a : p.init) {
    if (names.count(canonical_name(a.predicate))) out.init.insert(rename_atom(a, names));
  }
  out.goal = {};
  for (const auto& a : p.goal.positive) out.goal.positive.insert(rename_atom(a, names));
  for (const auto& a : p.goal.negative) out.goal.negative.insert(rename_atom(a, names));
  return out;
}

double harmonic_mean(double p, double q) { return p + q == 0.0 ? 0.0 : 2.0 * p * q / (p + q); }

void to_json(nlohmann::json& j, const EWReport& r) {
  auto tasks = nlohmann::json::array();
  for (const auto& t : r.tasks) {
    tasks.push_back({{"task", t.task},
                     {"learned_to_reference", t.learned_to_reference},
                     {"reference_to_learned", t.reference_to_learned},
                     {"harmonic", t.harmonic},
                     {"walk_length", t.walk_length},
                     {"solved", t.solved}});
  }
  j = {{"tasks", tasks}, {"aggregate", r.aggregate}, {"success_rate", r.success_rate}};
}

EWReport ew_score(const DomainModel& learned, const DomainModel& reference, const std::vector<Problem>& tasks,
                  const EWConfig& cfg) {
  if (cfg.walks == 0) throw Error("walk count must be at least 1");
  check_vocabulary(learned, reference);
  EWReport rep;
  std::size_t solved = 0;
  for (std::size_t t = 0; t < tasks.size(); ++t) {
    Problem p_ref = to_vocabulary(tasks[t], reference);
    Problem p_learned = to_vocabulary(tasks[t], learned);
    auto ref_plan = search_plan(reference, p_ref);
    if (ref_plan.status != SearchStatus::Solved) {
      throw TaskUnsolvableInReference("task " + tasks[t].name + " is " + std::string(to_string(ref_plan.status)) +
                                      " in the reference domain");
    }
    std::set<std::string> ops;
    for (const auto& a : ref_plan.plan.actions) ops.insert(canonical_name(a.op));
    DomainModel l = restrict_operators(learned, ops);
    DomainModel r = restrict_operators(reference, ops);

    EWTaskScore s;
    s.task = tasks[t].name;
    s.walk_length = cfg.max_len.value_or(ref_plan.plan.size() + 2);
    std::mt19937_64 rng_l(cfg.seed * 0x9E3779B97F4A7C15ull + 2 * t + 1);
    std::mt19937_64 rng_r(cfg.seed * 0x9E3779B97F4A7C15ull + 2 * t + 2);
    s.learned_to_reference = share_executable(l, p_learned, r, p_ref, cfg.walks, s.walk_length, rng_l);
    s.reference_to_learned = share_executable(r, p_ref, l, p_learned, cfg.walks, s.walk_length, rng_r);
    s.harmonic = harmonic_mean(s.learned_to_reference, s.reference_to_learned);

    auto mine = search_plan(learned, p_learned);
    if (mine.status == SearchStatus::Solved) {
      Plan in_ref;
      for (const auto& a : mine.plan.actions) in_ref.actions.push_back(rename_action(a, reference));
      s.solved = validate_plan(reference, p_ref, in_ref).valid();
    }
    if (s.solved) ++solved;
    rep.aggregate += s.harmonic;
    rep.tasks.push_back(std::move(s));
  }
  if (!tasks.empty()) {
    rep.aggregate /= static_cast<double>(tasks.size());
    rep.success_rate = static_cast<double>(solved) / static_cast<double>(tasks.size());
  }
  return rep;
}

Manifest Manifest::load(const std::string& path) {
  auto j = nlohmann::json::parse(read_text(path));
  fs::path dir = fs::path(path).parent_path();
  Manifest m;
  m.directory = dir.string();
  m.name = j.value("name", fs::path(path).stem().string());
  m.description = j.value("description", "");
  const auto& env = j.at("environment");
  m.kind = env.at("kind").get<std::string>();
  m.initial.name = m.name;
  m.initial.requirements = {":strips", ":typing", ":negative-preconditions", ":equality"};

  if (m.kind == "discrete") {
    m.reference = parse_domain(read_text(dir / env.at("domain").get<std::string>()));
    m.initial.types = m.reference->types;
  } else if (m.kind == "tabletop") {
    const auto& scene = env.value("scene", nlohmann::json("lamp"));
    m.scene = scene.is_string() ? lamp_scene() : scene.get<TabletopScene>();
    if (scene.is_string() && scene.get<std::string>() != "lamp") throw Error("unknown scene " + scene.dump());
    if (env.contains("noise")) {
      m.noise.sigma_pos = env["noise"].value("sigma_pos", 0.0);
      m.noise.sigma_ang = env["noise"].value("sigma_ang", 0.0);
    }
    for (const auto& t : {"robot", "table", "part"}) m.initial.types.add(t);
  } else {
    throw Error("unknown environment kind " + m.kind);
  }
  for (const auto& [child, parent] : object_field(j, "types").items()) {
    m.initial.types.add(child, parent.get<std::string>());
  }
  for (const auto& p : j.value("predicates", nlohmann::json::array())) m.initial.predicates.push_back(predicate_from_json(p));

  if (j.contains("budgets")) {
    m.budgets.interactions = j["budgets"].value("interactions", m.budgets.interactions);
    m.budgets.replans = j["budgets"].value("replans", m.budgets.replans);
  }
  m.script = j.value("script", "");
  m.transcript = j.value("transcript", "");

  for (const auto& t : j.at("tasks")) {
    ManifestTask task;
    task.name = t.at("name").get<std::string>();
    task.instruction = t.at("instruction").get<std::string>();
    if (t.contains("problem")) {
      if (!m.reference) throw Error("task " + task.name + ": problems need a discrete environment");
      task.problem = parse_problem(read_text(dir / t["problem"].get<std::string>()), *m.reference);
      task.problem->name = task.name;
      task.goal = task.problem->goal;
    }
    for (const auto& g : t.value("goal", nlohmann::json::array())) {
      task.goal.positive.insert(parse_ground_atom(g.get<std::string>()));
    }
    if (task.goal.empty()) throw Error("task " + task.name + " has no goal");
    m.tasks.push_back(std::move(task));
  }
  return m;
}

std::unique_ptr<Environment> Manifest::make_environment(const ManifestTask& task) const {
  if (kind == "discrete") {
    return std::make_unique<DiscreteEnv>(name, *reference, *task.problem, DiscreteEnv::default_skills(*reference));
  }
  return std::make_unique<TabletopEnv>(scene, noise);
}

bool RunReport::all_succeeded() const {
  return !tasks.empty() && std::all_of(tasks.begin(), tasks.end(), [](const TaskReport& t) {
           return t.outcome.success && t.goal_reached;
         });
}

void to_json(nlohmann::json& j, const RunReport& r) {
  auto tasks = nlohmann::json::array();
  for (const auto& t : r.tasks) {
    nlohmann::json o = t.outcome;
    o["goal_reached"] = t.goal_reached;
    tasks.push_back(std::move(o));
  }
  j = {{"manifest", r.manifest},
       {"oracle", r.oracle},
       {"seed", r.seed},
       {"budgets", {{"interactions", r.budgets.interactions}, {"replans", r.budgets.replans}}},
       {"tasks", tasks},
       {"all_succeeded", r.all_succeeded()},
       {"ew", r.ew ? nlohmann::json(*r.ew) : nlohmann::json(nullptr)},
       {"ew_error", r.ew_error},
       {"domain", r.domain},
       {"decompositions", r.decompositions},
       {"oracle_calls", r.oracle_calls},
       {"transcript", r.transcript}};
}

std::unique_ptr<Oracle> make_oracle(const std::string& kind, const Manifest& m) {
  if (kind == "scripted") {
    if (m.script.empty()) throw Error("manifest " + m.name + " has no script");
    auto k = ScriptedKnowledge::load((fs::path(m.directory) / m.script).string());
    if (k.description.empty()) k.description = m.description;
    k.reference = m.reference;
    for (const auto& t : m.tasks) {
      ScriptedTask st;
      st.instruction = t.instruction;
      st.goal = t.goal;
      if (t.problem && m.reference) {
        std::set<std::string> fixed;
        for (const auto& p : m.reference->predicates) {
          if (!p.state_based()) fixed.insert(p.name);
        }
        st.static_atoms = t.problem->init.restricted_to(fixed);
      }
      k.tasks.push_back(std::move(st));
    }
    return std::make_unique<ScriptedOracle>(std::move(k));
  }
  if (kind == "replay") {
    if (m.transcript.empty()) throw Error("manifest " + m.name + " has no transcript");
    return std::make_unique<ReplayOracle>(ReplayOracle::from_file((fs::path(m.directory) / m.transcript).string()));
  }
  if (kind == "live") return std::make_unique<LiveOracle>(LiveConfig::from_env());
  throw Error("unknown oracle backend " + kind);
}

RunReport run_learning(const Manifest& m, Oracle& oracle, const RunOptions& options) {
  RunReport rep;
  rep.manifest = m.name;
  rep.oracle = options.oracle;
  rep.seed = options.seed;
  rep.budgets = options.budgets.value_or(m.budgets);
  if (!options.record.empty()) {
    rep.transcript = options.record;
  } else if (options.oracle == "replay") {
    rep.transcript = m.transcript;
  }

  std::ofstream record;
  if (!options.record.empty()) {
    record.open(options.record, std::ios::trunc);
    if (!record) throw Error("cannot write " + options.record);
  }
  std::ostringstream audit_text;
  AuditLog audit(&audit_text);
  OracleSession session(oracle, options.record.empty() ? nullptr : &record);

  LearnerConfig cfg;
  cfg.budgets = rep.budgets;
  cfg.noise_seed = options.seed;
  cfg.domain_description = m.description;
  cfg.use_classifiers = m.kind == "tabletop";
  Learner learner(session, cfg, m.initial, &audit);

  auto* scripted = dynamic_cast<ScriptedOracle*>(&oracle);
  for (const auto& task : m.tasks) {
    auto env = m.make_environment(task);
    if (scripted) scripted->set_environment(env.get());
    TaskReport t;
    t.outcome = learner.run_task({task.name, task.instruction}, *env);
    t.goal_reached = goal_satisfied(env->ground_truth_atoms(), task.goal);
    if (scripted) scripted->set_environment(nullptr);
    rep.tasks.push_back(std::move(t));

    if (!options.output.empty() && learner.hierarchy()) {
      save_hierarchy(*learner.hierarchy(), (fs::path(options.output) / "hierarchy" / task.name).string());
    }
  }

  rep.domain = print_domain(learner.domain());
  for (const auto& [key, d] : learner.decompositions()) rep.decompositions.push_back(key.str());
  rep.oracle_calls = session.call_counts();

  if (m.reference) {
    std::vector<Problem> problems;
    for (const auto& t : m.tasks) {
      if (t.problem) problems.push_back(*t.problem);
    }
    try {
      rep.ew = ew_score(learner.domain(), *m.reference, problems, {options.ew_walks, std::nullopt, options.seed});
    } catch (const Error& e) {
      rep.ew_error = e.what();
    }
  }

  if (!options.output.empty()) {
    fs::path out(options.output);
    fs::create_directories(out);
    std::ofstream(out / "domain.pddl") << rep.domain;
    std::ofstream(out / "audit.jsonl") << audit_text.str();
    if (learner.classifiers().size() > 0) learner.classifiers().save((out / "classifiers").string());
  }
  return rep;
}

}  // namespace domlearn
