// domlearn command-line entry points. Every subcommand prints one JSON
// document on stdout.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "domlearn/eval.hpp"
#include "domlearn/grounding.hpp"
#include "domlearn/pddl.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace domlearn;

namespace {

std::string read_text(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read " + path);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void emit(const json& j, const std::string& path) {
  if (path.empty()) {
    std::cout << j.dump(2) << "\n";
  } else {
    std::ofstream(path) << j.dump(2) << "\n";
  }
}

struct LearnArgs {
  std::string manifest;
  std::string oracle = "scripted";
  std::size_t interactions = 0;
  std::size_t replans = 0;
  std::uint64_t seed = 0;
  std::size_t repeats = 1;
  std::size_t walks = 500;
  std::string record;
  std::string out;
  std::string report;
};

int learn(const LearnArgs& a, const std::string& transcript_override = {}) {
  Manifest m = Manifest::load(a.manifest);
  if (!transcript_override.empty()) m.transcript = fs::absolute(transcript_override).string();
  RunOptions opt;
  opt.oracle = a.oracle;
  opt.record = a.record;
  opt.output = a.out;
  opt.ew_walks = a.walks;
  if (a.interactions || a.replans) {
    opt.budgets = Budgets{a.interactions ? a.interactions : m.budgets.interactions,
                          a.replans ? a.replans : m.budgets.replans};
  }

  json runs = json::array();
  bool ok = true;
  double ew_sum = 0.0, solved_sum = 0.0;
  for (std::size_t r = 0; r < a.repeats; ++r) {
    opt.seed = a.seed + r;
    auto oracle = make_oracle(a.oracle, m);
    RunReport rep = run_learning(m, *oracle, opt);
    ok = ok && rep.all_succeeded();
    ew_sum += rep.ew ? rep.ew->aggregate : 0.0;
    std::size_t solved = std::count_if(rep.tasks.begin(), rep.tasks.end(),
                                       [](const TaskReport& t) { return t.outcome.success && t.goal_reached; });
    solved_sum += rep.tasks.empty() ? 0.0 : static_cast<double>(solved) / static_cast<double>(rep.tasks.size());
    runs.push_back(rep);
  }
  if (a.repeats == 1) {
    emit(runs[0], a.report);
  } else {
    double n = static_cast<double>(a.repeats);
    emit({{"runs", runs}, {"mean_ew", ew_sum / n}, {"mean_tasks_solved", solved_sum / n}}, a.report);
  }
  return ok ? 0 : 1;
}

std::vector<Problem> load_tasks(const std::string& dir, const DomainModel& d) {
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.path().extension() == ".pddl") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<Problem> out;
  for (const auto& f : files) {
    Problem p = parse_problem(read_text(f.string()), d);
    p.name = f.stem().string();
    out.push_back(std::move(p));
  }
  return out;
}

int validate(const std::string& domain, const std::string& problem, const std::string& plan) {
  DomainModel d = parse_domain(read_text(domain));
  std::vector<std::string> warnings;
  Problem p = parse_problem(read_text(problem), d, &warnings);
  Plan pl{parse_plan(read_text(plan)), PlanProvenance::Search};
  ValidationTrace t = validate_plan(d, p, pl);
  json j = {{"valid", t.valid()},
            {"executable", t.executable()},
            {"goal_achieved", t.goal_achieved},
            {"steps", pl.size()},
            {"ok_steps", t.ok_steps()},
            {"warnings", warnings}};
  if (auto f = t.first_failure()) {
    const auto& s = t.steps[*f];
    j["failure"] = {{"step", *f},
                    {"action", s.action.str()},
                    {"status", s.status == StepStatus::InvalidAction ? "invalid-action" : "precondition-failure"},
                    {"missing", s.missing}};
  }
  emit(j, "");
  return t.valid() ? 0 : 1;
}

int ew(const std::string& learned, const std::string& reference, const std::string& tasks, std::size_t walks,
       std::uint64_t seed, std::size_t max_len) {
  DomainModel l = parse_domain(read_text(learned));
  DomainModel r = parse_domain(read_text(reference));
  EWConfig cfg{walks, std::nullopt, seed};
  if (max_len) cfg.max_len = max_len;
  emit(json(ew_score(l, r, load_tasks(tasks, r), cfg)), "");
  return 0;
}

int optimize(const std::string& registry_dir, const std::string& dataset, const std::vector<std::string>& only,
             std::size_t samples, std::uint64_t seed, bool write) {
  ClassifierRegistry reg = ClassifierRegistry::load(registry_dir);
  std::ifstream in(dataset);
  if (!in) throw Error("cannot read " + dataset);
  auto data = read_transitions(in);
  json out = json::array();
  for (const auto& name : reg.order()) {
    if (!only.empty() && std::find(only.begin(), only.end(), name) == only.end()) continue;
    const auto* e = reg.find(name);
    SearchConfig cfg;
    cfg.samples = samples;
    cfg.seed = seed;
    cfg.reference = e->theta;
    double before = average_f1(e->program, e->theta, data, &reg);
    OptimizeResult r = optimize_hypers(e->program, data, cfg, &reg);
    out.push_back({{"predicate", name},
                   {"before", before},
                   {"score", r.score},
                   {"robustness", r.robustness},
                   {"theta", r.theta},
                   {"warnings", r.warnings}});
    if (write && r.score > before) reg.set_theta(name, r.theta);
  }
  if (write) reg.save(registry_dir);
  emit(out, "");
  return 0;
}

int replay(const std::string& transcript_path) {
  std::ifstream in(transcript_path);
  if (!in) throw Error("cannot read " + transcript_path);
  auto exchanges = read_transcript(in);
  std::map<std::string, std::size_t> roles;
  json bad = json::array();
  for (const auto& e : exchanges) {
    ++roles[std::string(to_string(e.role))];
    if (request_digest(e.role, e.request) != e.digest) bad.push_back(e.seq);
  }
  emit({{"exchanges", exchanges.size()}, {"roles", roles}, {"digest_mismatches", bad}}, "");
  return bad.empty() ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hierarchical symbolic domain learning"};
  app.require_subcommand(1);

  LearnArgs la;
  auto* learn_cmd = app.add_subcommand("learn", "Learn the tasks of a manifest");
  learn_cmd->add_option("manifest", la.manifest)->required()->check(CLI::ExistingFile);
  learn_cmd->add_option("--oracle", la.oracle)->check(CLI::IsMember({"replay", "scripted", "live"}));
  learn_cmd->add_option("--budget-interactions", la.interactions, "0 keeps the manifest value");
  learn_cmd->add_option("--budget-replans", la.replans, "0 keeps the manifest value");
  learn_cmd->add_option("--seed", la.seed);
  learn_cmd->add_option("--repeats", la.repeats)->check(CLI::PositiveNumber);
  learn_cmd->add_option("--walks", la.walks)->check(CLI::PositiveNumber);
  learn_cmd->add_option("--record", la.record, "Write the oracle transcript here");
  learn_cmd->add_option("--out", la.out, "Directory for the hierarchy, classifiers and audit log");
  learn_cmd->add_option("--report", la.report, "Write the report here instead of stdout");

  std::string learned, reference, tasks;
  std::size_t walks = 500, max_len = 0;
  std::uint64_t ew_seed = 0;
  auto* ew_cmd = app.add_subcommand("ew", "Exploration-walk similarity of two domains");
  ew_cmd->add_option("learned", learned)->required()->check(CLI::ExistingFile);
  ew_cmd->add_option("reference", reference)->required()->check(CLI::ExistingFile);
  ew_cmd->add_option("--tasks", tasks)->required()->check(CLI::ExistingDirectory);
  ew_cmd->add_option("--walks", walks)->check(CLI::PositiveNumber);
  ew_cmd->add_option("--seed", ew_seed);
  ew_cmd->add_option("--max-len", max_len, "0 uses the reference plan length + 2");

  std::string vdomain, vproblem, vplan;
  auto* val_cmd = app.add_subcommand("validate", "Validate a plan");
  val_cmd->add_option("domain", vdomain)->required()->check(CLI::ExistingFile);
  val_cmd->add_option("problem", vproblem)->required()->check(CLI::ExistingFile);
  val_cmd->add_option("plan", vplan)->required()->check(CLI::ExistingFile);

  std::string registry, dataset;
  std::vector<std::string> only;
  std::size_t samples = 200;
  std::uint64_t opt_seed = 0;
  bool write = false;
  auto* cls_cmd = app.add_subcommand("classify", "Classifier tools");
  cls_cmd->require_subcommand(1);
  auto* opt_cmd = cls_cmd->add_subcommand("optimize", "Search classifier hyperparameters on a dataset");
  opt_cmd->add_option("registry", registry)->required()->check(CLI::ExistingDirectory);
  opt_cmd->add_option("dataset", dataset)->required()->check(CLI::ExistingFile);
  opt_cmd->add_option("--predicate", only);
  opt_cmd->add_option("--samples", samples)->check(CLI::PositiveNumber);
  opt_cmd->add_option("--seed", opt_seed);
  opt_cmd->add_flag("--write", write, "Store improved hyperparameters in the registry");

  std::string transcript;
  LearnArgs ra;
  auto* replay_cmd = app.add_subcommand("replay", "Check a transcript, or rerun a manifest against it");
  replay_cmd->add_option("transcript", transcript)->required()->check(CLI::ExistingFile);
  replay_cmd->add_option("--manifest", ra.manifest)->check(CLI::ExistingFile);
  replay_cmd->add_option("--seed", ra.seed);
  replay_cmd->add_option("--report", ra.report);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*learn_cmd) return learn(la);
    if (*ew_cmd) return ew(learned, reference, tasks, walks, ew_seed, max_len);
    if (*val_cmd) return validate(vdomain, vproblem, vplan);
    if (*opt_cmd) return optimize(registry, dataset, only, samples, opt_seed, write);
    if (*replay_cmd) {
      if (ra.manifest.empty()) return replay(transcript);
      ra.oracle = "replay";
      return learn(ra, transcript);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
