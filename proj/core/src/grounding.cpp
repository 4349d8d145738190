#include "domlearn/grounding.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <random>
#include <sstream>

#include <nlohmann/json.hpp>

namespace domlearn {

namespace {

nlohmann::json atoms_json(const SymbolicState& s) {
  auto a = nlohmann::json::array();
  for (const auto& atom : s) a.push_back(atom.str());
  return a;
}

SymbolicState atoms_from(const nlohmann::json& j) {
  SymbolicState s;
  for (const auto& a : j) s.insert(parse_ground_atom(a.get<std::string>()));
  return s;
}

// Cached candidate atoms per sample; evaluates one θ at a time.
class Scorer {
 public:
  Scorer(const ClassifierProgram& c, const std::vector<Transition>& data, const ClassifierRegistry* reg)
      : c_(c), reg_(reg), samples_(labeled_samples(data)) {
    for (const auto& s : samples_) {
      std::vector<GroundAtom> atoms = candidate_atoms(c, *s.state);
      for (const auto& a : *s.labels) {
        if (a.predicate == c.predicate && std::find(atoms.begin(), atoms.end(), a) == atoms.end()) {
          atoms.push_back(a);
        }
      }
      atoms_.push_back(std::move(atoms));
    }
  }

  bool predict(const GroundAtom& a, const WorldState& w, const HyperAssignment& theta) const {
    try {
      return eval_classifier(c_, a, w, theta, reg_);
    } catch (const NumericDomainError&) {
      return false;
    } catch (const MissingObject&) {
      return false;
    }
  }

  std::map<GroundAtom, Confusion> confusion(const HyperAssignment& theta) const {
    std::map<GroundAtom, Confusion> out;
    for (std::size_t i = 0; i < samples_.size(); ++i) {
      for (const auto& a : atoms_[i]) {
        bool p = predict(a, *samples_[i].state, theta);
        bool l = samples_[i].labels->contains(a);
        Confusion& c = out[a];
        if (p && l) ++c.tp;
        else if (p) ++c.fp;
        else if (l) ++c.fn;
        else ++c.tn;
      }
    }
    return out;
  }

  std::optional<F1Report> report(const HyperAssignment& theta) const {
    F1Report r;
    r.confusion = confusion(theta);
    double sum = 0.0;
    r.f_min = 1.0;
    for (const auto& [atom, c] : r.confusion) {
      if (c.tp + c.fp + c.fn == 0) continue;
      double f = f1_from(c);
      r.per_atom[atom] = f;
      sum += f;
      r.f_min = std::min(r.f_min, f);
    }
    if (r.per_atom.empty()) return std::nullopt;
    r.f_avg = sum / static_cast<double>(r.per_atom.size());
    return r;
  }

  double score(const HyperAssignment& theta) const {
    auto r = report(theta);
    return r ? r->f_avg : 1.0;
  }

  const std::vector<Sample>& samples() const { return samples_; }
  const std::vector<std::vector<GroundAtom>>& atoms() const { return atoms_; }

 private:
  const ClassifierProgram& c_;
  const ClassifierRegistry* reg_;
  std::vector<Sample> samples_;
  std::vector<std::vector<GroundAtom>> atoms_;
};

double unit_interval(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

double relative_change(double a, double b, double ref) {
  return ref == 0.0 ? std::abs(a - b) : std::abs(a - b) / std::abs(ref);
}

}  // namespace

void to_json(nlohmann::json& j, const Transition& t) {
  j = {{"x", t.x}, {"skill", t.skill.str()}, {"x_next", t.x_next}};
  if (t.labels) j["labels"] = atoms_json(*t.labels);
  if (t.x_labels) j["x_labels"] = atoms_json(*t.x_labels);
}

void from_json(const nlohmann::json& j, Transition& t) {
  t = Transition{};
  t.x = j.at("x").get<WorldState>();
  t.skill = parse_skill_call(j.at("skill").get<std::string>());
  t.x_next = j.at("x_next").get<WorldState>();
  if (j.contains("labels") && !j["labels"].is_null()) t.labels = atoms_from(j["labels"]);
  if (j.contains("x_labels") && !j["x_labels"].is_null()) t.x_labels = atoms_from(j["x_labels"]);
}

std::vector<Transition> read_transitions(std::istream& in) {
  std::vector<Transition> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(nlohmann::json::parse(line).get<Transition>());
    } catch (const nlohmann::json::exception& e) {
      throw SyntaxError(std::string("bad transition record: ") + e.what(), n, 1);
    }
  }
  return out;
}

void write_transitions(std::ostream& out, const std::vector<Transition>& data) {
  for (const auto& t : data) out << nlohmann::json(t).dump() << "\n";
}

PseudoLabelResult pseudo_label(std::vector<Transition> batch, const Labeler& labeler, const DedupConfig& cfg) {
  if (!(cfg.tau_sim > 0.0)) throw Error("tau_sim must be positive");
  PseudoLabelResult r;
  std::vector<std::size_t> reps;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    Transition& t = batch[i];
    std::optional<std::size_t> cls;
    for (std::size_t k = 0; k < reps.size(); ++k) {
      const Transition& rep = batch[reps[k]];
      if (rep.skill == t.skill && state_distance(rep.x_next, t.x_next) < cfg.tau_sim) {
        cls = k;
        break;
      }
    }
    if (!cls) {
      if (!t.labels) {
        if (!labeler) throw OracleUnavailable("no pseudo-labeler configured");
        t.labels = labeler(t.x, t.skill, t.x_next);
        ++r.oracle_calls;
      }
      cls = reps.size();
      reps.push_back(i);
    } else if (!t.labels) {
      t.labels = batch[reps[*cls]].labels;
    }
    r.class_of.push_back(*cls);
  }
  r.data = std::move(batch);
  return r;
}

std::vector<Sample> labeled_samples(const std::vector<Transition>& data) {
  std::vector<Sample> out;
  for (const auto& t : data) {
    if (t.x_labels) out.push_back({&t.x, &*t.x_labels});
    if (t.labels) out.push_back({&t.x_next, &*t.labels});
  }
  return out;
}

double f1_from(const Confusion& c) {
  std::size_t denom = 2 * c.tp + c.fp + c.fn;
  return denom == 0 ? 0.0 : 2.0 * static_cast<double>(c.tp) / static_cast<double>(denom);
}

F1Report f1_scores(const ClassifierProgram& c, const HyperAssignment& theta, const std::vector<Transition>& data,
                   const ClassifierRegistry* registry) {
  Scorer s(c, data, registry);
  auto r = s.report(theta);
  if (!r) throw NoRelevantAtoms("no atom of " + c.predicate + " is true in the labels or the predictions");
  return *r;
}

double average_f1(const ClassifierProgram& c, const HyperAssignment& theta, const std::vector<Transition>& data,
                  const ClassifierRegistry* registry) {
  return Scorer(c, data, registry).score(theta);
}

const char* to_string(RefineAction a) {
  switch (a) {
    case RefineAction::Keep: return "keep";
    case RefineAction::OptimizeHypers: return "optimize-hypers";
    case RefineAction::OracleRefine: return "oracle-refine";
  }
  return "?";
}

RefineAction refine_decision(double f_min, double tau_hp, double tau_llm) {
  if (f_min < tau_llm) return RefineAction::OracleRefine;
  if (f_min < tau_hp) return RefineAction::OptimizeHypers;
  return RefineAction::Keep;
}

double robustness(const HyperAssignment& theta, const std::vector<ScoredAssignment>& pool,
                  const HyperAssignment& reference, std::vector<std::string>* warnings) {
  auto self = std::find_if(pool.begin(), pool.end(), [&](const ScoredAssignment& s) { return s.theta == theta; });
  if (self == pool.end()) throw Error("robustness: assignment is not in the pool");
  if (warnings) {
    for (const auto& [k, v] : reference) {
      if (v == 0.0) warnings->push_back("hyperparameter '" + k + "' has a zero default; using absolute change");
    }
  }
  double r = std::numeric_limits<double>::infinity();
  for (const auto& other : pool) {
    if (other.score == self->score) continue;
    double inner = std::numeric_limits<double>::infinity();
    for (const auto& [k, v] : theta) {
      auto ref = reference.find(k);
      double d = ref == reference.end() ? 1.0 : ref->second;
      inner = std::min(inner, relative_change(other.theta.at(k), v, d));
    }
    r = std::min(r, inner);
  }
  return r;
}

OptimizeResult optimize_hypers(const ClassifierProgram& c, const std::vector<Transition>& data,
                               const SearchConfig& cfg, const ClassifierRegistry* registry) {
  if (c.hypers.empty()) throw EmptySearchSpace(c.predicate + " has no hyperparameters");
  HyperAssignment ref = cfg.reference ? *cfg.reference : c.defaults();
  std::vector<std::pair<std::string, SearchBounds>> space;
  for (const auto& h : c.hypers) {
    double d = ref.at(h.name);
    SearchBounds b;
    auto it = cfg.bounds.find(h.name);
    if (it != cfg.bounds.end()) {
      b = it->second;
    } else if (d == 0.0) {
      b = {-1.0, 1.0};
    } else {
      b = {std::min(d / 10, d * 10), std::max(d / 10, d * 10)};
    }
    if (!std::isfinite(b.lo) || !std::isfinite(b.hi) || b.lo > b.hi) {
      throw EmptySearchSpace("empty search interval for '" + h.name + "'");
    }
    space.emplace_back(h.name, b);
  }

  Scorer scorer(c, data, registry);
  OptimizeResult out;
  out.pool.push_back({ref, scorer.score(ref)});
  std::mt19937_64 rng(cfg.seed);
  for (std::size_t i = 0; i < cfg.samples; ++i) {
    HyperAssignment t;
    for (const auto& [name, b] : space) {
      double u = unit_interval(rng);
      double v;
      if (b.lo > 0.0) {
        v = std::exp(std::log(b.lo) + u * (std::log(b.hi) - std::log(b.lo)));
      } else if (b.hi < 0.0) {
        v = -std::exp(std::log(-b.hi) + u * (std::log(-b.lo) - std::log(-b.hi)));
      } else {
        v = b.lo + u * (b.hi - b.lo);
      }
      t[name] = v;
    }
    out.pool.push_back({t, scorer.score(t)});
  }

  double best = -1.0;
  for (const auto& s : out.pool) best = std::max(best, s.score);
  std::vector<std::size_t> top;
  std::vector<double> rob;
  double max_r = -1.0;
  for (std::size_t i = 0; i < out.pool.size(); ++i) {
    if (out.pool[i].score != best) continue;
    double r = robustness(out.pool[i].theta, out.pool, ref, top.empty() ? &out.warnings : nullptr);
    top.push_back(i);
    rob.push_back(r);
    max_r = std::max(max_r, r);
  }
  std::size_t chosen = top.front();
  double chosen_dist = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < top.size(); ++k) {
    if (rob[k] != max_r) continue;
    double dist = 0.0;
    for (const auto& [name, v] : out.pool[top[k]].theta) dist += relative_change(v, ref.at(name), ref.at(name));
    if (dist < chosen_dist) {
      chosen_dist = dist;
      chosen = top[k];
    }
  }
  out.theta = out.pool[chosen].theta;
  out.score = out.pool[chosen].score;
  out.robustness = max_r;
  return out;
}

AcceptDecision accept_refinement(const Candidate& old_c, const Candidate& new_c,
                                 const std::vector<Transition>& data, const ClassifierRegistry* registry) {
  AcceptDecision d;
  d.old_score = average_f1(old_c.program, old_c.theta, data, registry);
  d.new_score = average_f1(new_c.program, new_c.theta, data, registry);
  d.keep_new = d.new_score >= d.old_score;
  return d;
}

std::vector<Mismatch> find_mismatches(const ClassifierProgram& c, const HyperAssignment& theta,
                                      const std::vector<Transition>& data, const ClassifierRegistry* registry,
                                      std::size_t limit) {
  Scorer s(c, data, registry);
  std::vector<Mismatch> out;
  for (std::size_t i = 0; i < s.samples().size() && out.size() < limit; ++i) {
    const Sample& smp = s.samples()[i];
    for (const auto& a : s.atoms()[i]) {
      bool p = s.predict(a, *smp.state, theta);
      bool l = smp.labels->contains(a);
      if (p != l) {
        out.push_back({i, a, p, l, smp.state});
        break;
      }
    }
  }
  return out;
}

std::string refinement_prompt(const ClassifierProgram& c, const std::vector<Mismatch>& mismatches,
                              const ClassifierRegistry* registry, const std::string& domain_description) {
  auto verdict = [](const GroundAtom& a, bool v) { return v ? a.str() : "(not " + a.str() + ")"; };
  std::ostringstream out;
  if (!domain_description.empty()) out << domain_description << "\n\n";
  out << dsl_reference() << "\n";
  out << print_classifier(c) << "\n";
  out << "This is a function that grounds the PDDL predicate. However, we evaluated it against a dataset "
         "labeled by an VLM and found following errors:\n";
  for (std::size_t i = 0; i < mismatches.size(); ++i) {
    const Mismatch& m = mismatches[i];
    out << i + 1 << ".\n";
    out << "- VLM predicates: " << verdict(m.atom, m.labeled) << "\n";
    out << "- Grounder predicates: " << verdict(m.atom, m.predicted) << "\n";
    out << "- Referenced Predicate Evals:\n";
    if (registry) {
      for (const auto& dep : c.dependencies) {
        const ClassifierRegistry::Entry* e = registry->find(dep);
        if (!e) continue;
        for (const auto& a : candidate_atoms(e->program, *m.state)) {
          bool v = false;
          try {
            v = eval_classifier(e->program, a, *m.state, e->theta, registry);
          } catch (const NumericDomainError&) {
            continue;
          }
          out << "    - " << a.str() << ": " << (v ? "True" : "False") << "\n";
        }
      }
    }
    out << "\n- Variables:\n";
    std::istringstream vars(dump_variables(*m.state));
    std::string line;
    while (std::getline(vars, line)) out << "    " << line << "\n";
    out << "\n";
  }
  out << "Your response should contain three sections\n"
         "[START OUTLINE]\n"
         "# Error Analysis\n"
         "[evaluate the errors by tracing the values and result in the code.]\n"
         "# Suggested Fixes\n"
         "[list all checks in the code that contributed to the error. For every of them, verify they are required "
         "given information about the predicate. Consider also new checks that should be implemented.]\n"
         "# Fixed Code\n"
         "[insert your suggested changes and output the updated classifier program. The fixes should correct the "
         "program to fix as many errors as possible while not violating the predicate definition and "
         "description.]\n"
         "# Grounder Description\n"
         "[insert a description what the grounder tests for. It should be short but complete.]\n"
         "[END OUTLINE]\n";
  return out.str();
}

std::optional<std::string> fixed_code_section(const std::string& response) {
  std::istringstream in(response);
  std::string line;
  bool inside = false;
  bool in_fence = false;
  bool saw_fence = false;
  std::string plain, fenced;
  auto is_heading = [](const std::string& l) {
    for (const char* h : {"# Grounder Description", "# Error Analysis", "# Suggested Fixes", "[END OUTLINE]"}) {
      if (l.rfind(h, 0) == 0) return true;
    }
    return false;
  };
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!inside) {
      if (line.rfind("# Fixed Code", 0) == 0) inside = true;
      continue;
    }
    std::string trimmed = line.substr(std::min(line.find_first_not_of(" \t"), line.size()));
    if (trimmed.rfind("```", 0) == 0) {
      if (in_fence) {
        in_fence = false;
        if (saw_fence) break;
      } else if (!saw_fence) {
        in_fence = true;
        saw_fence = true;
        fenced.clear();
      }
      continue;
    }
    if (in_fence) {
      fenced += line + "\n";
      continue;
    }
    if (is_heading(line)) break;
    plain += line + "\n";
  }
  if (!inside) return std::nullopt;
  std::string code = saw_fence ? fenced : plain;
  if (code.find_first_not_of(" \t\r\n") == std::string::npos) return std::nullopt;
  return code;
}

RefineOutcome oracle_refine(const Candidate& current, const std::vector<Transition>& data,
                            const ClassifierRegistry* registry, const RefineOracle& oracle,
                            const std::string& domain_description, std::size_t max_attempts) {
  std::vector<Mismatch> mismatches = find_mismatches(current.program, current.theta, data, registry);
  if (mismatches.empty()) throw Error("oracle_refine: classifier agrees with every label");
  std::string prompt = refinement_prompt(current.program, mismatches, registry, domain_description);
  RefineOutcome out;
  out.chosen = current;
  std::string last_error;
  for (std::size_t attempt = 0; attempt < max_attempts; ++attempt) {
    std::string request = prompt;
    if (!last_error.empty()) {
      request += "\nThe previous response could not be used: " + last_error + "\nPlease answer again.\n";
    }
    std::string response = oracle(request);
    ++out.oracle_calls;
    auto code = fixed_code_section(response);
    if (!code) {
      last_error = "missing \"# Fixed Code\" section";
      continue;
    }
    try {
      ClassifierProgram p = parse_classifier(*code, registry);
      if (p.predicate != current.program.predicate || p.params.size() != current.program.params.size()) {
        last_error = "the fixed program must keep the signature " + current.program.predicate + "/" +
                     std::to_string(current.program.params.size());
        continue;
      }
      Candidate fresh{p, p.defaults()};
      out.decision = accept_refinement(current, fresh, data, registry);
      out.accepted = out.decision.keep_new;
      if (out.accepted) out.chosen = std::move(fresh);
      return out;
    } catch (const Error& e) {
      last_error = e.what();
    }
  }
  throw UnparseableResponse("classifier refinement for " + current.program.predicate + " failed after " +
                            std::to_string(max_attempts) + " attempts: " + last_error);
}

RefineLoopResult refine_classifier(const Candidate& start, const std::vector<Transition>& data,
                                   const ClassifierRegistry* registry, const RefineOracle& oracle,
                                   const RefineLoopConfig& cfg, const std::string& domain_description) {
  RefineLoopResult out;
  out.chosen = start;
  auto score = [&](const Candidate& c) -> std::pair<double, double> {
    Scorer s(c.program, data, registry);
    auto r = s.report(c.theta);
    if (!r) return {1.0, 1.0};
    return {r->f_min, r->f_avg};
  };
  for (std::size_t round = 0; round < cfg.max_rounds; ++round) {
    auto [f_min, f_avg] = score(out.chosen);
    RefineRound rec;
    rec.f_min = f_min;
    rec.f_avg = f_avg;
    rec.action = refine_decision(f_min, cfg.tau_hp, cfg.tau_llm);
    if (rec.action == RefineAction::Keep) {
      out.rounds.push_back(rec);
      break;
    }
    if (rec.action == RefineAction::OptimizeHypers) {
      if (out.chosen.program.hypers.empty()) {
        out.rounds.push_back(rec);
        break;
      }
      SearchConfig search = cfg.search;
      search.reference = out.chosen.theta;
      search.seed = cfg.search.seed + round;
      OptimizeResult r = optimize_hypers(out.chosen.program, data, search, registry);
      out.warnings.insert(out.warnings.end(), r.warnings.begin(), r.warnings.end());
      rec.changed = r.theta != out.chosen.theta && r.score >= f_avg;
      if (rec.changed) out.chosen.theta = r.theta;
    } else {
      if (!oracle) {
        out.rounds.push_back(rec);
        break;
      }
      try {
        RefineOutcome r = oracle_refine(out.chosen, data, registry, oracle, domain_description);
        out.oracle_calls += r.oracle_calls;
        rec.changed = r.accepted && (print_classifier(r.chosen.program) != print_classifier(out.chosen.program) ||
                                     r.chosen.theta != out.chosen.theta);
        out.chosen = r.chosen;
      } catch (const UnparseableResponse& e) {
        out.oracle_calls += 2;
        out.warnings.push_back(e.what());
      }
    }
    out.rounds.push_back(rec);
    if (!rec.changed) break;
  }
  auto [f_min, f_avg] = score(out.chosen);
  out.f_min = f_min;
  out.f_avg = f_avg;
  return out;
}

}  // namespace domlearn
