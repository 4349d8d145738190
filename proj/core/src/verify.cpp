#include "domlearn/verify.hpp"

#include <ostream>

#include <nlohmann/json.hpp>

namespace domlearn {

namespace {

nlohmann::json atoms_json(const SymbolicState& s) {
  auto a = nlohmann::json::array();
  for (const auto& x : s) a.push_back(x.str());
  return a;
}

bool relevant(const std::string& predicate, const std::set<std::string>& state_based) {
  return state_based.count(predicate) != 0;
}

}  // namespace

std::string_view to_string(FailurePhase p) {
  switch (p) {
    case FailurePhase::PreconditionCheck: return "PreconditionCheck";
    case FailurePhase::SkillException: return "SkillException";
    case FailurePhase::EffectMismatch: return "EffectMismatch";
  }
  return "?";
}

void to_json(nlohmann::json& j, const FailureReport& r) {
  j = {{"action", r.action.str()},
       {"skill", r.skill.str()},
       {"phase", std::string(to_string(r.phase))},
       {"level", r.level},
       {"path", r.path},
       {"state_before", atoms_json(r.state_before)}};
  if (r.phase == FailurePhase::EffectMismatch) {
    j["expected"] = {{"add", atoms_json(r.expected.add)}, {"del", atoms_json(r.expected.del)}};
    j["observed"] = {{"add", atoms_json(r.observed.add)}, {"del", atoms_json(r.observed.del)}};
  }
  if (!r.exception.empty()) j["exception"] = r.exception;
  if (!r.missing.empty()) j["missing"] = r.missing;
}

std::string change_lines(const EffectSet& e) {
  std::string out;
  for (const auto& a : e.del) out += "- " + a.str() + ": True -> False\n";
  for (const auto& a : e.add) out += "- " + a.str() + ": False -> True\n";
  if (out.empty()) out = "- (no change)\n";
  return out;
}

std::string failure_text(const FailureReport& r) {
  switch (r.phase) {
    case FailurePhase::PreconditionCheck: {
      std::string out = "Precondition Failure:\n";
      for (const auto& m : r.missing) out += "- " + m + " does not hold\n";
      return out;
    }
    case FailurePhase::SkillException: return "Skill Exception:\n" + r.exception + "\n";
    case FailurePhase::EffectMismatch: {
      std::string out = "Execution Failure:\n";
      if (!r.exception.empty()) out += r.exception + "\n";
      out += "Expected Change:\n" + change_lines(r.expected) + "\nGround Truth Change:\n" + change_lines(r.observed);
      return out;
    }
  }
  return "";
}

VerifyResult verify_leaf(const Action& a, const SkillCall& skill, Environment& env, const DomainModel& domain,
                         const Perceiver& perceive, const std::set<std::string>& state_based,
                         std::uint64_t noise_seed) {
  FailureReport report;
  report.action = a;
  report.skill = skill;

  WorldState x = env.observe(noise_seed);
  SymbolicState s = perceive(x).restricted_to(state_based);
  report.state_before = s;

  GroundOperator g = instantiate(domain, a, &env.objects());
  GroundOperator checked = g;
  checked.pre_pos = g.pre_pos.restricted_to(state_based);
  checked.pre_neg = g.pre_neg.restricted_to(state_based);
  checked.pre_neg_wildcard.clear();
  for (const auto& w : g.pre_neg_wildcard) {
    if (relevant(w.predicate, state_based)) checked.pre_neg_wildcard.push_back(w);
  }
  std::vector<std::string> missing = unsatisfied(checked, s);
  if (!missing.empty()) {
    report.phase = FailurePhase::PreconditionCheck;
    report.missing = std::move(missing);
    return report;
  }

  SkillResult result = env.execute(skill);
  if (!result.ok()) {
    report.phase = FailurePhase::SkillException;
    report.exception = *result.error;
    return report;
  }

  WorldState x_next = env.observe(noise_seed);
  SymbolicState s_next = perceive(x_next).restricted_to(state_based);
  EffectSet expected = state_diff(s, apply_effects(s, g)).restricted_to(state_based);
  EffectSet observed = state_diff(s, s_next);
  if (expected != observed) {
    report.phase = FailurePhase::EffectMismatch;
    report.expected = expected;
    report.observed = observed;
    return report;
  }
  return Verified{Transition{x, skill, x_next, std::nullopt, std::nullopt}, s, s_next};
}

RecoveryDecision decide_recovery(const FailureReport& report, const ReasonerContext& context,
                                 const std::set<std::string>& known_operators, OracleSession& session) {
  std::string before;
  for (const auto& a : report.state_before) before += a.str() + "\n";
  if (before.empty()) before = "(no atom holds)\n";
  PromptContext ctx{{"domain_description", context.domain_description},
                    {"state_before", before},
                    {"action_header", report.action.str()},
                    {"hierarchy", context.hierarchy},
                    {"operator", context.operator_text},
                    {"operator_name", report.action.op},
                    {"skill", report.skill.str()},
                    {"failure", failure_text(report)}};
  std::vector<Message> request = build_prompt(OracleRole::Reasoner, ctx);
  std::string analysis = session.ask(OracleRole::Reasoner, request);
  request.push_back({"assistant", analysis});
  request.push_back({"user", reasoner_decision_prompt(report.action.str())});
  auto check = [&](const std::string& r) {
    RecoveryDecision d = parse_decision(r);
    for (const auto& op : d.operators) {
      if (!known_operators.count(op)) throw ParseFailure("decision JSON", "operator '" + op + "' is not in the hierarchy");
    }
  };
  try {
    return parse_decision(session.ask(OracleRole::Reasoner, request, check));
  } catch (const ParseFailure& e) {
    throw UnparseableDecision(std::string("reasoner decision unusable after one re-ask: ") + e.what());
  }
}

void AuditLog::emit(const nlohmann::json& j) {
  lines_.push_back(j.dump());
  if (sink_) *sink_ << lines_.back() << "\n";
}

void AuditLog::failure(const FailureReport& r) { emit({{"event", "failure"}, {"report", r}}); }

void AuditLog::decision(const FailureReport& r, const RecoveryDecision& d) {
  emit({{"event", "decision"}, {"action", r.action.str()}, {"decision", d}});
}

void AuditLog::misalignment(const MisalignmentReport& r, const std::string& repair) {
  emit({{"event", "misalignment"}, {"report", r}, {"repair", repair}});
}

void AuditLog::note(const std::string& kind, const std::string& text) {
  emit({{"event", kind}, {"text", text}});
}

}  // namespace domlearn
