#include "domlearn/oracle.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cstdlib>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <thread>

#include <curl/curl.h>
#include <nlohmann/json.hpp>

#include "domlearn/pddl.hpp"

namespace domlearn {

namespace {

std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

std::string lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

std::vector<std::string> split_lines(std::string_view text) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t nl = text.find('\n', start);
    if (nl == std::string_view::npos) {
      out.emplace_back(text.substr(start));
      break;
    }
    std::string line(text.substr(start, nl - start));
    if (!line.empty() && line.back() == '\r') line.pop_back();
    out.push_back(std::move(line));
    start = nl + 1;
  }
  return out;
}

bool is_fence(const std::string& line) { return trim(line).rfind("```", 0) == 0; }

// Number of leading '#' when followed by a space, else 0.
std::size_t heading_depth(const std::string& line) {
  std::string t = trim(line);
  std::size_t n = 0;
  while (n < t.size() && t[n] == '#') ++n;
  if (n == 0 || n >= t.size() || t[n] != ' ') return 0;
  return n;
}

// Contents of the first fenced block in `text`, if any.
std::optional<std::string> first_fence(std::string_view text) {
  auto lines = split_lines(text);
  std::optional<std::string> body;
  for (const auto& l : lines) {
    if (is_fence(l)) {
      if (body) return body;
      body = std::string();
      continue;
    }
    if (body) *body += l + "\n";
  }
  return std::nullopt;
}

std::string section(const char* title, const std::string& body) { return std::string("### ") + title + "\n" + body + "\n\n"; }

std::string field(const PromptContext& ctx, const std::string& name) {
  auto it = ctx.find(name);
  return it == ctx.end() ? std::string() : it->second;
}

std::string strip_bullet(std::string s) {
  s = trim(s);
  if (s.rfind("- ", 0) == 0 || s.rfind("* ", 0) == 0) s = trim(s.substr(2));
  std::size_t i = 0;
  while (i < s.size() && std::isdigit(static_cast<unsigned char>(s[i]))) ++i;
  if (i > 0 && i < s.size() && (s[i] == '.' || s[i] == ')')) s = trim(s.substr(i + 1));
  s.erase(std::remove(s.begin(), s.end(), '`'), s.end());
  return trim(s);
}

const char* kDomainSystem = R"txt(You are a planning expert tasked with developing a world model for planning based on a user instruction.

---

)txt";

const char* kFormat = R"txt(<!-- when generating content for the sections listed below, follow the specified format exactly. You can leave out sections you don't need. -->
### Explanation
<!-- task specific explanation and chain-of-thought reasoning -->

### Change/Add Action(s)
1. {action-name-1}: {(add|edit|delete)}
    - Description: {description what happens during the action}
    - PDDL Definition:
        ```pddl
        (:action {pddl_action_name}
            :parameters {pddl_action_parameters}
            :precondition {pddl_action_preconds}
            :effect {pddl_action_effects}
        )
        ```

### Change/Add Predicate Definitions
<!-- `state` predicates describe the current situation of objects in the world. Their description must specify the conditions under which they hold, so a classifier can later decide from perception data (e.g., 6D poses) whether the predicate is true.-->
- ({predicate_name} {predicate_args...}): {state|other}. {predicate_description}

### Change Initial State
<!-- add predicates that should be changed, without text, leave 'None' if no change -->
{predicate_4}: {true|false|remove}
{predicate_8}: {true|false|remove}

### Change Goal State
<!-- add predicates that should be changed, without text, leave 'None' if no change -->
{predicate_7}: {true|false|remove})txt";

const char* kDomainTask = R"txt(### Your Task
1. Define the goal: Based on the user instruction, create a PDDL goal that reflects the objective the user wants to accomplish.
2. List of predicates: Inspect the predicates that will be used to describe the state of the world and the relationships between entities in the domain.
3. Define actions:
    - Based on the goal and available skills in the skill library, define a set of PDDL actions that enable planning toward the goal.
    - Preferably define high-level actions that abstract over one or more low-level skills to support hierarchical planning, but don't add object specific actions, e.g. `unstack-block-2`.
    - Each PDDL action should:
        - Have a clear and descriptive name
        - Include a general-purpose description (not instance-specific)
        - Include a PDDL definition: (:action <action_name> :parameters <parameters> :precondition <precondition> :effect <effect>)
    - You are encouraged to:
        - Define high-level composite actions when they simplify planning.
        - Define individual PDDL actions for each skill you intend to use that has no PDDL action yet.
        - If PDDL actions are already given in the user prompt, use them and only add new ones if necessary.
        - Avoid unnecessary actions - only include those essential to achieving the goal.
        - Don't create object specific actions, e.g. `switch-block-2-and-block-3`, but rather generate a general action `switch-blocks`.
        - Temporal ordering of subtasks can later be enforced by the LLM-planner)txt";

const char* kFixTask = R"txt(### Your Task
The operators listed under "Operators to Edit" caused the verification failure above. Correct them so that their preconditions and effects match the observed change. Return every corrected operator in "### Change/Add Action(s)" with mode `edit`, and add predicates only if they are required.)txt";

std::string fix_sections(const PromptContext& ctx) {
  std::string out;
  if (!field(ctx, "failure").empty()) out += section("Verification Failure", field(ctx, "failure"));
  if (!field(ctx, "operators_to_edit").empty()) out += section("Operators to Edit", field(ctx, "operators_to_edit"));
  return out;
}

std::vector<Message> domain_prompt(const PromptContext& ctx) {
  std::string user;
  user += section("User Instruction", field(ctx, "instruction"));
  user += section("Domain Knowledge", field(ctx, "domain_description"));
  user += section("Predicates", field(ctx, "predicates"));
  user += section("Actions", field(ctx, "actions"));
  user += section("Types", field(ctx, "types"));
  user += section("Objects", field(ctx, "objects"));
  user += section("Skill Library", field(ctx, "skill_library"));
  user += section("Initial State", field(ctx, "initial_state"));
  std::string fix = fix_sections(ctx);
  user += fix;
  user += fix.empty() ? kDomainTask : kFixTask;
  user += "\n";
  return {{"system", std::string(kDomainSystem) + kFormat + "\n"}, {"user", user}};
}

std::vector<Message> translate_prompt(const PromptContext& ctx) {
  std::string user;
  user += section("Predefined Skills", "```python\n" + field(ctx, "skills") + "```");
  user += section("Objects", field(ctx, "objects"));
  user += section("Predicate Definitions", field(ctx, "predicates"));
  user += section("PDDL Action Definition", field(ctx, "action"));
  if (!field(ctx, "feedback").empty()) user += section("Feedback", field(ctx, "feedback"));
  user += "### Task\nThe current state fulfills the PDDL action `" + field(ctx, "action_name") +
          "`'s preconditions. Your task is to propose a sequence of predefined skills to reach the effect of the PDDL "
          "action.\n\n"
          "Here is an outline of what your response should look like:\n"
          "[START OUTLINE]\n"
          "# Outline Current State\n"
          "[given the action preconditions, outline the current state]\n"
          "# Action Description\n"
          "[insert your analysis what the PDDL action is trying to achieve based on the current state and the effects "
          "that must be reached]\n"
          "# Skill Mapping\n"
          "[insert a bullet list of predefined skills as '<function_name>(<arg1>, <arg2>, ...)' that, starting from "
          "the current state, reach the effects. Don't include skills to `confirm` the preconditions. Use variables "
          "`from variables import " +
          field(ctx, "variables") +
          "` to reference pddl parameters, or strings if you need additional arguments where no pddl parameter "
          "exists]\n"
          "[END OUTLINE]\n";
  return {{"user", user}};
}

std::vector<Message> decompose_prompt(const PromptContext& ctx) {
  std::string user =
      "You are given a high-level PDDL action and supporting context. Your task is to decompose this high-level "
      "action into a set of meaningful, lower-level PDDL actions that result in the same effect.\n\n";
  user += "### High-level Action `" + field(ctx, "action_header") + "`\n" + field(ctx, "action") + "\n\n";
  user += section("Predicates", field(ctx, "predicates"));
  user += section("Actions", field(ctx, "actions"));
  user += section("Types", field(ctx, "types"));
  user += section("Objects", field(ctx, "objects"));
  user += section("Initial State", field(ctx, "initial_state"));
  user += section("Goal State", field(ctx, "goal_state"));
  user += section("Skill Library", field(ctx, "skill_library"));
  user += section("Suggested Decomposition", "```pddl\n" + field(ctx, "suggested") + "```");
  std::string fix = fix_sections(ctx);
  user += "---\n\n";
  if (!fix.empty()) {
    user += fix;
    user += kFixTask;
    user += "\n\n";
  } else {
    user +=
        "### Instructions\n"
        "Follow the steps below to complete the decomposition:\n"
        "1. Describe the Initial State\n"
        "2. Understand the High-Level Action: Examine the :precondition and :effect. Identify what state change it "
        "induces.\n"
        "3. Define Lower-Level Actions (add new predicates if necessary): Construct new actions that together "
        "implement the high-level action.\n"
        "    - Refer to the suggested decomposition for a LLM-proposed skill sequence. Your actions should cover the "
        "skill sequence.\n"
        "    - Only include actions that result in a state change and are not already defined below # Actions.\n"
        "    - Do not include meta-actions like confirm, complete, sense, or computation-related steps.\n"
        "    - Construct new predicates that are required to capture the necessary conditions and effects of the "
        "lower-level actions.\n"
        "    - Define individual PDDL actions for each skill you intend to use.\n"
        "4. Specify the Goal State: List the predicates that reflect the intended outcome of the high-level "
        "action.\n\n";
  }
  std::string syntax = field(ctx, "syntax");
  user += syntax.empty() ? std::string(kFormat) : syntax;
  user += "\n";
  return {{"user", user}};
}

std::vector<Message> reasoner_prompt(const PromptContext& ctx) {
  const std::string skill = field(ctx, "skill");
  const std::string header = field(ctx, "action_header");
  std::string user =
      "You are given a decomposition hierarchy and a record of skills executed in a simulated environment. The last "
      "skill has failed during execution. Your goal is to identify why the observed effect of the simulation "
      "diverged from the expected effect of that skill. The simulation and skill implementations are correct and "
      "fixed - you cannot modify them. Your focus is on reasoning about the planning model and its action "
      "decomposition.\n\n---\n\n";
  user += "### Context:\n" + field(ctx, "domain_description") + "\n\n";
  user += "State before " + header + ":\n" + field(ctx, "state_before") + "\n";
  user += "Decomposition Hierarchy\n" + field(ctx, "hierarchy") + "\n";
  user += "Current Operator\n" + field(ctx, "operator") + "\n\n";
  user += "Executed Python Skill for PDDL Action `" + header + "`:\n" + skill + "\n\n";
  user += field(ctx, "failure") + "\n\n---\n\n";
  user += "Your Task:\n"
          "1. Summarize the state before executing the failed action.\n"
          "1. How did the environment change by executing " +
          skill +
          ".\n"
          "2. Identify the cause of the deviation\n"
          "    - Looking at the decomposition hierarchy, are skills missing before executing " +
          skill +
          " to ensure a successful execution (i.e. no collision or undefined behavior)?\n"
          "        - If so:\n"
          "            - which skills should have been executed before " +
          skill +
          " and can the preconditions be tightened to ensure that?\n"
          "        - else:\n"
          "            - should actions be removed?\n"
          "            - why are the expected effects different and how must the PDDL action " +
          field(ctx, "operator_name") +
          " be changed to realign it with the ground truth change?: Adapt the PDDL action.\n"
          "            - should additional predicates be invented to capture the effects more accurately?\n"
          "            - are preconditions missing in any of the PDDL action definitions?\n"
          "            - or, were any skills redundant, missing, or incorrectly ordered?\n"
          "    Note that:\n"
          "    - We use FastDownward Planning, so naming does not impact the plan, only forming correct PDDL "
          "definitions does.\n"
          "    - Do not assume the current expected effects are correct - critically assess and revise them as needed\n"
          "    - Adapt the PDDL actions in a general way, e.g. by using conditional effects where applicable (`when`, "
          "`forall`, `imply`, ...)\n";
  return {{"user", user}};
}

std::vector<Message> classifier_gen_prompt(const PromptContext& ctx) {
  std::string user = "Domain Knowledge:\n" + field(ctx, "domain_description") + "\n\n";
  user += "Given classifier language:\n```\n" + field(ctx, "api") + "```\n\n";
  if (!field(ctx, "known").empty()) user += "Already defined classifiers:\n```\n" + field(ctx, "known") + "```\n\n";
  user += "```\n" + field(ctx, "signature") + " := ...\n```\n";
  user += "Predicate: " + field(ctx, "predicate") + "\n\n";
  user += "Can you add the body that implements the grounding of this predicate?\n"
          "You must define hyperparameters or constants in the header with default values and units.\n"
          "Where possible, use the already defined classifiers to reduce code duplication.\n"
          "Your response should contain two sections\n"
          "[START OUTLINE]\n"
          "# Requirements to Check\n"
          "[list all requirements the function must validate. Only include checks that can be performed with the "
          "provided context (skip/ignore others).]\n"
          "# Predicate Grounding\n"
          "[insert the classifier enclosed in ```dsl ```. If you think the predicate cannot be grounded reliably "
          "with the provided context, return `none` and no code. Don't rely on information not provided.]\n"
          "# Grounder Description\n"
          "[insert a description what the grounder function tests for. It should be short but complete.]\n"
          "[END OUTLINE]\n";
  return {{"user", user}};
}

std::vector<Message> plan_prompt(const PromptContext& ctx) {
  std::string user =
      "You are given a PDDL domain and problem for which the classical planner found no plan. Propose the sequence "
      "of actions that reaches the goal state from the initial state, using only actions of the domain.\n\n";
  user += "Domain:\n```pddl\n" + field(ctx, "domain") + "```\n\n";
  user += "Problem:\n```pddl\n" + field(ctx, "problem") + "```\n\n";
  user += "Answer with a section `### Plan` that lists one ground action per line as `(action-name obj1 obj2 "
          "...)`.\n";
  return {{"user", user}};
}

std::vector<Message> label_prompt(const PromptContext& ctx) {
  std::string user = "Pose estimation of all objects and the robot gripper (3D poses are in meters):\n";
  user += field(ctx, "scene");
  user += "Predicates:\n" + field(ctx, "predicates") + "\n";
  user += "For every listed ground atom, answer whether it holds in the scene, one line per atom as `<atom>: true` or "
          "`<atom>: false`.\n";
  return {{"user", user}};
}

std::pair<GroundAtom, AtomChange> parse_change_line(const std::string& line, const std::string& sec) {
  std::size_t colon = line.rfind(':');
  if (colon == std::string::npos) throw ParseFailure(sec, "expected '<atom>: true|false|remove' in '" + line + "'");
  std::string value = lower(trim(line.substr(colon + 1)));
  AtomChange ch;
  if (value == "true") ch = AtomChange::True;
  else if (value == "false") ch = AtomChange::False;
  else if (value == "remove") ch = AtomChange::Remove;
  else throw ParseFailure(sec, "unknown change '" + value + "'");
  try {
    return {parse_ground_atom(trim(line.substr(0, colon))), ch};
  } catch (const SyntaxError& e) {
    throw ParseFailure(sec, e.what());
  }
}

std::vector<std::pair<GroundAtom, AtomChange>> parse_changes(const std::string& body, const std::string& sec) {
  std::vector<std::pair<GroundAtom, AtomChange>> out;
  for (const auto& raw : split_lines(body)) {
    std::string l = strip_bullet(raw);
    if (l.empty() || lower(l) == "none" || l.rfind("<!--", 0) == 0) continue;
    out.push_back(parse_change_line(l, sec));
  }
  return out;
}

PredicateSchema parse_predicate_line(const std::string& raw, const std::string& sec) {
  std::string l = strip_bullet(raw);
  std::size_t open = l.find('(');
  if (open == std::string::npos) throw ParseFailure(sec, "expected a predicate declaration in '" + l + "'");
  int depth = 0;
  std::size_t close = std::string::npos;
  for (std::size_t i = open; i < l.size(); ++i) {
    if (l[i] == '(') ++depth;
    if (l[i] == ')' && --depth == 0) {
      close = i;
      break;
    }
  }
  if (close == std::string::npos) throw ParseFailure(sec, "unbalanced predicate declaration '" + l + "'");
  PredicateSchema p;
  try {
    p = parse_predicate_decl(l.substr(open, close - open + 1));
  } catch (const Error& e) {
    throw ParseFailure(sec, e.what());
  }
  std::string rest = l.substr(close + 1);
  auto skip = [&] {
    std::size_t i = 0;
    while (i < rest.size() && (rest[i] == ':' || rest[i] == '.' || std::isspace(static_cast<unsigned char>(rest[i])))) ++i;
    rest = rest.substr(i);
  };
  skip();
  std::string head = lower(rest.substr(0, 5));
  if (head == "other") {
    p.kind = PredicateKind::StateIndependent;
    rest = rest.substr(5);
  } else if (head == "state") {
    rest = rest.substr(5);
  }
  skip();
  rest = trim(rest);
  const std::string given = "(already given)";
  if (rest.size() >= given.size() && rest.compare(rest.size() - given.size(), given.size(), given) == 0) {
    rest = trim(rest.substr(0, rest.size() - given.size()));
  }
  p.description = rest;
  return p;
}

std::vector<ActionEdit> parse_action_edits(const std::string& body) {
  const std::string sec = "### Change/Add Action(s)";
  std::vector<ActionEdit> out;
  std::vector<std::string> lines = split_lines(body);
  bool in_fence = false;
  std::string fence;
  for (const auto& line : lines) {
    if (is_fence(line)) {
      if (in_fence) {
        if (out.empty()) throw ParseFailure(sec, "PDDL block before any numbered action item");
        try {
          out.back().op = parse_operator(fence);
        } catch (const Error& e) {
          throw ParseFailure(sec, "action " + out.back().name + ": " + e.what());
        }
        fence.clear();
      }
      in_fence = !in_fence;
      continue;
    }
    if (in_fence) {
      fence += line + "\n";
      continue;
    }
    std::string t = trim(line);
    std::size_t i = 0;
    while (i < t.size() && std::isdigit(static_cast<unsigned char>(t[i]))) ++i;
    if (i > 0 && i < t.size() && t[i] == '.') {
      std::string item = trim(t.substr(i + 1));
      std::size_t colon = item.rfind(':');
      if (colon == std::string::npos) throw ParseFailure(sec, "expected '<n>. <name>: add|edit|delete'");
      ActionEdit e;
      e.name = lower(trim(item.substr(0, colon)));
      e.name.erase(std::remove(e.name.begin(), e.name.end(), '`'), e.name.end());
      std::string mode = lower(trim(item.substr(colon + 1)));
      if (mode == "add") e.mode = EditMode::Add;
      else if (mode == "edit") e.mode = EditMode::Edit;
      else if (mode == "delete") e.mode = EditMode::Delete;
      else throw ParseFailure(sec, "unknown mode '" + mode + "' for action " + e.name);
      out.push_back(std::move(e));
      continue;
    }
    std::string b = strip_bullet(t);
    if (!out.empty() && lower(b).rfind("description:", 0) == 0) out.back().description = trim(b.substr(12));
  }
  if (in_fence) throw ParseFailure(sec, "unterminated code block");
  for (auto& e : out) {
    if (e.mode == EditMode::Delete) continue;
    if (!e.op) throw ParseFailure(sec, "action " + e.name + " has no PDDL definition");
    if (canonical_name(e.op->name) != canonical_name(e.name)) {
      throw ParseFailure(sec, "item " + e.name + " defines (:action " + e.op->name + ")");
    }
    e.name = e.op->name;
    e.op->description = e.description;
  }
  return out;
}

std::string fenced_or_body(const std::string& body) {
  if (auto f = first_fence(body)) return *f;
  return trim(body) + "\n";
}

std::uint64_t fnv1a(std::uint64_t h, std::string_view s) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace

ParseFailure::ParseFailure(std::string section, const std::string& detail)
    : Error(section + ": " + detail), section_(std::move(section)) {}

ReplayDivergence::ReplayDivergence(std::uint64_t seq, std::string diff)
    : Error("replay diverged at exchange " + std::to_string(seq) + "\n" + diff), seq_(seq), diff_(std::move(diff)) {}

std::string_view to_string(OracleRole role) {
  switch (role) {
    case OracleRole::Domain: return "domain";
    case OracleRole::PlanFallback: return "plan_fallback";
    case OracleRole::Translate: return "translate";
    case OracleRole::Decompose: return "decompose";
    case OracleRole::Reasoner: return "reasoner";
    case OracleRole::ClassifierGen: return "classifier_gen";
    case OracleRole::ClassifierRefine: return "classifier_refine";
    case OracleRole::PseudoLabel: return "pseudo_label";
  }
  return "?";
}

const std::vector<OracleRole>& all_roles() {
  static const std::vector<OracleRole> kRoles{OracleRole::Domain,        OracleRole::PlanFallback,
                                              OracleRole::Translate,     OracleRole::Decompose,
                                              OracleRole::Reasoner,      OracleRole::ClassifierGen,
                                              OracleRole::ClassifierRefine, OracleRole::PseudoLabel};
  return kRoles;
}

OracleRole parse_role(std::string_view name) {
  for (OracleRole r : all_roles()) {
    if (to_string(r) == name) return r;
  }
  throw Error("unknown oracle role '" + std::string(name) + "'");
}

void to_json(nlohmann::json& j, const Exchange& e) {
  auto req = nlohmann::json::array();
  for (const auto& m : e.request) req.push_back({{"role", m.role}, {"content", m.content}});
  j = {{"seq", e.seq}, {"role", std::string(to_string(e.role))}, {"request", req}, {"response", e.response},
       {"digest", e.digest}};
}

void from_json(const nlohmann::json& j, Exchange& e) {
  e.seq = j.at("seq").get<std::uint64_t>();
  e.role = parse_role(j.at("role").get<std::string>());
  e.request.clear();
  for (const auto& m : j.at("request")) e.request.push_back({m.at("role").get<std::string>(), m.at("content").get<std::string>()});
  e.response = j.at("response").get<std::string>();
  e.digest = j.value("digest", request_digest(e.role, e.request));
}

std::vector<Exchange> read_transcript(std::istream& in) {
  std::vector<Exchange> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (trim(line).empty()) continue;
    try {
      out.push_back(nlohmann::json::parse(line).get<Exchange>());
    } catch (const nlohmann::json::exception& e) {
      throw SyntaxError(std::string("bad transcript record: ") + e.what(), n, 1);
    }
  }
  return out;
}

void write_exchange(std::ostream& out, const Exchange& e) { out << nlohmann::json(e).dump() << "\n"; }

std::string request_digest(OracleRole role, const std::vector<Message>& request) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  h = fnv1a(h, to_string(role));
  h = fnv1a(h, std::string_view("\0", 1));
  for (const auto& m : request) {
    h = fnv1a(h, m.role);
    h = fnv1a(h, std::string_view("\0", 1));
    h = fnv1a(h, m.content);
    h = fnv1a(h, std::string_view("\0", 1));
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

const std::vector<std::string>& required_fields(OracleRole role) {
  static const std::map<OracleRole, std::vector<std::string>> kFields{
      {OracleRole::Domain, {"instruction", "types", "objects", "skill_library"}},
      {OracleRole::PlanFallback, {"domain", "problem"}},
      {OracleRole::Translate, {"skills", "objects", "action", "action_name", "variables"}},
      {OracleRole::Decompose,
       {"action_header", "action", "types", "objects", "initial_state", "goal_state", "skill_library", "suggested"}},
      {OracleRole::Reasoner, {"state_before", "action_header", "hierarchy", "operator", "skill", "failure"}},
      {OracleRole::ClassifierGen, {"api", "signature", "predicate"}},
      {OracleRole::ClassifierRefine, {"report"}},
      {OracleRole::PseudoLabel, {"scene", "predicates"}},
  };
  return kFields.at(role);
}

std::vector<Message> build_prompt(OracleRole role, const PromptContext& context) {
  for (const auto& f : required_fields(role)) {
    auto it = context.find(f);
    if (it == context.end() || trim(it->second).empty()) {
      throw MissingContextField(std::string(to_string(role)) + " prompt needs '" + f + "'");
    }
  }
  switch (role) {
    case OracleRole::Domain: return domain_prompt(context);
    case OracleRole::PlanFallback: return plan_prompt(context);
    case OracleRole::Translate: return translate_prompt(context);
    case OracleRole::Decompose: return decompose_prompt(context);
    case OracleRole::Reasoner: return reasoner_prompt(context);
    case OracleRole::ClassifierGen: return classifier_gen_prompt(context);
    case OracleRole::ClassifierRefine: return {{"user", context.at("report")}};
    case OracleRole::PseudoLabel: return label_prompt(context);
  }
  return {};
}

std::string reasoner_decision_prompt(const std::string& action) {
  return "Determine the most probable fix type based on the following options:\n"
         "- one of the action definitions listed in `decomposition hierarchy` must be corrected: 'pddl-fix'\n"
         "- some skills should be executed before the action: 'prior-skills': list the \n"
         "- the skill was incorrectly instantiated or used: 'incorrect-instantiation'\n"
         "- alternatively, the pddl action " +
         action +
         " should be implemented with multiple skills: 'multiple-skills'\n\n"
         "Independent of the chosen fix type, list ALL operators that must be edited to resolve the issue. If "
         "multiple operators must be changed, list them comma-separated ([op1, op2, ...]).\n\n"
         "Output Format:\n"
         "```json\n"
         "{\n"
         "    \"type_of_fix\": \"<chosen-fix-type>\",\n"
         "    \"operators\": [\"<corrected-action>\", \"...\"]\n"
         "}\n"
         "```\n";
}

std::optional<std::string> find_section(std::string_view text, std::string_view heading) {
  std::size_t depth = 0;
  while (depth < heading.size() && heading[depth] == '#') ++depth;
  std::vector<std::string> lines = split_lines(text);
  bool in_fence = false;
  std::optional<std::string> body;
  for (const auto& line : lines) {
    if (is_fence(line)) {
      in_fence = !in_fence;
      if (body) *body += line + "\n";
      continue;
    }
    std::string t = trim(line);
    if (!in_fence) {
      std::size_t d = heading_depth(t);
      if (body) {
        if ((d > 0 && d <= depth) || t == "[END OUTLINE]") return body;
      } else if (d == depth && t.rfind(heading, 0) == 0 &&
                 (t.size() == heading.size() || !std::isalnum(static_cast<unsigned char>(t[heading.size()])))) {
        body = std::string();
        continue;
      }
    }
    if (body) *body += line + "\n";
  }
  return body;
}

std::string_view to_string(EditMode m) {
  switch (m) {
    case EditMode::Add: return "add";
    case EditMode::Edit: return "edit";
    case EditMode::Delete: return "delete";
  }
  return "?";
}

DomainEdit parse_domain_response(std::string_view text) {
  DomainEdit out;
  if (auto s = find_section(text, "### Explanation")) out.explanation = trim(*s);
  auto actions = find_section(text, "### Change/Add Action(s)");
  auto preds = find_section(text, "### Change/Add Predicate Definitions");
  auto init = find_section(text, "### Change Initial State");
  auto goal = find_section(text, "### Change Goal State");
  if (!actions && !preds && !goal && !init) {
    throw ParseFailure("### Change/Add Action(s)", "no action, predicate or state section in the response");
  }
  if (actions) out.actions = parse_action_edits(*actions);
  if (preds) {
    for (const auto& l : split_lines(*preds)) {
      std::string t = trim(l);
      if (t.empty() || t.rfind("<!--", 0) == 0 || lower(t) == "none") continue;
      out.predicates.push_back(parse_predicate_line(t, "### Change/Add Predicate Definitions"));
    }
  }
  if (init) out.init_changes = parse_changes(*init, "### Change Initial State");
  if (goal) out.goal_changes = parse_changes(*goal, "### Change Goal State");
  return out;
}

std::vector<SkillCall> parse_translate_response(std::string_view text) {
  const std::string sec = "# Skill Mapping";
  auto body = find_section(text, sec);
  if (!body) throw ParseFailure(sec, "section missing");
  std::vector<SkillCall> out;
  for (const auto& l : split_lines(*body)) {
    std::string t = trim(l);
    if (t.empty() || (t.rfind("- ", 0) != 0 && t.rfind("* ", 0) != 0)) continue;
    try {
      out.push_back(parse_skill_call(strip_bullet(t)));
    } catch (const SyntaxError& e) {
      throw ParseFailure(sec, "bad skill call '" + strip_bullet(t) + "': " + e.what());
    }
  }
  if (out.empty()) throw ParseFailure(sec, "no skill calls listed");
  return out;
}

std::string_view to_string(FixType t) {
  switch (t) {
    case FixType::PddlFix: return "pddl-fix";
    case FixType::PriorSkills: return "prior-skills";
    case FixType::IncorrectInstantiation: return "incorrect-instantiation";
    case FixType::MultipleSkills: return "multiple-skills";
  }
  return "?";
}

std::optional<FixType> parse_fix_type(std::string_view text) {
  for (FixType t : {FixType::PddlFix, FixType::PriorSkills, FixType::IncorrectInstantiation, FixType::MultipleSkills}) {
    if (to_string(t) == text) return t;
  }
  return std::nullopt;
}

void to_json(nlohmann::json& j, const RecoveryDecision& d) {
  j = {{"type_of_fix", std::string(to_string(d.type))}, {"operators", d.operators}};
}

RecoveryDecision parse_decision(std::string_view text) {
  const std::string sec = "decision JSON";
  std::string json_text;
  std::string before;
  std::size_t fence = text.find("```json");
  if (fence != std::string_view::npos) {
    std::size_t start = text.find('\n', fence);
    std::size_t end = start == std::string_view::npos ? start : text.find("```", start);
    if (end == std::string_view::npos) throw ParseFailure(sec, "unterminated ```json block");
    json_text = std::string(text.substr(start + 1, end - start - 1));
    before = std::string(text.substr(0, fence));
  } else {
    std::size_t open = text.find('{');
    std::size_t close = text.rfind('}');
    if (open == std::string_view::npos || close == std::string_view::npos || close < open) {
      throw ParseFailure(sec, "no JSON object in the response");
    }
    json_text = std::string(text.substr(open, close - open + 1));
    before = std::string(text.substr(0, open));
  }
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::exception& e) {
    throw ParseFailure(sec, e.what());
  }
  if (!j.is_object() || !j.contains("type_of_fix") || !j["type_of_fix"].is_string()) {
    throw ParseFailure(sec, "missing \"type_of_fix\"");
  }
  auto type = parse_fix_type(j["type_of_fix"].get<std::string>());
  if (!type) throw ParseFailure(sec, "unknown fix type '" + j["type_of_fix"].get<std::string>() + "'");
  if (!j.contains("operators") || !j["operators"].is_array() || j["operators"].empty()) {
    throw ParseFailure(sec, "\"operators\" must be a non-empty list");
  }
  RecoveryDecision d;
  d.type = *type;
  for (const auto& o : j["operators"]) {
    if (!o.is_string()) throw ParseFailure(sec, "operator names must be strings");
    d.operators.push_back(o.get<std::string>());
  }
  d.rationale = trim(before);
  return d;
}

ClassifierResponse parse_classifier_response(OracleRole role, std::string_view text) {
  const std::string sec = role == OracleRole::ClassifierRefine ? "# Fixed Code" : "# Predicate Grounding";
  auto body = find_section(text, sec);
  if (!body) throw ParseFailure(sec, "section missing");
  ClassifierResponse out;
  if (auto d = find_section(text, "# Grounder Description")) out.description = trim(*d);
  std::string t = lower(trim(*body));
  t.erase(std::remove(t.begin(), t.end(), '`'), t.end());
  if (t == "none" && !first_fence(*body)) return out;
  std::string program = fenced_or_body(*body);
  if (trim(program).empty()) throw ParseFailure(sec, "empty program");
  out.program = program;
  return out;
}

std::vector<Action> parse_plan_response(std::string_view text) {
  const std::string sec = "### Plan";
  auto body = find_section(text, sec);
  if (!body) throw ParseFailure(sec, "section missing");
  std::vector<Action> out;
  for (const auto& l : split_lines(*body)) {
    std::string t = strip_bullet(l);
    if (t.empty() || lower(t) == "none" || t.rfind(";", 0) == 0) continue;
    try {
      GroundAtom a = parse_ground_atom(t);
      out.push_back({a.predicate, a.args});
    } catch (const SyntaxError& e) {
      throw ParseFailure(sec, "bad action '" + t + "': " + e.what());
    }
  }
  return out;
}

std::map<GroundAtom, bool> parse_label_response(std::string_view text) {
  const std::string sec = "labels";
  std::map<GroundAtom, bool> out;
  for (const auto& l : split_lines(text)) {
    std::string t = strip_bullet(l);
    std::size_t colon = t.rfind(':');
    if (t.empty() || colon == std::string::npos) continue;
    std::string v = lower(trim(t.substr(colon + 1)));
    if (v != "true" && v != "false") continue;
    try {
      out[parse_ground_atom(trim(t.substr(0, colon)))] = v == "true";
    } catch (const SyntaxError& e) {
      throw ParseFailure(sec, "bad atom '" + t + "': " + e.what());
    }
  }
  if (out.empty()) throw ParseFailure(sec, "no '<atom>: true|false' lines");
  return out;
}

void check_response(OracleRole role, std::string_view text) {
  switch (role) {
    case OracleRole::Domain:
    case OracleRole::Decompose: parse_domain_response(text); break;
    case OracleRole::PlanFallback: parse_plan_response(text); break;
    case OracleRole::Translate: parse_translate_response(text); break;
    case OracleRole::Reasoner: parse_decision(text); break;
    case OracleRole::ClassifierGen:
    case OracleRole::ClassifierRefine: parse_classifier_response(role, text); break;
    case OracleRole::PseudoLabel: parse_label_response(text); break;
  }
}

OracleSession::OracleSession(Oracle& backend, std::ostream* sink) : backend_(backend), sink_(sink) {}

std::string OracleSession::send(OracleRole role, const std::vector<Message>& request) {
  Exchange e;
  e.seq = transcript_.size() + 1;
  e.role = role;
  e.request = request;
  e.digest = request_digest(role, request);
  e.response = backend_.complete(role, request);
  transcript_.push_back(e);
  if (sink_) {
    write_exchange(*sink_, e);
    sink_->flush();
  }
  return transcript_.back().response;
}

std::string OracleSession::ask(OracleRole role, const std::vector<Message>& request, const ResponseCheck& check) {
  std::string r = send(role, request);
  if (!check) return r;
  try {
    check(r);
    return r;
  } catch (const ParseFailure& e) {
    std::vector<Message> retry = request;
    retry.push_back({"assistant", r});
    retry.push_back({"user", std::string("Your response could not be parsed. ") + e.what() +
                                 "\nPlease answer again and follow the requested format exactly."});
    std::string r2 = send(role, retry);
    check(r2);
    return r2;
  }
}

std::size_t OracleSession::calls(OracleRole role) const {
  return static_cast<std::size_t>(
      std::count_if(transcript_.begin(), transcript_.end(), [&](const Exchange& e) { return e.role == role; }));
}

std::map<std::string, std::size_t> OracleSession::call_counts() const {
  std::map<std::string, std::size_t> out;
  for (const auto& e : transcript_) ++out[std::string(to_string(e.role))];
  return out;
}

ReplayOracle::ReplayOracle(std::vector<Exchange> transcript) : exchanges_(std::move(transcript)) {}

ReplayOracle ReplayOracle::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open transcript " + path);
  return ReplayOracle(read_transcript(in));
}

std::string request_diff(const std::vector<Message>& recorded, const std::vector<Message>& current) {
  auto flatten = [](const std::vector<Message>& ms) {
    std::vector<std::string> out;
    for (const auto& m : ms) {
      for (const auto& l : split_lines(m.content)) out.push_back("[" + m.role + "] " + l);
    }
    return out;
  };
  std::vector<std::string> a = flatten(recorded), b = flatten(current);
  std::ostringstream out;
  std::size_t shown = 0;
  std::size_t n = std::max(a.size(), b.size());
  for (std::size_t i = 0; i < n && shown < 8; ++i) {
    const std::string* x = i < a.size() ? &a[i] : nullptr;
    const std::string* y = i < b.size() ? &b[i] : nullptr;
    if (x && y && *x == *y) continue;
    out << "line " << (i + 1) << ":\n";
    out << "- " << (x ? *x : std::string("<none>")) << "\n";
    out << "+ " << (y ? *y : std::string("<none>")) << "\n";
    ++shown;
  }
  if (shown == 0) out << "requests are identical; roles differ\n";
  return out.str();
}

std::string ReplayOracle::complete(OracleRole role, const std::vector<Message>& request) {
  if (next_ >= exchanges_.size()) {
    throw TranscriptExhausted("transcript exhausted at exchange " + std::to_string(next_ + 1) + " (" +
                              std::to_string(exchanges_.size()) + " recorded)");
  }
  const Exchange& e = exchanges_[next_];
  std::string digest = request_digest(role, request);
  if (e.role != role || e.digest != digest) {
    std::string diff;
    if (e.role != role) {
      diff += "role: recorded " + std::string(to_string(e.role)) + ", current " + std::string(to_string(role)) + "\n";
    }
    diff += request_diff(e.request, request);
    throw ReplayDivergence(next_ + 1, diff);
  }
  ++next_;
  return e.response;
}

namespace {

std::size_t write_body(char* data, std::size_t size, std::size_t n, void* user) {
  static_cast<std::string*>(user)->append(data, size * n);
  return size * n;
}

}  // namespace

CurlTransport::CurlTransport(long timeout_seconds) : timeout_(timeout_seconds) {}

HttpResponse CurlTransport::post(const std::string& url, const std::vector<std::string>& headers,
                                 const std::string& body) {
  CURL* curl = curl_easy_init();
  if (!curl) throw TransportError("curl initialization failed");
  curl_slist* list = nullptr;
  for (const auto& h : headers) list = curl_slist_append(list, h.c_str());
  HttpResponse out;
  curl_easy_setopt(curl, CURLOPT_URL, url.c_str());
  curl_easy_setopt(curl, CURLOPT_HTTPHEADER, list);
  curl_easy_setopt(curl, CURLOPT_POSTFIELDS, body.c_str());
  curl_easy_setopt(curl, CURLOPT_POSTFIELDSIZE, static_cast<long>(body.size()));
  curl_easy_setopt(curl, CURLOPT_TIMEOUT, timeout_);
  curl_easy_setopt(curl, CURLOPT_WRITEFUNCTION, write_body);
  curl_easy_setopt(curl, CURLOPT_WRITEDATA, &out.body);
  CURLcode rc = curl_easy_perform(curl);
  if (rc == CURLE_OK) curl_easy_getinfo(curl, CURLINFO_RESPONSE_CODE, &out.status);
  curl_slist_free_all(list);
  curl_easy_cleanup(curl);
  if (rc != CURLE_OK) throw TransportError(std::string("HTTP request failed: ") + curl_easy_strerror(rc));
  return out;
}

LiveConfig LiveConfig::from_env() {
  LiveConfig c;
  if (const char* v = std::getenv("DOMLEARN_ENDPOINT")) c.endpoint = v;
  if (const char* v = std::getenv("DOMLEARN_MODEL")) c.model = v;
  if (const char* v = std::getenv("DOMLEARN_API_KEY")) c.api_key = v;
  return c;
}

LiveOracle::LiveOracle(LiveConfig config, std::shared_ptr<HttpTransport> transport, Sleeper sleep)
    : config_(std::move(config)), transport_(std::move(transport)), sleep_(std::move(sleep)) {
  if (config_.api_key.empty()) throw AuthError("no API key configured (DOMLEARN_API_KEY)");
  if (!transport_) transport_ = std::make_shared<CurlTransport>();
  if (!sleep_) sleep_ = [](std::size_t ms) { std::this_thread::sleep_for(std::chrono::milliseconds(ms)); };
}

std::string LiveOracle::request_body(const std::vector<Message>& request) const {
  auto msgs = nlohmann::json::array();
  for (const auto& m : request) msgs.push_back({{"role", m.role}, {"content", m.content}});
  return nlohmann::json{{"model", config_.model}, {"temperature", config_.temperature}, {"messages", msgs}}.dump();
}

std::string LiveOracle::complete(OracleRole, const std::vector<Message>& request) {
  const std::string body = request_body(request);
  const std::vector<std::string> headers{"Content-Type: application/json", "Authorization: Bearer " + config_.api_key};
  std::string last;
  bool limited = false;
  for (std::size_t attempt = 0; attempt < config_.max_attempts; ++attempt) {
    if (attempt > 0) sleep_(config_.backoff_ms << (attempt - 1));
    HttpResponse r;
    try {
      r = transport_->post(config_.endpoint, headers, body);
    } catch (const TransportError& e) {
      attempts_.push_back(0);
      last = e.what();
      limited = false;
      continue;
    }
    attempts_.push_back(r.status);
    if (r.status == 401 || r.status == 403) throw AuthError("endpoint rejected the credentials (HTTP " + std::to_string(r.status) + ")");
    if (r.status == 429 || r.status >= 500) {
      limited = r.status == 429;
      last = "HTTP " + std::to_string(r.status);
      continue;
    }
    if (r.status != 200) throw TransportError("HTTP " + std::to_string(r.status) + ": " + r.body);
    try {
      auto j = nlohmann::json::parse(r.body);
      return j.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
      throw TransportError(std::string("malformed completion: ") + e.what());
    }
  }
  if (limited) throw RateLimited("rate limited after " + std::to_string(config_.max_attempts) + " attempts");
  throw TransportError("request failed after " + std::to_string(config_.max_attempts) + " attempts: " + last);
}

}  // namespace domlearn
