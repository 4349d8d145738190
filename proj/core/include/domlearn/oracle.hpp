#pragma once

// Oracle roles, prompt templates, response parsers, sessions and backends.

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "domlearn/error.hpp"
#include "domlearn/symbolic.hpp"
#include "domlearn/world.hpp"

namespace domlearn {

class MissingContextField : public Error {
 public:
  using Error::Error;
};

/// A response lacks a mandatory section or a section does not parse.
class ParseFailure : public Error {
 public:
  ParseFailure(std::string section, const std::string& detail);
  const std::string& section() const { return section_; }

 private:
  std::string section_;
};

class UnparseableDecision : public Error {
 public:
  using Error::Error;
};

class ReplayDivergence : public Error {
 public:
  ReplayDivergence(std::uint64_t seq, std::string diff);
  std::uint64_t seq() const { return seq_; }
  const std::string& diff() const { return diff_; }

 private:
  std::uint64_t seq_;
  std::string diff_;
};

class TranscriptExhausted : public Error {
 public:
  using Error::Error;
};

class TransportError : public Error {
 public:
  using Error::Error;
};

class AuthError : public Error {
 public:
  using Error::Error;
};

class RateLimited : public Error {
 public:
  using Error::Error;
};

enum class OracleRole { Domain, PlanFallback, Translate, Decompose, Reasoner, ClassifierGen, ClassifierRefine, PseudoLabel };

std::string_view to_string(OracleRole role);
/// Throws Error for an unknown name.
OracleRole parse_role(std::string_view name);
const std::vector<OracleRole>& all_roles();

struct Message {
  std::string role;  // system, user or assistant
  std::string content;
  friend bool operator==(const Message&, const Message&) = default;
};

struct Exchange {
  std::uint64_t seq = 0;
  OracleRole role = OracleRole::Domain;
  std::vector<Message> request;
  std::string response;
  std::string digest;
  friend bool operator==(const Exchange&, const Exchange&) = default;
};

void to_json(nlohmann::json& j, const Exchange& e);
void from_json(const nlohmann::json& j, Exchange& e);

std::vector<Exchange> read_transcript(std::istream& in);
void write_exchange(std::ostream& out, const Exchange& e);

/// FNV-1a 64 over role and messages, as 16 hex digits.
std::string request_digest(OracleRole role, const std::vector<Message>& request);

using PromptContext = std::map<std::string, std::string>;

/// Fields that must be present and non-empty for `role`.
const std::vector<std::string>& required_fields(OracleRole role);

/// Fills the role's template. Throws MissingContextField naming the first
/// missing required field.
std::vector<Message> build_prompt(OracleRole role, const PromptContext& context);

/// Second reasoner turn asking for the fix-type JSON.
std::string reasoner_decision_prompt(const std::string& action);

/// Lines of a "### Name" or "# Name" section up to the next heading of the
/// same depth or "[END OUTLINE]".
std::optional<std::string> find_section(std::string_view text, std::string_view heading);

enum class EditMode { Add, Edit, Delete };
std::string_view to_string(EditMode m);

struct ActionEdit {
  std::string name;
  EditMode mode = EditMode::Add;
  std::string description;
  std::optional<OperatorDef> op;
};

enum class AtomChange { True, False, Remove };

struct DomainEdit {
  std::string explanation;
  std::vector<ActionEdit> actions;
  std::vector<PredicateSchema> predicates;
  std::vector<std::pair<GroundAtom, AtomChange>> init_changes;
  std::vector<std::pair<GroundAtom, AtomChange>> goal_changes;
};

/// Domain and Decompose responses. At least one of the action, predicate or
/// goal sections must be present.
DomainEdit parse_domain_response(std::string_view text);

/// Bullets of "# Skill Mapping"; arguments are kept verbatim.
std::vector<SkillCall> parse_translate_response(std::string_view text);

enum class FixType { PddlFix, PriorSkills, IncorrectInstantiation, MultipleSkills };
std::string_view to_string(FixType t);
std::optional<FixType> parse_fix_type(std::string_view text);

struct RecoveryDecision {
  FixType type = FixType::PddlFix;
  std::vector<std::string> operators;
  std::string rationale;
  friend bool operator==(const RecoveryDecision&, const RecoveryDecision&) = default;
};

void to_json(nlohmann::json& j, const RecoveryDecision& d);

/// First JSON object in the response (a ```json fence wins) with
/// "type_of_fix" and a non-empty "operators" list.
RecoveryDecision parse_decision(std::string_view text);

struct ClassifierResponse {
  /// Unset when the oracle answered `none`.
  std::optional<std::string> program;
  std::string description;
};

/// ClassifierGen reads "# Predicate Grounding", ClassifierRefine reads
/// "# Fixed Code". A fenced block inside the section wins.
ClassifierResponse parse_classifier_response(OracleRole role, std::string_view text);

/// Actions of the "### Plan" section, one per line.
std::vector<Action> parse_plan_response(std::string_view text);

/// "atom: true|false" lines.
std::map<GroundAtom, bool> parse_label_response(std::string_view text);

/// Runs the role's parser and discards the result. Throws ParseFailure.
void check_response(OracleRole role, std::string_view text);

class Oracle {
 public:
  virtual ~Oracle() = default;
  virtual std::string complete(OracleRole role, const std::vector<Message>& request) = 0;
};

using ResponseCheck = std::function<void(const std::string& response)>;

/// Sequential request/response log over one backend.
class OracleSession {
 public:
  explicit OracleSession(Oracle& backend, std::ostream* sink = nullptr);

  /// Sends the request. When `check` throws ParseFailure the request is sent
  /// once more with the failed answer and the parse error appended; a
  /// second failure propagates.
  std::string ask(OracleRole role, const std::vector<Message>& request, const ResponseCheck& check = {});

  const std::vector<Exchange>& transcript() const { return transcript_; }
  std::size_t calls(OracleRole role) const;
  std::size_t total_calls() const { return transcript_.size(); }
  std::map<std::string, std::size_t> call_counts() const;

 private:
  std::string send(OracleRole role, const std::vector<Message>& request);

  Oracle& backend_;
  std::ostream* sink_;
  std::vector<Exchange> transcript_;
};

/// Serves a recorded transcript in order.
class ReplayOracle : public Oracle {
 public:
  explicit ReplayOracle(std::vector<Exchange> transcript);
  static ReplayOracle from_file(const std::string& path);

  std::string complete(OracleRole role, const std::vector<Message>& request) override;
  std::size_t served() const { return next_; }
  std::size_t size() const { return exchanges_.size(); }

 private:
  std::vector<Exchange> exchanges_;
  std::size_t next_ = 0;
};

/// Line diff of two requests, "-" recorded and "+" current.
std::string request_diff(const std::vector<Message>& recorded, const std::vector<Message>& current);

struct HttpResponse {
  long status = 0;
  std::string body;
};

class HttpTransport {
 public:
  virtual ~HttpTransport() = default;
  /// Throws TransportError when no response is received.
  virtual HttpResponse post(const std::string& url, const std::vector<std::string>& headers,
                            const std::string& body) = 0;
};

class CurlTransport : public HttpTransport {
 public:
  explicit CurlTransport(long timeout_seconds = 120);
  HttpResponse post(const std::string& url, const std::vector<std::string>& headers,
                    const std::string& body) override;

 private:
  long timeout_;
};

struct LiveConfig {
  std::string endpoint = "https://api.openai.com/v1/chat/completions";
  std::string model = "gpt-4.1-mini";
  std::string api_key;
  double temperature = 0.0;
  std::size_t max_attempts = 3;
  std::size_t backoff_ms = 500;

  /// DOMLEARN_ENDPOINT, DOMLEARN_MODEL, DOMLEARN_API_KEY.
  static LiveConfig from_env();
};

/// Chat-completion client. Retries transport errors, 5xx and 429 with
/// exponential backoff.
class LiveOracle : public Oracle {
 public:
  using Sleeper = std::function<void(std::size_t ms)>;

  /// Throws AuthError when no API key is configured.
  explicit LiveOracle(LiveConfig config, std::shared_ptr<HttpTransport> transport = nullptr, Sleeper sleep = {});

  std::string complete(OracleRole role, const std::vector<Message>& request) override;

  std::string request_body(const std::vector<Message>& request) const;
  /// One entry per HTTP attempt: status, or 0 for a transport failure.
  const std::vector<long>& attempts() const { return attempts_; }

 private:
  LiveConfig config_;
  std::shared_ptr<HttpTransport> transport_;
  Sleeper sleep_;
  std::vector<long> attempts_;
};

}  // namespace domlearn
