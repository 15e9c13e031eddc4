// Interactive diagnosis sessions driven by JSON messages.
//
// A session wraps one program, an optional specification and one query in a
// mode: run, trace, alg4, alg5, tree or missing.  With the "spec" oracle a
// diagnosis completes when the session is created.  With the "human" oracle
// the session stops at every question (or, in tree mode, waits for
// navigation and judgements) and resumes on the next step.
//
// Question-driven strategies are resumed by replaying the answers given so
// far from the beginning, which keeps transcripts identical to an
// uninterrupted run.

#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "lpdiag/diagnose.hpp"
#include "lpdiag/engine.hpp"
#include "lpdiag/parser.hpp"
#include "lpdiag/spec.hpp"
#include "lpdiag/trace.hpp"

namespace lpdiag::service {

using json = nlohmann::json;

class ServiceError : public std::runtime_error {
 public:
  ServiceError(std::string code, int status, const std::string& message)
      : std::runtime_error(message), code_(std::move(code)), status_(status) {}

  const std::string& code() const { return code_; }
  int status() const { return status_; }

  ServiceError& at(std::size_t line, std::size_t column) {
    line_ = line;
    column_ = column;
    return *this;
  }

  json to_json() const {
    json j{{"kind", "error"}, {"code", code_}, {"message", what()}};
    if (line_) {
      j["line"] = line_;
      j["column"] = column_;
    }
    return j;
  }

 private:
  std::string code_;
  int status_;
  std::size_t line_ = 0;
  std::size_t column_ = 0;
};

enum class Mode { kRun, kTrace, kAlg4, kAlg5, kTree, kMissing };
enum class OracleMode { kHuman, kSpec };

inline std::string_view mode_name(Mode m) {
  switch (m) {
    case Mode::kRun:
      return "run";
    case Mode::kTrace:
      return "trace";
    case Mode::kAlg4:
      return "alg4";
    case Mode::kAlg5:
      return "alg5";
    case Mode::kTree:
      return "tree";
    case Mode::kMissing:
      return "missing";
  }
  return "?";
}

inline std::optional<Mode> parse_mode(std::string_view s) {
  for (Mode m : {Mode::kRun, Mode::kTrace, Mode::kAlg4, Mode::kAlg5, Mode::kTree, Mode::kMissing}) {
    if (s == mode_name(m)) return m;
  }
  if (s == "diagnose-missing") return Mode::kMissing;
  return std::nullopt;
}

struct SessionConfig {
  std::string program;
  std::optional<std::string> spec;
  std::string query;
  Mode mode = Mode::kRun;
  OracleMode oracle = OracleMode::kHuman;
  std::size_t answer_index = 0;  // which answer of the query is the wrong one
  bool start_from_answer = false;
  bool events = false;  // trace mode: include the port transcript
  EngineOptions engine;
};

// ---------------------------------------------------------------------------
// JSON rendering

inline json summary_json(const SolveSummary& s) {
  json j{{"outcome", s.complete() ? "complete" : (s.outcome == Outcome::kStopped ? "stopped" : "truncated")},
         {"answers", s.answers},
         {"steps", s.steps}};
  if (s.limit != Limit::kNone) j["limit"] = std::string(limit_name(s.limit));
  return j;
}

inline json question_json(const OracleQuestion& q, std::size_t id) {
  json answers = json::array();
  for (const auto& a : q.answers) answers.push_back(to_string(a));
  return json{{"kind", "oracle.question"},
              {"id", id},
              {"question", std::string(OracleQuestion::function_name(q.kind))},
              {"atom", to_string(q.atom)},
              {"answers", answers},
              {"text", q.text()}};
}

inline json verdict_json(const Program& program, const Verdict& v, const ValidityReport& validity) {
  json j{{"kind", "verdict"}, {"lines", render_verdict(program, v)}};
  if (const auto* ic = v.incorrect_clause()) {
    json body = json::array();
    for (const auto& b : ic->body) body.push_back(to_string(b));
    json clause{{"predicate", ic->clause.predicate.to_string()}, {"index", ic->clause.index}};
    if (const Clause* c = program.clause(ic->clause.predicate, ic->clause.index)) {
      clause["line"] = c->origin.line;
      clause["source"] = to_string(*c);
    }
    j["type"] = "incorrect_clause_instance";
    j["clause"] = clause;
    j["head"] = to_string(ic->head);
    j["body"] = body;
    j["instance"] = instance_text(ic->head, ic->body);
  } else if (const auto* ua = v.uncovered_atom()) {
    j["type"] = "uncovered_atom";
    j["atom"] = to_string(ua->atom);
    j["procedure"] = ua->procedure.to_string();
    j["witness"] = ua->witness ? json(to_string(*ua->witness)) : json(nullptr);
  }
  j["valid"] = validity.valid;
  j["validity"] = validity.reason;
  return j;
}

inline std::string_view diagnosis_error_code(DiagnosisError::Kind k) {
  switch (k) {
    case DiagnosisError::Kind::kNotASymptom:
      return "not_a_symptom";
    case DiagnosisError::Kind::kInconclusive:
      return "inconclusive";
    case DiagnosisError::Kind::kTruncated:
      return "truncated";
    case DiagnosisError::Kind::kUnreproducible:
      return "unreproducible";
    case DiagnosisError::Kind::kIllegalAction:
      return "illegal_action";
  }
  return "diagnosis_error";
}

// ---------------------------------------------------------------------------

class Session {
 public:
  enum class Status { kActive, kAwaitingAnswer, kFinished, kFailed };

  static std::string_view status_name(Status s) {
    switch (s) {
      case Status::kActive:
        return "active";
      case Status::kAwaitingAnswer:
        return "awaiting_answer";
      case Status::kFinished:
        return "finished";
      case Status::kFailed:
        return "failed";
    }
    return "?";
  }

  Session(std::string id, SessionConfig config) : id_(std::move(id)), config_(std::move(config)) {
    try {
      program_ = parse_program(config_.program);
    } catch (const ParseError& e) {
      throw ServiceError("parse_error", 422, "program: " + e.message()).at(e.line(), e.column());
    }
    if (config_.spec) {
      try {
        spec_ = std::make_shared<const Specification>(Specification::parse(*config_.spec));
      } catch (const ParseError& e) {
        throw ServiceError("parse_error", 422, "spec: " + e.message()).at(e.line(), e.column());
      } catch (const SpecError& e) {
        throw ServiceError("spec_error", 422, e.what());
      }
    }
    try {
      // Numbered on its own, as on the command line, so printed variables agree.
      query_ = parse_query(config_.query);
    } catch (const ParseError& e) {
      throw ServiceError("parse_error", 422, "query: " + e.message()).at(e.line(), e.column());
    }
    if (!query_.builtin() && !program_.defines(query_.key())) {
      throw ServiceError("engine_error", 422, "unknown procedure " + query_.key().to_string());
    }
    if (config_.oracle == OracleMode::kSpec && !spec_ && diagnosing()) {
      throw ServiceError("bad_request", 400, "the spec oracle needs a specification");
    }
    try {
      start();
    } catch (const EngineError& e) {
      throw ServiceError("engine_error", 422, e.what());
    } catch (const SpecError& e) {
      throw ServiceError("spec_error", 422, e.what());
    }
  }

  const std::string& id() const { return id_; }
  Status status() const { return status_; }
  const std::vector<std::string>& transcript() const { return transcript_; }
  const std::optional<OracleQuestion>& pending() const { return pending_; }
  std::size_t steps() const { return steps_; }

  std::optional<json> question() const {
    if (!pending_) return std::nullopt;
    json q = question_json(*pending_, given_.size() + 1);
    q["session"] = id_;
    return q;
  }

  json view() const {
    json v{{"kind", "session.view"},
           {"session", id_},
           {"mode", std::string(mode_name(config_.mode))},
           {"oracle", config_.oracle == OracleMode::kSpec ? "spec" : "human"},
           {"query", to_string(query_)},
           {"status", std::string(status_name(status_))},
           {"steps", steps_},
           {"transcript_length", transcript_.size()}};
    v["question"] = pending_ ? *question() : json(nullptr);
    v["verdict"] = verdict_json_ ? *verdict_json_ : json(nullptr);
    v["error"] = error_ ? *error_ : json(nullptr);
    v["actions"] = actions();
    if (config_.mode == Mode::kRun) {
      json answers = json::array();
      for (const auto& a : run_answers_) {
        answers.push_back({{"atom", to_string(a.atom)}, {"bindings", format_bindings(query_, a)}});
      }
      v["answers"] = answers;
      v["summary"] = summary_json(run_summary_);
    }
    if (config_.mode == Mode::kTrace && trace_) {
      json rows = json::array();
      for (const auto& e : trace_->entries) {
        json answers = json::array();
        for (const auto& a : e.answers) answers.push_back(to_string(a));
        rows.push_back({{"call", to_string(e.call)}, {"answers", answers}, {"failed", e.failed}, {"truncated", e.truncated}});
      }
      json roots = json::array();
      for (const auto& a : trace_->root_answers) roots.push_back(to_string(a));
      v["table"] = rows;
      v["answers"] = roots;
      v["summary"] = summary_json(trace_->summary);
      v["rendered"] = render_table(*trace_);
    }
    if (tree_) v["tree"] = tree_view();
    return v;
  }

  // Applies one action message; returns the new view.
  json step(const json& message) {
    std::string kind = message.value("kind", "session.step");
    if (kind == "oracle.answer") {
      answer(message);
    } else if (kind == "session.step") {
      if (!message.contains("action") || !message["action"].is_string()) {
        throw ServiceError("bad_request", 400, "session.step needs an action");
      }
      act(message["action"].get<std::string>());
    } else {
      throw ServiceError("bad_request", 400, "unexpected message kind '" + kind + "'");
    }
    ++steps_;
    return view();
  }

 private:
  bool diagnosing() const { return config_.mode != Mode::kRun && config_.mode != Mode::kTrace; }

  json actions() const {
    json out = json::array();
    if (status_ == Status::kAwaitingAnswer) {
      for (const char* a : {"yes", "no", "defer"}) out.push_back(a);
    }
    if (tree_ && status_ == Status::kActive) {
      for (Move m : tree_->moves()) out.push_back(std::string(move_key(m)));
      const ProofTree& n = tree_->current();
      if (!n.builtin && !tree_->judgement(tree_->path())) {
        out.push_back("correct");
        out.push_back("incorrect");
      }
      if (tree_->error_node()) out.push_back("s");
    }
    return out;
  }

  json node_json(const TreeSession::Path& p) const {
    const ProofTree& n = tree_->node_at(p);
    auto j = tree_->judgement(p);
    return json{{"atom", to_string(n.atom)},
                {"path", p},
                {"builtin", n.builtin},
                {"judgement", j ? json(*j ? "correct" : "incorrect") : json(nullptr)}};
  }

  json tree_view() const {
    const auto& path = tree_->path();
    json children = json::array();
    for (std::size_t i = 0; i < tree_->current().children.size(); ++i) {
      auto p = path;
      p.push_back(i);
      children.push_back(node_json(p));
    }
    json siblings = json::array();
    json parent = nullptr;
    if (!path.empty()) {
      TreeSession::Path pp(path.begin(), path.end() - 1);
      parent = node_json(pp);
      for (std::size_t i = 0; i < tree_->node_at(pp).children.size(); ++i) {
        auto p = pp;
        p.push_back(i);
        siblings.push_back(node_json(p));
      }
    }
    json moves = json::array();
    for (Move m : tree_->moves()) moves.push_back(std::string(move_key(m)));
    return json{{"node", node_json(path)},
                {"parent", parent},
                {"siblings", siblings},
                {"children", children},
                {"moves", moves},
                {"last_incorrect", to_string(tree_->node_at(tree_->last_incorrect()).atom)},
                {"can_show_error", tree_->error_node().has_value()}};
  }

  void append(const std::vector<std::string>& lines) {
    // Replays reproduce the existing prefix; only new lines are added.
    for (std::size_t i = transcript_.size(); i < lines.size(); ++i) transcript_.push_back(lines[i]);
  }

  void fail(const std::string& code, const std::string& message) {
    status_ = Status::kFailed;
    pending_.reset();
    error_ = json{{"kind", "error"}, {"code", code}, {"message", message}};
    transcript_.push_back("error: " + message);
  }

  Atom designated_answer() {
    EngineOptions opts = config_.engine;
    opts.record_proofs = false;
    auto result = solve(program_, query_, opts);
    if (config_.answer_index >= result.answers.size()) {
      throw ServiceError("no_answer", 422,
                         fmt::format("{} has {} answer(s); answer {} requested", to_string(query_),
                                     result.answers.size(), config_.answer_index));
    }
    return result.answers[config_.answer_index].atom;
  }

  void start() {
    switch (config_.mode) {
      case Mode::kRun: {
        EngineOptions opts = config_.engine;
        opts.record_proofs = false;
        auto result = solve(program_, query_, opts);
        run_answers_ = std::move(result.answers);
        run_summary_ = result.summary;
        for (const auto& a : run_answers_) transcript_.push_back(format_bindings(query_, a));
        if (run_answers_.empty()) transcript_.push_back("no answers");
        status_ = Status::kFinished;
        return;
      }
      case Mode::kTrace: {
        if (config_.events) {
          auto result = solve(program_, query_, config_.engine);
          for (const auto& e : result.events) transcript_.push_back(format_event(e));
        }
        trace_ = top_level_trace(program_, query_, config_.engine);
        std::string table = render_table(*trace_);
        std::size_t start = 0;
        while (start < table.size()) {
          auto end = table.find('\n', start);
          transcript_.push_back(table.substr(start, end - start));
          start = end + 1;
        }
        status_ = Status::kFinished;
        return;
      }
      case Mode::kTree: {
        Atom answer = designated_answer();
        if (config_.oracle == OracleMode::kSpec) {
          Oracle oracle = Oracle::from_spec(spec_);
          run_to_end([&](std::vector<std::string>& log) {
            Verdict v = diagnose_wrong_tree(program_, proof_tree(program_, query_, answer, config_.engine), oracle);
            log = v.transcript;
            return v;
          }, oracle);
          return;
        }
        tree_.emplace(program_, proof_tree(program_, query_, answer, config_.engine));
        append(tree_->transcript());
        status_ = Status::kActive;
        return;
      }
      case Mode::kAlg4:
      case Mode::kAlg5:
        symptom_answer_ = designated_answer();
        [[fallthrough]];
      case Mode::kMissing:
        if (config_.oracle == OracleMode::kSpec) {
          Oracle oracle = Oracle::from_spec(spec_);
          run_to_end([&](std::vector<std::string>& log) { return run_strategy(oracle, log); }, oracle);
        } else {
          resume();
        }
        return;
    }
  }

  Verdict run_strategy(Oracle& oracle, std::vector<std::string>& log) {
    switch (config_.mode) {
      case Mode::kAlg4:
        return diagnose_wrong_alg4(program_, {query_, *symptom_answer_}, oracle, config_.engine, &log);
      case Mode::kAlg5:
        return diagnose_wrong_alg5(program_, {query_, *symptom_answer_}, oracle, config_.engine,
                                   config_.start_from_answer, &log);
      default:
        return diagnose_missing(program_, {query_}, oracle, config_.engine, &log);
    }
  }

  template <typename Fn>
  void run_to_end(Fn&& fn, Oracle& oracle) {
    std::vector<std::string> log;
    try {
      Verdict v = fn(log);
      append(log);
      deliver(v, oracle);
    } catch (const DiagnosisError& e) {
      append(log);
      fail(std::string(diagnosis_error_code(e.kind())), e.what());
    }
  }

  // Re-runs the strategy with every answer given so far.
  void resume() {
    Oracle oracle(std::make_unique<ReplayBackend>(given_, nullptr));
    std::vector<std::string> log;
    try {
      Verdict v = run_strategy(oracle, log);
      append(log);
      pending_.reset();
      deliver(v, oracle);
    } catch (const PendingQuestion& q) {
      append(log);
      pending_ = q.question;
      status_ = Status::kAwaitingAnswer;
    } catch (const DiagnosisError& e) {
      append(log);
      fail(std::string(diagnosis_error_code(e.kind())), e.what());
    }
  }

  // Checks the verdict against the answers that produced it before it goes
  // out on the wire.
  void deliver(const Verdict& v, Oracle& source) {
    ValidityReport validity;
    if (config_.oracle == OracleMode::kSpec) {
      Oracle fresh = Oracle::from_spec(spec_);
      validity = check_verdict(program_, v, fresh, spec_, config_.engine);
    } else {
      std::map<std::string, Judgement> known;
      for (const auto& e : source.log()) {
        if (e.judgement != Judgement::kDeferred) known[e.question.key()] = e.judgement;
      }
      Oracle recorded(std::make_unique<CallbackBackend>([known](const OracleQuestion& q) {
        auto it = known.find(q.key());
        return it == known.end() ? Judgement::kDeferred : it->second;
      }));
      validity = check_verdict(program_, v, recorded, nullptr, config_.engine);
    }
    verdict_json_ = verdict_json(program_, v, validity);
    status_ = Status::kFinished;
  }

  void answer(const json& message) {
    if (!pending_) throw ServiceError("no_pending_question", 409, "no question is pending");
    if (message.contains("question") && message["question"] != given_.size() + 1) {
      throw ServiceError("stale_question", 409,
                         fmt::format("question {} is pending", given_.size() + 1));
    }
    std::string text = message.value("answer", "");
    auto j = parse_judgement(text);
    if (!j) throw ServiceError("bad_request", 400, "answer must be yes, no or defer");
    given_.push_back(*j);
    resume();
  }

  void act(const std::string& action) {
    if (!tree_) {
      if (pending_) throw ServiceError("illegal_action", 409, "a question is pending; send an oracle.answer");
      throw ServiceError("illegal_action", 409, "no actions in " + std::string(mode_name(config_.mode)) + " mode");
    }
    if (status_ != Status::kActive) throw ServiceError("illegal_action", 409, "session finished");
    try {
      if (auto m = parse_move(action)) {
        tree_->move(*m);
      } else if (action == "correct" || action == "incorrect") {
        tree_->judge(action == "correct");
      } else if (action == "s") {
        Verdict v = tree_->show_error();
        append(tree_->transcript());
        deliver_tree(v);
        return;
      } else {
        throw ServiceError("bad_request", 400, "unknown action '" + action + "'");
      }
    } catch (const DiagnosisError& e) {
      throw ServiceError(std::string(diagnosis_error_code(e.kind())), 409, e.what());
    }
    append(tree_->transcript());
  }

  // Tree verdicts are checked against the human's judgements; children left
  // unjudged at "s" count as asserted correct.
  void deliver_tree(const Verdict& v) {
    std::map<std::string, Judgement> known;
    for (const auto& [path, correct] : tree_->judgements()) {
      known[OracleQuestion::is_correct(tree_->node_at(path).atom).key()] = correct ? Judgement::kYes : Judgement::kNo;
    }
    if (const auto* ic = v.incorrect_clause()) {
      for (const auto& b : ic->body) known.emplace(OracleQuestion::is_correct(b).key(), Judgement::kYes);
    }
    Oracle recorded(std::make_unique<CallbackBackend>([known](const OracleQuestion& q) {
      auto it = known.find(q.key());
      return it == known.end() ? Judgement::kDeferred : it->second;
    }));
    ValidityReport validity = check_verdict(program_, v, recorded, nullptr, config_.engine);
    verdict_json_ = verdict_json(program_, v, validity);
    status_ = Status::kFinished;
  }

  std::string id_;
  SessionConfig config_;
  Program program_;
  std::shared_ptr<const Specification> spec_;
  Atom query_;
  Status status_ = Status::kActive;
  std::size_t steps_ = 0;
  std::vector<std::string> transcript_;

  std::vector<Answer> run_answers_;
  SolveSummary run_summary_;
  std::optional<TopLevelTrace> trace_;
  std::optional<TreeSession> tree_;
  std::optional<Atom> symptom_answer_;
  std::vector<Judgement> given_;
  std::optional<OracleQuestion> pending_;
  std::optional<json> verdict_json_;
  std::optional<json> error_;
};

// ---------------------------------------------------------------------------

struct ServiceOptions {
  EngineOptions engine;
  std::chrono::milliseconds idle_timeout = std::chrono::hours(1);
  std::function<void(const std::string&)> log;  // lifecycle messages
};

// Builds a SessionConfig from a session.create message; unset options fall
// back to `defaults`.
inline SessionConfig parse_create(const json& m, const EngineOptions& defaults) {
  auto text = [&](const char* key) -> std::string {
    if (!m.contains(key) || !m[key].is_string()) {
      throw ServiceError("bad_request", 400, std::string("session.create needs a string '") + key + "'");
    }
    return m[key].get<std::string>();
  };
  SessionConfig c;
  c.program = text("program");
  c.query = text("query");
  if (m.contains("spec") && !m["spec"].is_null()) c.spec = text("spec");
  auto mode = parse_mode(m.value("mode", "run"));
  if (!mode) throw ServiceError("bad_request", 400, "unknown mode '" + m.value("mode", "") + "'");
  c.mode = *mode;
  std::string oracle = m.value("oracle", c.spec ? "spec" : "human");
  if (oracle == "spec") {
    c.oracle = OracleMode::kSpec;
  } else if (oracle == "human") {
    c.oracle = OracleMode::kHuman;
  } else {
    throw ServiceError("bad_request", 400, "oracle must be spec or human");
  }
  c.engine = defaults;
  json options = m.value("options", json::object());
  try {
    c.answer_index = options.value("answer_index", std::size_t{0});
    c.start_from_answer = options.value("start_from_answer", false);
    c.events = options.value("events", false);
    c.engine.occurs_check = options.value("occurs_check", defaults.occurs_check);
    json bounds = options.value("bounds", json::object());
    c.engine.bounds.max_depth = bounds.value("max_depth", defaults.bounds.max_depth);
    c.engine.bounds.max_steps = bounds.value("max_steps", defaults.bounds.max_steps);
    c.engine.bounds.max_answers = bounds.value("max_answers", defaults.bounds.max_answers);
  } catch (const json::exception& e) {
    throw ServiceError("bad_request", 400, std::string("options: ") + e.what());
  }
  return c;
}

// Owns the live sessions.  Sessions run concurrently; a step on a session
// that is already executing one is rejected with "busy".  Views and
// transcripts are served from snapshots, so reading never waits for a step.
class SessionManager {
 public:
  using Clock = std::function<std::chrono::steady_clock::time_point()>;

  explicit SessionManager(ServiceOptions options = {}, Clock clock = [] { return std::chrono::steady_clock::now(); })
      : options_(std::move(options)), clock_(std::move(clock)), rng_(std::random_device{}()) {}

  const ServiceOptions& options() const { return options_; }

  json create(const json& message) {
    expire_idle();
    SessionConfig config = parse_create(message, options_.engine);
    auto entry = std::make_shared<Entry>();
    std::string id = fresh_id();
    entry->session = std::make_unique<Session>(id, std::move(config));
    entry->last_used = clock_();
    entry->snapshot();
    json view = entry->view;
    {
      std::lock_guard lock(mu_);
      sessions_[id] = entry;
    }
    note("session " + id + " created (" + view["mode"].get<std::string>() + ", " +
         view["status"].get<std::string>() + ")");
    return view;
  }

  json view(const std::string& id) {
    auto e = find(id);
    std::lock_guard lock(e->state_mu);
    return e->view;
  }

  json step(const std::string& id, const json& message) {
    auto e = find(id);
    std::unique_lock busy(e->step_mu, std::try_to_lock);
    if (!busy.owns_lock()) throw ServiceError("busy", 409, "session " + id + " is executing another step");
    json view = e->session->step(message);
    e->snapshot();
    if (e->session->status() == Session::Status::kFinished || e->session->status() == Session::Status::kFailed) {
      note("session " + id + " " + view["status"].get<std::string>());
    }
    return view;
  }

  json transcript(const std::string& id) {
    auto e = find(id);
    std::lock_guard lock(e->state_mu);
    return json{{"kind", "transcript"}, {"session", id}, {"lines", e->lines}};
  }

  // Long poll: the pending question, or nullopt if none appears within
  // `timeout`.  Returns at once when one is pending or the session is over.
  std::optional<json> wait_question(const std::string& id, std::chrono::milliseconds timeout) {
    auto e = find(id);
    std::unique_lock lock(e->state_mu);
    e->cv.wait_for(lock, timeout, [&] { return e->question || e->done; });
    return e->question;
  }

  bool remove(const std::string& id) {
    std::lock_guard lock(mu_);
    return sessions_.erase(id) > 0;
  }

  // Drops sessions idle for longer than the configured timeout.
  std::size_t expire_idle() {
    auto now = clock_();
    std::vector<std::string> gone;
    {
      std::lock_guard lock(mu_);
      for (auto it = sessions_.begin(); it != sessions_.end();) {
        if (now - it->second->touched() > options_.idle_timeout) {
          gone.push_back(it->first);
          it = sessions_.erase(it);
        } else {
          ++it;
        }
      }
    }
    for (const auto& id : gone) note("session " + id + " expired");
    return gone.size();
  }

  std::size_t size() const {
    std::lock_guard lock(mu_);
    return sessions_.size();
  }

 private:
  struct Entry {
    std::unique_ptr<Session> session;
    std::mutex step_mu;
    std::mutex state_mu;
    std::condition_variable cv;
    json view;
    std::vector<std::string> lines;
    std::optional<json> question;
    bool done = false;
    std::chrono::steady_clock::time_point last_used;

    std::chrono::steady_clock::time_point touched() {
      std::lock_guard lock(state_mu);
      return last_used;
    }

    void snapshot() {
      {
        std::lock_guard lock(state_mu);
        view = session->view();
        lines = session->transcript();
        question = session->question();
        done = session->status() == Session::Status::kFinished || session->status() == Session::Status::kFailed;
      }
      cv.notify_all();
    }
  };

  std::shared_ptr<Entry> find(const std::string& id) {
    expire_idle();
    std::shared_ptr<Entry> e;
    {
      std::lock_guard lock(mu_);
      auto it = sessions_.find(id);
      if (it == sessions_.end()) throw ServiceError("unknown_session", 404, "no session " + id);
      e = it->second;
    }
    std::lock_guard lock(e->state_mu);
    e->last_used = clock_();
    return e;
  }

  std::string fresh_id() {
    std::lock_guard lock(mu_);
    return fmt::format("{:016x}{:016x}", rng_(), rng_());
  }

  void note(const std::string& line) {
    if (options_.log) options_.log(line);
  }

  ServiceOptions options_;
  Clock clock_;
  mutable std::mutex mu_;
  std::mt19937_64 rng_;
  std::map<std::string, std::shared_ptr<Entry>> sessions_;
};

}  // namespace lpdiag::service
