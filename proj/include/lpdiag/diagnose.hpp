// Locating errors from symptoms.
//
// Wrong answers lead to an incorrect clause instance: an instance of a
// program clause whose head is incorrect while every body atom is correct.
// Three strategies find one:
//   * diagnose_wrong_alg4 walks down success traces, recursing on the first
//     incorrect item;
//   * diagnose_wrong_alg5 judges answers while the top-level trace is being
//     built and jumps into the first incorrect one immediately;
//   * TreeSession / diagnose_wrong_tree navigate the proof tree of the wrong
//     answer, by hand or automatically.
//
// Missing answers lead to an uncovered atom: a symptom whose top-level trace
// holds no further symptom (diagnose_missing).

#pragma once

#include <cstddef>
#include <map>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "lpdiag/engine.hpp"
#include "lpdiag/spec.hpp"
#include "lpdiag/trace.hpp"

namespace lpdiag {

class DiagnosisError : public std::runtime_error {
 public:
  enum class Kind {
    kNotASymptom,     // the oracle does not confirm the symptom
    kInconclusive,    // deferred questions left the search undecided
    kTruncated,       // a bounded search cannot separate missing from undiscovered answers
    kUnreproducible,  // an answer could not be recomputed
    kIllegalAction,   // navigation or judgement not allowed in this state
  };

  DiagnosisError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

struct IncorrectClauseInstance {
  ClauseOrigin clause;
  Atom head;
  std::vector<Atom> body;
};

struct UncoveredAtom {
  Atom atom;
  PredicateKey procedure;
  std::optional<Atom> witness;  // ground instance required by the specification
};

struct Verdict {
  std::variant<IncorrectClauseInstance, UncoveredAtom> error;
  std::vector<std::string> transcript;
  std::size_t events_examined = 0;

  const IncorrectClauseInstance* incorrect_clause() const { return std::get_if<IncorrectClauseInstance>(&error); }
  const UncoveredAtom* uncovered_atom() const { return std::get_if<UncoveredAtom>(&error); }
};

struct WrongAnswer {
  Atom query;
  Atom answer;
};

// A query that finitely fails, or whose answer set lacks answers.
struct MissingAnswer {
  Atom query;
};

inline std::string instance_text(const Atom& head, const std::vector<Atom>& body) {
  std::string out = to_string(head);
  for (std::size_t i = 0; i < body.size(); ++i) out += (i == 0 ? " :- " : ", ") + to_string(body[i]);
  return out + ".";
}

inline std::vector<std::string> render_verdict(const Program& program, const Verdict& v) {
  std::vector<std::string> out;
  if (const auto* ic = v.incorrect_clause()) {
    out.push_back("verdict: incorrect clause instance");
    std::string source;
    if (const Clause* c = program.clause(ic->clause.predicate, ic->clause.index)) {
      source = " (line " + std::to_string(c->origin.line) + "): " + to_string(*c);
    }
    out.push_back("  clause: " + ic->clause.to_string() + source);
    out.push_back("  instance: " + instance_text(ic->head, ic->body));
  } else if (const auto* ua = v.uncovered_atom()) {
    out.push_back("verdict: uncovered atom " + to_string(ua->atom));
    out.push_back("  procedure: " + ua->procedure.to_string());
    if (ua->witness) out.push_back("  witness: " + to_string(*ua->witness));
  }
  return out;
}

namespace detail {

inline std::string ask_line(const OracleQuestion& q, Judgement j) {
  return q.text() + "? " + std::string(judgement_name(j));
}

inline Judgement ask_logged(Oracle& oracle, const OracleQuestion& q, std::vector<std::string>& log) {
  Judgement j = oracle.ask(q);
  log.push_back(ask_line(q, j));
  return j;
}

inline void confirm_wrong_answer(Oracle& oracle, const WrongAnswer& s, std::vector<std::string>& log) {
  log.push_back("symptom: " + to_string(s.answer) + " is an answer to " + to_string(s.query));
  Judgement j = ask_logged(oracle, OracleQuestion::is_correct(s.answer), log);
  if (j == Judgement::kYes) {
    throw DiagnosisError(DiagnosisError::Kind::kNotASymptom, to_string(s.answer) + " is correct");
  }
  if (j == Judgement::kDeferred) {
    throw DiagnosisError(DiagnosisError::Kind::kInconclusive, "symptom " + to_string(s.answer) + " not confirmed");
  }
}

inline void log_success_trace(const SuccessTrace& st, std::vector<std::string>& log) {
  log.push_back("success trace of " + to_string(st.answer) + " (" + st.clause.to_string() + "):");
  if (st.items.empty()) log.push_back("  (empty)");
  for (const auto& item : st.items) log.push_back("  " + to_string(item.atom) + (item.builtin ? " (built-in)" : ""));
}

inline IncorrectClauseInstance instance_of(const SuccessTrace& st) {
  IncorrectClauseInstance ic{st.clause, st.answer, {}};
  for (const auto& item : st.items) ic.body.push_back(item.atom);
  return ic;
}

// Runs `call` until an answer that is a variant of `answer`; counts the
// trace events seen on the way.
inline ProofTree reach_answer(const Program& program, const Atom& call, const Atom& answer,
                              const EngineOptions& options, std::size_t& events) {
  EngineOptions opts = options;
  opts.record_proofs = true;
  Solver solver(program, opts);
  std::shared_ptr<const ProofTree> found;
  solver.run(
      call,
      [&](const Answer& a) {
        if (!is_variant(a.atom, answer)) return true;
        found = a.proof;
        return false;
      },
      [&](const TraceEvent&) {
        ++events;
        return true;
      });
  if (!found) {
    throw DiagnosisError(DiagnosisError::Kind::kUnreproducible,
                         to_string(answer) + " is not an answer of " + to_string(call));
  }
  return *found;
}

}  // namespace detail

// Each strategy appends its dialogue to `progress` as it goes when given, so
// a caller still sees it if the oracle interrupts the run.

// Success-trace descent: compute the success trace of the incorrect answer,
// recurse on its first incorrect item, and stop at a trace whose items are
// all correct.
inline Verdict diagnose_wrong_alg4(const Program& program, const WrongAnswer& symptom, Oracle& oracle,
                                   const EngineOptions& options = {},
                                   std::vector<std::string>* progress = nullptr) {
  Verdict v;
  std::vector<std::string> local;
  auto& log = progress ? *progress : local;
  detail::confirm_wrong_answer(oracle, symptom, log);
  Atom call = symptom.query;
  Atom answer = symptom.answer;
  while (true) {
    ProofTree tree = detail::reach_answer(program, call, answer, options, v.events_examined);
    SuccessTrace st = success_trace_of(program, tree);
    detail::log_success_trace(st, log);
    const SuccessTraceItem* wrong = nullptr;
    bool deferred = false;
    for (const auto& item : st.items) {
      if (item.builtin) continue;
      Judgement j = detail::ask_logged(oracle, OracleQuestion::is_correct(item.atom), log);
      if (j == Judgement::kNo) {
        wrong = &item;
        break;
      }
      deferred = deferred || j == Judgement::kDeferred;
    }
    if (wrong) {
      log.push_back("jump to call " + to_string(wrong->call));
      call = wrong->call;
      answer = wrong->atom;
      continue;
    }
    if (deferred) {
      throw DiagnosisError(DiagnosisError::Kind::kInconclusive,
                           "deferred items in the success trace of " + to_string(answer));
    }
    log.push_back("all items correct: incorrect clause instance located");
    v.error = detail::instance_of(st);
    auto rendered = render_verdict(program, v);
    log.insert(log.end(), rendered.begin(), rendered.end());
    v.transcript = log;
    return v;
  }
}

// Eager descent: answers of top-level calls are judged as they appear, and
// the first incorrect one is entered at once.  When `start_from_answer` is
// set the search begins from the incorrect answer itself instead of the
// original query.
inline Verdict diagnose_wrong_alg5(const Program& program, const WrongAnswer& symptom, Oracle& oracle,
                                   const EngineOptions& options = {}, bool start_from_answer = false,
                                   std::vector<std::string>* progress = nullptr) {
  Verdict v;
  std::vector<std::string> local;
  auto& log = progress ? *progress : local;
  detail::confirm_wrong_answer(oracle, symptom, log);
  Atom call = start_from_answer ? symptom.answer : symptom.query;
  Atom target = symptom.answer;
  EngineOptions opts = options;
  opts.record_proofs = true;
  while (true) {
    log.push_back("tracing " + to_string(call) + " towards " + to_string(target));
    std::optional<std::pair<Atom, Atom>> jump;
    TopLevelRecorder recorder([&](const TopLevelEntry& entry, const Atom& answer) {
      Judgement j = detail::ask_logged(oracle, OracleQuestion::is_correct(answer), log);
      if (j != Judgement::kNo) return true;
      jump.emplace(entry.call, answer);
      return false;
    });
    std::shared_ptr<const ProofTree> reached;
    Solver solver(program, opts);
    solver.run(
        call,
        [&](const Answer& a) {
          if (!is_variant(a.atom, target)) return true;
          reached = a.proof;
          return false;
        },
        [&](const TraceEvent& e) {
          ++v.events_examined;
          return recorder.observe(e);
        });
    if (jump) {
      log.push_back("jump to call " + to_string(jump->first));
      call = jump->first;
      target = jump->second;
      continue;
    }
    if (!reached) {
      throw DiagnosisError(DiagnosisError::Kind::kUnreproducible,
                           to_string(target) + " is not an answer of " + to_string(call));
    }
    SuccessTrace st = success_trace_of(program, *reached);
    detail::log_success_trace(st, log);
    for (const auto& item : st.items) {
      if (item.builtin) continue;
      // Every item was judged when its answer appeared; the cache replays it.
      if (oracle.is_correct(item.atom) != Judgement::kYes) {
        throw DiagnosisError(DiagnosisError::Kind::kInconclusive,
                             "undecided item " + to_string(item.atom) + " in the success trace of " + to_string(target));
      }
    }
    log.push_back("all items correct: incorrect clause instance located");
    v.error = detail::instance_of(st);
    auto rendered = render_verdict(program, v);
    log.insert(log.end(), rendered.begin(), rendered.end());
    v.transcript = log;
    return v;
  }
}

// ---------------------------------------------------------------------------
// Proof tree navigation

enum class Move { kChild, kLeft, kRight, kParent };

inline std::string_view move_key(Move m) {
  switch (m) {
    case Move::kChild:
      return "v";
    case Move::kLeft:
      return "<";
    case Move::kRight:
      return ">";
    case Move::kParent:
      return "^";
  }
  return "?";
}

inline std::optional<Move> parse_move(std::string_view s) {
  if (s == "v") return Move::kChild;
  if (s == "<") return Move::kLeft;
  if (s == ">") return Move::kRight;
  if (s == "^") return Move::kParent;
  return std::nullopt;
}

// Interactive browser over the proof tree of a wrong answer.  The root is the
// symptom and counts as judged incorrect.  Judging a node incorrect makes it
// the focus of the search; `show_error` reports the clause instance at the
// last incorrect node once none of its children is judged incorrect.
class TreeSession {
 public:
  using Path = std::vector<std::size_t>;

  TreeSession(const Program& program, ProofTree tree) : program_(&program), tree_(std::move(tree)) {
    judgements_[Path{}] = false;
    log_.push_back("tree diagnosis of " + to_string(tree_.atom));
    log_.push_back("at " + to_string(tree_.atom) + ": incorrect (symptom)");
  }

  const ProofTree& root() const { return tree_; }
  const ProofTree& current() const { return node_at(path_); }
  const Path& path() const { return path_; }
  const Path& last_incorrect() const { return last_incorrect_; }
  const std::vector<std::string>& transcript() const { return log_; }
  const std::optional<Verdict>& verdict() const { return verdict_; }
  const std::map<Path, bool>& judgements() const { return judgements_; }

  const ProofTree& node_at(const Path& p) const {
    const ProofTree* n = &tree_;
    for (std::size_t i : p) n = &n->children[i];
    return *n;
  }

  std::vector<Move> moves() const {
    std::vector<Move> out;
    for (Move m : {Move::kChild, Move::kLeft, Move::kRight, Move::kParent}) {
      if (can_move(m)) out.push_back(m);
    }
    return out;
  }

  bool can_move(Move m) const {
    switch (m) {
      case Move::kChild:
        return !current().children.empty();
      case Move::kLeft:
        return !path_.empty() && path_.back() > 0;
      case Move::kRight:
        return !path_.empty() && path_.back() + 1 < node_at(parent_path()).children.size();
      case Move::kParent:
        return !path_.empty();
    }
    return false;
  }

  void move(Move m) {
    if (!can_move(m)) illegal("move " + std::string(move_key(m)) + " is not available here");
    switch (m) {
      case Move::kChild:
        path_.push_back(0);
        break;
      case Move::kLeft:
        --path_.back();
        break;
      case Move::kRight:
        ++path_.back();
        break;
      case Move::kParent:
        path_.pop_back();
        break;
    }
    const ProofTree& n = current();
    log_.push_back(std::string(move_key(m)) + ": " + to_string(n.atom) + (n.builtin ? " (built-in)" : ""));
  }

  // Judgement of the current node, if any.
  std::optional<bool> judgement(const Path& p) const {
    auto it = judgements_.find(p);
    if (it == judgements_.end()) return std::nullopt;
    return it->second;
  }

  void judge(bool correct) {
    if (verdict_) illegal("diagnosis already finished");
    if (current().builtin) illegal("built-in atoms are not judged");
    if (judgements_.count(path_)) illegal(to_string(current().atom) + " is already judged");
    judgements_[path_] = correct;
    if (!correct) last_incorrect_ = path_;
    log_.push_back("judge " + to_string(current().atom) + ": " + (correct ? "correct" : "incorrect"));
  }

  // The node `show_error` would report, or nullopt when not yet allowed.
  std::optional<Path> error_node() const {
    if (judgement(path_) == false && children_cleared(path_, /*explicit_only=*/true)) return path_;
    if (path_.empty()) return std::nullopt;
    Path parent = parent_path();
    if (judgement(parent) == false && children_cleared(parent, /*explicit_only=*/false)) return parent;
    return std::nullopt;
  }

  const Verdict& show_error() {
    if (verdict_) return *verdict_;
    auto node = error_node();
    if (!node) illegal("no incorrect node with only correct children at " + to_string(current().atom));
    const ProofTree& n = node_at(*node);
    Verdict v;
    IncorrectClauseInstance ic;
    if (const Clause* c = program_->clause(n.atom.key(), n.clause)) ic.clause = c->origin;
    ic.head = n.atom;
    for (const auto& child : n.children) ic.body.push_back(child.atom);
    v.error = std::move(ic);
    log_.push_back("s: error at " + to_string(n.atom));
    auto rendered = render_verdict(*program_, v);
    log_.insert(log_.end(), rendered.begin(), rendered.end());
    v.transcript = log_;
    verdict_ = std::move(v);
    return *verdict_;
  }

  void note(std::string line) { log_.push_back(std::move(line)); }

 private:
  [[noreturn]] static void illegal(const std::string& what) {
    throw DiagnosisError(DiagnosisError::Kind::kIllegalAction, what);
  }

  Path parent_path() const { return Path(path_.begin(), path_.end() - 1); }

  // No child judged incorrect; with explicit_only every non-built-in child
  // must also carry an explicit "correct".
  bool children_cleared(const Path& p, bool explicit_only) const {
    const ProofTree& n = node_at(p);
    for (std::size_t i = 0; i < n.children.size(); ++i) {
      if (n.children[i].builtin) continue;
      Path child = p;
      child.push_back(i);
      auto j = judgement(child);
      if (j == false) return false;
      if (explicit_only && !j) return false;
    }
    return true;
  }

  const Program* program_;
  ProofTree tree_;
  Path path_;
  Path last_incorrect_;
  std::map<Path, bool> judgements_;
  std::vector<std::string> log_;
  std::optional<Verdict> verdict_;
};

// Automatic navigation: from the last incorrect node, visit its children left
// to right asking the oracle, descend into the first incorrect child, and
// report once every child is correct.
inline Verdict navigate_automatically(TreeSession& session, Oracle& oracle) {
  while (true) {
    if (session.current().children.empty()) return session.show_error();
    session.move(Move::kChild);
    bool deferred = false;
    bool descended = false;
    while (true) {
      const ProofTree& n = session.current();
      if (!n.builtin) {
        Judgement j = oracle.is_correct(n.atom);
        if (j == Judgement::kDeferred) {
          deferred = true;
          session.note("judge " + to_string(n.atom) + ": deferred");
        } else {
          session.judge(j == Judgement::kYes);
          if (j == Judgement::kNo) {
            descended = true;
            break;
          }
        }
      }
      if (!session.can_move(Move::kRight)) break;
      session.move(Move::kRight);
    }
    if (descended) continue;
    if (deferred) {
      throw DiagnosisError(DiagnosisError::Kind::kInconclusive,
                           "deferred children below " + to_string(session.current().atom));
    }
    return session.show_error();
  }
}

// Proof-tree diagnosis with the automatic navigator.  The root must be
// judged incorrect by the oracle.
inline Verdict diagnose_wrong_tree(const Program& program, const ProofTree& tree, Oracle& oracle) {
  Judgement root = oracle.is_correct(tree.atom);
  if (root == Judgement::kYes) {
    throw DiagnosisError(DiagnosisError::Kind::kNotASymptom, to_string(tree.atom) + " is correct");
  }
  if (root == Judgement::kDeferred) {
    throw DiagnosisError(DiagnosisError::Kind::kInconclusive, "symptom " + to_string(tree.atom) + " not confirmed");
  }
  TreeSession session(program, tree);
  return navigate_automatically(session, oracle);
}

inline Verdict diagnose_wrong_tree(const Program& program, const WrongAnswer& symptom, Oracle& oracle,
                                   const EngineOptions& options = {}) {
  return diagnose_wrong_tree(program, proof_tree(program, symptom.query, symptom.answer, options), oracle);
}

namespace detail {

inline TopLevelTrace trace_or_empty(const Program& program, const Atom& query, const EngineOptions& options) {
  if (!query.builtin() && !program.defines(query.key())) {
    TopLevelTrace t;
    t.query = query;
    return t;
  }
  return top_level_trace(program, query, options);
}

inline void log_table(const TopLevelTrace& t, std::vector<std::string>& log) {
  log.push_back("top-level trace of " + to_string(t.query) + ":");
  std::string table = render_table(t);
  std::size_t start = 0;
  while (start < table.size()) {
    auto end = table.find('\n', start);
    log.push_back("  " + table.substr(start, end - start));
    start = end + 1;
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Validity of verdicts, checked independently of the path that found them

struct CoverageReport {
  bool uncovered = false;  // some required instance has no covering clause instance
  std::optional<Atom> witness;
  Enumeration enumeration = Enumeration::kExhausted;
};

// Looks for a ground instance A' of `atom` in the completeness set such that
// no clause has an instance with head A' and every body atom in the
// completeness set.  Body variables not fixed by the head range over the
// domain.
inline CoverageReport check_uncovered(const Program& program, std::shared_ptr<const Specification> spec,
                                      const Atom& atom) {
  SpecEvaluator evaluator(spec);
  CoverageReport report;
  SerialSource serials(std::max(program.max_serial(), max_serial(atom.term())) + 1);
  auto clauses = program.clauses_for(atom.key());
  auto covered = [&](const Atom& ground) {
    for (const Clause* c : clauses) {
      Clause fresh = rename_apart(*c, serials);
      auto s = unify(fresh.head, ground);
      if (!s) continue;
      std::vector<Term> body;
      for (const auto& b : fresh.body) body.push_back(apply(*s, b.term()));
      Term conjunction = Term::compound("and", std::move(body));
      bool found = false;
      for_each_grounding(conjunction, *spec, [&](const Term& g) {
        for (const auto& b : g.args()) {
          if (!evaluator.in_completeness(Atom(b))) return true;
        }
        found = true;
        return false;
      });
      if (found) return true;
    }
    return false;
  };
  report.enumeration = for_each_grounding(atom.term(), *spec, [&](const Term& g) {
    Atom ground(g);
    if (!evaluator.in_completeness(ground)) return true;
    if (covered(ground)) return true;
    report.uncovered = true;
    report.witness = ground;
    return false;
  });
  return report;
}

struct ValidityReport {
  bool valid = false;
  std::string reason;
};

// Re-checks a verdict: an incorrect clause instance must instantiate its
// clause, have an incorrect head and correct body; an uncovered atom needs a
// specification to search for an uncovered instance, or else agreement with
// the oracle's answers.
inline ValidityReport check_verdict(const Program& program, const Verdict& v, Oracle& oracle,
                                    std::shared_ptr<const Specification> spec = nullptr,
                                    const EngineOptions& options = {}) {
  if (const auto* ic = v.incorrect_clause()) {
    const Clause* c = program.clause(ic->clause.predicate, ic->clause.index);
    if (!c) return {false, "no clause " + ic->clause.to_string()};
    std::vector<Term> clause_terms{c->head.term()}, instance_terms{ic->head.term()};
    for (const auto& b : c->body) clause_terms.push_back(b.term());
    for (const auto& b : ic->body) instance_terms.push_back(b.term());
    if (clause_terms.size() != instance_terms.size() ||
        !match(Term::compound("c", clause_terms), Term::compound("c", instance_terms))) {
      return {false, "not an instance of " + ic->clause.to_string()};
    }
    if (oracle.is_correct(ic->head) != Judgement::kNo) return {false, "head " + to_string(ic->head) + " not incorrect"};
    for (const auto& b : ic->body) {
      if (b.builtin()) {
        if (!b.ground() || !builtin_holds(b)) return {false, "built-in " + to_string(b) + " is false"};
        continue;
      }
      if (oracle.is_correct(b) != Judgement::kYes) return {false, "body atom " + to_string(b) + " not correct"};
    }
    return {true, "head incorrect, body correct"};
  }
  const auto* ua = v.uncovered_atom();
  if (!spec) {
    // Without a specification the oracle's own answers must make the atom a
    // symptom with no symptom among its top-level calls.
    TopLevelTrace t = detail::trace_or_empty(program, ua->atom, options);
    if (t.truncated()) return {false, "top-level trace of " + to_string(ua->atom) + " truncated"};
    bool symptom = t.root_answers.empty()
                       ? oracle.is_satisfiable(ua->atom) == Judgement::kYes
                       : oracle.is_answer_set_complete(ua->atom, t.root_answers) == Judgement::kNo;
    if (!symptom) return {false, to_string(ua->atom) + " is not a symptom"};
    for (const auto& e : t.entries) {
      bool entry_symptom = e.failed ? oracle.is_satisfiable(e.call) != Judgement::kNo
                                    : oracle.is_answer_set_complete(e.call, e.answers) != Judgement::kYes;
      if (entry_symptom) return {false, "top-level call " + to_string(e.call) + " may be a symptom"};
    }
    return {true, "no symptom among the top-level calls"};
  }
  CoverageReport r = check_uncovered(program, spec, ua->atom);
  if (!r.uncovered) return {false, "every required instance of " + to_string(ua->atom) + " is covered"};
  return {true, "uncovered instance " + to_string(*r.witness)};
}

// ---------------------------------------------------------------------------
// Missing answers

// Descends through top-level traces from a missing-answer symptom: failed
// calls are probed with satisfiability questions first, calls with answers
// with answer-set-completeness questions only afterwards.  The first symptom
// found is entered; a symptom without any is the uncovered atom.
inline Verdict diagnose_missing(const Program& program, const MissingAnswer& symptom, Oracle& oracle,
                                const EngineOptions& options = {}, std::vector<std::string>* progress = nullptr) {
  Verdict v;
  std::vector<std::string> local;
  auto& log = progress ? *progress : local;
  using Kind = DiagnosisError::Kind;

  TopLevelTrace trace = detail::trace_or_empty(program, symptom.query, options);
  if (trace.truncated()) throw DiagnosisError(Kind::kTruncated, "search for " + to_string(symptom.query) + " truncated");
  std::vector<Atom> answers = trace.root_answers;
  if (answers.empty()) {
    log.push_back("symptom: " + to_string(symptom.query) + " has no answers (finite failure)");
    Judgement j = detail::ask_logged(oracle, OracleQuestion::is_satisfiable(symptom.query), log);
    if (j == Judgement::kNo) throw DiagnosisError(Kind::kNotASymptom, to_string(symptom.query) + " is unsatisfiable");
    if (j == Judgement::kDeferred) throw DiagnosisError(Kind::kInconclusive, "symptom not confirmed");
  } else {
    log.push_back("symptom: " + to_string(symptom.query) + " has " + std::to_string(answers.size()) +
                  " answer(s), some missing");
    Judgement j =
        detail::ask_logged(oracle, OracleQuestion::is_answer_set_complete(symptom.query, answers), log);
    if (j == Judgement::kYes) throw DiagnosisError(Kind::kNotASymptom, "answer set is complete");
    if (j == Judgement::kDeferred) throw DiagnosisError(Kind::kInconclusive, "symptom not confirmed");
  }

  while (true) {
    detail::log_table(trace, log);
    const TopLevelEntry* next = nullptr;
    bool deferred = false;
    for (const auto& e : trace.entries) {
      if (!e.failed) continue;
      Judgement j = detail::ask_logged(oracle, OracleQuestion::is_satisfiable(e.call), log);
      if (j == Judgement::kYes) {
        next = &e;
        break;
      }
      deferred = deferred || j == Judgement::kDeferred;
    }
    if (!next) {
      for (const auto& e : trace.entries) {
        if (e.failed) continue;
        Judgement j = detail::ask_logged(oracle, OracleQuestion::is_answer_set_complete(e.call, e.answers), log);
        if (j == Judgement::kNo) {
          next = &e;
          break;
        }
        deferred = deferred || j == Judgement::kDeferred;
      }
    }
    if (next) {
      log.push_back("descend: " + to_string(next->call));
      Atom call = next->call;
      trace = detail::trace_or_empty(program, call, options);
      if (trace.truncated()) throw DiagnosisError(Kind::kTruncated, "search for " + to_string(call) + " truncated");
      continue;
    }
    if (deferred) {
      throw DiagnosisError(Kind::kInconclusive,
                           "deferred questions below " + to_string(trace.query) + " leave the diagnosis open");
    }
    log.push_back("no symptom among the top-level calls of " + to_string(trace.query));
    UncoveredAtom ua{trace.query, trace.query.key(), std::nullopt};
    if (const Specification* spec = oracle.specification()) {
      // Non-owning: the oracle outlives this call.
      std::shared_ptr<const Specification> shared(std::shared_ptr<void>{}, spec);
      ua.witness = check_uncovered(program, shared, trace.query).witness;
    }
    v.error = std::move(ua);
    auto rendered = render_verdict(program, v);
    log.insert(log.end(), rendered.begin(), rendered.end());
    v.transcript = log;
    return v;
  }
}

}  // namespace lpdiag
