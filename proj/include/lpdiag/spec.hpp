// Specifications and oracles.
//
// A specification is a trusted logic program.  For a predicate p/n the
// clauses of '$spec$p'/n define the completeness set (the atoms p must be able
// to compute); the optional '$pre$p'/n restricts where answers of p are
// checked.  The correctness set is the completeness set plus every ground
// atom whose precondition fails.  Built-in comparisons have their fixed
// arithmetic meaning in both sets.
//
// Questions about non-ground atoms are decided by enumerating groundings over
// a finite domain: integers in a range, lists of those integers up to a
// length, and optional extra constants.

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <istream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "lpdiag/engine.hpp"
#include "lpdiag/parser.hpp"
#include "lpdiag/term.hpp"

namespace lpdiag {

class SpecError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Raised when a scripted oracle is asked something other than what its
// script expects, or runs out of lines.
class OracleScriptError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Raised when a human oracle closes the dialogue.
class OracleAborted : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Judgement { kYes, kNo, kDeferred };

inline std::string_view judgement_name(Judgement j) {
  switch (j) {
    case Judgement::kYes:
      return "yes";
    case Judgement::kNo:
      return "no";
    case Judgement::kDeferred:
      return "defer";
  }
  return "?";
}

inline std::optional<Judgement> parse_judgement(std::string_view text) {
  if (text == "y" || text == "yes") return Judgement::kYes;
  if (text == "n" || text == "no") return Judgement::kNo;
  if (text == "d" || text == "defer" || text == "deferred") return Judgement::kDeferred;
  return std::nullopt;
}

struct Domain {
  std::int64_t min_int = -10;
  std::int64_t max_int = 10;
  std::size_t max_list_length = 4;
  std::vector<Term> constants;
  std::size_t max_groundings = 1'000'000;
};

class Specification {
 public:
  static constexpr std::string_view kCompletenessPrefix = "$spec$";
  static constexpr std::string_view kPreconditionPrefix = "$pre$";

  explicit Specification(Program program) : program_(std::move(program)), values_(std::make_shared<ValueCache>()) {
    for (const auto& d : program_.directives()) apply_directive(d);
    for (const auto& key : program_.predicates()) {
      for (auto prefix : {kCompletenessPrefix, kPreconditionPrefix}) {
        if (key.name.rfind(prefix, 0) != 0) continue;
        PredicateKey target{key.name.substr(prefix.size()), key.arity};
        if (is_builtin(target)) throw SpecError("built-in " + target.to_string() + " cannot be respecified");
      }
    }
  }

  static Specification parse(std::string_view text) { return Specification(parse_program(text)); }

  const Program& program() const { return program_; }
  const Domain& domain() const { return domain_; }

  void set_domain(Domain d) {
    domain_ = std::move(d);
    values_ = std::make_shared<ValueCache>();
  }

  bool specifies(const PredicateKey& key) const {
    return is_builtin(key) || program_.defines(completeness_key(key));
  }
  bool has_precondition(const PredicateKey& key) const { return program_.defines(precondition_key(key)); }

  static PredicateKey completeness_key(const PredicateKey& key) {
    return {std::string(kCompletenessPrefix) + key.name, key.arity};
  }
  static PredicateKey precondition_key(const PredicateKey& key) {
    return {std::string(kPreconditionPrefix) + key.name, key.arity};
  }

  // Grounding values in enumeration order: integers, constants, then lists
  // by increasing length.
  const std::vector<Term>& domain_values() const {
    std::call_once(values_->once, [this] { values_->values = build_values(domain_); });
    return values_->values;
  }

 private:
  struct ValueCache {
    std::once_flag once;
    std::vector<Term> values;
  };

  static std::vector<Term> build_values(const Domain& d) {
    std::vector<Term> ints;
    for (std::int64_t i = d.min_int; i <= d.max_int; ++i) ints.push_back(Term::integer(i));
    std::vector<Term> out = ints;
    out.insert(out.end(), d.constants.begin(), d.constants.end());
    std::vector<Term> previous{Term::nil()};
    out.push_back(Term::nil());
    for (std::size_t len = 1; len <= d.max_list_length; ++len) {
      std::vector<Term> current;
      current.reserve(previous.size() * ints.size());
      for (const auto& head : ints) {
        for (const auto& tail : previous) current.push_back(Term::cons(head, tail));
      }
      out.insert(out.end(), current.begin(), current.end());
      previous = std::move(current);
    }
    return out;
  }

  static std::int64_t integer_arg(const Atom& d, std::size_t i) {
    if (!d.arg(i).is_integer()) throw SpecError("directive " + to_string(d) + ": integer expected");
    return d.arg(i).value();
  }

  void apply_directive(const Atom& d) {
    if (d.predicate() == "domain" && d.arity() == 3) {
      domain_.min_int = integer_arg(d, 0);
      domain_.max_int = integer_arg(d, 1);
      std::int64_t len = integer_arg(d, 2);
      if (len < 0 || domain_.min_int > domain_.max_int) throw SpecError("invalid domain " + to_string(d));
      domain_.max_list_length = static_cast<std::size_t>(len);
    } else if (d.predicate() == "domain_constants" && d.arity() == 1) {
      Term list = d.arg(0);
      while (list.is_cons()) {
        if (!list.arg(0).ground()) throw SpecError("domain constants must be ground");
        domain_.constants.push_back(list.arg(0));
        list = list.arg(1);
      }
      if (!list.is_nil()) throw SpecError("domain_constants expects a list");
    } else if (d.predicate() == "max_groundings" && d.arity() == 1) {
      std::int64_t n = integer_arg(d, 0);
      if (n <= 0) throw SpecError("max_groundings must be positive");
      domain_.max_groundings = static_cast<std::size_t>(n);
    } else {
      throw SpecError("unknown directive " + to_string(d));
    }
  }

  Program program_;
  Domain domain_;
  std::shared_ptr<ValueCache> values_;
};

enum class Enumeration { kExhausted, kStopped, kCapped };

// Calls `visit` with every grounding of t over the specification's domain
// until it returns false.  Terms without variables are visited once.
inline Enumeration for_each_grounding(const Term& t, const Specification& spec,
                                      const std::function<bool(const Term&)>& visit) {
  std::vector<Term> vars = variables_of(t);
  if (vars.empty()) return visit(t) ? Enumeration::kExhausted : Enumeration::kStopped;
  const auto& values = spec.domain_values();
  if (values.empty()) return Enumeration::kExhausted;
  std::vector<std::size_t> odometer(vars.size(), 0);
  std::size_t visited = 0;
  while (true) {
    if (visited++ >= spec.domain().max_groundings) return Enumeration::kCapped;
    Substitution s;
    for (std::size_t i = 0; i < vars.size(); ++i) s.bind(vars[i], values[odometer[i]]);
    if (!visit(apply(s, t))) return Enumeration::kStopped;
    std::size_t pos = vars.size();
    while (pos > 0) {
      --pos;
      if (++odometer[pos] < values.size()) break;
      odometer[pos] = 0;
      if (pos == 0) return Enumeration::kExhausted;
    }
  }
}

// Membership of ground atoms in the built-in part of both sets.
inline bool builtin_holds(const Atom& a) {
  if (a.predicate() == "integer") return a.arg(0).is_integer();
  if (!a.arg(0).is_integer() || !a.arg(1).is_integer()) return false;
  return eval_builtin(a);
}

// Decides membership of ground atoms.  Owns a solver, so one per thread.
class SpecEvaluator {
 public:
  explicit SpecEvaluator(std::shared_ptr<const Specification> spec)
      : spec_(std::move(spec)), solver_(spec_->program(), trusted_options()) {}

  const Specification& specification() const { return *spec_; }

  void require_specified(const PredicateKey& key) const {
    if (!spec_->specifies(key)) throw SpecError("no specification for " + key.to_string());
  }

  bool in_completeness(const Atom& ground) {
    if (ground.builtin()) return builtin_holds(ground);
    require_specified(ground.key());
    return holds(Specification::completeness_key(ground.key()), ground);
  }

  bool in_correctness(const Atom& ground) {
    if (ground.builtin()) return builtin_holds(ground);
    require_specified(ground.key());
    if (spec_->has_precondition(ground.key()) && !holds(Specification::precondition_key(ground.key()), ground)) {
      return true;
    }
    return holds(Specification::completeness_key(ground.key()), ground);
  }

 private:
  static EngineOptions trusted_options() {
    EngineOptions o;
    o.bounds = Bounds{512, 1, 1'000'000};
    o.record_proofs = false;
    return o;
  }

  bool holds(const PredicateKey& key, const Atom& a) {
    Atom goal(key.name, std::vector<Term>(a.args().begin(), a.args().end()));
    bool found = false;
    SolveSummary summary;
    try {
      summary = solver_.run(goal, [&](const Answer&) {
        found = true;
        return false;
      });
    } catch (const EngineError& e) {
      throw SpecError("specification error evaluating " + to_string(a) + ": " + e.what());
    }
    if (!found && !summary.complete()) {
      throw SpecError("specification evaluation of " + to_string(a) + " exceeded " +
                      std::string(limit_name(summary.limit)));
    }
    return found;
  }

  std::shared_ptr<const Specification> spec_;
  Solver solver_;
};

// ---------------------------------------------------------------------------
// Oracle questions

struct OracleQuestion {
  enum class Kind { kIsCorrect, kIsSatisfiable, kIsAnswerSetComplete };

  Kind kind = Kind::kIsCorrect;
  Atom atom;
  std::vector<Atom> answers;  // kIsAnswerSetComplete only

  static OracleQuestion is_correct(Atom a) { return {Kind::kIsCorrect, std::move(a), {}}; }
  static OracleQuestion is_satisfiable(Atom a) { return {Kind::kIsSatisfiable, std::move(a), {}}; }
  static OracleQuestion is_answer_set_complete(Atom q, std::vector<Atom> answers) {
    return {Kind::kIsAnswerSetComplete, std::move(q), std::move(answers)};
  }

  // Atom and answers packed into one term so variables stay shared.
  Term packed() const {
    std::vector<Term> items;
    for (const auto& a : answers) items.push_back(a.term());
    return Term::compound("q", {atom.term(), Term::list(std::move(items))});
  }

  std::string key() const { return std::string(kind_name(kind)) + "|" + variant_key(packed()); }

  // Display form of the asked atom; answer sets are appended for completeness
  // questions.
  std::string subject() const {
    std::string out = to_string(atom);
    if (kind != Kind::kIsAnswerSetComplete) return out;
    out += " with answers [";
    for (std::size_t i = 0; i < answers.size(); ++i) {
      if (i) out += ",";
      out += to_string(answers[i]);
    }
    return out + "]";
  }

  std::string text() const { return std::string(function_name(kind)) + "(" + subject() + ")"; }

  static std::string_view kind_name(Kind k) {
    switch (k) {
      case Kind::kIsCorrect:
        return "correct";
      case Kind::kIsSatisfiable:
        return "satisfiable";
      case Kind::kIsAnswerSetComplete:
        return "complete";
    }
    return "?";
  }

  static std::string_view function_name(Kind k) {
    switch (k) {
      case Kind::kIsCorrect:
        return "is_correct";
      case Kind::kIsSatisfiable:
        return "is_satisfiable";
      case Kind::kIsAnswerSetComplete:
        return "is_answer_set_complete";
    }
    return "?";
  }

  static std::optional<Kind> parse_kind(std::string_view s) {
    if (s == "correct" || s == "is_correct") return Kind::kIsCorrect;
    if (s == "satisfiable" || s == "is_satisfiable") return Kind::kIsSatisfiable;
    if (s == "complete" || s == "is_answer_set_complete") return Kind::kIsAnswerSetComplete;
    return std::nullopt;
  }
};

// ---------------------------------------------------------------------------
// Oracle backends

class OracleBackend {
 public:
  virtual ~OracleBackend() = default;
  virtual Judgement answer(const OracleQuestion& q) = 0;
  virtual const Specification* specification() const { return nullptr; }
};

class SpecBackend final : public OracleBackend {
 public:
  explicit SpecBackend(std::shared_ptr<const Specification> spec) : spec_(spec), evaluator_(std::move(spec)) {}

  Judgement answer(const OracleQuestion& q) override {
    evaluator_.require_specified(q.atom.key());
    switch (q.kind) {
      case OracleQuestion::Kind::kIsCorrect: {
        auto r = for_each_grounding(q.atom.term(), *spec_,
                                    [&](const Term& g) { return evaluator_.in_correctness(Atom(g)); });
        return verdict(r, Judgement::kNo, Judgement::kYes);
      }
      case OracleQuestion::Kind::kIsSatisfiable: {
        auto r = for_each_grounding(q.atom.term(), *spec_,
                                    [&](const Term& g) { return !evaluator_.in_completeness(Atom(g)); });
        return verdict(r, Judgement::kYes, Judgement::kNo);
      }
      case OracleQuestion::Kind::kIsAnswerSetComplete: {
        auto r = for_each_grounding(q.atom.term(), *spec_, [&](const Term& g) {
          Atom ground(g);
          if (!evaluator_.in_completeness(ground)) return true;
          for (const auto& a : q.answers) {
            if (is_instance_of(ground, a)) return true;
          }
          return false;
        });
        return verdict(r, Judgement::kNo, Judgement::kYes);
      }
    }
    return Judgement::kDeferred;
  }

  const Specification* specification() const override { return spec_.get(); }

 private:
  static Judgement verdict(Enumeration r, Judgement on_stop, Judgement on_exhausted) {
    switch (r) {
      case Enumeration::kStopped:
        return on_stop;
      case Enumeration::kExhausted:
        return on_exhausted;
      case Enumeration::kCapped:
        return Judgement::kDeferred;
    }
    return Judgement::kDeferred;
  }

  std::shared_ptr<const Specification> spec_;
  SpecEvaluator evaluator_;
};

// Answers from a script, one line per expected question:
//   kind | atom-text | yes/no/defer
// where kind is correct, satisfiable or complete.  For completeness questions
// the atom text is `Atom with answers [A1,...]`.  Blank lines and lines
// starting with '#' are ignored.
class ScriptedBackend final : public OracleBackend {
 public:
  struct Entry {
    OracleQuestion::Kind kind;
    Term pattern;
    Judgement judgement;
    std::size_t line;
  };

  static ScriptedBackend parse(std::string_view text) {
    ScriptedBackend b;
    std::istringstream in{std::string(text)};
    std::string line;
    std::size_t number = 0;
    while (std::getline(in, line)) {
      ++number;
      auto trimmed = trim(line);
      if (trimmed.empty() || trimmed[0] == '#') continue;
      auto first = trimmed.find('|');
      auto last = trimmed.rfind('|');
      if (first == std::string_view::npos || first == last) {
        throw OracleScriptError("script line " + std::to_string(number) + ": expected 'kind | atom | answer'");
      }
      auto kind = OracleQuestion::parse_kind(trim(trimmed.substr(0, first)));
      auto judgement = parse_judgement(trim(trimmed.substr(last + 1)));
      if (!kind || !judgement) {
        throw OracleScriptError("script line " + std::to_string(number) + ": bad kind or answer");
      }
      std::string subject(trim(trimmed.substr(first + 1, last - first - 1)));
      std::string atom_text = subject, answers_text = "[]";
      if (auto pos = subject.find(" with answers "); pos != std::string::npos) {
        atom_text = subject.substr(0, pos);
        answers_text = subject.substr(pos + 14);
      }
      Term pattern;
      try {
        pattern = parse_query("q(" + atom_text + "," + answers_text + ")").term();
      } catch (const ParseError& e) {
        throw OracleScriptError("script line " + std::to_string(number) + ": " + e.message());
      }
      b.entries_.push_back({*kind, pattern, *judgement, number});
    }
    return b;
  }

  Judgement answer(const OracleQuestion& q) override {
    if (cursor_ >= entries_.size()) throw OracleScriptError("script exhausted at question " + q.text());
    const Entry& e = entries_[cursor_];
    if (e.kind != q.kind || !is_variant(e.pattern, q.packed())) {
      throw OracleScriptError("script line " + std::to_string(e.line) + " does not match question " + q.text());
    }
    ++cursor_;
    return e.judgement;
  }

  std::size_t remaining() const { return entries_.size() - cursor_; }

 private:
  static std::string_view trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
  }

  std::vector<Entry> entries_;
  std::size_t cursor_ = 0;
};

// Terminal dialogue: prints the question and reads y/n/d.
class InteractiveBackend final : public OracleBackend {
 public:
  InteractiveBackend(std::istream& in, std::ostream& out) : in_(in), out_(out) {}

  Judgement answer(const OracleQuestion& q) override {
    while (true) {
      out_ << q.text() << "? [y/n/d] " << std::flush;
      std::string line;
      if (!std::getline(in_, line)) throw OracleAborted("oracle input closed");
      std::string word;
      std::istringstream(line) >> word;
      if (auto j = parse_judgement(word)) return *j;
      out_ << "please answer y (yes), n (no) or d (defer)\n";
    }
  }

 private:
  std::istream& in_;
  std::ostream& out_;
};

class CallbackBackend final : public OracleBackend {
 public:
  explicit CallbackBackend(std::function<Judgement(const OracleQuestion&)> fn) : fn_(std::move(fn)) {}
  Judgement answer(const OracleQuestion& q) override { return fn_(q); }

 private:
  std::function<Judgement(const OracleQuestion&)> fn_;
};

// Signals that a replayed dialogue reached a question nobody has answered.
struct PendingQuestion {
  OracleQuestion question;
};

// Replays previously given answers in order; throws PendingQuestion once they
// run out.  Lets a diagnosis be re-run from scratch after every answer.
class ReplayBackend final : public OracleBackend {
 public:
  explicit ReplayBackend(std::vector<Judgement> answers, std::shared_ptr<const Specification> spec = nullptr)
      : answers_(std::move(answers)), spec_(std::move(spec)) {}

  Judgement answer(const OracleQuestion& q) override {
    if (cursor_ >= answers_.size()) throw PendingQuestion{q};
    return answers_[cursor_++];
  }
  const Specification* specification() const override { return spec_.get(); }

 private:
  std::vector<Judgement> answers_;
  std::size_t cursor_ = 0;
  std::shared_ptr<const Specification> spec_;
};

// ---------------------------------------------------------------------------

// Front end shared by all backends: caches definite answers so a repeated
// question gets the same reply, and keeps the dialogue log.
class Oracle {
 public:
  struct Exchange {
    OracleQuestion question;
    Judgement judgement;
    bool cached;
  };

  explicit Oracle(std::unique_ptr<OracleBackend> backend) : backend_(std::move(backend)) {}

  static Oracle from_spec(std::shared_ptr<const Specification> spec) {
    return Oracle(std::make_unique<SpecBackend>(std::move(spec)));
  }

  Judgement ask(const OracleQuestion& q) {
    std::string key = q.key();
    if (auto it = cache_.find(key); it != cache_.end()) {
      log_.push_back({q, it->second, true});
      return it->second;
    }
    Judgement j = backend_->answer(q);
    if (j != Judgement::kDeferred) cache_.emplace(std::move(key), j);
    log_.push_back({q, j, false});
    return j;
  }

  Judgement is_correct(const Atom& a) { return ask(OracleQuestion::is_correct(a)); }
  Judgement is_satisfiable(const Atom& a) { return ask(OracleQuestion::is_satisfiable(a)); }
  Judgement is_answer_set_complete(const Atom& q, std::vector<Atom> answers) {
    return ask(OracleQuestion::is_answer_set_complete(q, std::move(answers)));
  }

  const std::vector<Exchange>& log() const { return log_; }

  // Questions that reached the backend, optionally of one kind.
  std::size_t questions_asked(std::optional<OracleQuestion::Kind> kind = std::nullopt) const {
    std::size_t n = 0;
    for (const auto& e : log_) {
      if (!e.cached && (!kind || e.question.kind == *kind)) ++n;
    }
    return n;
  }

  const Specification* specification() const { return backend_->specification(); }
  OracleBackend& backend() { return *backend_; }

 private:
  std::unique_ptr<OracleBackend> backend_;
  std::map<std::string, Judgement> cache_;
  std::vector<Exchange> log_;
};

}  // namespace lpdiag
