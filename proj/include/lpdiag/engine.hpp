// SLD resolution with Prolog's search rule.
//
// The solver selects the leftmost goal, tries clauses in textual order and
// backtracks chronologically.  Every call of a user predicate is reported
// through the four ports of the box model (Call, Exit, Redo, Fail).  The
// comparison built-ins are evaluated in place and produce no events, but they
// do appear as leaves of proof trees.

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <fmt/format.h>

#include "lpdiag/parser.hpp"
#include "lpdiag/term.hpp"

namespace lpdiag {

class EngineError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Bounds {
  std::size_t max_depth = 512;
  std::size_t max_answers = 256;
  std::size_t max_steps = 1'000'000;
};

// Applies "key=value[,key=value...]" overrides, e.g. "max_depth=64,max_answers=1".
inline Bounds parse_bounds(std::string_view text, Bounds base = {}) {
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t end = text.find(',', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view item = text.substr(start, end - start);
    start = end + 1;
    while (!item.empty() && item.front() == ' ') item.remove_prefix(1);
    while (!item.empty() && item.back() == ' ') item.remove_suffix(1);
    if (item.empty()) continue;
    auto eq = item.find('=');
    if (eq == std::string_view::npos) throw EngineError("bounds: expected key=value, got '" + std::string(item) + "'");
    std::string key(item.substr(0, eq));
    std::string value(item.substr(eq + 1));
    std::size_t n = 0;
    try {
      std::size_t used = 0;
      long long v = std::stoll(value, &used);
      if (used != value.size() || v < 0) throw std::invalid_argument(value);
      n = static_cast<std::size_t>(v);
    } catch (const std::exception&) {
      throw EngineError("bounds: '" + value + "' is not a non-negative integer");
    }
    if (key == "max_depth" || key == "depth") {
      base.max_depth = n;
    } else if (key == "max_answers" || key == "answers") {
      base.max_answers = n;
    } else if (key == "max_steps" || key == "steps") {
      base.max_steps = n;
    } else {
      throw EngineError("bounds: unknown key '" + key + "'");
    }
  }
  return base;
}

struct EngineOptions {
  Bounds bounds;
  bool occurs_check = true;
  bool record_proofs = true;
};

enum class Port { kCall, kExit, kRedo, kFail };

inline std::string_view port_name(Port p) {
  switch (p) {
    case Port::kCall:
      return "Call";
    case Port::kExit:
      return "Exit";
    case Port::kRedo:
      return "Redo";
    case Port::kFail:
      return "Fail";
  }
  return "?";
}

struct TraceEvent {
  std::size_t invocation = 0;
  std::size_t depth = 0;
  Port port = Port::kCall;
  Atom goal;
  std::size_t parent = 0;         // invocation of the calling goal, 0 at the root
  std::size_t parent_clause = 0;  // clause of the parent whose body made the call
};

// `<invocation><padding><depth> <Port>: <goal>`, the depth right-aligned so
// that it ends in column 8.
inline std::string format_event(const TraceEvent& e) {
  std::string inv = std::to_string(e.invocation);
  std::string depth = std::to_string(e.depth);
  std::size_t used = inv.size() + depth.size();
  std::size_t pad = used < 8 ? 8 - used : 1;
  return fmt::format("{}{}{} {}: {}", inv, std::string(pad, ' '), depth, port_name(e.port), to_string(e.goal));
}

struct ProofTree {
  Atom atom;               // instance under the answer substitution
  Atom call;               // instance at the moment of the call
  std::size_t clause = 0;  // 1-based clause of atom's predicate; 0 for built-ins
  bool builtin = false;
  std::vector<ProofTree> children;
};

struct Answer {
  Substitution substitution;  // restricted to the query variables
  Atom atom;
  std::shared_ptr<const ProofTree> proof;
};

// Renders `X = t, Y = u`, or `true` when nothing is bound.
inline std::string format_bindings(const Atom& query, const Answer& answer) {
  std::string out;
  for (const auto& v : variables_of(query.term())) {
    const Term* value = answer.substitution.find(v);
    if (!value) continue;
    if (!out.empty()) out += ", ";
    out += to_string(v) + " = " + to_string(*value);
  }
  return out.empty() ? "true" : out;
}

enum class Outcome { kComplete, kTruncated, kStopped };
enum class Limit { kNone, kDepth, kSteps, kAnswers };

inline std::string_view limit_name(Limit l) {
  switch (l) {
    case Limit::kNone:
      return "none";
    case Limit::kDepth:
      return "max_depth";
    case Limit::kSteps:
      return "max_steps";
    case Limit::kAnswers:
      return "max_answers";
  }
  return "?";
}

struct SolveSummary {
  Outcome outcome = Outcome::kComplete;
  Limit limit = Limit::kNone;
  std::size_t answers = 0;
  std::size_t steps = 0;
  std::size_t invocations = 0;
  // Invocations whose search space was cut by a bound.
  std::set<std::size_t> cut_invocations;

  bool complete() const { return outcome == Outcome::kComplete; }
  bool finite_failure() const { return complete() && answers == 0; }
};

using AnswerSink = std::function<bool(const Answer&)>;
using EventSink = std::function<bool(const TraceEvent&)>;

// Standard integer comparison of a ground built-in atom.  `integer/1` is a
// type test and never raises.
inline bool eval_builtin(const Atom& a) {
  if (!a.builtin()) throw EngineError("not a built-in: " + a.key().to_string());
  if (a.predicate() == "integer") return a.arg(0).is_integer();
  const Term& x = a.arg(0);
  const Term& y = a.arg(1);
  for (const Term* t : {&x, &y}) {
    if (t->is_variable()) throw EngineError("instantiation error in " + to_string(a));
    if (!t->is_integer()) throw EngineError("type error: integer expected in " + to_string(a));
  }
  const std::string& op = a.predicate();
  std::int64_t l = x.value(), r = y.value();
  if (op == "=<") return l <= r;
  if (op == ">") return l > r;
  if (op == "<") return l < r;
  if (op == ">=") return l >= r;
  if (op == "=:=") return l == r;
  return l != r;  // =\=
}

namespace detail {

// Clause with variables numbered 0..var_count-1.
struct ClauseTemplate {
  Term head;
  std::vector<Term> body;
  std::size_t var_count = 0;
};

inline Term number_variables(const Term& t, std::map<Serial, Serial>& numbering) {
  if (t.ground()) return t;
  if (t.is_variable()) {
    auto [it, inserted] = numbering.emplace(t.serial(), static_cast<Serial>(numbering.size()));
    return Term::variable(it->second);
  }
  std::vector<Term> args;
  args.reserve(t.arity());
  for (const auto& a : t.args()) args.push_back(number_variables(a, numbering));
  return Term::compound(t.name(), std::move(args));
}

inline ClauseTemplate make_template(const Clause& c) {
  std::map<Serial, Serial> numbering;
  ClauseTemplate tpl;
  tpl.head = number_variables(c.head.term(), numbering);
  for (const auto& b : c.body) tpl.body.push_back(number_variables(b.term(), numbering));
  tpl.var_count = numbering.size();
  return tpl;
}

struct StepLimitReached {};

}  // namespace detail

// Reusable solver over one program.  Not thread-safe; use one per thread.
class Solver {
 public:
  explicit Solver(const Program& program, EngineOptions options = {}) : options_(options) {
    for (const auto& key : program.predicates()) {
      auto& slot = procedures_[key];
      for (const Clause* c : program.clauses_for(key)) slot.push_back(detail::make_template(*c));
    }
  }

  const EngineOptions& options() const { return options_; }
  void set_bounds(const Bounds& b) { options_.bounds = b; }

  bool defines(const PredicateKey& key) const { return procedures_.count(key) != 0; }

  SolveSummary run(const Atom& query, const AnswerSink& on_answer, const EventSink& on_event = {}) {
    if (!query.builtin() && !defines(query.key())) {
      throw EngineError("unknown procedure " + query.key().to_string());
    }
    Serial top = max_serial(query.term());
    if (top > 50'000'000) throw EngineError("variable serial out of range");
    query_ = query;
    query_vars_ = variables_of(query.term());
    on_answer_ = &on_answer;
    on_event_ = on_event ? &on_event : nullptr;
    bindings_.assign(static_cast<std::size_t>(top) + 64, Term{});
    trail_.clear();
    next_serial_ = top + 1;
    active_.clear();
    summary_ = SolveSummary{};

    root_ = DerivationNode{};
    root_.goal = query.term();
    Frame root{Frame::Kind::kGoal, query.term(), 1, &root_, 0, 0, nullptr};
    try {
      proceed(&root);
    } catch (const detail::StepLimitReached&) {
      summary_.outcome = Outcome::kTruncated;
      summary_.limit = Limit::kSteps;
      for (auto inv : active_) summary_.cut_invocations.insert(inv);
    }
    if (summary_.outcome == Outcome::kComplete && !summary_.cut_invocations.empty()) {
      summary_.outcome = Outcome::kTruncated;
      summary_.limit = Limit::kDepth;
    }
    on_answer_ = nullptr;
    on_event_ = nullptr;
    return summary_;
  }

 private:
  struct DerivationNode {
    Term goal;
    Term call;
    std::size_t clause = 0;
    bool builtin = false;
    std::vector<DerivationNode> children;
  };

  struct Frame {
    enum class Kind { kGoal, kExit } kind;
    Term goal;
    std::size_t depth;
    DerivationNode* node;
    std::size_t invocation;  // parent invocation for goals, own invocation for exits
    std::size_t parent_clause;
    const Frame* next;
  };

  Term& slot(Serial s) {
    auto i = static_cast<std::size_t>(s);
    if (i >= bindings_.size()) bindings_.resize(i * 2 + 64);
    return bindings_[i];
  }

  Term deref(Term t) {
    while (t.is_variable()) {
      const Term& b = slot(t.serial());
      if (!b.valid()) break;
      t = b;
    }
    return t;
  }

  Term resolve(const Term& t) {
    if (t.ground()) return t;
    Term d = deref(t);
    if (d.ground() || d.is_variable()) return d;
    std::vector<Term> args;
    args.reserve(d.arity());
    bool changed = false;
    for (const auto& a : d.args()) {
      args.push_back(resolve(a));
      changed = changed || !args.back().same_node(a);
    }
    return changed ? Term::compound(d.name(), std::move(args)) : d;
  }

  bool occurs(Serial s, const Term& t) {
    Term d = deref(t);
    if (d.is_variable()) return d.serial() == s;
    if (d.ground()) return false;
    for (const auto& a : d.args()) {
      if (occurs(s, a)) return true;
    }
    return false;
  }

  void bind(const Term& var, const Term& value) {
    slot(var.serial()) = value;
    trail_.push_back(var.serial());
  }

  void undo(std::size_t mark) {
    while (trail_.size() > mark) {
      slot(trail_.back()) = Term{};
      trail_.pop_back();
    }
  }

  bool unify(const Term& x, const Term& y) {
    Term a = deref(x);
    Term b = deref(y);
    if (a.same_node(b)) return true;
    if (a.is_variable() && b.is_variable()) {
      if (a.serial() == b.serial()) return true;
      if (a.serial() > b.serial()) {
        bind(a, b);
      } else {
        bind(b, a);
      }
      return true;
    }
    if (a.is_variable()) {
      if (options_.occurs_check && occurs(a.serial(), b)) return false;
      bind(a, b);
      return true;
    }
    if (b.is_variable()) {
      if (options_.occurs_check && occurs(b.serial(), a)) return false;
      bind(b, a);
      return true;
    }
    if (a.kind() != b.kind()) return false;
    if (a.is_integer()) return a.value() == b.value();
    if (a.arity() != b.arity() || a.name() != b.name()) return false;
    if (a.ground() && b.ground()) return a == b;
    for (std::size_t i = 0; i < a.arity(); ++i) {
      if (!unify(a.arg(i), b.arg(i))) return false;
    }
    return true;
  }

  Term instantiate(const Term& t, Serial base) {
    if (t.ground()) return t;
    if (t.is_variable()) return Term::variable(base + t.serial());
    std::vector<Term> args;
    args.reserve(t.arity());
    for (const auto& a : t.args()) args.push_back(instantiate(a, base));
    return Term::compound(t.name(), std::move(args));
  }

  void count_step() {
    if (++summary_.steps > options_.bounds.max_steps) throw detail::StepLimitReached{};
  }

  bool emit(Port port, std::size_t invocation, std::size_t depth, const Term& goal, std::size_t parent = 0,
            std::size_t parent_clause = 0) {
    if (!on_event_) return true;
    TraceEvent e{invocation, depth, port, Atom(resolve(goal)), parent, parent_clause};
    if ((*on_event_)(e)) return true;
    summary_.outcome = Outcome::kStopped;
    return false;
  }

  ProofTree snapshot(const DerivationNode& n) {
    ProofTree t;
    t.atom = Atom(resolve(n.goal));
    t.call = n.call.valid() ? Atom(n.call) : t.atom;
    t.clause = n.clause;
    t.builtin = n.builtin;
    t.children.reserve(n.children.size());
    for (const auto& c : n.children) t.children.push_back(snapshot(c));
    return t;
  }

  bool answer() {
    Answer a;
    for (const auto& v : query_vars_) {
      Term value = resolve(v);
      if (value.is_variable() && value.serial() == v.serial()) continue;
      a.substitution.bind(v, std::move(value));
    }
    a.atom = Atom(resolve(query_.term()));
    if (options_.record_proofs) a.proof = std::make_shared<const ProofTree>(snapshot(root_));
    ++summary_.answers;
    if (!(*on_answer_)(a)) {
      summary_.outcome = Outcome::kStopped;
      return false;
    }
    if (summary_.answers >= options_.bounds.max_answers) {
      summary_.outcome = Outcome::kTruncated;
      summary_.limit = Limit::kAnswers;
      return false;
    }
    return true;
  }

  // Solves the continuation `f`.  Returns false once the search must stop.
  bool proceed(const Frame* f) {
    if (!f) return answer();
    if (f->kind == Frame::Kind::kExit) {
      active_.pop_back();
      if (!emit(Port::kExit, f->invocation, f->depth, f->goal)) return false;
      if (!proceed(f->next)) return false;
      active_.push_back(f->invocation);
      return emit(Port::kRedo, f->invocation, f->depth, f->goal);
    }
    return call(*f);
  }

  bool call(const Frame& g) {
    Term goal = deref(g.goal);
    if (!goal.is_compound()) throw EngineError("instantiation error: goal " + to_string(goal) + " is not callable");
    PredicateKey key{goal.name(), goal.arity()};
    DerivationNode& node = *g.node;

    if (is_builtin(key)) {
      count_step();
      Term instance = resolve(goal);
      node.builtin = true;
      node.clause = 0;
      node.call = instance;
      node.children.clear();
      if (!eval_builtin(Atom(instance))) return true;
      return proceed(g.next);
    }

    if (g.depth > options_.bounds.max_depth) {
      summary_.cut_invocations.insert(active_.begin(), active_.end());
      return true;
    }

    std::size_t invocation = ++summary_.invocations;
    node.builtin = false;
    node.call = options_.record_proofs ? resolve(goal) : Term{};
    active_.push_back(invocation);
    if (!emit(Port::kCall, invocation, g.depth, goal, g.invocation, g.parent_clause)) return false;

    auto it = procedures_.find(key);
    if (it != procedures_.end()) {
      const auto& clauses = it->second;
      for (std::size_t i = 0; i < clauses.size(); ++i) {
        count_step();
        const detail::ClauseTemplate& tpl = clauses[i];
        std::size_t mark = trail_.size();
        Serial serial_mark = next_serial_;
        Serial base = next_serial_;
        next_serial_ += static_cast<Serial>(tpl.var_count);
        slot(next_serial_);
        Term head = instantiate(tpl.head, base);
        if (unify(head, goal)) {
          std::size_t n = tpl.body.size();
          node.clause = i + 1;
          node.children.assign(n, DerivationNode{});
          std::vector<Frame> frames(n + 1);
          frames[n] = Frame{Frame::Kind::kExit, goal, g.depth, &node, invocation, 0, g.next};
          for (std::size_t k = n; k-- > 0;) {
            node.children[k].goal = instantiate(tpl.body[k], base);
            frames[k] = Frame{Frame::Kind::kGoal, node.children[k].goal, g.depth + 1, &node.children[k],
                              invocation, i + 1, &frames[k + 1]};
          }
          if (!proceed(&frames[0])) return false;
        }
        undo(mark);
        next_serial_ = serial_mark;
      }
    }
    active_.pop_back();
    return emit(Port::kFail, invocation, g.depth, goal);
  }

  EngineOptions options_;
  std::map<PredicateKey, std::vector<detail::ClauseTemplate>> procedures_;

  Atom query_;
  std::vector<Term> query_vars_;
  const AnswerSink* on_answer_ = nullptr;
  const EventSink* on_event_ = nullptr;
  std::vector<Term> bindings_;
  std::vector<Serial> trail_;
  Serial next_serial_ = 1;
  std::vector<std::size_t> active_;
  SolveSummary summary_;
  DerivationNode root_;
};

struct SolveResult {
  std::vector<Answer> answers;
  std::vector<TraceEvent> events;
  SolveSummary summary;
};

// Runs the query to its bounds, collecting answers and events.
inline SolveResult solve(const Program& program, const Atom& query, const EngineOptions& options = {}) {
  Solver solver(program, options);
  SolveResult result;
  result.summary = solver.run(
      query,
      [&](const Answer& a) {
        result.answers.push_back(a);
        return true;
      },
      [&](const TraceEvent& e) {
        result.events.push_back(e);
        return true;
      });
  return result;
}

// Proof tree of the first computed answer that is a variant of `answer`.
inline ProofTree proof_tree(const Program& program, const Atom& query, const Atom& answer,
                            const EngineOptions& options = {}) {
  EngineOptions opts = options;
  opts.record_proofs = true;
  Solver solver(program, opts);
  std::shared_ptr<const ProofTree> found;
  solver.run(query, [&](const Answer& a) {
    if (!is_variant(a.atom, answer)) return true;
    found = a.proof;
    return false;
  });
  if (!found) throw EngineError("answer " + to_string(answer) + " is not reproduced by " + to_string(query));
  return *found;
}

inline ProofTree proof_tree(const Program& program, const Atom& query, const Answer& answer,
                            const EngineOptions& options = {}) {
  return proof_tree(program, query, answer.atom, options);
}

}  // namespace lpdiag
