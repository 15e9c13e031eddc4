// Top-level traces and top-level success traces.
//
// The top-level trace of a query lists the direct subgoal calls made while
// resolving the query at the root, in the order they were called, each with
// every answer it produced.  The success trace of one answer is the list of
// instantiated body atoms of the root clause application that produced it.

#pragma once

#include <algorithm>
#include <cstddef>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "lpdiag/engine.hpp"

namespace lpdiag {

struct TopLevelEntry {
  std::size_t invocation = 0;
  std::size_t root_clause = 0;  // clause of the root predicate whose body made the call
  Atom call;
  std::vector<Atom> answers;
  bool failed = false;     // no answers and the search for them finished
  bool truncated = false;  // search cut by a bound or stopped early
};

struct TopLevelTrace {
  Atom query;
  std::vector<TopLevelEntry> entries;
  std::vector<Atom> root_answers;
  SolveSummary summary;

  bool truncated() const {
    return !summary.complete() ||
           std::any_of(entries.begin(), entries.end(), [](const TopLevelEntry& e) { return e.truncated; });
  }
};

// Observes an engine run and assembles the top-level trace as it happens.
// `on_entry_answer` fires on every answer of a top-level entry and may stop
// the run by returning false.
class TopLevelRecorder {
 public:
  using EntryAnswerHook = std::function<bool(const TopLevelEntry&, const Atom&)>;

  explicit TopLevelRecorder(EntryAnswerHook hook = {}) : hook_(std::move(hook)) {}

  bool observe(const TraceEvent& e) {
    if (e.depth == 1) {
      if (e.port == Port::kCall) root_invocation_ = e.invocation;
      return true;
    }
    if (e.port == Port::kCall) {
      if (e.depth != 2 || e.parent != root_invocation_) return true;
      TopLevelEntry entry;
      entry.invocation = e.invocation;
      entry.root_clause = e.parent_clause;
      entry.call = e.goal;
      positions_[e.invocation] = entries_.size();
      entries_.push_back(std::move(entry));
      return true;
    }
    auto it = positions_.find(e.invocation);
    if (it == positions_.end()) return true;
    TopLevelEntry& entry = entries_[it->second];
    last_port_[e.invocation] = e.port;
    if (e.port == Port::kExit) {
      entry.answers.push_back(e.goal);
      if (hook_) return hook_(entry, e.goal);
    }
    return true;
  }

  TopLevelTrace finish(const Atom& query, std::vector<Atom> root_answers, const SolveSummary& summary) {
    TopLevelTrace t;
    t.query = query;
    t.root_answers = std::move(root_answers);
    t.summary = summary;
    for (auto& entry : entries_) {
      auto port = last_port_.find(entry.invocation);
      bool finished = port != last_port_.end() && port->second == Port::kFail;
      bool cut = summary.cut_invocations.count(entry.invocation) != 0;
      entry.truncated = !finished || cut;
      entry.failed = entry.answers.empty() && !entry.truncated;
    }
    t.entries = std::move(entries_);
    return t;
  }

 private:
  EntryAnswerHook hook_;
  std::size_t root_invocation_ = 0;
  std::vector<TopLevelEntry> entries_;
  std::map<std::size_t, std::size_t> positions_;
  std::map<std::size_t, Port> last_port_;
};

inline TopLevelTrace top_level_trace(const Program& program, const Atom& query, const EngineOptions& options = {}) {
  EngineOptions opts = options;
  opts.record_proofs = false;
  Solver solver(program, opts);
  TopLevelRecorder recorder;
  std::vector<Atom> answers;
  SolveSummary summary = solver.run(
      query,
      [&](const Answer& a) {
        answers.push_back(a.atom);
        return true;
      },
      [&](const TraceEvent& e) { return recorder.observe(e); });
  return recorder.finish(query, std::move(answers), summary);
}

struct SuccessTraceItem {
  Atom atom;
  Atom call;
  bool builtin = false;
};

struct SuccessTrace {
  Atom answer;
  ClauseOrigin clause;  // root clause application that produced the answer
  std::vector<SuccessTraceItem> items;
};

inline SuccessTrace success_trace_of(const Program& program, const ProofTree& tree) {
  SuccessTrace st;
  st.answer = tree.atom;
  if (const Clause* c = program.clause(tree.atom.key(), tree.clause)) st.clause = c->origin;
  for (const auto& child : tree.children) st.items.push_back({child.atom, child.call, child.builtin});
  return st;
}

// Success trace of `answer`, an answer of `query`.  Throws EngineError when
// the answer is not computed for the query.
inline SuccessTrace success_trace(const Program& program, const Atom& query, const Atom& answer,
                                  const EngineOptions& options = {}) {
  return success_trace_of(program, proof_tree(program, query, answer, options));
}

// Two-column "query / answers" table.
inline std::string render_table(const TopLevelTrace& t) {
  std::vector<std::pair<std::string, std::string>> rows;
  for (const auto& e : t.entries) {
    std::string call = to_string(e.call);
    if (e.answers.empty()) {
      rows.emplace_back(call, e.truncated ? "(truncated)" : "(none)");
      continue;
    }
    for (std::size_t i = 0; i < e.answers.size(); ++i) rows.emplace_back(i == 0 ? call : "", to_string(e.answers[i]));
    if (e.truncated) rows.emplace_back("", "(truncated)");
  }
  std::size_t width = 5;
  for (const auto& [q, a] : rows) width = std::max(width, q.size());
  width += 3;
  auto pad = [&](const std::string& s) { return s + std::string(width - s.size(), ' '); };
  std::string out = pad("query") + "answers\n";
  if (rows.empty()) return out + "(empty top-level trace)\n";
  for (const auto& [q, a] : rows) out += pad(q) + a + "\n";
  return out;
}

}  // namespace lpdiag
