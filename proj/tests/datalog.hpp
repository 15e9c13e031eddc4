// Random layered Datalog programs and a bottom-up evaluator for them.

#pragma once

#include <random>
#include <set>
#include <string>
#include <vector>

#include "lpdiag/engine.hpp"
#include "lpdiag/parser.hpp"
#include "support.hpp"

namespace lpdiag::testing::datalog {

using Rng = std::mt19937_64;

inline int pick(Rng& rng, int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }

inline std::vector<Term> datalog_constants() {
  std::vector<Term> out;
  for (int i = 0; i < 4; ++i) out.push_back(Term::constant("c" + std::to_string(i)));
  return out;
}

struct Datalog {
  std::string text;
  std::vector<int> arity;  // per predicate p0..pn
};

// Predicates are layered: a clause for p_i calls only p_j with j < i, so
// every SLD tree is finite.  Facts are ground; rules are range restricted.
inline Datalog random_datalog(Rng& rng) {
  Datalog d;
  int preds = pick(rng, 2, 4), consts = pick(rng, 1, 4);
  for (int i = 0; i < preds; ++i) d.arity.push_back(pick(rng, 0, 2));
  auto constant = [&] { return "c" + std::to_string(pick(rng, 0, consts - 1)); };
  const char* var_names[] = {"X", "Y", "Z"};
  int clauses = pick(rng, 1, 6);
  for (int c = 0; c < clauses; ++c) {
    int p = pick(rng, 0, preds - 1);
    auto args = [&](int n, std::vector<std::string> pool) {
      std::string out;
      for (int k = 0; k < n; ++k) {
        if (k) out += ",";
        out += pool.empty() || pick(rng, 0, 3) == 0 ? constant() : pool[pick(rng, 0, static_cast<int>(pool.size()) - 1)];
      }
      return n ? "(" + out + ")" : out;
    };
    if (p == 0 || pick(rng, 0, 2) == 0) {
      d.text += "p" + std::to_string(p) + args(d.arity[p], {}) + ".\n";
      continue;
    }
    std::vector<std::string> body;
    std::vector<std::string> bound;
    for (int b = pick(rng, 1, 2); b > 0; --b) {
      int q = pick(rng, 0, p - 1);
      std::string goal = "p" + std::to_string(q);
      if (d.arity[q]) {
        goal += "(";
        for (int k = 0; k < d.arity[q]; ++k) {
          if (k) goal += ",";
          if (pick(rng, 0, 3) == 0) {
            goal += constant();
          } else {
            std::string v = var_names[pick(rng, 0, 2)];
            bound.push_back(v);
            goal += v;
          }
        }
        goal += ")";
      }
      body.push_back(goal);
    }
    // Head variables come from the body only.
    d.text += "p" + std::to_string(p) + args(d.arity[p], bound) + " :- ";
    for (std::size_t b = 0; b < body.size(); ++b) d.text += (b ? ", " : "") + body[b];
    d.text += ".\n";
  }
  return d;
}

// Naive bottom-up evaluation: every clause instance over the constants.
inline std::set<std::string> least_model(const Program& p, const std::vector<Term>& constants) {
  std::set<std::string> model;
  bool changed = true;
  while (changed) {
    changed = false;
    for (const auto& c : p.clauses()) {
      std::vector<Term> cvars = variables_of(Term::compound("c", [&] {
        std::vector<Term> all{c.head.term()};
        for (const auto& b : c.body) all.push_back(b.term());
        return all;
      }()));
      std::size_t combos = 1;
      for (std::size_t i = 0; i < cvars.size(); ++i) combos *= constants.size();
      for (std::size_t k = 0; k < combos; ++k) {
        Substitution s;
        std::size_t rest = k;
        for (const auto& v : cvars) {
          s.bind(v, constants[rest % constants.size()]);
          rest /= constants.size();
        }
        bool holds = true;
        for (const auto& b : c.body) holds = holds && model.count(to_string(apply(s, b.term())));
        if (holds && model.insert(to_string(apply(s, c.head.term()))).second) changed = true;
      }
    }
  }
  return model;
}

// Checks that every node is an instance of the clause it names, with the
// children as the instantiated body.
inline std::string proof_violation(const Program& p, const ProofTree& t) {
  if (t.builtin) return "built-in node in a Datalog proof";
  const Clause* c = p.clause(t.atom.key(), t.clause);
  if (!c) return "no clause " + std::to_string(t.clause) + " for " + to_string(t.atom);
  std::vector<Term> pattern{c->head.term()}, instance{t.atom.term()};
  for (const auto& b : c->body) pattern.push_back(b.term());
  for (const auto& ch : t.children) instance.push_back(ch.atom.term());
  if (pattern.size() != instance.size() || !match(Term::compound("c", pattern), Term::compound("c", instance))) {
    return "node " + to_string(t.atom) + " does not instantiate " + to_string(*c);
  }
  for (const auto& ch : t.children) {
    auto v = proof_violation(p, ch);
    if (!v.empty()) return v;
  }
  return "";
}

// Solves the most general query of every defined predicate and compares the
// answers with the least model; returns the first discrepancy, or "".
inline std::string check_against_least_model(const Datalog& d, std::size_t* nonempty = nullptr) {
  Program p = parse_program(d.text);
  std::set<std::string> model = least_model(p, datalog_constants());
  for (std::size_t q = 0; q < d.arity.size(); ++q) {
    PredicateKey key{"p" + std::to_string(q), static_cast<std::size_t>(d.arity[q])};
    if (!p.defines(key)) continue;
    std::vector<Term> args;
    for (int k = 0; k < d.arity[q]; ++k) args.push_back(Term::variable(k + 1, std::string(1, "AB"[k])));
    Atom query(key.name, args);
    SolveResult r = solve(p, query);
    std::string where = "\n" + d.text + "query " + to_string(query) + ": ";
    if (!r.summary.complete()) return where + "search not complete";
    std::set<std::string> sld;
    for (const auto& a : r.answers) {
      if (!a.atom.ground()) return where + "non-ground answer " + to_string(a.atom);
      sld.insert(to_string(a.atom));
      if (!a.proof || !(a.proof->atom == a.atom)) return where + "proof tree root differs from " + to_string(a.atom);
      std::string v = proof_violation(p, *a.proof);
      if (!v.empty()) return where + v;
    }
    std::set<std::string> expected;
    for (const auto& m : model) {
      if (m.rfind(key.name, 0) == 0 && (m.size() == key.name.size() || m[key.name.size()] == '(')) expected.insert(m);
    }
    if (sld != expected) {
      return where + std::to_string(sld.size()) + " answers, least model has " + std::to_string(expected.size());
    }
    std::string byrd = byrd_violation(r.events, true);
    if (!byrd.empty()) return where + byrd;
    if (nonempty && !sld.empty()) ++*nonempty;
  }
  return "";
}

}  // namespace lpdiag::testing::datalog
