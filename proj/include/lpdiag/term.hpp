// Terms, atoms, substitutions and unification.
//
// Terms are immutable values that share structure through reference-counted
// nodes.  Variables are identified by a serial number; the display name is
// cosmetic and never takes part in comparisons.

#pragma once

#include <algorithm>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace lpdiag {

using Serial = std::int64_t;

class Term {
 public:
  enum class Kind : std::uint8_t { kVariable, kInteger, kCompound };

  Term() = default;

  static Term variable(Serial serial, std::string name = {});
  static Term integer(std::int64_t value);
  static Term compound(std::string functor, std::vector<Term> args);
  static Term constant(std::string name) { return compound(std::move(name), {}); }
  static Term nil();
  static Term cons(Term head, Term tail);
  static Term list(std::vector<Term> items, Term tail = nil());

  bool valid() const { return node_ != nullptr; }
  Kind kind() const;
  bool is_variable() const { return valid() && kind() == Kind::kVariable; }
  bool is_integer() const { return valid() && kind() == Kind::kInteger; }
  bool is_compound() const { return valid() && kind() == Kind::kCompound; }
  bool is_nil() const;
  bool is_cons() const;

  Serial serial() const;
  std::int64_t value() const;
  // Functor name for compounds, display name for variables.
  const std::string& name() const;
  std::span<const Term> args() const;
  std::size_t arity() const { return args().size(); }
  const Term& arg(std::size_t i) const { return args()[i]; }
  bool ground() const;

  bool same_node(const Term& other) const { return node_ == other.node_; }

  friend bool operator==(const Term& a, const Term& b);

 private:
  struct Node;
  explicit Term(std::shared_ptr<const Node> node) : node_(std::move(node)) {}
  std::shared_ptr<const Node> node_;
};

struct Term::Node {
  Kind kind = Kind::kCompound;
  bool ground = true;
  std::int64_t number = 0;  // integer value or variable serial
  std::string name;
  std::vector<Term> args;
};

inline Term Term::variable(Serial serial, std::string name) {
  auto node = std::make_shared<Node>();
  node->kind = Kind::kVariable;
  node->ground = false;
  node->number = serial;
  node->name = std::move(name);
  return Term(std::move(node));
}

inline Term Term::integer(std::int64_t value) {
  auto node = std::make_shared<Node>();
  node->kind = Kind::kInteger;
  node->number = value;
  return Term(std::move(node));
}

inline Term Term::compound(std::string functor, std::vector<Term> args) {
  auto node = std::make_shared<Node>();
  node->kind = Kind::kCompound;
  node->name = std::move(functor);
  node->ground = std::all_of(args.begin(), args.end(), [](const Term& t) { return t.ground(); });
  node->args = std::move(args);
  return Term(std::move(node));
}

inline Term Term::nil() {
  static const Term kNil = compound("[]", {});
  return kNil;
}

inline Term Term::cons(Term head, Term tail) {
  return compound(".", {std::move(head), std::move(tail)});
}

inline Term Term::list(std::vector<Term> items, Term tail) {
  Term result = std::move(tail);
  for (auto it = items.rbegin(); it != items.rend(); ++it) result = cons(std::move(*it), std::move(result));
  return result;
}

inline Term::Kind Term::kind() const { return node_->kind; }

inline bool Term::is_nil() const {
  return is_compound() && node_->args.empty() && node_->name == "[]";
}

inline bool Term::is_cons() const {
  return is_compound() && node_->args.size() == 2 && node_->name == ".";
}

inline Serial Term::serial() const { return node_->number; }
inline std::int64_t Term::value() const { return node_->number; }
inline const std::string& Term::name() const { return node_->name; }
inline std::span<const Term> Term::args() const {
  if (!node_) return {};
  return {node_->args.data(), node_->args.size()};
}
inline bool Term::ground() const { return !node_ || node_->ground; }

inline bool operator==(const Term& a, const Term& b) {
  if (a.node_ == b.node_) return true;
  if (!a.valid() || !b.valid()) return false;
  if (a.kind() != b.kind()) return false;
  switch (a.kind()) {
    case Term::Kind::kVariable:
    case Term::Kind::kInteger:
      return a.node_->number == b.node_->number;
    case Term::Kind::kCompound:
      break;
  }
  if (a.name() != b.name() || a.arity() != b.arity()) return false;
  for (std::size_t i = 0; i < a.arity(); ++i) {
    if (!(a.arg(i) == b.arg(i))) return false;
  }
  return true;
}

// ---------------------------------------------------------------------------
// Predicates and atoms

struct PredicateKey {
  std::string name;
  std::size_t arity = 0;

  std::string to_string() const { return name + "/" + std::to_string(arity); }
  friend auto operator<=>(const PredicateKey&, const PredicateKey&) = default;
  friend bool operator==(const PredicateKey&, const PredicateKey&) = default;
};

// The comparison built-ins are written infix by the parser and printer.
inline bool is_comparison_operator(std::string_view name) {
  return name == "=<" || name == ">" || name == "<" || name == ">=" || name == "=:=" || name == "=\\=";
}

inline bool is_builtin(const PredicateKey& key) {
  return (key.arity == 2 && is_comparison_operator(key.name)) || (key.arity == 1 && key.name == "integer");
}

class Atom {
 public:
  Atom() = default;
  explicit Atom(Term term) : term_(std::move(term)) {
    if (!term_.is_compound()) throw std::invalid_argument("atom must be a constant or compound term");
  }
  Atom(std::string predicate, std::vector<Term> args)
      : term_(Term::compound(std::move(predicate), std::move(args))) {}

  const std::string& predicate() const { return term_.name(); }
  std::size_t arity() const { return term_.arity(); }
  std::span<const Term> args() const { return term_.args(); }
  const Term& arg(std::size_t i) const { return term_.arg(i); }
  const Term& term() const { return term_; }
  PredicateKey key() const { return {term_.name(), term_.arity()}; }
  bool ground() const { return term_.ground(); }
  bool builtin() const { return is_builtin(key()); }
  bool valid() const { return term_.valid(); }

  friend bool operator==(const Atom& a, const Atom& b) { return a.term_ == b.term_; }

 private:
  Term term_;
};

// ---------------------------------------------------------------------------
// Printing

namespace detail {

inline bool is_plain_name(std::string_view name) {
  if (name.empty() || !(name[0] >= 'a' && name[0] <= 'z')) return false;
  return std::all_of(name.begin(), name.end(), [](char c) {
    return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '_';
  });
}

inline void write_name(std::string& out, const std::string& name) {
  if (is_plain_name(name) || name == "[]") {
    out += name;
    return;
  }
  out += '\'';
  for (char c : name) {
    if (c == '\'' || c == '\\') out += '\\';
    out += c;
  }
  out += '\'';
}

inline void write_term(std::string& out, const Term& t) {
  if (!t.valid()) {
    out += "<null>";
    return;
  }
  switch (t.kind()) {
    case Term::Kind::kVariable:
      if (t.name().empty()) {
        out += '_';
        out += std::to_string(t.serial());
      } else {
        out += t.name();
      }
      return;
    case Term::Kind::kInteger:
      out += std::to_string(t.value());
      return;
    case Term::Kind::kCompound:
      break;
  }
  if (t.is_cons()) {
    out += '[';
    write_term(out, t.arg(0));
    Term rest = t.arg(1);
    while (rest.is_cons()) {
      out += ',';
      write_term(out, rest.arg(0));
      rest = rest.arg(1);
    }
    if (!rest.is_nil()) {
      out += '|';
      write_term(out, rest);
    }
    out += ']';
    return;
  }
  write_name(out, t.name());
  if (t.arity() == 0) return;
  out += '(';
  for (std::size_t i = 0; i < t.arity(); ++i) {
    if (i) out += ',';
    write_term(out, t.arg(i));
  }
  out += ')';
}

}  // namespace detail

inline std::string to_string(const Term& t) {
  std::string out;
  detail::write_term(out, t);
  return out;
}

inline std::string to_string(const Atom& a) {
  if (a.arity() == 2 && is_comparison_operator(a.predicate())) {
    std::string out;
    detail::write_term(out, a.arg(0));
    out += a.predicate();
    detail::write_term(out, a.arg(1));
    return out;
  }
  return to_string(a.term());
}

inline std::ostream& operator<<(std::ostream& os, const Term& t) { return os << to_string(t); }
inline std::ostream& operator<<(std::ostream& os, const Atom& a) { return os << to_string(a); }

// ---------------------------------------------------------------------------
// Variables

inline void collect_variables(const Term& t, std::vector<Term>& out) {
  if (t.ground()) return;
  if (t.is_variable()) {
    for (const auto& v : out) {
      if (v.serial() == t.serial()) return;
    }
    out.push_back(t);
    return;
  }
  for (const auto& a : t.args()) collect_variables(a, out);
}

inline std::vector<Term> variables_of(const Term& t) {
  std::vector<Term> out;
  collect_variables(t, out);
  return out;
}

inline Serial max_serial(const Term& t) {
  if (t.ground()) return 0;
  if (t.is_variable()) return t.serial();
  Serial best = 0;
  for (const auto& a : t.args()) best = std::max(best, max_serial(a));
  return best;
}

// Deterministic supply of fresh variable serials.
class SerialSource {
 public:
  explicit SerialSource(Serial first = 1) : next_(first) {}
  Serial next() { return next_++; }
  Serial peek() const { return next_; }
  void advance_past(Serial used) { next_ = std::max(next_, used + 1); }

 private:
  Serial next_;
};

// Printable key identifying a term up to variable renaming.
inline std::string variant_key(const Term& t) {
  std::vector<Term> vars = variables_of(t);
  std::string out;
  // Rebuild with canonical names; cheaper to substitute during printing.
  struct Writer {
    const std::vector<Term>& vars;
    std::string& out;
    void operator()(const Term& x) {
      if (x.is_variable()) {
        auto it = std::find_if(vars.begin(), vars.end(), [&](const Term& v) { return v.serial() == x.serial(); });
        out += "_G" + std::to_string(it - vars.begin());
        return;
      }
      if (x.is_integer() || x.arity() == 0) {
        detail::write_term(out, x);
        return;
      }
      detail::write_name(out, x.name());
      out += '(';
      for (std::size_t i = 0; i < x.arity(); ++i) {
        if (i) out += ',';
        (*this)(x.arg(i));
      }
      out += ')';
    }
  };
  Writer{vars, out}(t);
  return out;
}

// ---------------------------------------------------------------------------
// Substitutions

class Substitution {
 public:
  struct Binding {
    Term variable;
    Term value;
  };

  bool empty() const { return bindings_.empty(); }
  std::size_t size() const { return bindings_.size(); }
  const Term* find(Serial serial) const {
    auto it = bindings_.find(serial);
    return it == bindings_.end() ? nullptr : &it->second.value;
  }
  const Term* find(const Term& variable) const { return find(variable.serial()); }
  // Records a binding as given; callers keep the map idempotent.
  void bind(const Term& variable, Term value) { bindings_[variable.serial()] = Binding{variable, std::move(value)}; }
  const std::map<Serial, Binding>& bindings() const { return bindings_; }

  friend bool operator==(const Substitution& a, const Substitution& b) {
    if (a.size() != b.size()) return false;
    for (const auto& [serial, binding] : a.bindings_) {
      const Term* other = b.find(serial);
      if (!other || !(*other == binding.value)) return false;
    }
    return true;
  }

 private:
  std::map<Serial, Binding> bindings_;
};

inline Term apply(const Substitution& s, const Term& t) {
  if (s.empty() || t.ground()) return t;
  if (t.is_variable()) {
    const Term* bound = s.find(t);
    return bound ? *bound : t;
  }
  std::vector<Term> args;
  args.reserve(t.arity());
  bool changed = false;
  for (const auto& a : t.args()) {
    args.push_back(apply(s, a));
    changed = changed || !args.back().same_node(a);
  }
  return changed ? Term::compound(t.name(), std::move(args)) : t;
}

inline Atom apply(const Substitution& s, const Atom& a) { return Atom(apply(s, a.term())); }

inline std::string to_string(const Substitution& s) {
  std::string out = "{";
  bool first = true;
  for (const auto& [serial, b] : s.bindings()) {
    if (!first) out += ", ";
    first = false;
    out += to_string(b.variable) + "=" + to_string(b.value);
  }
  return out + "}";
}

namespace detail {

// Triangular binding store used by the public unifier.
class TriangularStore {
 public:
  Term deref(Term t) const {
    while (t.is_variable()) {
      auto it = map_.find(t.serial());
      if (it == map_.end()) break;
      t = it->second.second;
    }
    return t;
  }
  bool occurs(Serial serial, const Term& t) const {
    Term d = deref(t);
    if (d.is_variable()) return d.serial() == serial;
    if (d.ground()) return false;
    for (const auto& a : d.args()) {
      if (occurs(serial, a)) return true;
    }
    return false;
  }
  void bind(const Term& var, Term value) { map_[var.serial()] = {var, std::move(value)}; }
  // Fully resolves t; nullopt when a cycle is reached.
  std::optional<Term> resolve(const Term& t) const {
    std::vector<Serial> path;
    return resolve(t, path);
  }
  const std::unordered_map<Serial, std::pair<Term, Term>>& map() const { return map_; }

 private:
  std::optional<Term> resolve(const Term& t, std::vector<Serial>& path) const {
    if (t.ground()) return t;
    if (t.is_variable()) {
      auto it = map_.find(t.serial());
      if (it == map_.end()) return t;
      if (std::find(path.begin(), path.end(), t.serial()) != path.end()) return std::nullopt;
      path.push_back(t.serial());
      auto r = resolve(it->second.second, path);
      path.pop_back();
      return r;
    }
    std::vector<Term> args;
    args.reserve(t.arity());
    for (const auto& a : t.args()) {
      auto r = resolve(a, path);
      if (!r) return std::nullopt;
      args.push_back(std::move(*r));
    }
    return Term::compound(t.name(), std::move(args));
  }

  std::unordered_map<Serial, std::pair<Term, Term>> map_;
};

}  // namespace detail

// Most general unifier of t1 and t2 as an idempotent substitution.  Without
// the occurs check a cyclic solution cannot be represented and also yields
// nullopt.
inline std::optional<Substitution> unify(const Term& t1, const Term& t2, bool occurs_check = true) {
  detail::TriangularStore store;
  std::vector<std::pair<Term, Term>> work{{t1, t2}};
  while (!work.empty()) {
    auto [a, b] = std::move(work.back());
    work.pop_back();
    a = store.deref(a);
    b = store.deref(b);
    if (a.is_variable() && b.is_variable()) {
      if (a.serial() == b.serial()) continue;
      if (a.serial() < b.serial()) std::swap(a, b);
      store.bind(a, b);
      continue;
    }
    if (b.is_variable()) std::swap(a, b);
    if (a.is_variable()) {
      if (occurs_check && store.occurs(a.serial(), b)) return std::nullopt;
      store.bind(a, b);
      continue;
    }
    if (a.kind() != b.kind()) return std::nullopt;
    if (a.is_integer()) {
      if (a.value() != b.value()) return std::nullopt;
      continue;
    }
    if (a.name() != b.name() || a.arity() != b.arity()) return std::nullopt;
    for (std::size_t i = a.arity(); i-- > 0;) work.emplace_back(a.arg(i), b.arg(i));
  }
  Substitution result;
  for (const auto& [serial, binding] : store.map()) {
    auto value = store.resolve(binding.second);
    if (!value) return std::nullopt;
    if (value->is_variable() && value->serial() == serial) continue;
    result.bind(binding.first, std::move(*value));
  }
  return result;
}

inline std::optional<Substitution> unify(const Atom& a, const Atom& b, bool occurs_check = true) {
  return unify(a.term(), b.term(), occurs_check);
}

// One-way matching: a substitution s over the variables of `pattern` with
// apply(s, pattern) == instance.  Variables of `instance` are treated as
// constants.
inline std::optional<Substitution> match(const Term& pattern, const Term& instance) {
  Substitution s;
  std::vector<std::pair<Term, Term>> work{{pattern, instance}};
  while (!work.empty()) {
    auto [p, t] = std::move(work.back());
    work.pop_back();
    if (p.is_variable()) {
      if (const Term* bound = s.find(p)) {
        if (!(*bound == t)) return std::nullopt;
      } else {
        s.bind(p, t);
      }
      continue;
    }
    if (p.kind() != t.kind()) return std::nullopt;
    if (p.is_integer()) {
      if (p.value() != t.value()) return std::nullopt;
      continue;
    }
    if (p.name() != t.name() || p.arity() != t.arity()) return std::nullopt;
    if (p.ground() && p == t) continue;
    for (std::size_t i = 0; i < p.arity(); ++i) work.emplace_back(p.arg(i), t.arg(i));
  }
  // Drop identity bindings so the result stays a proper substitution.
  Substitution cleaned;
  for (const auto& [serial, b] : s.bindings()) {
    if (b.value.is_variable() && b.value.serial() == serial) continue;
    cleaned.bind(b.variable, b.value);
  }
  return cleaned;
}

inline bool is_instance_of(const Term& specific, const Term& general) {
  return match(general, specific).has_value();
}
inline bool is_instance_of(const Atom& specific, const Atom& general) {
  return is_instance_of(specific.term(), general.term());
}

// Equal up to a bijective renaming of variables.
inline bool is_variant(const Term& a, const Term& b) { return variant_key(a) == variant_key(b); }
inline bool is_variant(const Atom& a, const Atom& b) { return is_variant(a.term(), b.term()); }

// Copies t with every variable replaced by a fresh one; `renaming` carries the
// correspondence so several terms can share it.
inline Term rename_apart(const Term& t, SerialSource& serials, std::map<Serial, Term>& renaming) {
  if (t.ground()) return t;
  if (t.is_variable()) {
    auto it = renaming.find(t.serial());
    if (it != renaming.end()) return it->second;
    Term fresh = Term::variable(serials.next());
    renaming.emplace(t.serial(), fresh);
    return fresh;
  }
  std::vector<Term> args;
  args.reserve(t.arity());
  for (const auto& a : t.args()) args.push_back(rename_apart(a, serials, renaming));
  return Term::compound(t.name(), std::move(args));
}

}  // namespace lpdiag
