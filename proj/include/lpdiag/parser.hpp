// Reader for programs, queries and specification files.
//
// Grammar:
//   program   ::= { clause | directive }
//   directive ::= ':-' goals '.'
//   clause    ::= goal [ ':-' goals ] '.'
//   goals     ::= goal { ',' goal }
//   goal      ::= term [ cmp term ]            cmp: =< > < >= =:= =\=
//   term      ::= VAR | INT | '-' INT | name [ '(' term { ',' term } ')' ] | list
//   list      ::= '[' ']' | '[' term { ',' term } [ '|' term ] ']'
//   name      ::= [a-z][A-Za-z0-9_]* | quoted
// '%' starts a line comment, '/* ... */' a block comment.

#pragma once

#include <cctype>
#include <cstddef>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "lpdiag/term.hpp"

namespace lpdiag {

class ParseError : public std::runtime_error {
 public:
  ParseError(std::size_t line, std::size_t column, const std::string& message)
      : std::runtime_error(std::to_string(line) + ":" + std::to_string(column) + ": " + message),
        line_(line),
        column_(column),
        message_(message) {}

  std::size_t line() const { return line_; }
  std::size_t column() const { return column_; }
  const std::string& message() const { return message_; }

 private:
  std::size_t line_;
  std::size_t column_;
  std::string message_;
};

struct ClauseOrigin {
  PredicateKey predicate;
  std::size_t index = 0;  // 1-based within the predicate
  std::size_t line = 0;
  std::size_t column = 0;

  std::string to_string() const { return predicate.to_string() + " clause " + std::to_string(index); }
  friend bool operator==(const ClauseOrigin& a, const ClauseOrigin& b) {
    return a.predicate == b.predicate && a.index == b.index;
  }
};

struct Clause {
  Atom head;
  std::vector<Atom> body;
  ClauseOrigin origin;

  bool fact() const { return body.empty(); }
};

inline std::string to_string(const Clause& c) {
  std::string out = to_string(c.head);
  for (std::size_t i = 0; i < c.body.size(); ++i) {
    out += i == 0 ? " :- " : ", ";
    out += to_string(c.body[i]);
  }
  return out + ".";
}

class Program {
 public:
  // Appends a clause, assigning its per-predicate index.
  void add(Clause clause) {
    PredicateKey key = clause.head.key();
    if (is_builtin(key)) {
      throw ParseError(clause.origin.line, clause.origin.column, "cannot redefine built-in " + key.to_string());
    }
    auto& slots = index_[key];
    clause.origin.predicate = key;
    clause.origin.index = slots.size() + 1;
    slots.push_back(clauses_.size());
    clauses_.push_back(std::move(clause));
  }
  void add_directive(Atom directive) { directives_.push_back(std::move(directive)); }

  const std::vector<Clause>& clauses() const { return clauses_; }
  const std::vector<Atom>& directives() const { return directives_; }

  bool defines(const PredicateKey& key) const { return index_.count(key) != 0; }

  std::vector<const Clause*> clauses_for(const PredicateKey& key) const {
    std::vector<const Clause*> out;
    auto it = index_.find(key);
    if (it == index_.end()) return out;
    for (std::size_t i : it->second) out.push_back(&clauses_[i]);
    return out;
  }

  // 1-based clause lookup; nullptr when absent.
  const Clause* clause(const PredicateKey& key, std::size_t index) const {
    auto it = index_.find(key);
    if (it == index_.end() || index == 0 || index > it->second.size()) return nullptr;
    return &clauses_[it->second[index - 1]];
  }

  std::vector<PredicateKey> predicates() const {
    std::vector<PredicateKey> out;
    for (const auto& [key, slots] : index_) out.push_back(key);
    return out;
  }

  Serial max_serial() const {
    Serial best = 0;
    for (const auto& c : clauses_) {
      best = std::max(best, lpdiag::max_serial(c.head.term()));
      for (const auto& b : c.body) best = std::max(best, lpdiag::max_serial(b.term()));
    }
    return best;
  }

 private:
  std::vector<Clause> clauses_;
  std::vector<Atom> directives_;
  std::map<PredicateKey, std::vector<std::size_t>> index_;
};

inline std::string to_string(const Program& p) {
  std::string out;
  for (const auto& d : p.directives()) out += ":- " + to_string(d) + ".\n";
  for (const auto& c : p.clauses()) out += to_string(c) + "\n";
  return out;
}

namespace detail {

enum class TokenKind { kVariable, kName, kInteger, kPunct, kNeck, kComparison, kEnd };

struct Token {
  TokenKind kind = TokenKind::kEnd;
  std::string text;
  std::int64_t value = 0;
  std::size_t line = 1;
  std::size_t column = 1;
};

inline std::string describe(const Token& t) {
  switch (t.kind) {
    case TokenKind::kEnd:
      return "end of input";
    case TokenKind::kInteger:
      return "integer " + std::to_string(t.value);
    default:
      return "'" + t.text + "'";
  }
}

class Lexer {
 public:
  explicit Lexer(std::string_view text) : text_(text) {}

  Token next() {
    skip_layout();
    Token tok;
    tok.line = line_;
    tok.column = column_;
    if (pos_ >= text_.size()) return tok;
    char c = text_[pos_];
    if (std::isupper(static_cast<unsigned char>(c)) || c == '_') {
      tok.kind = TokenKind::kVariable;
      tok.text = take_identifier();
      return tok;
    }
    if (std::islower(static_cast<unsigned char>(c))) {
      tok.kind = TokenKind::kName;
      tok.text = take_identifier();
      return tok;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) ||
        (c == '-' && pos_ + 1 < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_ + 1])))) {
      return take_integer(tok);
    }
    if (c == '\'') return take_quoted(tok);
    for (std::string_view op : {":-", "=:=", "=\\=", "=<", ">=", ">", "<"}) {
      if (text_.substr(pos_, op.size()) == op) {
        tok.kind = op == ":-" ? TokenKind::kNeck : TokenKind::kComparison;
        tok.text = std::string(op);
        advance(op.size());
        return tok;
      }
    }
    if (std::string_view("()[],|.").find(c) != std::string_view::npos) {
      tok.kind = TokenKind::kPunct;
      tok.text = std::string(1, c);
      advance(1);
      return tok;
    }
    throw ParseError(line_, column_, std::string("unexpected character '") + c + "'");
  }

 private:
  void advance(std::size_t n) {
    for (std::size_t i = 0; i < n && pos_ < text_.size(); ++i) {
      if (text_[pos_] == '\n') {
        ++line_;
        column_ = 1;
      } else {
        ++column_;
      }
      ++pos_;
    }
  }

  void skip_layout() {
    while (pos_ < text_.size()) {
      char c = text_[pos_];
      if (std::isspace(static_cast<unsigned char>(c))) {
        advance(1);
      } else if (c == '%') {
        while (pos_ < text_.size() && text_[pos_] != '\n') advance(1);
      } else if (text_.substr(pos_, 2) == "/*") {
        std::size_t line = line_, column = column_;
        advance(2);
        while (pos_ < text_.size() && text_.substr(pos_, 2) != "*/") advance(1);
        if (pos_ >= text_.size()) throw ParseError(line, column, "unterminated block comment");
        advance(2);
      } else {
        break;
      }
    }
  }

  std::string take_identifier() {
    std::size_t start = pos_;
    while (pos_ < text_.size() &&
           (std::isalnum(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '_')) {
      advance(1);
    }
    return std::string(text_.substr(start, pos_ - start));
  }

  Token take_integer(Token& tok) {
    std::size_t start = pos_;
    if (text_[pos_] == '-') advance(1);
    while (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) advance(1);
    tok.kind = TokenKind::kInteger;
    tok.text = std::string(text_.substr(start, pos_ - start));
    try {
      tok.value = std::stoll(tok.text);
    } catch (const std::out_of_range&) {
      throw ParseError(tok.line, tok.column, "integer literal out of range");
    }
    return tok;
  }

  Token take_quoted(Token& tok) {
    advance(1);
    std::string name;
    while (true) {
      if (pos_ >= text_.size()) throw ParseError(tok.line, tok.column, "unterminated quoted atom");
      char c = text_[pos_];
      if (c == '\\' && pos_ + 1 < text_.size()) {
        name += text_[pos_ + 1];
        advance(2);
      } else if (c == '\'') {
        if (pos_ + 1 < text_.size() && text_[pos_ + 1] == '\'') {
          name += '\'';
          advance(2);
        } else {
          advance(1);
          break;
        }
      } else {
        name += c;
        advance(1);
      }
    }
    tok.kind = TokenKind::kName;
    tok.text = std::move(name);
    return tok;
  }

  std::string_view text_;
  std::size_t pos_ = 0;
  std::size_t line_ = 1;
  std::size_t column_ = 1;
};

class Parser {
 public:
  Parser(std::string_view text, SerialSource& serials) : lexer_(text), serials_(serials) { shift(); }

  Program program() {
    Program p;
    while (tok_.kind != TokenKind::kEnd) {
      variables_.clear();
      if (tok_.kind == TokenKind::kNeck) {
        shift();
        for (auto& g : goals()) p.add_directive(std::move(g));
        expect(".");
        continue;
      }
      Clause c;
      c.origin.line = tok_.line;
      c.origin.column = tok_.column;
      c.head = goal();
      if (c.head.builtin()) {
        throw ParseError(c.origin.line, c.origin.column, "cannot redefine built-in " + c.head.key().to_string());
      }
      if (tok_.kind == TokenKind::kNeck) {
        shift();
        c.body = goals();
      }
      expect(".");
      p.add(std::move(c));
    }
    return p;
  }

  Atom query() {
    variables_.clear();
    Atom a = goal();
    if (is_punct(".")) shift();
    if (tok_.kind != TokenKind::kEnd) error("expected end of query");
    return a;
  }

 private:
  void shift() { tok_ = lexer_.next(); }
  bool is_punct(std::string_view p) const { return tok_.kind == TokenKind::kPunct && tok_.text == p; }

  [[noreturn]] void error(const std::string& what) const {
    throw ParseError(tok_.line, tok_.column, what + ", found " + describe(tok_));
  }

  void expect(std::string_view p) {
    if (!is_punct(p)) error("expected '" + std::string(p) + "'");
    shift();
  }

  std::vector<Atom> goals() {
    std::vector<Atom> out{goal()};
    while (is_punct(",")) {
      shift();
      out.push_back(goal());
    }
    return out;
  }

  Atom goal() {
    Token start = tok_;
    Term left = term();
    if (tok_.kind == TokenKind::kComparison) {
      std::string op = tok_.text;
      shift();
      Term right = term();
      return Atom(op, {std::move(left), std::move(right)});
    }
    if (!left.is_compound() || left.is_cons() || left.is_nil()) {
      throw ParseError(start.line, start.column, "expected an atom, found " + to_string(left));
    }
    return Atom(std::move(left));
  }

  Term term() {
    switch (tok_.kind) {
      case TokenKind::kVariable: {
        std::string name = tok_.text;
        shift();
        if (name == "_") return Term::variable(serials_.next());
        auto it = variables_.find(name);
        if (it != variables_.end()) return it->second;
        Term v = Term::variable(serials_.next(), name);
        variables_.emplace(name, v);
        return v;
      }
      case TokenKind::kInteger: {
        std::int64_t v = tok_.value;
        shift();
        return Term::integer(v);
      }
      case TokenKind::kName: {
        std::string name = tok_.text;
        shift();
        if (!is_punct("(")) return Term::constant(std::move(name));
        shift();
        std::vector<Term> args{term()};
        while (is_punct(",")) {
          shift();
          args.push_back(term());
        }
        expect(")");
        return Term::compound(std::move(name), std::move(args));
      }
      case TokenKind::kPunct:
        if (is_punct("[")) return list();
        break;
      default:
        break;
    }
    error("expected a term");
  }

  Term list() {
    shift();
    if (is_punct("]")) {
      shift();
      return Term::nil();
    }
    std::vector<Term> items{term()};
    while (is_punct(",")) {
      shift();
      items.push_back(term());
    }
    Term tail = Term::nil();
    if (is_punct("|")) {
      shift();
      tail = term();
    }
    expect("]");
    return Term::list(std::move(items), std::move(tail));
  }

  Lexer lexer_;
  SerialSource& serials_;
  Token tok_;
  std::map<std::string, Term> variables_;
};

}  // namespace detail

inline Program parse_program(std::string_view text, SerialSource& serials) {
  return detail::Parser(text, serials).program();
}

inline Program parse_program(std::string_view text) {
  SerialSource serials;
  return parse_program(text, serials);
}

inline Atom parse_query(std::string_view text, SerialSource& serials) {
  return detail::Parser(text, serials).query();
}

inline Atom parse_query(std::string_view text) {
  SerialSource serials;
  return parse_query(text, serials);
}

// Parses a single term (used for scripted answers and list literals).
inline Term parse_term(std::string_view text, SerialSource& serials) {
  // A term is parsed as the sole argument of a wrapper atom.
  std::string wrapped = "t(" + std::string(text) + ")";
  Atom a = parse_query(wrapped, serials);
  return a.arg(0);
}

inline Term parse_term(std::string_view text) {
  SerialSource serials;
  return parse_term(text, serials);
}

// A fresh variant of the clause.
inline Clause rename_apart(const Clause& c, SerialSource& serials) {
  std::map<Serial, Term> renaming;
  Clause out;
  out.origin = c.origin;
  out.head = Atom(rename_apart(c.head.term(), serials, renaming));
  for (const auto& b : c.body) out.body.push_back(Atom(rename_apart(b.term(), serials, renaming)));
  return out;
}

}  // namespace lpdiag
