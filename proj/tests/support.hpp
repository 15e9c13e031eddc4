// Shared helpers for the test suites.

#pragma once

#include <fstream>
#include <memory>
#include <sstream>
#include <string>
#include <string_view>

#include "lpdiag/parser.hpp"
#include "lpdiag/spec.hpp"

namespace lpdiag::testing {

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline std::string fixture_path(std::string_view name) { return std::string(LPDIAG_FIXTURES) + "/" + std::string(name); }
inline std::string fixture(std::string_view name) { return read_file(fixture_path(name)); }

inline const Program& inc_program() {
  static const Program p = parse_program(fixture("inc.isort.pl"));
  return p;
}

inline const Program& ins_program() {
  static const Program p = parse_program(fixture("ins.isort.pl"));
  return p;
}

inline std::shared_ptr<const Specification> isort_spec() {
  static const auto spec = std::make_shared<const Specification>(Specification::parse(fixture("spec.pl")));
  return spec;
}

inline Atom atom(std::string_view text) { return parse_query(text); }

inline Term term(std::string_view text) {
  SerialSource serials;
  return parse_term(text, serials);
}

}  // namespace lpdiag::testing

#include <map>
#include <vector>

#include "lpdiag/engine.hpp"

namespace lpdiag::testing {

// Checks an event stream against the box model; returns the first violation
// or an empty string.  With `complete`, every box must end at Fail.
inline std::string byrd_violation(const std::vector<TraceEvent>& events, bool complete) {
  struct Box {
    Port last;
    std::size_t depth;
    std::size_t parent;
    Atom call;
  };
  std::map<std::size_t, Box> boxes;
  std::size_t last_invocation = 0;
  auto where = [](const TraceEvent& e) { return " at " + format_event(e); };
  for (const auto& e : events) {
    if (e.port == Port::kCall) {
      if (boxes.count(e.invocation)) return "second Call" + where(e);
      if (e.invocation <= last_invocation) return "invocation numbers not increasing" + where(e);
      last_invocation = e.invocation;
      if (e.parent == 0) {
        if (e.depth != 1) return "root call not at depth 1" + where(e);
      } else {
        auto p = boxes.find(e.parent);
        if (p == boxes.end()) return "unknown parent" + where(e);
        if (p->second.depth + 1 != e.depth) return "depth does not nest" + where(e);
        if (p->second.last != Port::kCall && p->second.last != Port::kRedo) return "parent not running" + where(e);
      }
      boxes[e.invocation] = Box{Port::kCall, e.depth, e.parent, e.goal};
      continue;
    }
    auto it = boxes.find(e.invocation);
    if (it == boxes.end()) return "event before Call" + where(e);
    Box& b = it->second;
    if (b.depth != e.depth) return "depth changed" + where(e);
    switch (e.port) {
      case Port::kExit:
      case Port::kFail:
        if (b.last != Port::kCall && b.last != Port::kRedo) return "Exit/Fail from a box that is not running" + where(e);
        for (const auto& [inv, child] : boxes) {
          if (child.parent == e.invocation && (child.last == Port::kCall || child.last == Port::kRedo)) {
            return "box left while a child runs" + where(e);
          }
        }
        if (e.port == Port::kExit && !is_instance_of(e.goal, b.call)) return "Exit goal is not an instance of the call" + where(e);
        break;
      case Port::kRedo:
        if (b.last != Port::kExit) return "Redo without a preceding Exit" + where(e);
        break;
      case Port::kCall:
        break;
    }
    b.last = e.port;
  }
  if (complete) {
    for (const auto& [inv, b] : boxes) {
      if (b.last != Port::kFail) return "box " + std::to_string(inv) + " did not end at Fail";
    }
  }
  return {};
}

}  // namespace lpdiag::testing
