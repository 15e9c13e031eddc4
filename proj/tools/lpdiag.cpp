// lpdiag: run queries, print traces, diagnose wrong and missing answers, and
// serve interactive diagnosis sessions over HTTP.
//
// Exit codes:
//   0  success / verdict found
//   1  error (parse, engine, specification, oracle script)
//   2  usage
//   3  not a symptom
//   4  diagnosis aborted or inconclusive
//   5  search truncated by a bound

#include <csignal>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "lpdiag/diagnose.hpp"
#include "lpdiag/engine.hpp"
#include "lpdiag/http_service.hpp"
#include "lpdiag/parser.hpp"
#include "lpdiag/service.hpp"
#include "lpdiag/spec.hpp"
#include "lpdiag/trace.hpp"

namespace {

using namespace lpdiag;
namespace fs = std::filesystem;

enum Exit { kOk = 0, kError = 1, kUsage = 2, kNotASymptom = 3, kAborted = 4, kTruncated = 5 };

struct Config {
  std::string program_path;
  std::string query;
  std::string spec_path;
  std::string oracle = "spec";
  std::string algorithm = "alg4";
  std::string bounds;
  bool no_occurs_check = false;
  bool events = false;
  std::size_t answer = 1;
  bool from_answer = false;
  std::string bind = "127.0.0.1";
  int port = 8080;
  double idle_timeout = 3600;
};

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

EngineOptions engine_options(const Config& c) {
  EngineOptions opts;
  if (const char* env = std::getenv("LPDIAG_BOUNDS")) opts.bounds = parse_bounds(env, opts.bounds);
  opts.bounds = parse_bounds(c.bounds, opts.bounds);
  opts.occurs_check = !c.no_occurs_check;
  return opts;
}

Program load_program(const Config& c) {
  try {
    return parse_program(slurp(c.program_path));
  } catch (const ParseError& e) {
    throw std::runtime_error(c.program_path + ":" + e.what());
  }
}

std::optional<std::string> spec_path(const Config& c) {
  if (!c.spec_path.empty()) return c.spec_path;
  fs::path beside = fs::path(c.program_path).parent_path() / "spec.pl";
  if (fs::exists(beside)) return beside.string();
  return std::nullopt;
}

std::string summary_line(const SolveSummary& s) {
  std::string count = s.answers == 1 ? "1 answer" : fmt::format("{} answers", s.answers);
  if (s.complete()) return fmt::format("% {}, search complete", count);
  return fmt::format("% {}, truncated at {}", count, limit_name(s.limit));
}

int cmd_run(const Config& c) {
  Program program = load_program(c);
  Atom query = parse_query(c.query);
  EngineOptions opts = engine_options(c);
  opts.record_proofs = false;
  auto result = solve(program, query, opts);
  for (const auto& a : result.answers) std::cout << format_bindings(query, a) << "\n";
  if (result.answers.empty()) std::cout << "no answers\n";
  std::cout << summary_line(result.summary) << "\n";
  return kOk;
}

int cmd_trace(const Config& c) {
  Program program = load_program(c);
  Atom query = parse_query(c.query);
  EngineOptions opts = engine_options(c);
  if (c.events) {
    opts.record_proofs = false;
    auto result = solve(program, query, opts);
    for (const auto& e : result.events) std::cout << format_event(e) << "\n";
    std::cout << "\n";
  }
  TopLevelTrace t = top_level_trace(program, query, opts);
  std::cout << render_table(t);
  if (t.truncated()) std::cout << summary_line(t.summary) << "\n";
  return kOk;
}

Oracle make_oracle(const Config& c, std::shared_ptr<const Specification> spec) {
  if (c.oracle == "spec") {
    if (!spec) throw UsageError("--oracle spec needs --spec or a spec.pl next to the program");
    return Oracle::from_spec(spec);
  }
  if (c.oracle == "interactive") return Oracle(std::make_unique<InteractiveBackend>(std::cin, std::cout));
  if (c.oracle.rfind("script=", 0) == 0) {
    std::string path = c.oracle.substr(7);
    auto backend = std::make_unique<ScriptedBackend>(ScriptedBackend::parse(slurp(path)));
    return Oracle(std::move(backend));
  }
  throw UsageError("--oracle must be spec, interactive or script=PATH");
}

Atom wrong_answer(const Program& program, const Atom& query, const Config& c, const EngineOptions& opts) {
  EngineOptions o = opts;
  o.record_proofs = false;
  auto result = solve(program, query, o);
  if (c.answer == 0 || c.answer > result.answers.size()) {
    throw DiagnosisError(DiagnosisError::Kind::kNotASymptom,
                         fmt::format("{} has {} answer(s); --answer {} is out of range", to_string(query),
                                     result.answers.size(), c.answer));
  }
  return result.answers[c.answer - 1].atom;
}

int cmd_diagnose(const Config& c) {
  Program program = load_program(c);
  Atom query = parse_query(c.query);
  EngineOptions opts = engine_options(c);
  std::shared_ptr<const Specification> spec;
  if (auto path = spec_path(c)) spec = std::make_shared<const Specification>(Specification::parse(slurp(*path)));
  Oracle oracle = make_oracle(c, spec);

  std::vector<std::string> progress;
  auto flush = [&] {
    for (const auto& line : progress) std::cout << line << "\n";
    progress.clear();
  };
  try {
    Verdict v;
    if (c.algorithm == "missing") {
      v = diagnose_missing(program, {query}, oracle, opts, &progress);
    } else {
      WrongAnswer symptom{query, wrong_answer(program, query, c, opts)};
      if (c.algorithm == "alg4") {
        v = diagnose_wrong_alg4(program, symptom, oracle, opts, &progress);
      } else if (c.algorithm == "alg5") {
        v = diagnose_wrong_alg5(program, symptom, oracle, opts, c.from_answer, &progress);
      } else {
        v = diagnose_wrong_tree(program, symptom, oracle, opts);
        progress = v.transcript;
      }
    }
    flush();
    return kOk;
  } catch (const DiagnosisError& e) {
    flush();
    std::cout << "diagnosis stopped: " << e.what() << "\n";
    switch (e.kind()) {
      case DiagnosisError::Kind::kNotASymptom:
        return kNotASymptom;
      case DiagnosisError::Kind::kTruncated:
        return kTruncated;
      case DiagnosisError::Kind::kInconclusive:
        return kAborted;
      default:
        return kError;
    }
  } catch (const OracleAborted& e) {
    flush();
    std::cout << "diagnosis aborted: " << e.what() << "\n";
    return kAborted;
  } catch (const std::exception&) {
    flush();
    throw;
  }
}

service::HttpService* active_server = nullptr;

int cmd_serve(const Config& c) {
  service::ServiceOptions options;
  options.engine = engine_options(c);
  options.idle_timeout = std::chrono::milliseconds(static_cast<long long>(c.idle_timeout * 1000));
  options.log = [](const std::string& line) { std::cerr << line << std::endl; };
  service::SessionManager sessions(options);
  service::HttpService server(sessions);
  int port = server.bind(c.bind, c.port);
  if (port < 0) {
    std::cerr << "error: cannot bind " << c.bind << ":" << c.port << "\n";
    return kError;
  }
  std::cerr << "listening on " << c.bind << ":" << port << std::endl;
  active_server = &server;
  std::signal(SIGINT, [](int) {
    if (active_server) active_server->stop();
  });
  std::signal(SIGTERM, [](int) {
    if (active_server) active_server->stop();
  });
  server.serve();
  active_server = nullptr;
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Declarative debugging of logic programs"};
  app.require_subcommand(1);
  Config c;

  auto add_engine = [&](CLI::App* sub) {
    sub->add_option("--bounds", c.bounds, "max_depth=N,max_steps=N,max_answers=N (defaults from LPDIAG_BOUNDS)");
    sub->add_flag("--no-occurs-check", c.no_occurs_check, "unify without the occurs check");
  };
  auto add_target = [&](CLI::App* sub) {
    sub->add_option("program", c.program_path, "program file")->required();
    sub->add_option("query", c.query, "query atom")->required();
    add_engine(sub);
  };

  auto* run = app.add_subcommand("run", "print the answers of a query");
  add_target(run);

  auto* trace = app.add_subcommand("trace", "print the top-level trace of a query");
  add_target(trace);
  trace->add_flag("--events", c.events, "also print the Call/Exit/Redo/Fail events");

  auto* diagnose = app.add_subcommand("diagnose", "locate the error behind a wrong or missing answer");
  add_target(diagnose);
  diagnose->add_option("--algorithm", c.algorithm, "alg4 | alg5 | tree | missing")
      ->check(CLI::IsMember({"alg4", "alg5", "tree", "missing"}));
  diagnose->add_option("--oracle", c.oracle, "spec | script=PATH | interactive");
  diagnose->add_option("--spec", c.spec_path, "specification file (default: spec.pl beside the program)");
  diagnose->add_option("--answer", c.answer, "which answer is wrong, counting from 1");
  diagnose->add_flag("--from-answer", c.from_answer, "alg5: start tracing from the wrong answer itself");

  auto* serve = app.add_subcommand("serve", "serve diagnosis sessions over HTTP");
  add_engine(serve);
  serve->add_option("--bind", c.bind, "address to bind");
  serve->add_option("--port", c.port, "port (0 picks a free one)");
  serve->add_option("--idle-timeout", c.idle_timeout, "seconds before an idle session expires");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (run->parsed()) return cmd_run(c);
    if (trace->parsed()) return cmd_trace(c);
    if (diagnose->parsed()) return cmd_diagnose(c);
    return cmd_serve(c);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kError;
  } catch (const DiagnosisError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.kind() == DiagnosisError::Kind::kNotASymptom ? kNotASymptom : kError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kError;
  }
}
