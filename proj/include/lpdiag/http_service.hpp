// HTTP front end for the session manager.
//
//   POST /sessions                     session.create  -> session.view (201)
//   GET  /sessions/{id}                                -> session.view
//   POST /sessions/{id}/step           session.step or oracle.answer -> session.view
//   GET  /sessions/{id}/transcript     -> transcript (JSON, or text with ?format=text)
//   GET  /sessions/{id}/question       long poll (?timeout_ms=N) -> oracle.question, or 204
//   DELETE /sessions/{id}
//
// Every body is a single JSON message terminated by a newline.  Failures are
// "error" messages with an HTTP status matching the error code.

#pragma once

#include <algorithm>
#include <chrono>
#include <string>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "lpdiag/service.hpp"

namespace lpdiag::service {

class HttpService {
 public:
  explicit HttpService(SessionManager& sessions) : sessions_(sessions) {
    // Plain address reuse only: a second server on a taken port must fail.
    server_.set_socket_options([](socket_t sock) {
      int yes = 1;
      setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, reinterpret_cast<const void*>(&yes), sizeof(yes));
    });
    routes();
  }

  HttpService(const HttpService&) = delete;
  HttpService& operator=(const HttpService&) = delete;
  ~HttpService() { stop(); }

  // Binds without serving yet; port 0 picks a free port.  Returns the bound
  // port, or -1 when the address is unavailable.
  int bind(const std::string& host, int port) {
    if (port == 0) return server_.bind_to_any_port(host);
    return server_.bind_to_port(host, port) ? port : -1;
  }

  // Serves until stop(); blocks the caller.
  bool serve() { return server_.listen_after_bind(); }

  void start_background() {
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }

  void stop() {
    if (server_.is_running()) server_.stop();
    if (thread_.joinable()) thread_.join();
  }

 private:
  static void send(httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump() + "\n", "application/json");
  }

  static void send_error(httplib::Response& res, const ServiceError& e) { send(res, e.status(), e.to_json()); }

  static json body_of(const httplib::Request& req) {
    try {
      return json::parse(req.body);
    } catch (const json::parse_error& e) {
      throw ServiceError("bad_request", 400, std::string("malformed JSON: ") + e.what());
    }
  }

  template <typename Fn>
  static void guarded(httplib::Response& res, Fn&& fn) {
    try {
      fn();
    } catch (const ServiceError& e) {
      send_error(res, e);
    } catch (const std::exception& e) {
      send_error(res, ServiceError("internal", 500, e.what()));
    }
  }

  void routes() {
    server_.Post("/sessions", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] { send(res, 201, sessions_.create(body_of(req))); });
    });
    server_.Get(R"(/sessions/([0-9a-f]+))", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] { send(res, 200, sessions_.view(req.matches[1])); });
    });
    server_.Delete(R"(/sessions/([0-9a-f]+))", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        if (!sessions_.remove(req.matches[1])) throw ServiceError("unknown_session", 404, "no session " + req.matches[1].str());
        res.status = 204;
      });
    });
    server_.Post(R"(/sessions/([0-9a-f]+)/step)", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] { send(res, 200, sessions_.step(req.matches[1], body_of(req))); });
    });
    server_.Get(R"(/sessions/([0-9a-f]+)/transcript)", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        json t = sessions_.transcript(req.matches[1]);
        if (req.get_param_value("format") == "text") {
          std::string text;
          for (const auto& line : t["lines"]) text += line.get<std::string>() + "\n";
          res.set_content(text, "text/plain");
          return;
        }
        send(res, 200, t);
      });
    });
    server_.Get(R"(/sessions/([0-9a-f]+)/question)", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        long timeout = 0;
        if (req.has_param("timeout_ms")) {
          try {
            timeout = std::stol(req.get_param_value("timeout_ms"));
          } catch (const std::exception&) {
            throw ServiceError("bad_request", 400, "timeout_ms must be an integer");
          }
        }
        auto q = sessions_.wait_question(req.matches[1], std::chrono::milliseconds(std::clamp(timeout, 0L, 60'000L)));
        if (!q) {
          res.status = 204;
          return;
        }
        send(res, 200, *q);
      });
    });
  }

  SessionManager& sessions_;
  httplib::Server server_;
  std::thread thread_;
};

}  // namespace lpdiag::service
