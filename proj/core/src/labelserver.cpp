// Copyright 2026 The Notecraft Authors.
// SPDX-License-Identifier: Apache-2.0

#include <httplib.h>

#include <thread>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "notecraft/errors.hpp"
#include "notecraft/labelstore.hpp"

namespace notecraft {

using nlohmann::json;

namespace {

void reply(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void reply_error(httplib::Response& res, int status, const std::string& kind,
                 const std::string& message) {
  reply(res, status, json{{"error", kind}, {"message", message}});
}

}  // namespace

struct LabelServer::Impl {
  LabelStore& store;
  std::string token;
  httplib::Server http;
  std::thread worker;

  Impl(LabelStore& s, std::string t) : store(s), token(std::move(t)) { routes(); }

  bool authorized(const httplib::Request& req) const {
    return token.empty() || req.get_header_value("Authorization") == "Bearer " + token;
  }

  void routes() {
    http.set_pre_routing_handler([this](const httplib::Request& req, httplib::Response& res) {
      if (authorized(req)) return httplib::Server::HandlerResponse::Unhandled;
      reply_error(res, 401, "unauthorized", "missing or invalid bearer token");
      return httplib::Server::HandlerResponse::Handled;
    });

    http.Get("/api/v1/tasks/next", [this](const httplib::Request&, httplib::Response& res) {
      const auto view = store.next_open();
      if (!view) {
        res.status = 204;
        return;
      }
      json candidates = json::array();
      for (std::size_t i = 0; i < view->candidates.size(); ++i) {
        candidates.push_back({{"label", fmt::format("Note {}", i + 1)}, {"text", view->candidates[i]}});
      }
      reply(res, 200,
            json{{"task_id", view->task_id}, {"prompt_text", view->prompt_text},
                 {"candidates", candidates}});
    });

    http.Post(R"(/api/v1/tasks/([^/]+)/label)",
              [this](const httplib::Request& req, httplib::Response& res) {
                const std::string id = req.matches[1];
                std::size_t most = 0, least = 0;
                std::optional<std::string> edited;
                try {
                  const auto body = json::parse(req.body);
                  most = body.at("most").get<std::size_t>();
                  least = body.at("least").get<std::size_t>();
                  if (auto it = body.find("edited_preferred"); it != body.end() && !it->is_null()) {
                    edited = it->get<std::string>();
                  }
                } catch (const json::exception& e) {
                  reply_error(res, 422, "invalid", fmt::format("malformed label body: {}", e.what()));
                  return;
                }
                try {
                  const auto l = store.submit(id, most, least, edited);
                  reply(res, 200, json{{"status", "ok"}, {"task_id", id}, {"sequence", l.sequence}});
                } catch (const NotFoundError& e) {
                  reply_error(res, 404, e.kind(), e.what());
                } catch (const ConflictError& e) {
                  reply_error(res, 409, e.kind(), e.what());
                } catch (const InputError& e) {
                  reply_error(res, 422, e.kind(), e.what());
                }
              });

    http.Get("/api/v1/progress", [this](const httplib::Request&, httplib::Response& res) {
      const auto p = store.progress();
      reply(res, 200, json{{"total", p.total}, {"labeled", p.labeled}, {"open", p.open()}});
    });

    http.set_exception_handler(
        [](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
          try {
            std::rethrow_exception(ep);
          } catch (const std::exception& e) {
            reply_error(res, 500, "internal", e.what());
          }
        });
  }
};

LabelServer::LabelServer(LabelStore& store, std::string token)
    : impl_(std::make_unique<Impl>(store, std::move(token))) {}

LabelServer::~LabelServer() { stop(); }

int LabelServer::bind(const std::string& host, int port) {
  int bound = port;
  if (port == 0) {
    bound = impl_->http.bind_to_any_port(host);
  } else if (!impl_->http.bind_to_port(host, port)) {
    bound = -1;
  }
  if (bound < 0) throw Error("io", fmt::format("cannot bind {}:{}", host, port));
  return bound;
}

void LabelServer::run() { impl_->http.listen_after_bind(); }

int LabelServer::start(const std::string& host, int port) {
  const int bound = bind(host, port);
  impl_->worker = std::thread([this] { run(); });
  impl_->http.wait_until_ready();
  return bound;
}

void LabelServer::stop() {
  if (!impl_) return;
  impl_->http.stop();
  if (impl_->worker.joinable()) impl_->worker.join();
}

}  // namespace notecraft
