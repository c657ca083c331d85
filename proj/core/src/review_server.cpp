#include "docs2synth/review_server.hpp"

#include <httplib.h>
#include <spdlog/spdlog.h>

#include <cstdlib>
#include <filesystem>

#include "docs2synth/errors.hpp"

namespace docs2synth::review {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, std::string_view kind, const std::string& message,
                std::string_view stage = {}) {
  json body{{"error", kind}, {"message", message}};
  if (!stage.empty()) body["stage"] = stage;
  send_json(res, status, body);
}

bool is_provider_error(ErrorKind k) {
  switch (k) {
    case ErrorKind::ProviderUnreachable:
    case ErrorKind::AuthError:
    case ErrorKind::BudgetExceeded:
    case ErrorKind::RequestRejected:
    case ErrorKind::MalformedResponse:
    case ErrorKind::FixtureError: return true;
    default: return false;
  }
}

// Runs fn and translates service exceptions into status codes.
template <typename Fn>
void guarded(httplib::Response& res, std::string_view stage, Fn&& fn) {
  try {
    fn();
  } catch (const BadRequest& e) {
    send_error(res, 400, "BadRequest", e.what());
  } catch (const NotFound& e) {
    send_error(res, 404, "NotFound", e.what());
  } catch (const MissingCheckpoint& e) {
    send_error(res, 409, "MissingCheckpoint", e.what());
  } catch (const Error& e) {
    auto kind = e.kind();
    if (kind == ErrorKind::IllegalTransition) {
      send_error(res, 409, to_string(kind), e.what());
    } else if (kind == ErrorKind::EditAnswerNotFound) {
      send_error(res, 422, to_string(kind), e.what());
    } else if (kind == ErrorKind::LockHeld) {
      send_error(res, 503, to_string(kind), e.what());
    } else if (is_provider_error(kind)) {
      send_error(res, 502, to_string(kind), e.what(), stage);
    } else {
      send_error(res, 500, to_string(kind), e.what(), stage);
    }
  } catch (const std::exception& e) {
    send_error(res, 500, "InternalError", e.what());
  }
}

std::map<std::string, std::string> query_params(const httplib::Request& req) {
  std::map<std::string, std::string> out;
  for (const auto& [k, v] : req.params) out.emplace(k, v);
  return out;
}

json parse_body(const httplib::Request& req) {
  if (req.body.empty()) return json::object();
  auto j = json::parse(req.body, nullptr, false);
  if (j.is_discarded()) throw BadRequest("request body is not valid JSON");
  if (!j.is_object()) throw BadRequest("request body must be a JSON object");
  return j;
}

std::string reviewer_of(const httplib::Request& req, const json& body) {
  if (body.contains("reviewer") && body["reviewer"].is_string()) return body["reviewer"].get<std::string>();
  if (req.has_header("X-Reviewer")) return req.get_header_value("X-Reviewer");
  return "anonymous";
}

}  // namespace

struct ReviewServer::Impl {
  ReviewService& service;
  config::ReviewServerConfig config;
  httplib::Server server;
  std::string token;

  Impl(ReviewService& s, config::ReviewServerConfig c) : service(s), config(std::move(c)) {
    if (!config.token_env.empty()) {
      if (const char* t = std::getenv(config.token_env.c_str()); t && *t) token = t;
    }
    routes();
  }

  void routes() {
    server.set_pre_routing_handler([this](const httplib::Request& req, httplib::Response& res) {
      if (token.empty() || req.path.rfind("/api/", 0) != 0) return httplib::Server::HandlerResponse::Unhandled;
      if (req.get_header_value("Authorization") == "Bearer " + token) {
        return httplib::Server::HandlerResponse::Unhandled;
      }
      send_error(res, 401, "Unauthorized", "missing or wrong bearer token");
      return httplib::Server::HandlerResponse::Handled;
    });

    server.Get("/api/qa", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, "review", [&] {
        auto query = parse_list_query(query_params(req));
        auto page = service.list(query);
        res.set_header("X-Total-Count", std::to_string(page.total));
        send_json(res, 200,
                  json{{"items", page.items},
                       {"total", page.total},
                       {"page", query.page},
                       {"page_size", query.page_size}});
      });
    });

    server.Post(R"(/api/qa/([^/]+)/approve)", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, "review", [&] {
        auto body = parse_body(req);
        send_json(res, 200, json(service.approve(req.matches[1].str(), reviewer_of(req, body))));
      });
    });

    server.Post(R"(/api/qa/([^/]+)/reject)", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, "review", [&] {
        auto body = parse_body(req);
        send_json(res, 200, json(service.reject(req.matches[1].str(), reviewer_of(req, body))));
      });
    });

    server.Patch(R"(/api/qa/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, "review", [&] {
        auto body = parse_body(req);
        if (!body.contains("field") || !body["field"].is_string()) throw BadRequest("field must be a string");
        if (!body.contains("new_value") || !body["new_value"].is_string()) {
          throw BadRequest("new_value must be a string");
        }
        send_json(res, 200,
                  json(service.edit(req.matches[1].str(), body["field"].get<std::string>(),
                                    body["new_value"].get<std::string>(), reviewer_of(req, body))));
      });
    });

    server.Get(R"(/api/documents/([^/]+)/image)", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, "image", [&] {
        std::optional<std::vector<int>> boxes;
        if (req.has_param("boxes")) boxes = parse_box_list(req.get_param_value("boxes"));
        auto png = service.document_image(req.matches[1].str(), boxes);
        res.status = 200;
        res.set_content(png, "image/png");
      });
    });

    server.Post("/api/compare", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, "inference", [&] { send_json(res, 200, service.compare(parse_body(req))); });
    });

    server.Get("/api/stats", [this](const httplib::Request&, httplib::Response& res) {
      guarded(res, "stats", [&] { send_json(res, 200, service.stats()); });
    });

    auto artifacts = service.layout().artifacts_dir();
    fs::create_directories(artifacts);
    server.set_mount_point("/artifacts", artifacts);
    if (!config.static_dir.empty() && fs::is_directory(config.static_dir)) {
      server.set_mount_point("/", config.static_dir);
    }
    server.set_logger([](const httplib::Request& req, const httplib::Response& res) {
      spdlog::debug("{} {} -> {}", req.method, req.path, res.status);
    });
  }
};

ReviewServer::ReviewServer(ReviewService& service, config::ReviewServerConfig config)
    : impl_(std::make_unique<Impl>(service, std::move(config))) {}

ReviewServer::~ReviewServer() = default;

bool ReviewServer::listen() {
  spdlog::info("review server listening on {}:{}", impl_->config.host, impl_->config.port);
  return impl_->server.listen(impl_->config.host, impl_->config.port);
}

int ReviewServer::bind_any_port() { return impl_->server.bind_to_any_port(impl_->config.host); }

bool ReviewServer::listen_after_bind() { return impl_->server.listen_after_bind(); }

void ReviewServer::stop() { impl_->server.stop(); }

void ReviewServer::wait_until_ready() const { impl_->server.wait_until_ready(); }

}  // namespace docs2synth::review
