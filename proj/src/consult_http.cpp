#include "medsuggest/consult_http.hpp"

#include "httplib.h"

namespace medsuggest {
namespace {

void send_json(httplib::Response& res, int status, const nlohmann::json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, const ConsultError& e) { send_json(res, http_status(e.code()), e.to_json()); }

nlohmann::json parse_body(const httplib::Request& req) {
  try {
    return nlohmann::json::parse(req.body);
  } catch (const nlohmann::json::parse_error&) {
    throw ConsultError(ConsultErrorCode::InvalidRequest, "request body is not valid JSON");
  }
}

template <class F>
httplib::Server::Handler guarded(F f) {
  return [f](const httplib::Request& req, httplib::Response& res) {
    try {
      f(req, res);
    } catch (const ConsultError& e) {
      send_error(res, e);
    } catch (const std::exception& e) {
      send_json(res, 500, {{"code", "internal"}, {"message", e.what()}});
    }
  };
}

}  // namespace

ConsultHttpServer::ConsultHttpServer(ConsultService& service, HttpOptions options)
    : service_(service), server_(std::make_unique<httplib::Server>()) {
  auto& s = *server_;
  s.set_payload_max_length(options.max_body_bytes);

  s.Get("/schema", guarded([this](const httplib::Request&, httplib::Response& res) {
          send_json(res, 200, service_.schema_json());
        }));
  s.Post("/sessions", guarded([this](const httplib::Request& req, httplib::Response& res) {
           send_json(res, 201, service_.start_json(parse_body(req)));
         }));
  s.Get(R"(/sessions/([0-9a-f]+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
          send_json(res, 200, service_.get_json(req.matches[1]));
        }));
  s.Post(R"(/sessions/([0-9a-f]+)/answer)", guarded([this](const httplib::Request& req, httplib::Response& res) {
           send_json(res, 200, service_.answer_json(req.matches[1], parse_body(req)));
         }));
  s.Post(R"(/sessions/([0-9a-f]+)/tests)", guarded([this](const httplib::Request& req, httplib::Response& res) {
           send_json(res, 200, service_.tests_json(req.matches[1], parse_body(req)));
         }));
  s.Get("/health", [this](const httplib::Request&, httplib::Response& res) {
    send_json(res, 200, {{"status", "ok"}, {"sessions", service_.session_count()},
                         {"checkpoint_loaded", service_.has_checkpoint()}});
  });

  if (!options.static_dir.empty() && !s.set_mount_point("/", options.static_dir.string()))
    throw std::runtime_error("cannot mount " + options.static_dir.string());

  s.set_error_handler([](const httplib::Request&, httplib::Response& res) {
    if (!res.body.empty()) return;
    const char* code = res.status == 404 ? "not_found" : res.status == 413 ? "payload_too_large" : "http_error";
    send_json(res, res.status, {{"code", code}, {"message", httplib::status_message(res.status)}});
  });
}

ConsultHttpServer::~ConsultHttpServer() = default;

bool ConsultHttpServer::listen(const std::string& host, int port) { return server_->listen(host, port); }
int ConsultHttpServer::bind_to_any_port(const std::string& host) { return server_->bind_to_any_port(host); }
bool ConsultHttpServer::listen_after_bind() { return server_->listen_after_bind(); }
void ConsultHttpServer::stop() { server_->stop(); }
void ConsultHttpServer::wait_until_ready() const { server_->wait_until_ready(); }

}  // namespace medsuggest
