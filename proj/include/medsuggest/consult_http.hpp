#pragma once

#include <filesystem>
#include <memory>
#include <string>

#include "medsuggest/consult.hpp"

namespace httplib {
class Server;
}

namespace medsuggest {

struct HttpOptions {
  std::filesystem::path static_dir;  // mounted at / when set
  std::size_t max_body_bytes = 1 << 20;
};

/// JSON-over-HTTP front for ConsultService:
///   GET  /schema
///   POST /sessions                {demographics, initial_symptom}
///   GET  /sessions/{id}
///   POST /sessions/{id}/answer    {symptom, present}
///   POST /sessions/{id}/tests     {results: {test: value}}
/// Errors are {code, message, field?} with a matching HTTP status.
class ConsultHttpServer {
 public:
  ConsultHttpServer(ConsultService& service, HttpOptions options = {});
  ~ConsultHttpServer();

  /// Blocks until stop().
  bool listen(const std::string& host, int port);
  /// Returns the bound port, or -1.
  int bind_to_any_port(const std::string& host);
  bool listen_after_bind();
  void stop();
  void wait_until_ready() const;

 private:
  ConsultService& service_;
  std::unique_ptr<httplib::Server> server_;
};

}  // namespace medsuggest
