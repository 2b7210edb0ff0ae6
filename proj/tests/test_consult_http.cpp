#include <filesystem>
#include <fstream>
#include <thread>

#include "doctest.h"
#include "httplib.h"
#include "support.hpp"

#include "medsuggest/consult_http.hpp"

using namespace medsuggest;

namespace {

const WorldModel& demo_world() {
  static const WorldModel w = load_world(testsupport::data_dir() / "worlds" / "demo_world.json");
  return w;
}

Checkpoint http_checkpoint(const WorldModel& w) {
  Rng rng(31);
  auto params = init_params(NetConfig::for_world(w, {32, 16}, 16), rng);
  auto v = params.mutable_values();
  for (auto& x : v) x *= 2.5;
  return {params, 0, true};
}

/// A server on an ephemeral port, stopped on destruction.
class LiveServer {
 public:
  LiveServer(ConsultService& svc, HttpOptions opts = {}) : server_(svc, std::move(opts)) {
    port_ = server_.bind_to_any_port("127.0.0.1");
    REQUIRE(port_ > 0);
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~LiveServer() {
    server_.stop();
    thread_.join();
  }
  httplib::Client client() const {
    httplib::Client c("127.0.0.1", port_);
    c.set_connection_timeout(5);
    c.set_read_timeout(10);
    return c;
  }

 private:
  ConsultHttpServer server_;
  int port_ = -1;
  std::thread thread_;
};

nlohmann::json body(const httplib::Result& r) {
  REQUIRE(r);
  CHECK(r->get_header_value("Content-Type").find("application/json") != std::string::npos);
  return nlohmann::json::parse(r->body);
}

nlohmann::json post(httplib::Client& c, const std::string& path, const nlohmann::json& doc, int expect) {
  auto r = c.Post(path, doc.dump(), "application/json");
  REQUIRE(r);
  CHECK(r->status == expect);
  return body(r);
}

nlohmann::json start_request(const WorldModel& w, const Patient& p) {
  const auto& s = w.schema();
  nlohmann::json demo = nlohmann::json::object();
  for (std::size_t d = 0; d < s.num_demographics(); ++d)
    demo[s.demographics()[d].id] = s.demographics()[d].values[static_cast<std::size_t>(p.values[d])];
  return {{"schema_version", 1}, {"demographics", demo}, {"initial_symptom", s.symptoms()[p.initial_symptom]}};
}

}  // namespace

TEST_SUITE("consult_http") {

TEST_CASE("schema and health endpoints") {
  const auto& w = demo_world();
  ConsultService svc(w, http_checkpoint(w), HyperParams{});
  LiveServer server(svc);
  auto c = server.client();
  auto r = c.Get("/schema");
  REQUIRE(r);
  CHECK(r->status == 200);
  const auto schema = body(r);
  CHECK(schema == svc.schema_json());
  CHECK(schema["schema_version"] == 1);

  auto h = c.Get("/health");
  REQUIRE(h);
  CHECK(h->status == 200);
  CHECK(body(h)["checkpoint_loaded"] == true);
}

TEST_CASE("a scripted consultation over HTTP matches the in-process service") {
  const auto& w = demo_world();
  const auto& s = w.schema();
  const auto ckpt = http_checkpoint(w);
  ConsultService remote(w, ckpt, HyperParams{});
  ConsultService local(w, ckpt, HyperParams{});
  LiveServer server(remote);
  auto c = server.client();
  Rng r(32);
  std::size_t suggestions = 0;
  for (int i = 0; i < 20; ++i) {
    const auto p = sample_patient(w, r);
    auto doc = post(c, "/sessions", start_request(w, p), 201);
    auto ref = local.start_json(start_request(w, p));
    const auto id = doc["id"].get<std::string>();
    const auto ref_id = ref["id"].get<std::string>();
    for (int guard = 0; doc["next"] != "done"; ++guard) {
      REQUIRE(guard < 50);
      if (doc["next"] == "answer_symptom") {
        const auto sym = doc["pending"]["symptom"].get<std::string>();
        const bool present = p.symptom_value(s, *s.find_symptom(sym)) > 0;
        const nlohmann::json req{{"symptom", sym}, {"present", present}};
        doc = post(c, "/sessions/" + id + "/answer", req, 200);
        ref = local.answer_json(ref_id, req);
      } else {
        REQUIRE(doc["next"] == "submit_tests");
        ++suggestions;
        nlohmann::json results = nlohmann::json::object();
        for (const auto& t : doc["pending"]["tests"]) {
          const auto id_str = t["id"].get<std::string>();
          results[id_str] = p.test_value(s, *s.find_test(id_str));
        }
        const nlohmann::json req{{"results", results}};
        doc = post(c, "/sessions/" + id + "/tests", req, 200);
        ref = local.tests_json(ref_id, req);
      }
      auto a = doc, b = ref;
      a.erase("id");
      b.erase("id");
      CHECK(a == b);
    }
    CHECK(doc["ranking"].size() == w.num_diseases());
    auto g = c.Get("/sessions/" + id);
    REQUIRE(g);
    CHECK(g->status == 200);
    CHECK(body(g) == doc);
  }
  CHECK(suggestions > 0);
}

TEST_CASE("errors carry a code, a message and a status") {
  const auto& w = demo_world();
  const auto& s = w.schema();
  ConsultService svc(w, http_checkpoint(w), HyperParams{});
  HttpOptions opts;
  opts.max_body_bytes = 4096;
  LiveServer server(svc, opts);
  auto c = server.client();

  auto bad_json = c.Post("/sessions", "{not json", "application/json");
  REQUIRE(bad_json);
  CHECK(bad_json->status == 400);
  CHECK(body(bad_json)["code"] == "invalid_request");

  const auto missing = post(c, "/sessions", nlohmann::json{{"initial_symptom", s.symptoms()[0]}}, 400);
  CHECK(missing["field"] == "demographics");
  CHECK(missing["message"].is_string());

  auto unknown = c.Get("/sessions/0123456789abcdef0123456789abcdef");
  REQUIRE(unknown);
  CHECK(unknown->status == 404);
  CHECK(body(unknown)["code"] == "unknown_session");

  auto route = c.Get("/nowhere");
  REQUIRE(route);
  CHECK(route->status == 404);
  CHECK(body(route)["code"] == "not_found");

  auto huge = c.Post("/sessions", std::string(8192, ' '), "application/json");
  REQUIRE(huge);
  CHECK(huge->status == 413);
  CHECK(body(huge)["code"] == "payload_too_large");

  Rng r(33);
  for (;;) {
    const auto p = sample_patient(w, r);
    auto doc = post(c, "/sessions", start_request(w, p), 201);
    if (doc["next"] != "answer_symptom") continue;
    const auto id = doc["id"].get<std::string>();
    const auto asked = doc["pending"]["symptom"].get<std::string>();
    const auto other = asked == s.symptoms()[0] ? s.symptoms()[1] : s.symptoms()[0];
    const auto wrong = post(c, "/sessions/" + id + "/answer", {{"symptom", other}, {"present", true}}, 409);
    CHECK(wrong["code"] == "out_of_order");
    CHECK(wrong["field"] == "symptom");
    const auto early = post(c, "/sessions/" + id + "/tests", {{"results", nlohmann::json::object()}}, 409);
    CHECK(early["code"] == "out_of_order");
    const auto typed = post(c, "/sessions/" + id + "/answer", {{"symptom", asked}, {"present", "yes"}}, 400);
    CHECK(typed["field"] == "present");
    break;
  }
}

TEST_CASE("no checkpoint gives 503") {
  const auto& w = demo_world();
  ConsultService svc(w, std::nullopt, HyperParams{});
  LiveServer server(svc);
  auto c = server.client();
  Rng r(34);
  const auto res = post(c, "/sessions", start_request(w, sample_patient(w, r)), 503);
  CHECK(res["code"] == "no_checkpoint");
  auto h = c.Get("/health");
  REQUIRE(h);
  CHECK(body(h)["checkpoint_loaded"] == false);
}

TEST_CASE("static files are served when a directory is mounted") {
  const auto& w = demo_world();
  ConsultService svc(w, http_checkpoint(w), HyperParams{});
  const auto dir = std::filesystem::temp_directory_path() / "medsuggest_http_static";
  std::filesystem::create_directories(dir);
  std::ofstream(dir / "index.html") << "<html>consult</html>";
  HttpOptions opts;
  opts.static_dir = dir;
  {
    LiveServer server(svc, opts);
    auto c = server.client();
    auto r = c.Get("/index.html");
    REQUIRE(r);
    CHECK(r->status == 200);
    CHECK(r->body == "<html>consult</html>");
    auto api = c.Get("/schema");
    REQUIRE(api);
    CHECK(api->status == 200);
  }
  std::filesystem::remove_all(dir);
}

}  // TEST_SUITE
