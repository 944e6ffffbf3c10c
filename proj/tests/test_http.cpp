#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <nlohmann/json.hpp>
#include <thread>

#include "review_fixture.hpp"

#include <httplib.h>

using namespace cadfit;
using json = nlohmann::json;

namespace {

constexpr const char* kToken = "s3cret";

// One service and server for the whole binary; tests use disjoint annotations
// or read-only routes.
struct Server {
  ReviewFixture fixture;
  ReviewService service{fixture.db};
  std::unique_ptr<ReviewServer> server;
  std::thread thread;
  int port = -1;

  Server() {
    service.add_scene(fixture.synth.scene, fixture.initial, fixture.config);
    ServerOptions opts;
    opts.port = 0;
    opts.token = kToken;
    server = std::make_unique<ReviewServer>(service, opts);
    port = server->bind();
    thread = std::thread([this] { server->listen_after_bind(); });
    server->wait_until_ready();
  }
  ~Server() {
    server->stop();
    thread.join();
  }

  httplib::Client client(bool auth = true) const {
    httplib::Client c("127.0.0.1", port);
    if (auth) c.set_bearer_token_auth(kToken);
    c.set_read_timeout(120, 0);
    return c;
  }
  std::string wire(std::size_t i) const { return "room:" + fixture.initial.annotations[i].instance_id; }
};

Server& server() {
  static Server s;
  return s;
}

json body_of(const httplib::Result& r) {
  REQUIRE(r);
  return json::parse(r->body);
}

httplib::Result post(const std::string& path, const json& body) {
  return server().client().Post(path, body.dump(), "application/json");
}

void check_error(const httplib::Result& r, int status, const std::string& code) {
  REQUIRE(r);
  CHECK(r->status == status);
  const json j = json::parse(r->body);
  CHECK(j.at("code") == code);
  CHECK(j.contains("message"));
  CHECK(j.contains("detail"));
}

}  // namespace

TEST_CASE("bearer token is required") {
  REQUIRE(server().port > 0);
  check_error(server().client(false).Get("/scenes"), 401, "unauthorized");
  httplib::Client wrong("127.0.0.1", server().port);
  wrong.set_bearer_token_auth("nope");
  check_error(wrong.Get("/scenes"), 401, "unauthorized");
  // Preflight passes without credentials.
  const auto pre = server().client(false).Options("/scenes");
  REQUIRE(pre);
  CHECK(pre->status == 204);
  CHECK(pre->get_header_value("Access-Control-Allow-Origin") == "*");
}

TEST_CASE("read routes") {
  const json scenes = body_of(server().client().Get("/scenes"));
  REQUIRE(scenes.at("scenes").size() == 1);
  CHECK(scenes["scenes"][0]["scene_id"] == "room");
  CHECK(scenes["scenes"][0]["annotations"] == 3);

  const json list = body_of(server().client().Get("/scenes/room/annotations"));
  REQUIRE(list.at("annotations").size() == 3);
  const json& first = list["annotations"][0];
  CHECK(first.at("id") == server().wire(0));
  CHECK(first.at("thumbnails").size() == 2);
  CHECK(first.at("thumbnails")[1] == "/annotations/" + server().wire(0) + "/overlay/1");
  for (const char* key : {"class", "cad_id", "score_breakdown", "status", "revision"}) CHECK(first.contains(key));

  const json one = body_of(server().client().Get("/annotations/" + server().wire(1)));
  CHECK(one.at("id") == server().wire(1));

  const json chairs = body_of(server().client().Get("/models?class=chair"));
  CHECK(chairs.at("models").size() == 2);
  for (const auto& m : chairs["models"]) CHECK(m.at("class") == "chair");
  CHECK(body_of(server().client().Get("/models")).at("models").size() == 6);

  check_error(server().client().Get("/scenes/nowhere/annotations"), 404, "not_found");
  check_error(server().client().Get("/annotations/room:ghost"), 404, "not_found");
  check_error(server().client().Get("/annotations/nocolon"), 400, "invalid_argument");
  check_error(server().client().Get("/no/such/route"), 404, "not_found");
}

TEST_CASE("overlay route") {
  const std::string base = "/annotations/" + server().wire(2) + "/overlay/";
  const auto a = server().client().Get(base + "0");
  REQUIRE(a);
  CHECK(a->status == 200);
  CHECK(a->get_header_value("Content-Type") == "image/png");
  CHECK(a->body.substr(1, 3) == "PNG");
  CHECK(std::stod(a->get_header_value("X-Overlay-Difference-Density")) < 0.05);
  CHECK(a->get_header_value("X-Overlay-Pane-Width") == "96");
  const auto b = server().client().Get(base + "0");
  CHECK(b->get_header_value("X-Cache") == "hit");
  const auto raw = server().client().Get(base + "0?raw=true");
  CHECK(raw->status == 200);
  CHECK(raw->get_header_value("X-Cache") == "miss");
  CHECK(raw->body != a->body);
  check_error(server().client().Get(base + "5"), 400, "invalid_argument");
  check_error(server().client().Get(base + "x"), 400, "invalid_argument");
  check_error(server().client().Get(base + "0?raw=maybe"), 400, "invalid_argument");
}

TEST_CASE("mutations, conflicts and export") {
  const std::string cab = "/annotations/" + server().wire(0);
  const json rotated = body_of(post(cab + "/rotate", {{"degrees", 180}, {"expected_revision", 0}}));
  CHECK(rotated.at("revision") == 1);
  CHECK(rotated.at("status") == "edited");
  CHECK(rotated.at("score_breakdown").at("total").get<double>() < server().fixture.initial.annotations[0].score.total);

  check_error(post(cab + "/rotate", {{"degrees", 90}, {"expected_revision", 0}}), 409, "conflict");
  check_error(post(cab + "/rotate", {{"degrees", 45}, {"expected_revision", 1}}), 400, "invalid_argument");
  check_error(post(cab + "/rotate", {{"degrees", 90}}), 400, "invalid_argument");
  check_error(server().client().Post(cab + "/rotate", "{not json", "application/json"), 400, "parse_error");

  const json refined = body_of(post(cab + "/refine", {{"expected_revision", 1}}));
  CHECK(refined.at("revision") == 2);
  CHECK(refined.at("timed_out") == false);
  CHECK(refined.at("score_breakdown").at("total").get<double>() <= rotated.at("score_breakdown").at("total").get<double>());

  check_error(post(cab + "/swap", {{"cad_id", "table_000"}, {"expected_revision", 2}}), 400, "invalid_argument");
  check_error(post(cab + "/swap", {{"cad_id", "cabinet_999"}, {"expected_revision", 2}}), 404, "not_found");
  const json swapped = body_of(post(cab + "/swap", {{"cad_id", "cabinet_001"}, {"expected_revision", 2}}));
  CHECK(swapped.at("cad_id") == "cabinet_001");
  const json back = body_of(post(cab + "/swap", {{"cad_id", "cabinet_000"}, {"override_class", false}, {"expected_revision", 3}}));
  CHECK(back.at("revision") == 4);

  const json verified = body_of(post(cab + "/status", {{"status", "verified"}, {"expected_revision", 4}}));
  CHECK(verified.at("status") == "verified");
  check_error(post(cab + "/status", {{"status", "edited"}, {"expected_revision", 5}}), 400, "invalid_argument");
  check_error(post(cab + "/status", {{"status", "bogus"}, {"expected_revision", 5}}), 400, "invalid_argument");

  const std::string chair = "/annotations/" + server().wire(1);
  CHECK(body_of(post(chair + "/status", {{"status", "removed"}, {"expected_revision", 0}})).at("status") == "removed");
  check_error(post(chair + "/status", {{"status", "verified"}, {"expected_revision", 1}}), 422, "invalid_state");
  check_error(post(chair + "/refine", {{"expected_revision", 1}}), 422, "invalid_state");

  const json exported = body_of(server().client().Get("/scenes/room/export"));
  CHECK(exported.at("annotations").size() == 2);
  for (const auto& a : exported["annotations"]) CHECK(a.at("instance_id") != server().fixture.initial.annotations[1].instance_id);

  const auto journal = server().client().Get("/scenes/room/journal");
  REQUIRE(journal);
  std::vector<JournalEntry> entries;
  std::istringstream lines(journal->body);
  for (std::string line; std::getline(lines, line);) entries.push_back(JournalEntry::from_json(line));
  CHECK(entries.size() == 6);
  const ReviewSession& s = server().service.session("room");
  CHECK(to_json(ReviewSession::replay(s.initial(), entries, server().fixture.synth.scene, *server().fixture.db,
                                      server().fixture.config)) == to_json(s.snapshot()));
}
