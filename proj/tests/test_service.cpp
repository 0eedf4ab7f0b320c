#include "fedhub/common/error.h"
#include "fedhub/common/text.h"
#include "fedhub/service/config.h"
#include "fedhub/service/node.h"
#include "support.h"

#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <fstream>
#include <sys/wait.h>

using namespace fedhub;
using namespace fedhub::testing;
using namespace fedhub::service;
using nlohmann::json;

namespace {

const Timestamp kT0{1750000000};

Request req(const std::string& method, const std::string& path, const json& body = nullptr,
            const std::string& principal = "", const std::string& tokens = "") {
  Request r;
  r.method = method;
  const auto q = path.find('?');
  r.path = path.substr(0, q);
  if (q != std::string::npos) {
    for (const auto& kv : text::split(path.substr(q + 1), '&')) {
      const auto eq = kv.find('=');
      r.query[kv.substr(0, eq)] = eq == std::string::npos ? "" : kv.substr(eq + 1);
    }
  }
  if (!body.is_null()) r.body = body.dump();
  if (!principal.empty()) r.headers["x-fedhub-principal"] = principal;
  if (!tokens.empty()) r.headers["x-fedhub-tokens"] = tokens;
  return r;
}

NodeConfig base_config(const std::filesystem::path& data_dir = {}) {
  NodeConfig cfg;
  cfg.data_dir = data_dir;
  cfg.fsync = false;
  cfg.listen = "127.0.0.1:0";
  cfg.principals = {{"alice", {"LE", "TF"}}, {"bob", {}}};
  cfg.dispatch_timeout = std::chrono::milliseconds(2000);
  return cfg;
}

json people_source_json(const std::string& id = "people") {
  return {{"id", id},
          {"kind", "csv-file"},
          {"endpoint", data_path("fixtures/people/persons.csv").string()},
          {"mapping", data_path("fixtures/people/persons.map").string()},
          {"capabilities", {"keyword", "structured"}}};
}

json body_of(const Response& r) { return json::parse(r.body.dump()); }

void write(const std::filesystem::path& p, const std::string& body) { std::ofstream(p) << body; }

int run_cli(const std::string& args) {
  const auto cmd = std::string(FEDHUB_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

}  // namespace

TEST_CASE("config: file keys, relative paths and policy switches", "[service][config]") {
  TempDir dir;
  const auto cfg = parse_config(R"(# node settings
node_id = west
listen = 0.0.0.0:9000
data_dir = state
dispatch_timeout_ms = 750
max_in_flight = 3
fsync = false
peer.east = LE, FR
principal.alice = LE
policy.cross_team_access = true
)",
                                dir.path());
  CHECK(cfg.node_id == "west");
  CHECK(cfg.data_dir == dir / "state");
  CHECK(cfg.dispatch_timeout == std::chrono::milliseconds(750));
  CHECK(cfg.max_in_flight == 3);
  CHECK_FALSE(cfg.fsync);
  CHECK(cfg.peers.at("east") == std::set<std::string>{"LE", "FR"});
  CHECK(cfg.principals.at("alice") == std::set<std::string>{"LE"});
  CHECK(cfg.cross_team_access);
  CHECK_FALSE(cfg.retain_personal_data);
  CHECK(std::filesystem::exists(cfg.ontology));

  CHECK_THROWS_AS(parse_config("colour = blue\n", dir.path()), Error);
  CHECK_THROWS_AS(parse_config("no equals sign\n", dir.path()), Error);
  CHECK_THROWS_AS(parse_config("fsync = maybe\n", dir.path()), Error);
  CHECK_THROWS_AS(parse_config("peer.x = bad token\n", dir.path()), Error);
}

TEST_CASE("config: environment overrides the file", "[service][config]") {
  TempDir dir;
  const std::map<std::string, std::string> env{{"FEDHUB_NODE_ID", "east"},
                                               {"FEDHUB_PEER_WEST", "LE"},
                                               {"FEDHUB_PRINCIPAL_CAROL", "TF"},
                                               {"FEDHUB_POLICY_RETAIN_PERSONAL_DATA", "true"},
                                               {"FEDHUB_BUNDLED_DATA", "/ignored"}};
  const auto cfg = parse_config("node_id = west\n", dir.path(), env);
  CHECK(cfg.node_id == "east");
  CHECK(cfg.peers.at("west") == std::set<std::string>{"LE"});
  CHECK(cfg.principals.at("carol") == std::set<std::string>{"TF"});
  CHECK(cfg.retain_personal_data);
  CHECK(config_from_env({{"FEDHUB_LISTEN", "127.0.0.1:1"}}).listen == "127.0.0.1:1");
  CHECK_THROWS_AS(config_from_env({{"FEDHUB_NONSENSE", "1"}}), Error);
}

TEST_CASE("config: validation and listen addresses", "[service][config]") {
  CHECK(split_listen("127.0.0.1:8600") == std::pair<std::string, int>{"127.0.0.1", 8600});
  CHECK_THROWS_AS(split_listen("localhost"), Error);
  CHECK_THROWS_AS(split_listen("h:70000"), Error);
  NodeConfig cfg;
  CHECK_NOTHROW(validate(cfg));
  cfg.dispatch_timeout = std::chrono::milliseconds(0);
  CHECK_THROWS_AS(validate(cfg), Error);
  cfg = NodeConfig{};
  cfg.rules = "/nonexistent.rules";
  CHECK_THROWS_AS(validate(cfg), Error);
}

TEST_CASE("http status mapping", "[service]") {
  CHECK(http_status(ErrorCode::parse) == 400);
  CHECK(http_status(ErrorCode::invalid) == 422);
  CHECK(http_status(ErrorCode::not_found) == 404);
  CHECK(http_status(ErrorCode::conflict) == 409);
  CHECK(http_status(ErrorCode::denied) == 403);
  CHECK(http_status(ErrorCode::corrupt) == 500);
  CHECK(http_status(ErrorCode::unavailable) == 503);
}

TEST_CASE("node: authentication and write access", "[service]") {
  auto node = Node::open(base_config(), stepping_clock(kT0));
  CHECK(node->handle(req("GET", "/health")).status == 200);
  CHECK(node->handle(req("GET", "/ontology")).status == 403);
  CHECK(node->handle(req("GET", "/ontology", nullptr, "mallory")).status == 403);
  const auto onto = node->handle(req("GET", "/ontology", nullptr, "bob"));
  REQUIRE(onto.status == 200);
  CHECK(onto.body["top_level"].size() == 19);
  CHECK(node->handle(req("POST", "/sources", people_source_json())).status == 403);
  CHECK(node->handle(req("POST", "/plans", {{"case_ref", "C"}})).status == 403);

  Request r = req("GET", "/health", nullptr, "alice", "LE,ZZ");
  const auto auth = node->authenticate(r);
  CHECK(auth.tokens == std::set<std::string>{"LE"});
  CHECK(node->authenticate(req("GET", "/health")).principal.empty());
}

TEST_CASE("node: sources, ingest, query and provenance over the API", "[service]") {
  auto node = Node::open(base_config(), stepping_clock(kT0));
  auto created = node->handle(req("POST", "/sources", people_source_json(), "alice"));
  REQUIRE(created.status == 201);
  CHECK(node->handle(req("POST", "/sources", people_source_json(), "alice")).status == 409);
  CHECK(node->handle(req("POST", "/sources", json{{"id", "x"}}, "alice")).status >= 400);
  auto malformed = req("POST", "/sources", nullptr, "alice");
  malformed.body = "{\"id\":";
  CHECK(node->handle(malformed).status == 400);
  CHECK(body_of(node->handle(req("GET", "/sources"))).at("sources").size() == 1);

  const auto run = node->handle(req("POST", "/ingest/people", json::object(), "alice"));
  REQUIRE(run.status == 200);
  CHECK(run.body["counts"]["records_read"] == 10);
  CHECK(run.body["counts"]["facts_emitted"] == 20);
  CHECK(run.body["counts"]["errors"] == 0);
  CHECK(node->handle(req("POST", "/ingest/nope", json::object(), "alice")).status == 404);
  CHECK(body_of(node->handle(req("GET", "/runs"))).at("runs").size() == 1);

  const auto q = node->handle(req("POST", "/query", {{"keyword", "Mary Jones"}}));
  REQUIRE(q.status == 200);
  REQUIRE(q.body["entities"].size() >= 1);
  CHECK(q.body["entities"][0]["matched_tokens"] == 2);
  const std::string entity = q.body["entities"][0]["id"];
  const std::string fact_id = q.body["entities"][0]["facts"][0]["id"];

  const auto s = node->handle(req("POST", "/query", {{"concept", "Person"}, {"where", {{{"attribute", "name"}, {"op", "~"}, {"value", "mary"}}}}}));
  CHECK(s.body["entities"].size() == 1);
  CHECK(node->handle(req("POST", "/query", {{"concept", "Unicorn"}})).status == 404);
  CHECK(node->handle(req("POST", "/query", {{"keyword", 3}})).status == 400);

  CHECK(node->handle(req("GET", "/entities/" + entity)).status == 200);
  // Facts without a validity interval hold at every instant.
  CHECK(node->handle(req("GET", "/entities/" + entity + "?as_of=2000-01-01T00:00:00Z")).status == 200);
  CHECK(node->handle(req("GET", "/entities/" + entity + "?as_of=yesterday")).status == 422);
  CHECK(node->handle(req("GET", "/entities/Person:nobody")).status == 404);

  const auto prov = node->handle(req("GET", "/facts/" + fact_id + "/provenance"));
  REQUIRE(prov.status == 200);
  CHECK(body_of(prov)["sources"] == json::array({"people"}));
  CHECK(prov.body["chain"].back()["kind"] == "ingest");

  CHECK(node->handle(req("POST", "/facts/" + fact_id + "/promote", nullptr)).status == 403);
  const auto promoted = node->handle(req("POST", "/facts/" + fact_id + "/promote", nullptr, "alice"));
  REQUIRE(promoted.status == 201);
  CHECK(promoted.body["partition"] == "curated");
  CHECK(node->handle(req("GET", "/nowhere")).status == 404);

  const auto audit = body_of(node->handle(req("GET", "/audit/verify")));
  CHECK(audit["ok"] == true);
  CHECK(audit["records"] == 3);  // source.add, ingest, fact.promote
}

TEST_CASE("node: plans, events and the dry-run gate", "[service]") {
  auto node = Node::open(base_config(), fixed_clock(Timestamp{kT0.seconds + 86400}));
  const auto plan = node->handle(req("POST", "/plans", {{"case_ref", "CASE-9"}}, "alice"));
  REQUIRE(plan.status == 201);
  const std::string id = plan.body["id"];
  const auto goal = node->handle(req("POST", "/plans/" + id + "/goals",
                                     {{"template", "search-warrant"}, {"params", {{"subject", "John Smith"}}}}, "alice"));
  REQUIRE(goal.status == 201);
  CHECK(goal.body["elements"].size() == 8);
  CHECK(node->handle(req("POST", "/plans/" + id + "/goals", {{"template", "search-warrant"}}, "alice")).status == 422);
  const std::string eid = goal.body["elements"][3]["id"];
  CHECK(node->handle(req("POST", "/plans/" + id + "/elements/" + eid + "/execute", nullptr, "alice")).status == 200);

  const auto t = [](int s) { return format_rfc3339(Timestamp{kT0.seconds + s}); };
  for (const auto& [kind, s] : std::vector<std::pair<std::string, int>>{
           {"sworn-statement-recorded", 1}, {"offence-described", 2}, {"premises-described", 3}, {"material-kinds-listed", 4}}) {
    CHECK(node->handle(req("POST", "/plans/" + id + "/events", {{"kind", kind}, {"occurred_at", t(s)}}, "alice")).status == 201);
  }
  CHECK(node->handle(req("POST", "/plans/" + id + "/events", {{"kind", "offence-described"}, {"occurred_at", t(2)}}, "alice")).status == 409);

  const auto gate = node->handle(req("GET", "/plans/" + id + "/gates/issue-warrant"));
  REQUIRE(gate.status == 200);
  CHECK(gate.body["open"] == false);
  CHECK(gate.body["missing"].size() == 1);

  const auto before = body_of(node->handle(req("GET", "/plans/" + id)));
  const json hypothetical{{"events", {{{"kind", "grounds-asserted"}, {"occurred_at", t(5)}, {"payload", {{"present_now", true}}}}}}};
  const auto dry = node->handle(req("POST", "/plans/" + id + "/gates/issue-warrant?dry_run=1", hypothetical));
  REQUIRE(dry.status == 200);
  CHECK(dry.body["open"] == true);
  CHECK(dry.body["dry_run"] == true);
  const auto dry_get = node->handle(req("GET", "/plans/" + id + "/gates/issue-warrant?dry_run=true", hypothetical));
  CHECK(dry_get.body["open"] == true);
  CHECK(body_of(node->handle(req("GET", "/plans/" + id))) == before);
  CHECK(node->handle(req("POST", "/plans/" + id + "/gates/issue-warrant", hypothetical)).status == 422);
  CHECK(node->handle(req("GET", "/plans/" + id + "/gates/nope")).status == 404);
  CHECK(node->handle(req("GET", "/plans/plan:missing")).status == 404);
  CHECK(body_of(node->handle(req("GET", "/plans"))).at("plans").size() == 1);
}

TEST_CASE("node: restart reproduces the same state", "[service][persistence]") {
  TempDir dir;
  std::string snapshot, plan_json, health;
  {
    auto node = Node::open(base_config(dir / "node"), stepping_clock(kT0));
    REQUIRE(node->handle(req("POST", "/sources", people_source_json(), "alice")).status == 201);
    REQUIRE(node->handle(req("POST", "/ingest/people", json::object(), "alice")).status == 200);
    const auto plan = node->handle(req("POST", "/plans", {{"case_ref", "CASE-R"}}, "alice"));
    node->handle(req("POST", "/plans/" + std::string(plan.body["id"]) + "/goals",
                     {{"template", "search-warrant"}, {"params", {{"subject", "Mary Jones"}}}}, "alice"));
    snapshot = node->store().snapshot();
    plan_json = body_of(node->handle(req("GET", "/plans/" + std::string(plan.body["id"])))).dump();
    health = node->handle(req("GET", "/health")).body.dump();
  }
  auto again = Node::open(base_config(dir / "node"), stepping_clock(kT0));
  CHECK(again->store().snapshot() == snapshot);
  CHECK(again->handle(req("GET", "/health")).body.dump() == health);
  const auto ids = body_of(again->handle(req("GET", "/plans")))["plans"];
  REQUIRE(ids.size() == 1);
  CHECK(body_of(again->handle(req("GET", "/plans/" + std::string(ids[0])))).dump() == plan_json);
  CHECK(again->registry().find("people"));
  CHECK(body_of(again->handle(req("GET", "/audit/verify")))["ok"] == true);
}

TEST_CASE("node: the data directory lock is exclusive", "[service][persistence]") {
  TempDir dir;
  auto first = Node::open(base_config(dir / "node"), stepping_clock(kT0));
  try {
    Node::open(base_config(dir / "node"), stepping_clock(kT0));
    FAIL("expected unavailable");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::unavailable);
  }
  first.reset();
  CHECK_NOTHROW(Node::open(base_config(dir / "node"), stepping_clock(kT0)));
}

TEST_CASE("node: a corrupt log refuses startup and names the line", "[service][persistence]") {
  TempDir dir;
  {
    auto node = Node::open(base_config(dir / "node"), stepping_clock(kT0));
    REQUIRE(node->handle(req("POST", "/sources", people_source_json(), "alice")).status == 201);
    REQUIRE(node->handle(req("POST", "/sources", people_source_json("people2"), "alice")).status == 201);
  }
  auto content = text::read_file((dir / "node" / "sources.log").string());
  content[content.find("people2")] = '\x01';
  const auto lines = text::split(content, '\n');
  write(dir / "node" / "sources.log", lines[0] + "\n{broken\n");
  try {
    Node::open(base_config(dir / "node"), stepping_clock(kT0));
    FAIL("expected corrupt");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::corrupt);
    CHECK(std::string(e.what()).find("sources.log") != std::string::npos);
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
  }
}

TEST_CASE("node: two hubs federate over HTTP under the peer grant", "[service][federation]") {
  auto west_cfg = base_config();
  west_cfg.node_id = "west";
  west_cfg.peers = {{"east", {"LE"}}};
  auto west = Node::open(west_cfg, stepping_clock(kT0));
  REQUIRE(west->handle(req("POST", "/sources", people_source_json(), "alice")).status == 201);
  REQUIRE(west->handle(req("POST", "/ingest/people", json::object(), "alice")).status == 200);
  const auto act = test_activity("west-intel");
  west->store().record_activity(act);
  const auto mary = west->handle(req("POST", "/query", {{"keyword", "Mary Jones"}})).body["entities"][0]["id"].get<std::string>();
  west->store().put_fact(literal_fact(mary, "gender", txt("F"), act, "LE", "west-intel"));
  west->store().put_fact(literal_fact(mary, "heightCm", typed(ValueKind::integer, "165"), act, "TF", "west-intel"));
  const int port = west->start();

  auto east_cfg = base_config();
  east_cfg.node_id = "east";
  auto east = Node::open(east_cfg, stepping_clock(kT0));
  const json peer{{"id", "west"},
                  {"kind", "peer-hub"},
                  {"endpoint", "http://127.0.0.1:" + std::to_string(port)},
                  {"capabilities", {"keyword", "structured"}}};
  REQUIRE(east->handle(req("POST", "/sources", peer, "alice")).status == 201);
  CHECK(east->handle(req("POST", "/ingest/west", json::object(), "alice")).status == 422);

  const auto t0 = std::chrono::steady_clock::now();
  const auto res = east->handle(req("POST", "/query", {{"keyword", "Mary Jones"}, {"federated", true}}, "alice"));
  CHECK(std::chrono::steady_clock::now() - t0 < std::chrono::seconds(1));
  REQUIRE(res.status == 200);
  REQUIRE(res.body["per_source"].size() == 1);
  CHECK(res.body["per_source"][0]["status"] == "ok");
  REQUIRE(res.body["entities"].size() == 1);
  std::set<std::string> preds;
  for (const auto& f : res.body["entities"][0]["facts"]) {
    preds.insert(f["predicate"].get<std::string>());
    CHECK(f["envelope"]["source"] == "west");
  }
  // alice holds TF, but west only grants east LE: the TF fact never leaves west.
  CHECK(preds == std::set<std::string>{"name", "dob", "gender"});

  west->stop();
  const auto degraded = east->handle(req("POST", "/query", {{"keyword", "Mary"}, {"federated", true}, {"timeout_ms", 500}}, "alice"));
  REQUIRE(degraded.status == 200);
  CHECK(degraded.body["per_source"][0]["status"] != "ok");
  CHECK(degraded.body["entities"].empty());
}

TEST_CASE("node: serves HTTP on an ephemeral port and reports bind failures", "[service]") {
  auto a = Node::open(base_config(), stepping_clock(kT0));
  const int port = a->start();
  CHECK(port > 0);
  auto cfg = base_config();
  cfg.listen = "127.0.0.1:" + std::to_string(port);
  auto b = Node::open(cfg, stepping_clock(kT0));
  try {
    b->start();
    FAIL("expected unavailable");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::unavailable);
  }
  a->stop();
}

TEST_CASE("cli: exit codes", "[service][cli]") {
  CHECK(run_cli("--help") == 0);
  CHECK(run_cli("frobnicate") == 2);
  CHECK(run_cli("query") == 2);
  CHECK(run_cli("ontology check " + data_path("ontology/law_enforcement.ont").string()) == 0);
  TempDir dir;
  write(dir / "bad.ont", "concept Orphan parent=Nowhere\n");
  CHECK(run_cli("ontology check " + (dir / "bad.ont").string()) == 1);
  write(dir / "audit.log", "{not a record}\n");
  CHECK(run_cli("audit verify " + (dir / "audit.log").string()) == 1);
  CHECK(run_cli("query --keyword smith") == 0);
  CHECK(run_cli("--principal nobody query --keyword smith") == 1);
}
