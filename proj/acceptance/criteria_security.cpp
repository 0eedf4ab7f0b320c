#include "criteria.h"
#include "oracles.h"
#include "support.h"

#include "fedhub/federation/federation.h"
#include "fedhub/model/codec.h"
#include "fedhub/security/redact.h"
#include "fedhub/security/visibility.h"
#include "fedhub/service/node.h"

#include <httplib.h>

#include <nlohmann/json.hpp>

#include <sstream>

namespace fedhub::acceptance {

using security::AuthContext;
using security::VisibilityExpr;
using testing::literal_fact;
using testing::test_activity;

namespace {

const std::vector<std::string> kTenTokens{"LE", "TF", "FR", "HR", "IN", "OPS", "CT", "SIG", "FIN", "MED"};

struct LabelledFact {
  Fact fact;
  std::optional<VisAst> ast;  // nullopt: public
};

std::vector<LabelledFact> random_fact_set(std::mt19937_64& rng, std::size_t n,
                                          const std::vector<std::string>& universe, int max_depth,
                                          const std::string& tag) {
  const auto act = test_activity("redaction-" + tag);
  std::vector<LabelledFact> out;
  for (std::size_t i = 0; i < n; ++i) {
    LabelledFact lf;
    std::string text;
    if (!std::bernoulli_distribution(0.1)(rng)) {
      lf.ast = random_ast(rng, max_depth, universe);
      text = render_ast(*lf.ast, rng, true);
    }
    const auto subject = make_entity_id("Person", tag + "|" + std::to_string(i % 40));
    lf.fact = literal_fact(subject, "name", text_value(tag + " name " + std::to_string(i)), act, text,
                           "redaction-" + tag);
    out.push_back(std::move(lf));
  }
  return out;
}

}  // namespace

Outcome check_redaction_equivalence() {
  std::mt19937_64 rng(0x5eed0001);
  const auto subsets = all_subsets(kTenTokens);
  const std::vector<std::size_t> sizes{200, 200, 200, 150, 64, 1, 0};

  std::vector<std::vector<LabelledFact>> sets;
  std::set<std::string> used;
  for (std::size_t s = 0; s < sizes.size(); ++s) {
    sets.push_back(random_fact_set(rng, sizes[s], kTenTokens, 4, "set" + std::to_string(s)));
    for (const auto& lf : sets.back()) lf.fact.envelope.visibility.collect_tokens(used);
  }

  const auto t0 = std::chrono::steady_clock::now();
  std::size_t comparisons = 0, mismatches = 0, visible = 0;
  for (const auto& set : sets) {
    std::vector<Fact> facts;
    for (const auto& lf : set) facts.push_back(lf.fact);
    for (const auto& tokens : subsets) {
      const auto got = security::redact_facts(facts, AuthContext("probe", tokens));
      std::vector<std::string> want;
      for (const auto& lf : set) {
        if (!lf.ast || eval_ast(*lf.ast, tokens)) want.push_back(lf.fact.id);
      }
      std::vector<std::string> got_ids;
      for (const auto& f : got) got_ids.push_back(f.id);
      ++comparisons;
      visible += want.size();
      if (got_ids != want) ++mismatches;
    }
  }
  const double secs = seconds_since(t0);

  std::ostringstream d;
  d << sets.size() << " fact sets x " << subsets.size() << " auth subsets, " << used.size()
    << " distinct tokens, " << mismatches << "/" << comparisons << " mismatches, " << visible
    << " visible facts total, " << secs << " s (limit 10 s)";
  return {mismatches == 0 && used.size() <= 10 && secs < 10.0, d.str()};
}

Outcome check_visibility_round_trip() {
  std::mt19937_64 rng(0x5eed0002);
  const std::vector<std::string> universe{"LE", "TF", "FR", "HR", "IN", "OPS"};
  const auto subsets = all_subsets(universe);

  std::size_t round_trip_fail = 0, fixpoint_fail = 0, auth_fail = 0, non_canonical_inputs = 0;
  int deepest = 0;
  for (int i = 0; i < 1000; ++i) {
    const auto ast = random_ast(rng, 1 + i % 6, universe);
    const auto text = render_ast(ast, rng, true);
    const auto e1 = VisibilityExpr::parse(text);
    const auto printed = e1.print();
    const auto e2 = VisibilityExpr::parse(printed);
    const auto canon = e1.canonical();

    std::function<int(const VisAst&)> depth = [&](const VisAst& n) {
      int d = 0;
      for (const auto& k : n.kids) d = std::max(d, depth(k));
      return d + 1;
    };
    deepest = std::max(deepest, depth(ast));

    if (!(e1 == canon)) ++non_canonical_inputs;
    // The printer emits canonical form, so the second parse must land exactly on
    // the canonical tree and be stable under further round trips.
    if (!(e2 == canon)) ++round_trip_fail;
    if (e2.print() != printed || !(VisibilityExpr::parse(e2.print()) == e2)) ++fixpoint_fail;
    for (const auto& tokens : subsets) {
      const bool want = eval_ast(ast, tokens);
      const AuthContext auth("probe", tokens);
      if (security::authorize(e1, auth) != want || security::authorize(e2, auth) != want ||
          security::authorize(canon, auth) != want) {
        ++auth_fail;
        break;
      }
    }
  }
  std::ostringstream d;
  d << "1000 expressions (depth <= " << deepest << ", " << non_canonical_inputs
    << " written in non-canonical form): " << round_trip_fail << " round-trip mismatches, " << fixpoint_fail
    << " print fixpoint failures, " << auth_fail << " authorize disagreements over 64 token sets";
  return {round_trip_fail == 0 && fixpoint_fail == 0 && auth_fail == 0 && deepest <= 6, d.str()};
}

// --- cross-node privacy --------------------------------------------------------------

namespace {

const std::vector<std::string> kFirst{"John", "Mary", "Ahmed", "Lee", "Sarah", "Thi", "David", "Priya"};
const std::vector<std::string> kLast{"Smith", "Jones", "Karimi", "Wong", "OBrien", "Nguyen", "Brown", "Patel"};
const std::vector<std::string> kFuzzTokens{"LE", "TF", "FR", "HR"};

template <class T>
const T& pick(std::mt19937_64& rng, const std::vector<T>& v) {
  return v[std::uniform_int_distribution<std::size_t>(0, v.size() - 1)(rng)];
}

std::string random_label(std::mt19937_64& rng) {
  if (std::bernoulli_distribution(0.2)(rng)) return "";
  return render_ast(random_ast(rng, 3, kFuzzTokens), rng, false);
}

std::set<std::string> random_tokens(std::mt19937_64& rng) {
  std::set<std::string> out;
  for (const auto& t : kFuzzTokens) {
    if (std::bernoulli_distribution(0.5)(rng)) out.insert(t);
  }
  return out;
}

federation::Query random_query(std::mt19937_64& rng) {
  federation::Query q;
  const int kind = std::uniform_int_distribution<int>(0, 3)(rng);
  if (kind == 0) {
    q.keyword = pick(rng, kFirst);
  } else if (kind == 1) {
    q.keyword = pick(rng, kFirst) + " " + pick(rng, kLast);
  } else {
    q.kind = federation::Query::Kind::structured;
    q.structured.concept_name = "Person";
    const int shape = std::uniform_int_distribution<int>(0, 2)(rng);
    if (shape == 0) {
      q.structured.predicates.push_back({"name", hubstore::CompareOp::contains, pick(rng, kLast)});
    } else if (shape == 1) {
      q.structured.predicates.push_back(
          {"heightCm", hubstore::CompareOp::ge, std::to_string(std::uniform_int_distribution<int>(150, 190)(rng))});
    } else {
      hubstore::Traversal t;
      t.relation = "ownsVehicle";
      t.target_concept = "Vehicle";
      t.predicates.push_back({"make", hubstore::CompareOp::eq, pick(rng, std::vector<std::string>{"Toyota", "Ford", "Mazda"})});
      q.structured.traversal = t;
    }
  }
  return q;
}

std::string join_tokens(const std::set<std::string>& s) {
  std::string out;
  for (const auto& t : s) out += (out.empty() ? "" : ",") + t;
  return out;
}

std::set<std::string> intersect(const std::set<std::string>& a, const std::set<std::string>& b) {
  std::set<std::string> out;
  for (const auto& t : a) {
    if (b.count(t)) out.insert(t);
  }
  return out;
}

service::NodeConfig fuzz_config(const std::string& id) {
  service::NodeConfig cfg;
  cfg.node_id = id;
  cfg.listen = "127.0.0.1:0";
  cfg.fsync = false;
  cfg.dispatch_timeout = std::chrono::milliseconds(5000);
  return cfg;
}

}  // namespace

Outcome check_privacy_fuzz() {
  std::mt19937_64 rng(0x5eed0003);
  auto west_cfg = fuzz_config("west");
  west_cfg.peers = {{"east", {"LE"}}};
  auto west = service::Node::open(west_cfg, testing::stepping_clock(Timestamp{1750000000}));

  // West's holdings: people and vehicles whose every fact carries a random label.
  const auto act = test_activity("west-intel");
  west->store().record_activity(act);
  std::vector<Fact> facts;
  for (int v = 0; v < 20; ++v) {
    const auto vid = make_entity_id("Vehicle", "v" + std::to_string(v));
    facts.push_back(literal_fact(vid, "plate", text_value("P" + std::to_string(1000 + v)), act, random_label(rng), "west-intel"));
    facts.push_back(literal_fact(vid, "make", text_value(pick(rng, std::vector<std::string>{"Toyota", "Ford", "Mazda"})), act,
                                 random_label(rng), "west-intel"));
  }
  for (int p = 0; p < 80; ++p) {
    const auto pid = make_entity_id("Person", "p" + std::to_string(p));
    const auto name = pick(rng, kFirst) + " " + pick(rng, kLast);
    facts.push_back(literal_fact(pid, "name", text_value(name), act, random_label(rng), "west-intel"));
    facts.push_back(literal_fact(pid, "heightCm", *make_value(ValueKind::integer, std::to_string(150 + p % 40)), act,
                                 random_label(rng), "west-intel"));
    facts.push_back(literal_fact(pid, "gender", text_value(p % 2 ? "M" : "F"), act, random_label(rng), "west-intel"));
    facts.push_back(literal_fact(pid, "ownsVehicle", entity_value(make_entity_id("Vehicle", "v" + std::to_string(p % 20))), act,
                                 random_label(rng), "west-intel"));
  }
  west->store().put_batch({}, facts);
  const int port = west->start();

  auto east_cfg = fuzz_config("east");
  east_cfg.principals = {{"analyst", {kFuzzTokens.begin(), kFuzzTokens.end()}}};
  auto east = service::Node::open(east_cfg, testing::stepping_clock(Timestamp{1750000000}));
  federation::SourceDescriptor peer;
  peer.id = "west";
  peer.kind = federation::SourceKind::peer_hub;
  peer.endpoint = "http://127.0.0.1:" + std::to_string(port);
  peer.capabilities = {federation::Capability::keyword, federation::Capability::structured};
  east->add_source(peer, "analyst");

  const std::set<std::string> grant{"LE"};
  std::size_t leaks = 0, checked = 0, queries = 0, failed_partials = 0, unresolved = 0;

  // A returned fact leaks when west's own label for it is not satisfied by the
  // tokens that could legitimately cross: caller tokens within the peer grant.
  auto judge = [&](const Fact& f, const std::set<std::string>& caller) {
    ++checked;
    std::optional<Fact> original;
    for (const auto& r : f.envelope.external_refs) {
      if (r.system == "west") original = west->store().fact(r.key);
    }
    if (!original) {
      ++unresolved;
      ++leaks;
      return;
    }
    const auto allowed = intersect(caller, grant);
    if (!security::authorize(original->envelope.visibility, AuthContext("check", allowed)) ||
        !security::authorize(f.envelope.visibility, AuthContext("check", caller))) {
      ++leaks;
    }
  };

  const auto t0 = std::chrono::steady_clock::now();
  // Library entry point on east.
  for (int i = 0; i < 600; ++i, ++queries) {
    const auto caller = random_tokens(rng);
    const auto r = east->federated_query(random_query(rng), AuthContext("analyst", caller));
    for (const auto& s : r.per_source) failed_partials += s.status != federation::PartialStatus::ok;
    for (const auto& e : r.entities) {
      for (const auto& f : e.facts) judge(f, caller);
    }
  }
  // The HTTP API on east, with the session narrowing its tokens.
  for (int i = 0; i < 400; ++i, ++queries) {
    const auto caller = random_tokens(rng);
    service::Request req;
    req.method = "POST";
    req.path = "/query";
    auto body = nlohmann::json::parse(federation::query_to_json(random_query(rng)).dump());
    body["federated"] = true;
    req.body = body.dump();
    req.headers["x-fedhub-principal"] = "analyst";
    req.headers["x-fedhub-tokens"] = join_tokens(caller);
    const auto res = east->handle(req);
    if (res.status != 200) {
      ++failed_partials;
      continue;
    }
    for (const auto& s : res.body["per_source"]) failed_partials += s["status"] != "ok";
    for (const auto& e : res.body["entities"]) {
      for (const auto& jf : e["facts"]) judge(codec::fact_from_json(jf), caller);
    }
  }
  // West's peer endpoint called directly, including impostor peer ids.
  httplib::Client client("127.0.0.1", port);
  const std::vector<std::string> peers{"east", "east", "mallory", ""};
  std::size_t impostor_facts = 0;
  for (int i = 0; i < 400; ++i, ++queries) {
    const auto presented = random_tokens(rng);
    const auto& peer_id = pick(rng, peers);
    httplib::Headers h{{"X-Fedhub-Peer", peer_id}, {"X-Fedhub-Tokens", join_tokens(presented)}};
    const auto res = client.Post("/peer/query", h, federation::query_to_json(random_query(rng)).dump(),
                                 "application/json");
    if (!res || res->status != 200) {
      ++failed_partials;
      continue;
    }
    const auto body = nlohmann::ordered_json::parse(res->body);
    for (const auto& jf : body["facts"]) {
      const auto f = codec::fact_from_json(jf);
      ++checked;
      const auto original = west->store().fact(f.id);
      if (peer_id != "east") {
        ++impostor_facts;
        ++leaks;
      } else if (!original ||
                 !security::authorize(original->envelope.visibility, AuthContext("check", intersect(presented, grant)))) {
        ++leaks;
      }
    }
  }
  const double secs = seconds_since(t0);
  west->stop();

  std::ostringstream d;
  d << queries << " queries, " << checked << " returned facts checked, " << leaks << " leaks (" << unresolved
    << " unresolvable, " << impostor_facts << " to impostor peers), " << failed_partials << " failed calls, "
    << secs << " s (limit 60 s)";
  return {leaks == 0 && failed_partials == 0 && checked > 0 && queries >= 1000 && secs < 60.0, d.str()};
}

}  // namespace fedhub::acceptance
