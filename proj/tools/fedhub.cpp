// fedhub: node process and command-line client.
//
// Data commands talk to a running node (--node URL) or, without --node, open
// the node described by --config / FEDHUB_* variables in-process. Exit codes:
// 0 success, 1 domain error, 2 usage error.

#include "fedhub/common/error.h"
#include "fedhub/common/text.h"
#include "fedhub/ontology/ontology.h"
#include "fedhub/service/node.h"
#include "fedhub/workflow/audit.h"

#include <CLI11.hpp>
#include <httplib.h>
#include <signal.h>

#include <iostream>

namespace {

using fedhub::Error;
using fedhub::ErrorCode;
using fedhub::service::Request;
using fedhub::service::Response;
using nlohmann::ordered_json;

struct Globals {
  std::string node_url;
  std::string config;
  std::string principal;
  std::string tokens;
  bool tokens_set = false;
};

fedhub::service::NodeConfig node_config(const Globals& g) {
  const auto env = fedhub::service::fedhub_environment();
  std::string path = g.config;
  if (path.empty()) {
    if (const auto it = env.find("FEDHUB_CONFIG"); it != env.end()) path = it->second;
  }
  if (!path.empty()) return fedhub::service::load_config(path, env);
  return fedhub::service::config_from_env(env);
}

// One API call, over HTTP or against an in-process node.
Response call(const Globals& g, const std::string& method, const std::string& path,
              const ordered_json& body = ordered_json()) {
  const std::string payload = body.is_null() ? std::string() : body.dump();
  if (g.node_url.empty()) {
    static std::unique_ptr<fedhub::service::Node> node;
    if (!node) node = fedhub::service::Node::open(node_config(g));
    Request r;
    r.method = method;
    const auto q = path.find('?');
    r.path = path.substr(0, q);
    if (q != std::string::npos) {
      for (const auto& kv : fedhub::text::split(path.substr(q + 1), '&')) {
        const auto eq = kv.find('=');
        r.query[kv.substr(0, eq)] = eq == std::string::npos ? "" : kv.substr(eq + 1);
      }
    }
    if (!g.principal.empty()) r.headers["x-fedhub-principal"] = g.principal;
    if (g.tokens_set) r.headers["x-fedhub-tokens"] = g.tokens;
    r.body = payload;
    return node->handle(r);
  }
  httplib::Client client(g.node_url);
  client.set_read_timeout(60, 0);
  httplib::Headers headers;
  if (!g.principal.empty()) headers.emplace(std::string(fedhub::federation::kPrincipalHeader), g.principal);
  if (g.tokens_set) headers.emplace(std::string(fedhub::federation::kTokensHeader), g.tokens);
  auto res = method == "GET" ? client.Get(path, headers)
                             : client.Post(path, headers, payload, "application/json");
  if (!res) {
    throw Error(ErrorCode::unavailable, "cannot reach " + g.node_url + ": " + httplib::to_string(res.error()));
  }
  Response out;
  out.status = res->status;
  out.body = res->body.empty() ? ordered_json() : ordered_json::parse(res->body);
  return out;
}

int report(const Response& r) {
  if (r.status >= 200 && r.status < 300) {
    std::cout << r.body.dump(2) << "\n";
    return 0;
  }
  std::cerr << "error: " << r.body.value("message", r.body.dump()) << "\n";
  return 1;
}

ordered_json where_json(const std::vector<std::string>& conds) {
  auto arr = ordered_json::array();
  for (const auto& c : conds) {
    const auto p = fedhub::hubstore::parse_attribute_predicate(c);
    arr.push_back({{"attribute", p.attribute}, {"op", fedhub::hubstore::to_string(p.op)}, {"value", p.value}});
  }
  return arr;
}

// The most readable literal of an entity: name, then label, then title.
std::string display_name(const ordered_json& facts) {
  for (const char* pred : {"name", "label", "title"}) {
    for (const auto& f : facts) {
      if (f.at("predicate") == pred) return f.at("object").at("value").get<std::string>();
    }
  }
  return "";
}

ordered_json parse_payload(const std::vector<std::string>& kvs) {
  ordered_json payload = ordered_json::object();
  for (const auto& kv : kvs) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos || eq == 0) throw CLI::ValidationError("--payload", "expected key=value, got " + kv);
    const auto key = kv.substr(0, eq);
    const auto v = kv.substr(eq + 1);
    if (v == "true" || v == "false") {
      payload[key] = v == "true";
    } else if (const auto i = fedhub::text::parse_integer(v)) {
      payload[key] = *i;
    } else if (const auto d = fedhub::text::parse_decimal(v)) {
      payload[key] = *d;
    } else {
      payload[key] = v;
    }
  }
  return payload;
}

int serve(const Globals& g, const std::string& listen, const std::string& data_dir) {
  auto cfg = node_config(g);
  if (!listen.empty()) cfg.listen = listen;
  if (!data_dir.empty()) cfg.data_dir = data_dir;
  sigset_t set;
  sigemptyset(&set);
  sigaddset(&set, SIGINT);
  sigaddset(&set, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &set, nullptr);  // inherited by server threads
  auto node = fedhub::service::Node::open(cfg);
  const int port = node->start();
  std::cerr << "fedhub node " << cfg.node_id << " listening on port " << port << " ("
            << node->store().fact_count() << " facts)\n";
  int sig = 0;
  sigwait(&set, &sig);
  node->stop();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Federated knowledge-hub node"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--node", g.node_url, "Base URL of a running node (default: open the node in-process)");
  app.add_option("--config", g.config, "Node configuration file");
  app.add_option("--principal", g.principal, "Operator principal");
  app.add_option("--tokens", g.tokens, "Comma-separated tokens narrowing the principal's grant")
      ->each([&](const std::string&) { g.tokens_set = true; });

  std::function<int()> action;

  auto* serve_cmd = app.add_subcommand("serve", "Run a node");
  std::string listen, data_dir;
  serve_cmd->add_option("--listen", listen, "host:port");
  serve_cmd->add_option("--data-dir", data_dir, "Data directory");
  serve_cmd->callback([&] { action = [&] { return serve(g, listen, data_dir); }; });

  auto* onto_cmd = app.add_subcommand("ontology", "Ontology tools");
  onto_cmd->require_subcommand(1);
  auto* check_cmd = onto_cmd->add_subcommand("check", "Load and validate an ontology file");
  std::string onto_file;
  check_cmd->add_option("file", onto_file)->required();
  check_cmd->callback([&] {
    action = [&] {
      const auto o = fedhub::ontology::Ontology::load_file(onto_file);
      std::cout << onto_file << ": ok, " << o.concepts().size() << " concepts ("
                << o.top_level_concepts().size() << " top-level), " << o.attributes().size()
                << " attributes, " << o.relations().size() << " relations\n";
      return 0;
    };
  });

  auto* ingest_cmd = app.add_subcommand("ingest", "Run the ingestion pipeline for a source");
  std::string source, batch;
  ingest_cmd->add_option("source", source)->required();
  ingest_cmd->add_option("batch", batch, "CSV file or document directory (default: the source endpoint)");
  ingest_cmd->callback([&] {
    action = [&] {
      return report(call(g, "POST", "/ingest/" + source, ordered_json{{"batch", batch}}));
    };
  });

  auto* query_cmd = app.add_subcommand("query", "Keyword or structured query");
  std::string keyword, concept_name, via, as_of;
  std::vector<std::string> where, via_where;
  bool federated = false, as_json = false;
  auto* kw_opt = query_cmd->add_option("--keyword", keyword);
  auto* concept_opt = query_cmd->add_option("--concept", concept_name);
  kw_opt->excludes(concept_opt);
  query_cmd->add_option("--where", where, "attr<op>value, repeatable")->needs(concept_opt);
  query_cmd->add_option("--via", via, "relation:Concept")->needs(concept_opt);
  query_cmd->add_option("--via-where", via_where, "attr<op>value on the traversal target");
  query_cmd->add_option("--as-of", as_of);
  query_cmd->add_flag("--federated", federated, "Dispatch to registered sources and collate");
  query_cmd->add_flag("--json", as_json, "Print the raw response");
  query_cmd->callback([&] {
    if (keyword.empty() && concept_name.empty()) throw CLI::RequiredError("--keyword or --concept");
    action = [&] {
      ordered_json q;
      if (!keyword.empty()) {
        q["keyword"] = keyword;
      } else {
        q["concept"] = concept_name;
        q["where"] = where_json(where);
        if (!via.empty()) {
          const auto colon = via.find(':');
          if (colon == std::string::npos) throw Error(ErrorCode::invalid, "--via expects relation:Concept");
          q["via"] = {{"relation", via.substr(0, colon)},
                      {"concept", via.substr(colon + 1)},
                      {"where", where_json(via_where)}};
        }
      }
      if (!as_of.empty()) q["as_of"] = as_of;
      if (federated) q["federated"] = true;
      const auto r = call(g, "POST", "/query", q);
      if (as_json || r.status != 200) return report(r);
      for (const auto& e : r.body.at("entities")) {
        std::cout << e.at("id").get<std::string>() << "\t" << e.value("concept", "") << "\t"
                  << display_name(e.at("facts"));
        if (e.contains("score")) std::cout << "\t" << e.at("score").get<double>();
        std::cout << "\n";
      }
      return 0;
    };
  });

  auto* plan_cmd = app.add_subcommand("plan", "Investigation plans");
  plan_cmd->require_subcommand(1);
  auto* plan_create = plan_cmd->add_subcommand("create", "Create a plan");
  std::string case_ref;
  plan_create->add_option("--case", case_ref)->required();
  plan_create->callback([&] {
    action = [&] { return report(call(g, "POST", "/plans", ordered_json{{"case_ref", case_ref}})); };
  });
  auto* plan_show = plan_cmd->add_subcommand("show", "Print a plan");
  std::string plan_id;
  plan_show->add_option("plan", plan_id)->required();
  plan_show->callback([&] { action = [&] { return report(call(g, "GET", "/plans/" + plan_id)); }; });

  auto* plan_goal = plan_cmd->add_subcommand("goal", "Add a line of inquiry from a task template");
  std::string template_id, parent;
  std::vector<std::string> params;
  bool no_execute = false;
  plan_goal->add_option("plan", plan_id)->required();
  plan_goal->add_option("template", template_id)->required();
  plan_goal->add_option("--param", params, "slot=value, repeatable");
  plan_goal->add_option("--parent", parent);
  plan_goal->add_flag("--no-execute", no_execute, "Do not run the information requirements yet");
  plan_goal->callback([&] {
    action = [&] {
      ordered_json p = ordered_json::object();
      for (const auto& kv : params) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw Error(ErrorCode::invalid, "--param expects slot=value");
        p[kv.substr(0, eq)] = kv.substr(eq + 1);
      }
      ordered_json body{{"template", template_id}, {"params", p}, {"execute", !no_execute}};
      if (!parent.empty()) body["parent"] = parent;
      return report(call(g, "POST", "/plans/" + plan_id + "/goals", body));
    };
  });

  auto* plan_event = plan_cmd->add_subcommand("event", "Record a workflow event");
  std::string kind, at;
  std::vector<std::string> payload, linked;
  plan_event->add_option("plan", plan_id)->required();
  plan_event->add_option("--kind", kind)->required();
  plan_event->add_option("--at", at, "RFC 3339 time (default: now)");
  plan_event->add_option("--payload", payload, "key=value, repeatable");
  plan_event->add_option("--fact", linked, "linked fact id, repeatable");
  plan_event->callback([&] {
    action = [&] {
      ordered_json e{{"kind", kind}, {"payload", parse_payload(payload)}, {"linked_facts", linked}};
      e["occurred_at"] = at.empty() ? fedhub::format_rfc3339(fedhub::now_utc()) : at;
      return report(call(g, "POST", "/plans/" + plan_id + "/events", e));
    };
  });

  auto* plan_gate = plan_cmd->add_subcommand("gate", "Evaluate a compliance gate");
  std::string gate;
  bool dry_run = false;
  std::vector<std::string> hypothetical;
  plan_gate->add_option("plan", plan_id)->required();
  plan_gate->add_option("gate", gate)->required();
  plan_gate->add_flag("--dry-run", dry_run, "Evaluate with hypothetical events; changes nothing");
  plan_gate->add_option("--event", hypothetical, "kind@RFC3339[,key=value...] hypothetical event")
      ->needs(plan_gate->get_option("--dry-run"));
  plan_gate->callback([&] {
    action = [&] {
      if (!dry_run) return report(call(g, "GET", "/plans/" + plan_id + "/gates/" + gate));
      auto events = ordered_json::array();
      for (const auto& h : hypothetical) {
        auto parts = fedhub::text::split(h, ',');
        const auto& head = parts.front();
        const auto atpos = head.find('@');
        if (atpos == std::string::npos) throw Error(ErrorCode::invalid, "--event expects kind@time");
        std::vector<std::string> kvs(parts.begin() + 1, parts.end());
        events.push_back({{"kind", head.substr(0, atpos)},
                          {"occurred_at", head.substr(atpos + 1)},
                          {"payload", parse_payload(kvs)}});
      }
      return report(call(g, "POST", "/plans/" + plan_id + "/gates/" + gate + "?dry_run=1",
                         ordered_json{{"events", events}}));
    };
  });

  auto* source_cmd = app.add_subcommand("source", "Source registry");
  source_cmd->require_subcommand(1);
  auto* source_add = source_cmd->add_subcommand("add", "Register a source");
  std::string sid, skind, endpoint, mapping, gazetteer, visibility;
  std::vector<std::string> caps;
  source_add->add_option("--id", sid)->required();
  source_add->add_option("--kind", skind, "csv-file | peer-hub | directory-of-documents")->required();
  source_add->add_option("--endpoint", endpoint)->required();
  source_add->add_option("--mapping", mapping);
  source_add->add_option("--gazetteer", gazetteer);
  source_add->add_option("--visibility", visibility, "default visibility of the source's facts");
  source_add->add_option("--capability", caps, "keyword | structured, repeatable");
  source_add->callback([&] {
    action = [&] {
      auto abs = [](const std::string& p) {
        return p.empty() ? p : std::filesystem::absolute(p).lexically_normal().string();
      };
      ordered_json d{{"id", sid}, {"kind", skind},
                     {"endpoint", skind == "peer-hub" ? endpoint : abs(endpoint)}};
      if (!caps.empty()) d["capabilities"] = caps;
      if (!mapping.empty()) d["mapping"] = abs(mapping);
      if (!gazetteer.empty()) d["gazetteer"] = abs(gazetteer);
      if (!visibility.empty()) d["default_visibility"] = visibility;
      return report(call(g, "POST", "/sources", d));
    };
  });
  auto* source_list = source_cmd->add_subcommand("list", "List registered sources");
  source_list->callback([&] { action = [&] { return report(call(g, "GET", "/sources")); }; });

  auto* audit_cmd = app.add_subcommand("audit", "Audit log");
  audit_cmd->require_subcommand(1);
  auto* audit_verify = audit_cmd->add_subcommand("verify", "Verify the hash chain");
  std::string audit_path;
  audit_verify->add_option("path", audit_path, "audit.log (default: the node's data directory)");
  audit_verify->callback([&] {
    action = [&] {
      fedhub::workflow::AuditVerification v;
      if (!audit_path.empty() || g.node_url.empty()) {
        auto path = audit_path;
        if (path.empty()) {
          const auto cfg = node_config(g);
          if (cfg.data_dir.empty()) throw Error(ErrorCode::invalid, "no audit log: give a path or a data_dir");
          path = (cfg.data_dir / "audit.log").string();
        }
        v = fedhub::workflow::verify_audit(path);
      } else {
        const auto r = call(g, "GET", "/audit/verify");
        if (r.status != 200) return report(r);
        v.ok = r.body.at("ok").get<bool>();
        v.records = r.body.at("records").get<std::uint64_t>();
        if (r.body.contains("first_corrupt_seq")) v.first_corrupt_seq = r.body["first_corrupt_seq"].get<std::uint64_t>();
        v.message = r.body.value("message", "");
      }
      if (v.ok) {
        std::cout << "ok: " << v.records << " records verified\n";
        return 0;
      }
      std::cout << "corrupt at seq " << *v.first_corrupt_seq << ": " << v.message << "\n";
      return 1;
    };
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "usage error: " << e.what() << "\n\n" << app.help();
    return 2;
  }
  try {
    return action ? action() : 2;
  } catch (const CLI::ParseError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const Error& e) {
    std::cerr << "error (" << fedhub::to_string(e.code()) << "): " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
