// Serial and OpenMP variants of the hot kernels, plus keyword search.

#include "support.h"

#include "fedhub/kernels/redaction.h"
#include "fedhub/kernels/scoring.h"
#include "fedhub/linker/linker.h"

#include <benchmark/benchmark.h>

#include <random>

using namespace fedhub;
using fedhub::security::AuthContext;

namespace {

const char* kLabels[] = {"", "LE", "TF", "LE|TF", "LE&FR", "(LE|TF)&(FR|HR)"};

std::vector<Fact> labelled_facts(std::size_t n) {
  std::mt19937_64 rng(7);
  const auto act = testing::test_activity("bench");
  std::vector<Fact> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    out.push_back(testing::literal_fact(make_entity_id("Person", std::to_string(i % 5000)), "name",
                                        text_value("name " + std::to_string(i)), act, kLabels[rng() % 6], "bench"));
  }
  return out;
}

std::vector<hubstore::EntityView> people(std::size_t n) {
  std::mt19937_64 rng(11);
  const char* first[] = {"john", "jon", "mary", "marie", "lee", "li"};
  const char* last[] = {"smith", "smyth", "jones", "wong", "nguyen"};
  const auto act = testing::test_activity("bench");
  std::vector<hubstore::EntityView> out;
  for (std::size_t i = 0; i < n; ++i) {
    hubstore::EntityView v;
    v.id = make_entity_id("Person", "bench-" + std::to_string(i));
    v.concept_name = "Person";
    v.facts.push_back(testing::literal_fact(v.id, "name", text_value(std::string(first[rng() % 6]) + " " + last[rng() % 5]), act));
    v.facts.push_back(testing::literal_fact(v.id, "heightCm", *make_value(ValueKind::integer, std::to_string(150 + rng() % 40)), act));
    out.push_back(std::move(v));
  }
  return out;
}

const linker::SimilarityConfig& sim() {
  static const auto cfg = linker::SimilarityConfig::load_file(testing::data_path("linker/person.sim").string());
  return cfg;
}

void BM_visibility_mask_serial(benchmark::State& state) {
  const auto facts = labelled_facts(state.range(0));
  const AuthContext auth("bench", {"LE", "FR"});
  for (auto _ : state) benchmark::DoNotOptimize(kernels::serial::visibility_mask(facts, auth));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_visibility_mask_parallel(benchmark::State& state) {
  const auto facts = labelled_facts(state.range(0));
  const AuthContext auth("bench", {"LE", "FR"});
  for (auto _ : state) benchmark::DoNotOptimize(kernels::visibility_mask(facts, auth));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_score_pairs_serial(benchmark::State& state) {
  const auto views = people(state.range(0));
  const auto& onto = testing::bundled_ontology();
  for (auto _ : state) {
    benchmark::DoNotOptimize(kernels::serial::score_pairs(
        views.size(), [&](std::size_t i, std::size_t j) { return linker::pair_similarity(views[i], views[j], sim(), onto); }));
  }
}

void BM_score_pairs_parallel(benchmark::State& state) {
  const auto views = people(state.range(0));
  const auto& onto = testing::bundled_ontology();
  for (auto _ : state) {
    benchmark::DoNotOptimize(kernels::score_pairs(
        views.size(), [&](std::size_t i, std::size_t j) { return linker::pair_similarity(views[i], views[j], sim(), onto); }));
  }
}

void BM_keyword_search(benchmark::State& state) {
  hubstore::HubStore store(testing::bundled_ontology());
  const auto act = testing::test_activity("bench");
  store.record_activity(act);
  store.put_batch({}, labelled_facts(state.range(0)));
  const AuthContext auth("bench", {"LE", "TF"});
  std::size_t i = 0;
  for (auto _ : state) benchmark::DoNotOptimize(store.keyword_search("name " + std::to_string(i++ % 1000), auth));
}

}  // namespace

BENCHMARK(BM_visibility_mask_serial)->Arg(1000)->Arg(100000);
BENCHMARK(BM_visibility_mask_parallel)->Arg(1000)->Arg(100000);
BENCHMARK(BM_score_pairs_serial)->Arg(100)->Arg(400);
BENCHMARK(BM_score_pairs_parallel)->Arg(100)->Arg(400);
BENCHMARK(BM_keyword_search)->Arg(100000);

BENCHMARK_MAIN();
