#include <benchmark/benchmark.h>

#include <algorithm>
#include <random>

#include "latentir/clsr.hpp"
#include "latentir/lexical.hpp"
#include "latentir/recon_eval.hpp"
#include "latentir/sae.hpp"
#include "latentir/synth.hpp"

namespace {

using namespace latentir;

Matrix gaussian(std::size_t rows, std::size_t cols, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g(0.0, 1.0);
    Matrix m(rows, cols);
    for (auto& x : m.data()) {
        x = g(rng);
    }
    return m;
}

/// `nnz` distinct latents in [0, m) with exponential activations.
SparseCode random_code(std::mt19937_64& rng, std::uint32_t m, std::size_t nnz, std::string id) {
    std::vector<std::uint32_t> all(m);
    for (std::uint32_t j = 0; j < m; ++j) {
        all[j] = j;
    }
    std::shuffle(all.begin(), all.end(), rng);
    all.resize(nnz);
    std::sort(all.begin(), all.end());
    std::exponential_distribution<double> e(1.0);
    SparseCode c;
    c.indices = all;
    for (std::size_t i = 0; i < nnz; ++i) {
        c.values.push_back(0.01 + e(rng));
    }
    c.origin_id = std::move(id);
    return c;
}

void BM_BatchTopK(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    const auto pre = gaussian(n, 1024, 1);
    for (auto _ : state) {
        benchmark::DoNotOptimize(sae::batch_topk_mask(pre, 32));
    }
    state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * n));
}
BENCHMARK(BM_BatchTopK)->Arg(256)->Arg(1024);

void BM_EncodeInfer(benchmark::State& state) {
    sae::SaeConfig cfg;
    cfg.d = 64;
    cfg.m = 1024;
    cfg.k = 32;
    const auto p = sae::init_params(cfg);
    const auto h = gaussian(1, 64, 2);
    const std::vector<double> row(h.data().begin(), h.data().end());
    for (auto _ : state) {
        benchmark::DoNotOptimize(sae::encode_infer(p, row, 0.5));
    }
}
BENCHMARK(BM_EncodeInfer);

void BM_ClsrSearch(benchmark::State& state) {
    constexpr std::uint32_t m = 4096;
    std::mt19937_64 rng(3);
    std::vector<SparseCode> docs;
    const auto n_docs = static_cast<std::size_t>(state.range(0));
    for (std::size_t i = 0; i < n_docs; ++i) {
        docs.push_back(random_code(rng, m, 32, "d" + std::to_string(i)));
    }
    const auto index = clsr::build_index(docs, m, 24);
    std::vector<SparseCode> queries;
    for (int i = 0; i < 64; ++i) {
        queries.push_back(random_code(rng, m, 32, "q"));
    }
    const clsr::ScoringParams params;
    std::size_t i = 0;
    for (auto _ : state) {
        benchmark::DoNotOptimize(clsr::search(queries[i++ % queries.size()], index, params, 1000));
    }
    state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations()));
}
BENCHMARK(BM_ClsrSearch)->Arg(10000)->Arg(100000);

const ingest::SynthData& synth_data() {
    static const auto data = [] {
        ingest::SynthSpec spec;
        spec.docs = 5000;
        spec.queries = 200;
        return ingest::synth_generate(spec);
    }();
    return data;
}

void BM_Bm25Search(benchmark::State& state) {
    const auto& data = synth_data();
    const auto index = lexical::build_index(data.corpus);
    std::size_t i = 0;
    for (auto _ : state) {
        const auto& q = data.queries[i++ % data.queries.size()];
        benchmark::DoNotOptimize(lexical::bm25_search(q.id, q.text, index, 1000));
    }
}
BENCHMARK(BM_Bm25Search);

void BM_DenseSearch(benchmark::State& state) {
    const auto& data = synth_data();
    ingest::EmbeddingStore one(data.query_embeddings.dim());
    one.add("q", data.query_embeddings.row(0));
    for (auto _ : state) {
        benchmark::DoNotOptimize(recon::dense_search(data.doc_embeddings, one, 1000));
    }
}
BENCHMARK(BM_DenseSearch);

}  // namespace

BENCHMARK_MAIN();
