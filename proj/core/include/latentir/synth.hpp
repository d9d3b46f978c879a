#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "latentir/ingest.hpp"

namespace latentir::ingest {

/// Parameters of the synthetic topic corpus.
///
/// Every topic owns a unit-norm random atom in R^d and a small vocabulary of
/// pseudo-words: the first is its canonical token, the rest are synonyms that
/// never occur in documents. Documents mention the canonical token of each of
/// their topics; queries render each topic through a synonym with probability
/// `query_synonym_rate`, which produces lexical mismatch against the gold doc.
struct SynthSpec {
    int n_topics = 32;
    int d = 16;
    int docs = 2000;
    int queries = 200;
    int topics_per_doc = 3;
    double noise_sigma = 0.05;
    std::uint64_t seed = 7;
    int surface_forms = 3;
    double query_synonym_rate = 0.6;

    /// Throws ValidationError on an unusable spec.
    void validate() const;
};

struct SynthTruth {
    int d = 0;
    /// n_topics rows of d values, unit norm.
    std::vector<std::vector<double>> atoms;
    /// vocabulary[t][0] is the canonical token of topic t.
    std::vector<std::vector<std::string>> vocabulary;
    std::vector<std::vector<int>> doc_topics;
    std::vector<std::vector<int>> query_topics;
    /// Internal doc index of each query's gold doc.
    std::vector<std::size_t> gold_doc;

    bool operator==(const SynthTruth&) const = default;
};

struct SynthData {
    Corpus corpus;
    QuerySet queries;
    Qrels qrels;
    EmbeddingStore doc_embeddings;
    EmbeddingStore query_embeddings;
    SynthTruth truth;
};

/// Deterministic in `spec` (seed included).
///
/// Doc embedding = normalize(sum of its topic atoms + N(0, noise_sigma^2) per coordinate).
/// Gold docs are drawn (without replacement) from the docs whose topic set is unique in the
/// corpus, so the gold is the single doc sharing the most topics with its query. Query
/// embeddings are built from the gold's topics with fresh noise. Throws ValidationError
/// when fewer such docs exist than requested queries.
[[nodiscard]] SynthData synth_generate(const SynthSpec& spec);

void write_synth_truth(const SynthTruth& truth, const std::string& path);
[[nodiscard]] SynthTruth read_synth_truth(const std::string& path);

}  // namespace latentir::ingest
