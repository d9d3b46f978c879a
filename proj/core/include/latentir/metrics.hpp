#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <utility>

#include "latentir/errors.hpp"
#include "latentir/ingest.hpp"
#include "latentir/types.hpp"

namespace latentir::metrics {

/// Queries judged in the qrels but holding no grade >= 1 document are excluded from
/// every metric and reported in `skipped_no_relevant`. Judged queries absent from the
/// run score 0 and are reported in `missing_from_run`.
struct MetricValue {
    double mean = 0.0;
    std::map<std::string, double> per_query;
    std::size_t missing_from_run = 0;
    std::size_t skipped_no_relevant = 0;
};

/// 1 / rank of the first grade >= 1 doc within the top k, else 0.
[[nodiscard]] MetricValue mrr_at_k(const Run& run, const ingest::Qrels& qrels, std::size_t k = 10);

/// |relevant in top k| / |relevant|.
[[nodiscard]] MetricValue recall_at_k(const Run& run, const ingest::Qrels& qrels, std::size_t k = 1000);

enum class Gain {
    linear,       // gain = rel (trec_eval ndcg_cut)
    exponential,  // gain = 2^rel - 1
};

/// DCG@k / IDCG@k with discount log2(rank + 1); 0 when IDCG is 0.
[[nodiscard]] MetricValue ndcg_at_k(const Run& run, const ingest::Qrels& qrels, std::size_t k = 10,
                                    Gain gain = Gain::linear);

/// Fraction of (predicted, expected) pairs that agree. Throws ValidationError on empty input.
template <typename T>
[[nodiscard]] double accuracy(std::span<const std::pair<T, T>> pairs) {
    if (pairs.empty()) {
        throw ValidationError("accuracy: empty input");
    }
    std::size_t hits = 0;
    for (const auto& [predicted, expected] : pairs) {
        hits += predicted == expected ? 1 : 0;
    }
    return static_cast<double>(hits) / static_cast<double>(pairs.size());
}

/// The MRR@10 / Recall@1k / NDCG@10 column set.
struct EvalReport {
    std::size_t query_count = 0;
    MetricValue mrr_at_10;
    MetricValue recall_at_1000;
    MetricValue ndcg_at_10;
    /// Always "exclude_no_relevant"; recorded so reports are self-describing.
    std::string unjudged_policy = "exclude_no_relevant";
};

[[nodiscard]] EvalReport evaluate(const Run& run, const ingest::Qrels& qrels);

}  // namespace latentir::metrics
