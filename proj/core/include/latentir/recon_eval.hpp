#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "latentir/ingest.hpp"
#include "latentir/metrics.hpp"
#include "latentir/sae.hpp"
#include "latentir/types.hpp"

namespace latentir::recon {

/// Exact dot-product top_n per query (top_n capped at the corpus size), ties to the
/// lexicographically smaller doc id. Output follows query store order.
[[nodiscard]] std::vector<RankedList> dense_search(const ingest::EmbeddingStore& docs,
                                                   const ingest::EmbeddingStore& queries, std::size_t top_n);

[[nodiscard]] Run to_run(const std::vector<RankedList>& lists);

/// Each row replaced by decode(encode_infer(row)).
[[nodiscard]] ingest::EmbeddingStore reconstruct_store(const sae::SaeParams& params, double theta,
                                                       const ingest::EmbeddingStore& store);

/// Spearman rho with average ranks for ties. Throws ValidationError when sizes differ or n < 2.
/// A constant side yields 1 when both sides are constant, else 0.
[[nodiscard]] double spearman(const std::vector<double>& a, const std::vector<double>& b);

/// Rescores the docs of `original` with `recon_score(doc_id)` and correlates the two orders.
/// Throws ValidationError when `original` has fewer than 2 entries.
[[nodiscard]] double spearman_fidelity(const RankedList& original,
                                       const std::function<double(const std::string&)>& recon_score);

struct ReconRow {
    std::string model;
    double nmse = 0.0;
    double mrr_at_10 = 0.0;
    double recall_at_1000 = 0.0;
    double ndcg_at_10 = 0.0;
    double spearman_mean = 0.0;
    double spearman_var = 0.0;
};

/// Rows: "dense" (original embeddings), "sae" (reconstructed), "ratio" (sae / dense;
/// its nmse column repeats the sae value since nmse is already normalized;
/// 1 where the dense value is 0 and the sae value matches, else 0).
struct ReconReport {
    std::vector<ReconRow> rows;
    std::size_t query_count = 0;
    std::size_t top_n = 0;
};

/// Dense retrieval with original vs reconstructed embeddings. `top_n` (default 1000) is
/// capped at the corpus size. Throws ValidationError on an empty query store or a
/// query/doc/params dim mismatch.
[[nodiscard]] ReconReport recon_report(const ingest::EmbeddingStore& docs, const ingest::EmbeddingStore& queries,
                                       const sae::SaeParams& params, double theta, const ingest::Qrels& qrels,
                                       std::size_t top_n = 1000);

/// Same protocol with the reconstructed stores supplied directly.
[[nodiscard]] ReconReport recon_report_from(const ingest::EmbeddingStore& docs,
                                            const ingest::EmbeddingStore& queries,
                                            const ingest::EmbeddingStore& recon_docs,
                                            const ingest::EmbeddingStore& recon_queries,
                                            const ingest::Qrels& qrels, std::size_t top_n = 1000);

/// `model,nmse,mrr_at_10,recall_at_1000,ndcg_at_10,spearman_mean,spearman_var`,
/// preceded by `# config_digest=` when a digest is given.
[[nodiscard]] std::string report_csv(const ReconReport& report, const std::string& digest = {});
[[nodiscard]] std::string report_table(const ReconReport& report);

}  // namespace latentir::recon
