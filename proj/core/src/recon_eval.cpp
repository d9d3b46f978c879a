#include "latentir/recon_eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "latentir/errors.hpp"

namespace latentir::recon {

namespace {

double dot_f(std::span<const float> a, std::span<const float> b) noexcept {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        s += static_cast<double>(a[i]) * static_cast<double>(b[i]);
    }
    return s;
}

std::vector<double> average_ranks(const std::vector<double>& v) {
    std::vector<std::size_t> order(v.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> ranks(v.size());
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) {
            ++j;
        }
        const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
        for (std::size_t t = i; t <= j; ++t) {
            ranks[order[t]] = avg;
        }
        i = j + 1;
    }
    return ranks;
}

double ratio(double sae, double dense) {
    if (dense == 0.0) {
        return sae == 0.0 ? 1.0 : 0.0;
    }
    return sae / dense;
}

}  // namespace

std::vector<RankedList> dense_search(const ingest::EmbeddingStore& docs, const ingest::EmbeddingStore& queries,
                                     std::size_t top_n) {
    if (docs.dim() != queries.dim()) {
        throw ValidationError("dense_search: doc dim " + std::to_string(docs.dim()) + " != query dim " +
                              std::to_string(queries.dim()));
    }
    const std::size_t n = std::min(top_n, docs.count());
    std::vector<RankedList> out;
    out.reserve(queries.count());
    std::vector<ScoredDoc> all(docs.count());
    for (std::size_t q = 0; q < queries.count(); ++q) {
        for (std::size_t i = 0; i < docs.count(); ++i) {
            all[i] = ScoredDoc{docs.ids()[i], dot_f(queries.row(q), docs.row(i))};
        }
        std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(n), all.end(), ranks_before);
        RankedList list;
        list.query_id = queries.ids()[q];
        list.entries.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(n));
        out.push_back(std::move(list));
    }
    return out;
}

Run to_run(const std::vector<RankedList>& lists) {
    Run run;
    for (const auto& l : lists) {
        run[l.query_id] = l;
    }
    return run;
}

ingest::EmbeddingStore reconstruct_store(const sae::SaeParams& params, double theta,
                                         const ingest::EmbeddingStore& store) {
    if (store.dim() != params.d()) {
        throw ValidationError("reconstruct_store: store dim " + std::to_string(store.dim()) + " != SAE dim " +
                              std::to_string(params.d()));
    }
    ingest::EmbeddingStore out(store.dim());
    std::vector<double> h(store.dim());
    for (std::size_t i = 0; i < store.count(); ++i) {
        const auto row = store.row(i);
        std::copy(row.begin(), row.end(), h.begin());
        const auto recon = sae::decode(params, sae::encode_infer(params, h, theta));
        out.add(store.ids()[i], std::span<const double>(recon));
    }
    return out;
}

double spearman(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) {
        throw ValidationError("spearman: length mismatch");
    }
    if (a.size() < 2) {
        throw ValidationError("spearman: need at least 2 items");
    }
    const auto ra = average_ranks(a);
    const auto rb = average_ranks(b);
    const double n = static_cast<double>(a.size());
    const double mean = (n + 1.0) / 2.0;
    double sab = 0.0, saa = 0.0, sbb = 0.0;
    for (std::size_t i = 0; i < ra.size(); ++i) {
        sab += (ra[i] - mean) * (rb[i] - mean);
        saa += (ra[i] - mean) * (ra[i] - mean);
        sbb += (rb[i] - mean) * (rb[i] - mean);
    }
    if (saa == 0.0 || sbb == 0.0) {
        return saa == sbb ? 1.0 : 0.0;
    }
    return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

double spearman_fidelity(const RankedList& original, const std::function<double(const std::string&)>& recon_score) {
    if (original.entries.size() < 2) {
        throw ValidationError("spearman_fidelity: need at least 2 ranked docs");
    }
    std::vector<double> orig, recon;
    orig.reserve(original.entries.size());
    recon.reserve(original.entries.size());
    for (const auto& e : original.entries) {
        orig.push_back(e.score);
        recon.push_back(recon_score(e.doc_id));
    }
    return spearman(orig, recon);
}

ReconReport recon_report(const ingest::EmbeddingStore& docs, const ingest::EmbeddingStore& queries,
                         const sae::SaeParams& params, double theta, const ingest::Qrels& qrels, std::size_t top_n) {
    if (queries.dim() != params.d() || docs.dim() != params.d()) {
        throw ValidationError("recon_report: embedding dim does not match the SAE");
    }
    return recon_report_from(docs, queries, reconstruct_store(params, theta, docs),
                             reconstruct_store(params, theta, queries), qrels, top_n);
}

ReconReport recon_report_from(const ingest::EmbeddingStore& docs, const ingest::EmbeddingStore& queries,
                              const ingest::EmbeddingStore& recon_docs, const ingest::EmbeddingStore& recon_queries,
                              const ingest::Qrels& qrels, std::size_t top_n) {
    if (queries.count() == 0) {
        throw ValidationError("recon_report: empty query set");
    }
    if (docs.dim() != queries.dim() || recon_docs.dim() != docs.dim() || recon_queries.dim() != docs.dim()) {
        throw ValidationError("recon_report: dim mismatch");
    }
    if (recon_docs.ids() != docs.ids() || recon_queries.ids() != queries.ids()) {
        throw ValidationError("recon_report: reconstructed stores must keep the original ids");
    }
    ReconReport report;
    report.top_n = std::min(top_n, docs.count());
    report.query_count = queries.count();

    const auto base_lists = dense_search(docs, queries, report.top_n);
    const auto recon_lists = dense_search(recon_docs, recon_queries, report.top_n);
    const auto base_eval = metrics::evaluate(to_run(base_lists), qrels);
    const auto recon_eval = metrics::evaluate(to_run(recon_lists), qrels);

    std::vector<double> rhos;
    rhos.reserve(base_lists.size());
    for (std::size_t q = 0; q < base_lists.size(); ++q) {
        if (base_lists[q].entries.size() < 2) {
            continue;
        }
        const auto qrow = recon_queries.row(q);
        rhos.push_back(spearman_fidelity(base_lists[q], [&](const std::string& doc_id) {
            return dot_f(qrow, recon_docs.row(recon_docs.find(doc_id)));
        }));
    }
    double mean = 0.0, var = 0.0;
    if (!rhos.empty()) {
        mean = std::accumulate(rhos.begin(), rhos.end(), 0.0) / static_cast<double>(rhos.size());
        for (const double r : rhos) {
            var += (r - mean) * (r - mean);
        }
        var /= static_cast<double>(rhos.size());
    }

    const Matrix h = sae::to_matrix(docs);
    ReconRow dense{"dense", 0.0, base_eval.mrr_at_10.mean, base_eval.recall_at_1000.mean, base_eval.ndcg_at_10.mean,
                   1.0, 0.0};
    ReconRow sae_row{"sae",
                     sae::nmse(h, sae::to_matrix(recon_docs)),
                     recon_eval.mrr_at_10.mean,
                     recon_eval.recall_at_1000.mean,
                     recon_eval.ndcg_at_10.mean,
                     mean,
                     var};
    ReconRow ratio_row{"ratio",
                       sae_row.nmse,
                       ratio(sae_row.mrr_at_10, dense.mrr_at_10),
                       ratio(sae_row.recall_at_1000, dense.recall_at_1000),
                       ratio(sae_row.ndcg_at_10, dense.ndcg_at_10),
                       mean,
                       var};
    report.rows = {dense, sae_row, ratio_row};
    return report;
}

std::string report_csv(const ReconReport& report, const std::string& digest) {
    std::string out;
    if (!digest.empty()) {
        out += "# config_digest=" + digest + "\n";
    }
    out += "model,nmse,mrr_at_10,recall_at_1000,ndcg_at_10,spearman_mean,spearman_var\n";
    char buf[256];
    for (const auto& r : report.rows) {
        std::snprintf(buf, sizeof(buf), "%s,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g\n", r.model.c_str(), r.nmse, r.mrr_at_10,
                      r.recall_at_1000, r.ndcg_at_10, r.spearman_mean, r.spearman_var);
        out += buf;
    }
    return out;
}

std::string report_table(const ReconReport& report) {
    std::string out;
    char buf[256];
    std::snprintf(buf, sizeof(buf), "%-6s %8s %10s %14s %10s %13s %12s\n", "model", "nmse", "mrr_at_10",
                  "recall_at_1000", "ndcg_at_10", "spearman_mean", "spearman_var");
    out += buf;
    for (const auto& r : report.rows) {
        std::snprintf(buf, sizeof(buf), "%-6s %8.4f %10.4f %14.4f %10.4f %13.4f %12.6f\n", r.model.c_str(), r.nmse,
                      r.mrr_at_10, r.recall_at_1000, r.ndcg_at_10, r.spearman_mean, r.spearman_var);
        out += buf;
    }
    return out;
}

}  // namespace latentir::recon
