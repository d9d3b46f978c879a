#include "latentir/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <set>

namespace latentir::metrics {

namespace {

/// Runs `per_query(qid, judgments, list-or-null)` over judged queries with a positive.
MetricValue aggregate(const Run& run, const ingest::Qrels& qrels,
                      const std::function<double(const std::map<std::string, int>&, const RankedList*)>& per_query) {
    MetricValue out;
    double sum = 0.0;
    for (const auto& [qid, judged] : qrels.entries()) {
        const bool has_positive =
            std::any_of(judged.begin(), judged.end(), [](const auto& kv) { return kv.second >= 1; });
        if (!has_positive) {
            ++out.skipped_no_relevant;
            continue;
        }
        const auto it = run.find(qid);
        const RankedList* list = it == run.end() ? nullptr : &it->second;
        if (list == nullptr) {
            ++out.missing_from_run;
        }
        const double v = list == nullptr ? 0.0 : per_query(judged, list);
        out.per_query.emplace(qid, v);
        sum += v;
    }
    out.mean = out.per_query.empty() ? 0.0 : sum / static_cast<double>(out.per_query.size());
    return out;
}

int grade_of(const std::map<std::string, int>& judged, const std::string& doc) {
    const auto it = judged.find(doc);
    return it == judged.end() ? 0 : it->second;
}

}  // namespace

MetricValue mrr_at_k(const Run& run, const ingest::Qrels& qrels, std::size_t k) {
    return aggregate(run, qrels, [k](const auto& judged, const RankedList* list) {
        const auto depth = std::min(k, list->entries.size());
        for (std::size_t r = 0; r < depth; ++r) {
            if (grade_of(judged, list->entries[r].doc_id) >= 1) {
                return 1.0 / static_cast<double>(r + 1);
            }
        }
        return 0.0;
    });
}

MetricValue recall_at_k(const Run& run, const ingest::Qrels& qrels, std::size_t k) {
    return aggregate(run, qrels, [k](const auto& judged, const RankedList* list) {
        std::size_t relevant = 0;
        for (const auto& [doc, g] : judged) {
            relevant += g >= 1 ? 1 : 0;
        }
        std::set<std::string> seen;
        std::size_t found = 0;
        const auto depth = std::min(k, list->entries.size());
        for (std::size_t r = 0; r < depth; ++r) {
            const auto& doc = list->entries[r].doc_id;
            if (grade_of(judged, doc) >= 1 && seen.insert(doc).second) {
                ++found;
            }
        }
        return static_cast<double>(found) / static_cast<double>(relevant);
    });
}

MetricValue ndcg_at_k(const Run& run, const ingest::Qrels& qrels, std::size_t k, Gain gain) {
    auto gain_of = [gain](int rel) {
        return gain == Gain::linear ? static_cast<double>(rel) : std::exp2(static_cast<double>(rel)) - 1.0;
    };
    return aggregate(run, qrels, [&](const auto& judged, const RankedList* list) {
        double dcg = 0.0;
        const auto depth = std::min(k, list->entries.size());
        for (std::size_t r = 0; r < depth; ++r) {
            dcg += gain_of(grade_of(judged, list->entries[r].doc_id)) / std::log2(static_cast<double>(r) + 2.0);
        }
        std::vector<int> ideal;
        for (const auto& [doc, g] : judged) {
            if (g > 0) {
                ideal.push_back(g);
            }
        }
        std::sort(ideal.begin(), ideal.end(), std::greater<>());
        double idcg = 0.0;
        for (std::size_t r = 0; r < std::min(k, ideal.size()); ++r) {
            idcg += gain_of(ideal[r]) / std::log2(static_cast<double>(r) + 2.0);
        }
        return idcg > 0.0 ? dcg / idcg : 0.0;
    });
}

EvalReport evaluate(const Run& run, const ingest::Qrels& qrels) {
    EvalReport r;
    r.mrr_at_10 = mrr_at_k(run, qrels, 10);
    r.recall_at_1000 = recall_at_k(run, qrels, 1000);
    r.ndcg_at_10 = ndcg_at_k(run, qrels, 10);
    r.query_count = r.mrr_at_10.per_query.size();
    return r;
}

}  // namespace latentir::metrics
