#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "latentir/errors.hpp"
#include "latentir/recon_eval.hpp"
#include "support/oracles.hpp"

namespace latentir::recon {
namespace {

ingest::EmbeddingStore random_store(std::mt19937_64& rng, std::size_t n, std::uint32_t d, const std::string& prefix) {
    std::normal_distribution<float> g(0.0f, 1.0f);
    ingest::EmbeddingStore s(d);
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<float> row(d);
        for (auto& x : row) {
            x = g(rng);
        }
        s.add(prefix + std::to_string(i), row);
    }
    return s;
}

TEST(DenseSearch, MatchesBruteForce) {
    std::mt19937_64 rng(2);
    const auto docs = random_store(rng, 120, 6, "d");
    const auto queries = random_store(rng, 10, 6, "q");
    const auto lists = dense_search(docs, queries, 15);
    ASSERT_EQ(lists.size(), 10u);
    for (std::size_t q = 0; q < 10; ++q) {
        std::vector<ScoredDoc> all;
        for (std::size_t d = 0; d < docs.count(); ++d) {
            double s = 0.0;
            for (std::size_t j = 0; j < 6; ++j) {
                s += static_cast<double>(docs.row(d)[j]) * queries.row(q)[j];
            }
            all.push_back({docs.ids()[d], s});
        }
        std::sort(all.begin(), all.end(), ranks_before);
        all.resize(15);
        EXPECT_EQ(lists[q].query_id, queries.ids()[q]);
        ASSERT_EQ(lists[q].entries.size(), 15u);
        for (std::size_t i = 0; i < 15; ++i) {
            EXPECT_EQ(lists[q].entries[i].doc_id, all[i].doc_id);
            EXPECT_NEAR(lists[q].entries[i].score, all[i].score, 1e-9);
        }
    }
    EXPECT_EQ(dense_search(docs, queries, 5000)[0].entries.size(), 120u);
}

TEST(DenseSearch, TiesGoToSmallerId) {
    ingest::EmbeddingStore docs(1);
    docs.add("b", std::vector<float>{1.0f});
    docs.add("a", std::vector<float>{1.0f});
    ingest::EmbeddingStore qs(1);
    qs.add("q", std::vector<float>{1.0f});
    const auto l = dense_search(docs, qs, 2)[0];
    EXPECT_EQ(l.entries[0].doc_id, "a");
}

TEST(Spearman, KnownValues) {
    EXPECT_NEAR(spearman({1, 2, 3, 4}, {1, 2, 4, 3}), 0.8, 1e-12);
    EXPECT_NEAR(spearman({1, 2, 3, 4, 5}, {5, 4, 3, 2, 1}), -1.0, 1e-12);
    // Average ranks for ties: ranks (1.5,1.5,3) vs (1,2,3) -> rho = sqrt(3)/2.
    EXPECT_NEAR(spearman({1, 1, 2}, {1, 2, 3}), std::sqrt(3.0) / 2.0, 1e-12);
    EXPECT_EQ(spearman({2, 2, 2}, {5, 5, 5}), 1.0);
    EXPECT_EQ(spearman({2, 2, 2}, {1, 2, 3}), 0.0);
    EXPECT_THROW((void)spearman({1}, {1}), ValidationError);
    EXPECT_THROW((void)spearman({1, 2}, {1, 2, 3}), ValidationError);
}

TEST(Spearman, RandomAgainstClosedFormAndMonotoneInvariance) {
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> u(-5.0, 5.0);
    for (int t = 0; t < 50; ++t) {
        std::vector<double> a(12), b(12);
        for (std::size_t i = 0; i < 12; ++i) {
            a[i] = u(rng);
            b[i] = u(rng);
        }
        EXPECT_NEAR(spearman(a, b), oracle::spearman_no_ties(a, b), 1e-12);
        auto b2 = b;
        for (auto& x : b2) {
            x = std::exp(x) * 3.0 + 1.0;
        }
        EXPECT_NEAR(spearman(a, b2), spearman(a, b), 1e-12);
    }
}

TEST(SpearmanFidelity, RescoresOriginalList) {
    const RankedList l{"q", {{"a", 3.0}, {"b", 2.0}, {"c", 1.0}}};
    EXPECT_NEAR(spearman_fidelity(l, [](const std::string& id) { return id == "a" ? 1.0 : id == "b" ? 2.0 : 3.0; }),
                -1.0, 1e-12);
    EXPECT_THROW((void)spearman_fidelity(RankedList{"q", {{"a", 1.0}}}, [](const std::string&) { return 0.0; }),
                 ValidationError);
}

TEST(Report, IdenticalStoresGiveUnitRatios) {
    std::mt19937_64 rng(5);
    const auto docs = random_store(rng, 50, 4, "d");
    const auto queries = random_store(rng, 8, 4, "q");
    ingest::Qrels qrels;
    for (std::size_t i = 0; i < 8; ++i) {
        qrels.set(queries.ids()[i], "d" + std::to_string(i * 3), 1);
    }
    const auto r = recon_report_from(docs, queries, docs, queries, qrels, 20);
    ASSERT_EQ(r.rows.size(), 3u);
    EXPECT_EQ(r.rows[0].model, "dense");
    EXPECT_EQ(r.rows[2].model, "ratio");
    EXPECT_EQ(r.rows[1].nmse, 0.0);
    EXPECT_EQ(r.rows[2].mrr_at_10, 1.0);
    EXPECT_EQ(r.rows[2].recall_at_1000, 1.0);
    EXPECT_NEAR(r.rows[1].spearman_mean, 1.0, 1e-12);
    EXPECT_EQ(r.top_n, 20u);

    const auto csv = report_csv(r, "abc");
    EXPECT_EQ(csv.rfind("# config_digest=abc\nmodel,nmse,mrr_at_10,recall_at_1000,ndcg_at_10,spearman_mean,spearman_var\n", 0),
              0u);
    EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 5);
}

TEST(Report, RejectsEmptyQueriesAndDimMismatch) {
    std::mt19937_64 rng(5);
    const auto docs = random_store(rng, 10, 4, "d");
    const auto other = random_store(rng, 3, 5, "q");
    EXPECT_THROW((void)recon_report_from(docs, other, docs, other, {}, 5), ValidationError);
    EXPECT_THROW((void)recon_report_from(docs, ingest::EmbeddingStore(4), docs, ingest::EmbeddingStore(4), {}, 5),
                 ValidationError);
}

}  // namespace
}  // namespace latentir::recon
