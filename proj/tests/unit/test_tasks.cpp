#include <gtest/gtest.h>

#include <algorithm>
#include <random>
#include <set>

#include <nlohmann/json.hpp>

#include "latentir/errors.hpp"
#include "latentir/tasks.hpp"
#include "support/oracles.hpp"
#include "support/tmpdir.hpp"

namespace latentir::tasks {
namespace {

constexpr std::uint32_t kM = 16;

struct World {
    ingest::Corpus corpus;
    ingest::QuerySet queries;
    std::vector<SparseCode> doc_codes;
    std::map<std::string, SparseCode> doc_map;
    std::map<std::string, SparseCode> query_map;
    concepts::StatsTable stats;
    DescriptionMap desc;
    Run run;
    ingest::Qrels qrels;
};

/// Random codes; each query ranks every doc by the number of shared latents, and three
/// of its docs (spread across the ranking) are marked relevant.
World make_world(std::size_t n_docs, std::size_t n_queries, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    World w;
    for (std::size_t i = 0; i < n_docs; ++i) {
        const auto id = "d" + std::to_string(1000 + i);
        w.corpus.add(id, "passage " + id);
        auto c = oracle::random_code(rng, kM, 5, id);
        if (c.empty()) {
            c = SparseCode{{0}, {1.0}, id};
        }
        w.doc_map[id] = c;
        w.doc_codes.push_back(std::move(c));
    }
    w.stats = concepts::compute_stats(w.doc_codes, kM, 5);
    for (std::uint32_t j = 0; j < kM; ++j) {
        w.desc[j] = "concept " + std::to_string(j);
    }
    for (std::size_t q = 0; q < n_queries; ++q) {
        const auto qid = "q" + std::to_string(q);
        w.queries.add(qid, "question " + qid);
        auto qc = oracle::random_code(rng, kM, 6, qid);
        if (qc.empty()) {
            qc = SparseCode{{1}, {1.0}, qid};
        }
        RankedList l{qid, {}};
        for (const auto& d : w.doc_codes) {
            double s = 0.0;
            for (const auto j : qc.indices) {
                s += d.activation(j) > 0.0 ? 1.0 : 0.0;
            }
            l.entries.push_back({d.origin_id, s + 1e-6 * std::uniform_real_distribution<double>(0, 1)(rng)});
        }
        std::sort(l.entries.begin(), l.entries.end(), ranks_before);
        w.query_map[qid] = qc;
        for (const std::size_t r : {std::size_t{0}, n_docs / 4, n_docs - 2}) {
            w.qrels.set(qid, l.entries[r].doc_id, 1);
        }
        w.qrels.set(qid, l.entries[1].doc_id, 0);
        w.run[qid] = std::move(l);
    }
    return w;
}

TEST(Names, RoundTrip) {
    for (const auto s : {PairSetting::RP_RP, PairSetting::RP_NRP, PairSetting::RN_NRP}) {
        EXPECT_EQ(parse_setting(to_string(s)), s);
    }
    EXPECT_EQ(parse_kind("embedding_id"), TaskKind::embedding_id);
    EXPECT_THROW((void)parse_kind("nope"), ValidationError);
    EXPECT_THROW((void)parse_setting("RP-RP"), ValidationError);
}

TEST(EmbeddingTasks, TenCandidatesOneCorrectNoRepeatedTarget) {
    const auto w = make_world(700, 1, 3);
    const auto tasks = export_embedding_tasks(w.corpus, w.doc_codes, w.stats, w.desc, 600, 8);
    ASSERT_EQ(tasks.size(), 600u);
    std::set<std::string> targets;
    std::set<std::string> task_ids;
    for (const auto& t : tasks) {
        ASSERT_EQ(t.candidates.size(), 10u);
        std::set<std::string> ids;
        for (const auto& c : t.candidates) {
            ids.insert(c.doc_id);
            EXPECT_EQ(c.text, "passage " + c.doc_id);
        }
        EXPECT_EQ(ids.size(), 10u);
        EXPECT_EQ(ids.count(t.answer), 1u);
        targets.insert(t.answer);
        task_ids.insert(t.task_id);
        // Every activated latent of the target is shown, idf-weighted and described.
        const auto& code = w.doc_map.at(t.answer);
        ASSERT_EQ(t.latents.size(), code.size());
        for (std::size_t i = 1; i < t.latents.size(); ++i) {
            EXPECT_GE(t.latents[i - 1].weighted, t.latents[i].weighted);
        }
        for (const auto& l : t.latents) {
            EXPECT_DOUBLE_EQ(l.weighted, code.activation(l.latent) * w.stats[l.latent].idf);
            EXPECT_EQ(l.description, w.desc.at(l.latent));
        }
    }
    EXPECT_EQ(targets.size(), 600u);
    EXPECT_EQ(task_ids.size(), 600u);
    EXPECT_EQ(export_embedding_tasks(w.corpus, w.doc_codes, w.stats, w.desc, 600, 8), tasks);
}

TEST(EmbeddingTasks, Validation) {
    const auto w = make_world(20, 1, 3);
    EXPECT_THROW((void)export_embedding_tasks(w.corpus, w.doc_codes, w.stats, w.desc, 21, 1), ValidationError);
    auto missing = w.desc;
    missing.erase(w.doc_codes[0].indices[0]);
    EXPECT_THROW((void)export_embedding_tasks(w.corpus, w.doc_codes, w.stats, missing, 20, 1), ValidationError);
    ingest::Corpus tiny;
    for (int i = 0; i < 9; ++i) {
        tiny.add("x" + std::to_string(i), "t");
    }
    EXPECT_THROW((void)export_embedding_tasks(tiny, w.doc_codes, w.stats, w.desc, 1, 1), ValidationError);
}

TEST(RankingPairs, CountsMatchEnumeration) {
    const auto w = make_world(60, 12, 5);
    for (const std::size_t cutoff : {1, 5, 15, 30, 59, 60}) {
        const auto got = count_pairs(w.run, w.qrels, cutoff);
        const auto expect = oracle::enumerate_pairs(w.run, w.qrels, cutoff);
        for (std::size_t s = 0; s < 3; ++s) {
            EXPECT_EQ(got[s], expect[s]) << "cutoff " << cutoff << " setting " << s;
        }
    }
    EXPECT_EQ(default_retrieved_cutoff(5000), 1000u);
    EXPECT_EQ(default_retrieved_cutoff(60), 30u);
    EXPECT_EQ(default_retrieved_cutoff(1), 1u);
}

TEST(RankingPairs, ExportAnswersFollowModelScore) {
    const auto w = make_world(60, 12, 5);
    const std::size_t cutoff = 10;
    const auto ex = export_ranking_tasks(w.run, w.qrels, w.corpus, w.queries, w.doc_map, w.query_map, w.stats, w.desc,
                                         {5, 40, 40}, cutoff, 4);
    const auto eligible = oracle::enumerate_pairs(w.run, w.qrels, cutoff);
    for (std::size_t s = 0; s < 3; ++s) {
        EXPECT_EQ(ex.eligible[s], eligible[s]);
    }
    std::map<std::string, std::size_t> per_setting;
    std::set<std::tuple<std::string, std::string, std::string>> seen;
    for (const auto& b : ex.bundles) {
        ASSERT_EQ(b.kind, TaskKind::ranking_pair);
        ASSERT_TRUE(b.setting.has_value());
        ASSERT_EQ(b.candidates.size(), 2u);
        ++per_setting[to_string(*b.setting)];
        const auto& list = w.run.at(b.query_id).entries;
        auto rank_of = [&](const std::string& id) {
            return std::find_if(list.begin(), list.end(), [&](const ScoredDoc& e) { return e.doc_id == id; }) -
                   list.begin();
        };
        const auto ra = rank_of(b.candidates[0].doc_id);
        const auto rb = rank_of(b.candidates[1].doc_id);
        EXPECT_EQ(b.answer, ra < rb ? b.candidates[0].doc_id : b.candidates[1].doc_id);
        const auto lo = std::min(b.candidates[0].doc_id, b.candidates[1].doc_id);
        const auto hi = std::max(b.candidates[0].doc_id, b.candidates[1].doc_id);
        EXPECT_TRUE(seen.emplace(b.query_id, lo, hi).second) << "pair sampled twice";

        const auto& qc = w.query_map.at(b.query_id);
        ASSERT_EQ(b.latents.size(), qc.size());
        for (const auto& c : b.candidates) {
            const auto& dc = w.doc_map.at(c.doc_id);
            ASSERT_EQ(c.latents.size(), dc.size());
            for (const auto& l : c.latents) {
                EXPECT_EQ(l.shared, qc.activation(l.latent) > 0.0);
            }
        }
        for (const auto& l : b.latents) {
            const bool in_any = w.doc_map.at(b.candidates[0].doc_id).activation(l.latent) > 0.0 ||
                                w.doc_map.at(b.candidates[1].doc_id).activation(l.latent) > 0.0;
            EXPECT_EQ(l.shared, in_any);
        }
        const auto pos = [&](const std::string& id) { return static_cast<std::size_t>(rank_of(id)) < cutoff; };
        const bool pa = w.qrels.grade(b.query_id, b.candidates[0].doc_id) >= 1;
        const bool pb = w.qrels.grade(b.query_id, b.candidates[1].doc_id) >= 1;
        switch (*b.setting) {
            case PairSetting::RP_RP:
                EXPECT_TRUE(pa && pb && pos(b.candidates[0].doc_id) && pos(b.candidates[1].doc_id));
                break;
            case PairSetting::RP_NRP:
                EXPECT_TRUE(pa && pb);
                EXPECT_NE(pos(b.candidates[0].doc_id), pos(b.candidates[1].doc_id));
                break;
            case PairSetting::RN_NRP:
                EXPECT_NE(pa, pb);
                break;
        }
    }
    for (std::size_t s = 0; s < 3; ++s) {
        const auto want = std::min<std::uint64_t>(std::array<std::uint64_t, 3>{5, 40, 40}[s], eligible[s]);
        EXPECT_EQ(per_setting[to_string(static_cast<PairSetting>(s))], want);
    }
}

TEST(RankingPairs, EmptySettingsReportedUnavailable) {
    // One positive per query: RP_RP can never be formed.
    World w = make_world(30, 4, 9);
    ingest::Qrels single;
    for (const auto& [qid, l] : w.run) {
        single.set(qid, l.entries[20].doc_id, 1);
    }
    const auto ex = export_ranking_tasks(w.run, single, w.corpus, w.queries, w.doc_map, w.query_map, w.stats, w.desc,
                                         {10, 10, 10}, 5, 1);
    EXPECT_EQ(ex.eligible[0], 0u);
    EXPECT_EQ(ex.eligible[1], 0u);
    EXPECT_EQ(ex.unavailable, (std::vector<PairSetting>{PairSetting::RP_RP, PairSetting::RP_NRP}));
    EXPECT_EQ(ex.bundles.size(), 10u);
    EXPECT_THROW((void)export_ranking_tasks(w.run, single, w.corpus, w.queries, w.doc_map, w.query_map, w.stats,
                                            w.desc, {1, 1, 1}, 0, 1),
                 ValidationError);
}

TEST(Json, AnswerOnlyWhenRequestedAndRoundTrip) {
    const auto w = make_world(40, 6, 2);
    auto bundles = export_embedding_tasks(w.corpus, w.doc_codes, w.stats, w.desc, 5, 1);
    const auto rk = export_ranking_tasks(w.run, w.qrels, w.corpus, w.queries, w.doc_map, w.query_map, w.stats, w.desc,
                                         {2, 2, 2}, 8, 1);
    bundles.insert(bundles.end(), rk.bundles.begin(), rk.bundles.end());
    for (const auto& b : bundles) {
        const auto hidden = nlohmann::json::parse(bundle_json(b, false));
        EXPECT_FALSE(hidden.contains("answer"));
        EXPECT_EQ(bundle_json(b, false).find(R"("answer")"), std::string::npos);
        EXPECT_EQ(nlohmann::json::parse(bundle_json(b, true)).at("answer"), b.answer);
    }
    EXPECT_EQ(parse_bundles(bundles_json(bundles, true, "dg"), "mem"), bundles);
    EXPECT_EQ(nlohmann::json::parse(bundles_json(bundles, true, "dg")).at("config_digest"), "dg");
}

TEST(Annotations, ScoringGroupsBySetting) {
    const auto w = make_world(40, 6, 2);
    auto bundles = export_embedding_tasks(w.corpus, w.doc_codes, w.stats, w.desc, 4, 1);
    const auto rk = export_ranking_tasks(w.run, w.qrels, w.corpus, w.queries, w.doc_map, w.query_map, w.stats, w.desc,
                                         {0, 3, 0}, 8, 1);
    bundles.insert(bundles.end(), rk.bundles.begin(), rk.bundles.end());
    std::vector<Annotation> anns;
    for (std::size_t i = 0; i < bundles.size(); ++i) {
        const auto& b = bundles[i];
        const auto wrong = b.candidates[0].doc_id == b.answer ? b.candidates[1].doc_id : b.candidates[0].doc_id;
        anns.push_back({b.task_id, "ann", i % 2 == 0 ? b.answer : wrong, "t", false});
    }
    const auto scores = score_annotations(anns, bundles);
    EXPECT_EQ(scores.at("embedding_id").total, 4u);
    EXPECT_EQ(scores.at("embedding_id").correct, 2u);
    EXPECT_EQ(scores.at("ranking_pair/RP_NRP").total, 3u);
    EXPECT_EQ(scores.count("ranking_pair/RP_RP"), 0u);
    EXPECT_TRUE(score_annotations({}, bundles).empty());
    EXPECT_THROW((void)score_annotations({{"nope", "a", "x", "t", false}}, bundles), ValidationError);
}

TEST(Annotations, StoreRejectsDuplicatesAndPersists) {
    test::TempDir dir;
    const auto w = make_world(40, 1, 2);
    const auto bundles = export_embedding_tasks(w.corpus, w.doc_codes, w.stats, w.desc, 3, 1);
    const auto path = dir.file("ann.jsonl");
    {
        AnnotationStore store(path, bundles);
        const auto a = store.record(bundles[0].task_id, "alice", bundles[0].answer);
        EXPECT_TRUE(a.correct);
        EXPECT_EQ(a.timestamp.size(), 20u);
        EXPECT_EQ(a.timestamp.back(), 'Z');
        EXPECT_THROW((void)store.record(bundles[0].task_id, "alice", bundles[0].answer), DuplicateAnnotation);
        EXPECT_THROW((void)store.record("emb-9999", "alice", "x"), UnknownTask);
        EXPECT_THROW((void)store.record(bundles[1].task_id, "alice", "not-a-candidate"), ValidationError);
        EXPECT_THROW((void)store.record(bundles[1].task_id, "", bundles[1].answer), ValidationError);
        (void)store.record(bundles[0].task_id, "bob", bundles[0].candidates[0].doc_id);
    }
    AnnotationStore reopened(path, bundles);
    EXPECT_EQ(reopened.all().size(), 2u);
    EXPECT_TRUE(reopened.answered(bundles[0].task_id, "bob"));
    EXPECT_FALSE(reopened.answered(bundles[1].task_id, "bob"));
    EXPECT_THROW((void)reopened.record(bundles[0].task_id, "alice", bundles[0].answer), DuplicateAnnotation);
    EXPECT_EQ(read_annotations(path), reopened.all());
}

}  // namespace
}  // namespace latentir::tasks
