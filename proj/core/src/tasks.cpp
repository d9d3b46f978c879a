#include "latentir/tasks.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <numeric>
#include <random>
#include <set>

#include <nlohmann/json.hpp>

#include "binary_io.hpp"
#include "latentir/errors.hpp"

namespace latentir::tasks {

namespace {

using nlohmann::json;

constexpr std::array<PairSetting, 3> kSettings = {PairSetting::RP_RP, PairSetting::RP_NRP, PairSetting::RN_NRP};

std::string task_id(std::string_view prefix, std::size_t n) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*s-%04zu", static_cast<int>(prefix.size()), prefix.data(), n);
    return buf;
}

std::vector<ShownLatent> shown(const SparseCode& code, const concepts::StatsTable& stats,
                               const DescriptionMap& descriptions, const SparseCode* other = nullptr) {
    std::vector<ShownLatent> out;
    for (const auto& w : concepts::idf_weighted(code, stats)) {
        const auto it = descriptions.find(w.latent);
        if (it == descriptions.end()) {
            throw ValidationError("no description for latent " + std::to_string(w.latent) + " (run `describe` first)");
        }
        out.push_back(ShownLatent{w.latent, w.weighted, it->second, other != nullptr && other->activation(w.latent) > 0.0});
    }
    return out;
}

/// The three doc groups of one query.
struct QueryGroups {
    std::string qid;
    std::vector<std::size_t> rp, nrp, rn;  // positions in the run list
};

std::vector<QueryGroups> group_queries(const Run& run, const ingest::Qrels& qrels, std::size_t cutoff) {
    std::vector<QueryGroups> out;
    for (const auto& [qid, list] : run) {
        const auto* judged = qrels.judgments(qid);
        if (judged == nullptr) {
            continue;
        }
        QueryGroups g;
        g.qid = qid;
        for (std::size_t r = 0; r < list.entries.size(); ++r) {
            const auto it = judged->find(list.entries[r].doc_id);
            const bool positive = it != judged->end() && it->second >= 1;
            const bool retrieved = r < cutoff;
            if (positive) {
                (retrieved ? g.rp : g.nrp).push_back(r);
            } else if (retrieved) {
                g.rn.push_back(r);
            }
        }
        out.push_back(std::move(g));
    }
    return out;
}

std::uint64_t pairs_in(const QueryGroups& g, PairSetting s) {
    switch (s) {
        case PairSetting::RP_RP:
            return g.rp.size() < 2 ? 0 : static_cast<std::uint64_t>(g.rp.size()) * (g.rp.size() - 1) / 2;
        case PairSetting::RP_NRP:
            return static_cast<std::uint64_t>(g.rp.size()) * g.nrp.size();
        case PairSetting::RN_NRP:
            return static_cast<std::uint64_t>(g.rn.size()) * g.nrp.size();
    }
    return 0;
}

/// Run positions (a, b) of the `idx`-th pair of setting `s` within `g`.
std::pair<std::size_t, std::size_t> decode_pair(const QueryGroups& g, PairSetting s, std::uint64_t idx) {
    if (s == PairSetting::RP_RP) {
        const std::uint64_t n = g.rp.size();
        for (std::uint64_t a = 0; a < n; ++a) {
            const std::uint64_t row = n - 1 - a;
            if (idx < row) {
                return {g.rp[a], g.rp[a + 1 + idx]};
            }
            idx -= row;
        }
    }
    const auto& first = s == PairSetting::RP_NRP ? g.rp : g.rn;
    return {first[idx / g.nrp.size()], g.nrp[idx % g.nrp.size()]};
}

std::string utc_now() {
    const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

json latents_json(const std::vector<ShownLatent>& latents, bool with_shared) {
    json arr = json::array();
    for (const auto& l : latents) {
        json j = {{"latent_id", l.latent}, {"weighted_activation", l.weighted}, {"description", l.description}};
        if (with_shared) {
            j["shared"] = l.shared;
        }
        arr.push_back(std::move(j));
    }
    return arr;
}

std::vector<ShownLatent> latents_from(const json& arr) {
    std::vector<ShownLatent> out;
    for (const auto& j : arr) {
        out.push_back(ShownLatent{j.at("latent_id").get<std::uint32_t>(), j.at("weighted_activation").get<double>(),
                                  j.at("description").get<std::string>(), j.value("shared", false)});
    }
    return out;
}

json annotation_json(const Annotation& a) {
    return {{"task_id", a.task_id},
            {"annotator_id", a.annotator_id},
            {"choice", a.choice},
            {"timestamp", a.timestamp},
            {"correct", a.correct}};
}

}  // namespace

std::string to_string(TaskKind kind) { return kind == TaskKind::embedding_id ? "embedding_id" : "ranking_pair"; }

std::string to_string(PairSetting setting) {
    switch (setting) {
        case PairSetting::RP_RP:
            return "RP_RP";
        case PairSetting::RP_NRP:
            return "RP_NRP";
        case PairSetting::RN_NRP:
            return "RN_NRP";
    }
    return "?";
}

TaskKind parse_kind(const std::string& s) {
    if (s == "embedding_id") {
        return TaskKind::embedding_id;
    }
    if (s == "ranking_pair") {
        return TaskKind::ranking_pair;
    }
    throw ValidationError("unknown task kind '" + s + "' (embedding_id or ranking_pair)");
}

PairSetting parse_setting(const std::string& s) {
    for (const auto p : kSettings) {
        if (to_string(p) == s) {
            return p;
        }
    }
    throw ValidationError("unknown pair setting '" + s + "' (RP_RP, RP_NRP or RN_NRP)");
}

bool TaskBundle::has_option(const std::string& doc_id) const {
    return std::any_of(candidates.begin(), candidates.end(), [&](const Candidate& c) { return c.doc_id == doc_id; });
}

DescriptionMap description_map(const std::vector<concepts::LatentDescription>& descriptions) {
    DescriptionMap out;
    for (const auto& d : descriptions) {
        out[d.latent] = d.text;
    }
    return out;
}

std::vector<TaskBundle> export_embedding_tasks(const ingest::Corpus& corpus, const std::vector<SparseCode>& doc_codes,
                                               const concepts::StatsTable& stats, const DescriptionMap& descriptions,
                                               std::size_t n_tasks, std::uint64_t seed) {
    if (corpus.size() < 10) {
        throw ValidationError("embedding tasks need at least 10 passages, corpus has " + std::to_string(corpus.size()));
    }
    std::map<std::string, const SparseCode*> code_of;
    for (const auto& c : doc_codes) {
        code_of[c.origin_id] = &c;
    }
    std::vector<std::size_t> eligible;
    for (std::size_t i = 0; i < corpus.size(); ++i) {
        const auto it = code_of.find(corpus[i].id);
        if (it != code_of.end() && !it->second->empty()) {
            eligible.push_back(i);
        }
    }
    if (n_tasks > eligible.size()) {
        throw ValidationError("requested " + std::to_string(n_tasks) + " embedding tasks but only " +
                              std::to_string(eligible.size()) + " passages have an activated latent");
    }
    std::mt19937_64 rng(seed);
    std::shuffle(eligible.begin(), eligible.end(), rng);
    std::vector<TaskBundle> out;
    std::vector<std::size_t> others(corpus.size() - 1);
    for (std::size_t t = 0; t < n_tasks; ++t) {
        const auto target = eligible[t];
        TaskBundle b;
        b.task_id = task_id("emb", t);
        b.kind = TaskKind::embedding_id;
        b.latents = shown(*code_of.at(corpus[target].id), stats, descriptions);
        std::iota(others.begin(), others.begin() + static_cast<std::ptrdiff_t>(target), 0);
        std::iota(others.begin() + static_cast<std::ptrdiff_t>(target), others.end(), target + 1);
        // Partial Fisher-Yates: first 9 slots become the distractors.
        for (std::size_t i = 0; i < 9; ++i) {
            const auto j = std::uniform_int_distribution<std::size_t>(i, others.size() - 1)(rng);
            std::swap(others[i], others[j]);
        }
        std::vector<std::size_t> picks(others.begin(), others.begin() + 9);
        picks.push_back(target);
        std::shuffle(picks.begin(), picks.end(), rng);
        for (const auto p : picks) {
            b.candidates.push_back(Candidate{corpus[p].id, corpus[p].text, {}});
        }
        b.answer = corpus[target].id;
        out.push_back(std::move(b));
    }
    return out;
}

std::size_t default_retrieved_cutoff(std::size_t n_docs) { return std::max<std::size_t>(1, std::min<std::size_t>(1000, n_docs / 2)); }

PairCounts count_pairs(const Run& run, const ingest::Qrels& qrels, std::size_t cutoff) {
    PairCounts counts{};
    for (const auto& g : group_queries(run, qrels, cutoff)) {
        for (const auto s : kSettings) {
            counts[static_cast<std::size_t>(s)] += pairs_in(g, s);
        }
    }
    return counts;
}

RankingExport export_ranking_tasks(const Run& run, const ingest::Qrels& qrels, const ingest::Corpus& corpus,
                                   const ingest::QuerySet& queries, const std::map<std::string, SparseCode>& doc_codes,
                                   const std::map<std::string, SparseCode>& query_codes,
                                   const concepts::StatsTable& stats, const DescriptionMap& descriptions,
                                   const PairCounts& per_setting, std::size_t cutoff, std::uint64_t seed) {
    if (cutoff == 0) {
        throw ValidationError("retrieved cutoff must be >= 1");
    }
    const auto groups = group_queries(run, qrels, cutoff);
    RankingExport out;
    std::mt19937_64 rng(seed);
    for (const auto s : kSettings) {
        std::vector<std::uint64_t> offsets;  // prefix sums over groups
        std::uint64_t total = 0;
        for (const auto& g : groups) {
            offsets.push_back(total);
            total += pairs_in(g, s);
        }
        out.eligible[static_cast<std::size_t>(s)] = total;
        if (total == 0) {
            out.unavailable.push_back(s);
            continue;
        }
        const auto want = std::min<std::uint64_t>(per_setting[static_cast<std::size_t>(s)], total);
        std::set<std::uint64_t> chosen;
        if (want * 2 >= total) {
            std::vector<std::uint64_t> all(total);
            std::iota(all.begin(), all.end(), 0);
            std::shuffle(all.begin(), all.end(), rng);
            chosen.insert(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(want));
        } else {
            std::uniform_int_distribution<std::uint64_t> pick(0, total - 1);
            while (chosen.size() < want) {
                chosen.insert(pick(rng));
            }
        }
        std::size_t n = 0;
        for (const auto flat : chosen) {
            const auto gi = static_cast<std::size_t>(std::upper_bound(offsets.begin(), offsets.end(), flat) -
                                                     offsets.begin() - 1);
            const auto& g = groups[gi];
            const auto [ra, rb] = decode_pair(g, s, flat - offsets[gi]);
            const auto& list = run.at(g.qid).entries;
            const auto qpos = queries.find(g.qid);
            const auto qcode = query_codes.find(g.qid);
            if (qpos == ingest::QuerySet::npos || qcode == query_codes.end()) {
                throw ValidationError("ranking tasks: query '" + g.qid + "' lacks text or code");
            }
            TaskBundle b;
            b.task_id = task_id("rank-" + to_string(s), n++);
            b.kind = TaskKind::ranking_pair;
            b.setting = s;
            b.query_id = g.qid;
            b.query_text = queries[qpos].text;
            b.retrieved_cutoff = cutoff;
            b.latents = shown(qcode->second, stats, descriptions);
            std::array<std::size_t, 2> ranks = {ra, rb};
            if (std::uniform_int_distribution<int>(0, 1)(rng) == 1) {
                std::swap(ranks[0], ranks[1]);
            }
            for (const auto r : ranks) {
                const auto& doc_id = list[r].doc_id;
                const auto dpos = corpus.find(doc_id);
                const auto dcode = doc_codes.find(doc_id);
                if (dpos == ingest::Corpus::npos || dcode == doc_codes.end()) {
                    throw ValidationError("ranking tasks: doc '" + doc_id + "' lacks text or code");
                }
                b.candidates.push_back(
                    Candidate{doc_id, corpus[dpos].text, shown(dcode->second, stats, descriptions, &qcode->second)});
            }
            for (auto& l : b.latents) {
                l.shared = std::any_of(b.candidates.begin(), b.candidates.end(), [&](const Candidate& c) {
                    return std::any_of(c.latents.begin(), c.latents.end(),
                                       [&](const ShownLatent& d) { return d.latent == l.latent; });
                });
            }
            b.answer = list[std::min(ra, rb)].doc_id;
            out.bundles.push_back(std::move(b));
        }
    }
    return out;
}

std::string bundle_json(const TaskBundle& b, bool with_answer, int indent) {
    json j = {{"task_id", b.task_id}, {"kind", to_string(b.kind)}};
    const bool ranking = b.kind == TaskKind::ranking_pair;
    if (ranking) {
        j["pair_setting"] = b.setting ? json(to_string(*b.setting)) : json(nullptr);
        j["query_id"] = b.query_id;
        j["query_text"] = b.query_text;
        j["retrieved_cutoff"] = b.retrieved_cutoff;
        j["query_latents"] = latents_json(b.latents, true);
    } else {
        j["target_latents"] = latents_json(b.latents, false);
    }
    json cands = json::array();
    for (const auto& c : b.candidates) {
        json cj = {{"doc_id", c.doc_id}, {"text", c.text}};
        if (ranking) {
            cj["latents"] = latents_json(c.latents, true);
        }
        cands.push_back(std::move(cj));
    }
    j["candidates"] = std::move(cands);
    if (with_answer) {
        j["answer"] = b.answer;
    }
    return j.dump(indent);
}

std::string bundles_json(const std::vector<TaskBundle>& bundles, bool with_answer, const std::string& digest) {
    json arr = json::array();
    for (const auto& b : bundles) {
        arr.push_back(json::parse(bundle_json(b, with_answer)));
    }
    return json{{"config_digest", digest}, {"bundles", std::move(arr)}}.dump(1);
}

std::vector<TaskBundle> parse_bundles(std::string_view json_text, const std::string& source) {
    std::vector<TaskBundle> out;
    try {
        const auto doc = json::parse(json_text);
        const auto& arr = doc.is_object() ? doc.at("bundles") : doc;
        for (const auto& j : arr) {
            TaskBundle b;
            b.task_id = j.at("task_id").get<std::string>();
            b.kind = parse_kind(j.at("kind").get<std::string>());
            if (b.kind == TaskKind::ranking_pair) {
                if (!j.at("pair_setting").is_null()) {
                    b.setting = parse_setting(j["pair_setting"].get<std::string>());
                }
                b.query_id = j.at("query_id").get<std::string>();
                b.query_text = j.at("query_text").get<std::string>();
                b.retrieved_cutoff = j.at("retrieved_cutoff").get<std::size_t>();
                b.latents = latents_from(j.at("query_latents"));
            } else {
                b.latents = latents_from(j.at("target_latents"));
            }
            for (const auto& c : j.at("candidates")) {
                b.candidates.push_back(Candidate{c.at("doc_id").get<std::string>(), c.at("text").get<std::string>(),
                                                 c.contains("latents") ? latents_from(c["latents"])
                                                                       : std::vector<ShownLatent>{}});
            }
            b.answer = j.value("answer", std::string{});
            out.push_back(std::move(b));
        }
    } catch (const json::exception& e) {
        throw ParseError(source, 1, e.what());
    }
    return out;
}

std::map<std::string, GroupScore> score_annotations(const std::vector<Annotation>& annotations,
                                                    const std::vector<TaskBundle>& bundles) {
    std::map<std::string, const TaskBundle*> by_id;
    for (const auto& b : bundles) {
        by_id[b.task_id] = &b;
    }
    std::map<std::string, GroupScore> out;
    for (const auto& a : annotations) {
        const auto it = by_id.find(a.task_id);
        if (it == by_id.end()) {
            throw ValidationError("annotation references unknown task '" + a.task_id + "'");
        }
        const auto& b = *it->second;
        auto key = to_string(b.kind);
        if (b.setting) {
            key += "/" + to_string(*b.setting);
        }
        auto& g = out[key];
        ++g.total;
        g.correct += a.choice == b.answer ? 1 : 0;
    }
    for (auto& [key, g] : out) {
        g.accuracy = static_cast<double>(g.correct) / static_cast<double>(g.total);
    }
    return out;
}

AnnotationStore::AnnotationStore(std::string path, const std::vector<TaskBundle>& bundles)
    : path_(std::move(path)), bundles_(bundles) {
    for (const auto& b : bundles_) {
        by_id_[b.task_id] = &b;
    }
    if (std::ifstream probe(path_); probe) {
        records_ = read_annotations(path_);
    }
}

Annotation AnnotationStore::record(const std::string& task_id, const std::string& annotator_id,
                                   const std::string& choice) {
    const auto it = by_id_.find(task_id);
    if (it == by_id_.end()) {
        throw UnknownTask("unknown task '" + task_id + "'");
    }
    if (annotator_id.empty()) {
        throw ValidationError("annotator id must not be empty");
    }
    if (!it->second->has_option(choice)) {
        throw ValidationError("choice '" + choice + "' is not a candidate of task " + task_id);
    }
    std::lock_guard lock(mu_);
    for (const auto& r : records_) {
        if (r.task_id == task_id && r.annotator_id == annotator_id) {
            throw DuplicateAnnotation("annotator '" + annotator_id + "' already answered " + task_id);
        }
    }
    Annotation a{task_id, annotator_id, choice, utc_now(), choice == it->second->answer};
    std::ofstream out(path_, std::ios::app);
    out << annotation_json(a).dump() << '\n';
    out.flush();
    if (!out) {
        throw std::runtime_error("cannot append to " + path_);
    }
    records_.push_back(a);
    return a;
}

std::vector<Annotation> AnnotationStore::all() const {
    std::lock_guard lock(mu_);
    return records_;
}

bool AnnotationStore::answered(const std::string& task_id, const std::string& annotator_id) const {
    std::lock_guard lock(mu_);
    return std::any_of(records_.begin(), records_.end(), [&](const Annotation& a) {
        return a.task_id == task_id && a.annotator_id == annotator_id;
    });
}

void write_annotations(const std::vector<Annotation>& annotations, const std::string& path) {
    std::string out;
    for (const auto& a : annotations) {
        out += annotation_json(a).dump() + "\n";
    }
    detail::write_file_bytes(path, out);
}

std::vector<Annotation> read_annotations(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw ValidationError("cannot open " + path);
    }
    std::vector<Annotation> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) {
            continue;
        }
        try {
            const auto j = json::parse(line);
            out.push_back(Annotation{j.at("task_id").get<std::string>(), j.at("annotator_id").get<std::string>(),
                                     j.at("choice").get<std::string>(), j.at("timestamp").get<std::string>(),
                                     j.at("correct").get<bool>()});
        } catch (const json::exception& e) {
            throw ParseError(path, line_no, e.what());
        }
    }
    return out;
}

}  // namespace latentir::tasks
