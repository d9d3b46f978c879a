#include "latentir/concepts.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <numeric>
#include <thread>
#include <unordered_map>

#include <nlohmann/json.hpp>

#include "binary_io.hpp"
#include "latentir/errors.hpp"
#include "latentir/hash.hpp"
#include "latentir/lexical.hpp"
#include "latentir/prompts.hpp"

namespace latentir::concepts {

namespace {

using nlohmann::json;

bool by_activation(const ScoredDoc& a, const ScoredDoc& b) { return ranks_before(a, b); }

template <typename Fn>
void for_each_jsonl(const std::string& path, Fn&& fn) {
    std::ifstream in(path);
    if (!in) {
        throw ValidationError("cannot open " + path);
    }
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line[0] == '#' || line.find_first_not_of(" \t\r") == std::string::npos) {
            continue;
        }
        try {
            fn(json::parse(line));
        } catch (const json::exception& e) {
            throw ParseError(path, line_no, e.what());
        }
    }
}

std::map<std::string, double> token_vector(const std::string& text) {
    std::map<std::string, double> v;
    for (const auto& t : lexical::tokenize(text)) {
        v[t] += 1.0;
    }
    return v;
}

double cosine(const std::map<std::string, double>& a, const std::map<std::string, double>& b) {
    double ab = 0.0, aa = 0.0, bb = 0.0;
    for (const auto& [t, x] : a) {
        aa += x * x;
        if (const auto it = b.find(t); it != b.end()) {
            ab += x * it->second;
        }
    }
    for (const auto& [t, y] : b) {
        bb += y * y;
    }
    return aa == 0.0 || bb == 0.0 ? 0.0 : ab / std::sqrt(aa * bb);
}

}  // namespace

double latent_idf(std::size_t n_docs, std::size_t df) {
    if (n_docs == 0) {
        throw ValidationError("latent_idf: empty corpus");
    }
    return std::log(static_cast<double>(n_docs) / (1.0 + static_cast<double>(df)));
}

StatsTable compute_stats(const std::vector<SparseCode>& doc_codes, std::uint32_t m, std::size_t top_capacity) {
    if (doc_codes.empty()) {
        throw ValidationError("compute_stats: no documents");
    }
    StatsTable stats(m);
    std::vector<std::vector<ScoredDoc>> fired(m);
    for (const auto& code : doc_codes) {
        code.check();
        for (std::size_t n = 0; n < code.size(); ++n) {
            const auto j = code.indices[n];
            if (j >= m) {
                throw ValidationError("compute_stats: latent " + std::to_string(j) + " >= m");
            }
            fired[j].push_back(ScoredDoc{code.origin_id, code.values[n]});
        }
    }
    for (std::uint32_t j = 0; j < m; ++j) {
        auto& s = stats[j];
        s.latent = j;
        s.df = fired[j].size();
        s.idf = latent_idf(doc_codes.size(), s.df);
        const auto keep = std::min(top_capacity, fired[j].size());
        std::partial_sort(fired[j].begin(), fired[j].begin() + static_cast<std::ptrdiff_t>(keep), fired[j].end(),
                          by_activation);
        s.top_passages.assign(fired[j].begin(), fired[j].begin() + static_cast<std::ptrdiff_t>(keep));
    }
    return stats;
}

std::vector<WeightedLatent> idf_weighted(const SparseCode& code, const StatsTable& stats) {
    std::vector<WeightedLatent> out;
    out.reserve(code.size());
    for (std::size_t n = 0; n < code.size(); ++n) {
        const auto j = code.indices[n];
        if (j >= stats.size()) {
            throw ValidationError("idf_weighted: no stats for latent " + std::to_string(j));
        }
        out.push_back(WeightedLatent{j, code.values[n], code.values[n] * stats[j].idf});
    }
    std::stable_sort(out.begin(), out.end(),
                     [](const WeightedLatent& a, const WeightedLatent& b) { return a.weighted > b.weighted; });
    return out;
}

std::vector<ScoredDoc> top_activating(const std::vector<SparseCode>& doc_codes, std::uint32_t latent, std::size_t n) {
    std::vector<ScoredDoc> fired;
    for (const auto& code : doc_codes) {
        const double a = code.activation(latent);
        if (a > 0.0) {
            fired.push_back(ScoredDoc{code.origin_id, a});
        }
    }
    const auto keep = std::min(n, fired.size());
    std::partial_sort(fired.begin(), fired.begin() + static_cast<std::ptrdiff_t>(keep), fired.end(), by_activation);
    fired.resize(keep);
    return fired;
}

void write_stats(const StatsTable& stats, const std::string& path, const std::string& digest) {
    std::string out;
    if (!digest.empty()) {
        out += json{{"config_digest", digest}}.dump() + "\n";
    }
    for (const auto& s : stats) {
        json top = json::array();
        for (const auto& p : s.top_passages) {
            top.push_back({p.doc_id, p.score});
        }
        out += json{{"latent_id", s.latent}, {"df", s.df}, {"idf", s.idf}, {"top_passages", top}}.dump() + "\n";
    }
    detail::write_file_bytes(path, out);
}

StatsTable read_stats(const std::string& path) {
    StatsTable stats;
    for_each_jsonl(path, [&](const json& j) {
        if (!j.contains("latent_id")) {
            return;  // header record
        }
        LatentStats s;
        s.latent = j.at("latent_id").get<std::uint32_t>();
        s.df = j.at("df").get<std::size_t>();
        s.idf = j.at("idf").get<double>();
        for (const auto& p : j.at("top_passages")) {
            s.top_passages.push_back(ScoredDoc{p.at(0).get<std::string>(), p.at(1).get<double>()});
        }
        if (s.latent != stats.size()) {
            throw ValidationError(path + ": latent ids must be dense and ascending");
        }
        stats.push_back(std::move(s));
    });
    return stats;
}

TokenDf token_df(const ingest::Corpus& corpus) {
    TokenDf out;
    out.n_docs = corpus.size();
    for (const auto& p : corpus.passages()) {
        auto tokens = lexical::tokenize(p.text);
        std::sort(tokens.begin(), tokens.end());
        tokens.erase(std::unique(tokens.begin(), tokens.end()), tokens.end());
        for (auto& t : tokens) {
            ++out.df[t];
        }
    }
    return out;
}

LatentDescription describe_llm(std::uint32_t latent, const Examples& examples, llm::LlmClient& client) {
    if (examples.empty()) {
        throw ValidationError("describe: latent " + std::to_string(latent) + " has no example passages");
    }
    const auto prompt = prompts::render_description(examples);
    const auto reply = client.complete(prompt);
    LatentDescription d;
    d.latent = latent;
    d.text = prompts::parse_interpretation(reply);
    d.source = DescriptionSource::llm;
    d.model_name = client.model_name();
    d.prompt_digest = hex_digest(prompt);
    return d;
}

LatentDescription describe_offline(std::uint32_t latent, const Examples& examples, const TokenDf& tdf) {
    if (examples.empty()) {
        throw ValidationError("describe: latent " + std::to_string(latent) + " has no example passages");
    }
    std::map<std::string, double> tf;
    for (const auto& [text, act] : examples) {
        for (const auto& t : lexical::tokenize(text)) {
            tf[t] += 1.0;
        }
    }
    const double n_docs = static_cast<double>(std::max<std::size_t>(tdf.n_docs, 1));
    std::vector<std::pair<std::string, double>> scored;
    for (const auto& [t, f] : tf) {
        const auto it = tdf.df.find(t);
        const double df = it == tdf.df.end() ? 1.0 : static_cast<double>(it->second);
        scored.emplace_back(t, f * std::log(n_docs / df));
    }
    std::stable_sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
    LatentDescription d;
    d.latent = latent;
    d.source = DescriptionSource::offline;
    for (std::size_t i = 0; i < std::min<std::size_t>(5, scored.size()); ++i) {
        d.text += (i > 0 ? ", " : "") + scored[i].first;
    }
    if (d.text.empty()) {
        d.text = "(no tokens)";
    }
    d.prompt_digest = hex_digest(prompts::render_description(examples));
    return d;
}

std::vector<LatentDescription> describe_all(const std::map<std::uint32_t, Examples>& latents, llm::LlmClient* client,
                                            const TokenDf& tdf, std::size_t concurrency) {
    std::vector<std::pair<std::uint32_t, const Examples*>> work;
    for (const auto& [j, ex] : latents) {
        if (!ex.empty()) {
            work.emplace_back(j, &ex);
        }
    }
    std::vector<std::optional<LatentDescription>> out(work.size());
    if (client == nullptr) {
        for (std::size_t i = 0; i < work.size(); ++i) {
            out[i] = describe_offline(work[i].first, *work[i].second, tdf);
        }
    } else {
        std::atomic<std::size_t> next{0};
        std::exception_ptr failure;
        std::mutex failure_mu;
        auto worker = [&] {
            for (std::size_t i = next++; i < work.size(); i = next++) {
                try {
                    out[i] = describe_llm(work[i].first, *work[i].second, *client);
                } catch (...) {
                    std::lock_guard lock(failure_mu);
                    if (!failure) {
                        failure = std::current_exception();
                    }
                }
            }
        };
        std::vector<std::thread> pool;
        for (std::size_t t = 0; t < std::max<std::size_t>(1, std::min(concurrency, work.size())); ++t) {
            pool.emplace_back(worker);
        }
        for (auto& th : pool) {
            th.join();
        }
        if (failure) {
            std::rethrow_exception(failure);
        }
    }
    std::vector<LatentDescription> result;
    result.reserve(out.size());
    for (auto& d : out) {
        result.push_back(std::move(*d));
    }
    return result;
}

void write_descriptions(const std::vector<LatentDescription>& descriptions, const std::string& path,
                        const std::string& digest) {
    std::string out;
    if (!digest.empty()) {
        out += json{{"config_digest", digest}}.dump() + "\n";
    }
    for (const auto& d : descriptions) {
        json j = {{"latent_id", d.latent},
                  {"text", d.text},
                  {"source", d.source == DescriptionSource::llm ? "llm" : "offline"},
                  {"model_name", d.model_name ? json(*d.model_name) : json(nullptr)},
                  {"prompt_digest", d.prompt_digest}};
        out += j.dump() + "\n";
    }
    detail::write_file_bytes(path, out);
}

std::vector<LatentDescription> read_descriptions(const std::string& path) {
    std::vector<LatentDescription> out;
    for_each_jsonl(path, [&](const json& j) {
        if (!j.contains("latent_id")) {
            return;  // header record
        }
        LatentDescription d;
        d.latent = j.at("latent_id").get<std::uint32_t>();
        d.text = j.at("text").get<std::string>();
        const auto src = j.at("source").get<std::string>();
        if (src != "llm" && src != "offline") {
            throw ValidationError(path + ": unknown description source '" + src + "'");
        }
        d.source = src == "llm" ? DescriptionSource::llm : DescriptionSource::offline;
        if (j.contains("model_name") && !j["model_name"].is_null()) {
            d.model_name = j["model_name"].get<std::string>();
        }
        d.prompt_digest = j.at("prompt_digest").get<std::string>();
        out.push_back(std::move(d));
    });
    return out;
}

std::vector<SparseCode> neuron_codes(const ingest::EmbeddingStore& store) {
    std::vector<SparseCode> out;
    out.reserve(store.count());
    for (std::size_t i = 0; i < store.count(); ++i) {
        SparseCode code;
        code.origin_id = store.ids()[i];
        const auto row = store.row(i);
        for (std::uint32_t j = 0; j < row.size(); ++j) {
            if (row[j] > 0.0f) {
                code.indices.push_back(j);
                code.values.push_back(row[j]);
            }
        }
        out.push_back(std::move(code));
    }
    return out;
}

int RandomJudge::pick(const IntrusionItem& item) {
    return static_cast<int>(std::uniform_int_distribution<std::size_t>(1, item.passages.size())(rng_));
}

int TokenCentroidJudge::pick(const IntrusionItem& item) {
    std::vector<std::map<std::string, double>> vecs;
    for (const auto& p : item.passages) {
        auto v = token_vector(p);
        double norm = 0.0;
        for (const auto& [t, x] : v) {
            norm += x * x;
        }
        norm = std::sqrt(norm);
        for (auto& [t, x] : v) {
            x = norm > 0.0 ? x / norm : 0.0;
        }
        vecs.push_back(std::move(v));
    }
    int best = 1;
    double best_sim = 2.0;
    for (std::size_t i = 0; i < vecs.size(); ++i) {
        std::map<std::string, double> centroid;
        for (std::size_t o = 0; o < vecs.size(); ++o) {
            if (o != i) {
                for (const auto& [t, x] : vecs[o]) {
                    centroid[t] += x;
                }
            }
        }
        const double sim = cosine(vecs[i], centroid);
        if (sim < best_sim) {
            best_sim = sim;
            best = static_cast<int>(i) + 1;
        }
    }
    return best;
}

int LlmJudge::pick(const IntrusionItem& item) {
    try {
        return prompts::parse_intruder(client_.complete(item.prompt));
    } catch (const prompts::ResponseFormatError&) {
        ++unparseable_;
        return 0;
    }
}

std::vector<IntrusionItem> build_intrusion_items(const std::vector<std::uint32_t>& latents,
                                                 const std::vector<SparseCode>& doc_codes,
                                                 const ingest::Corpus& corpus, std::uint64_t seed,
                                                 std::vector<std::uint32_t>* skipped, std::size_t top) {
    std::mt19937_64 rng(seed);
    std::vector<IntrusionItem> items;
    for (const auto j : latents) {
        const auto best = top_activating(doc_codes, j, top);
        std::vector<std::size_t> silent;
        for (std::size_t i = 0; i < doc_codes.size(); ++i) {
            if (doc_codes[i].activation(j) == 0.0) {
                silent.push_back(i);
            }
        }
        if (best.size() < top || silent.empty()) {
            if (skipped != nullptr) {
                skipped->push_back(j);
            }
            continue;
        }
        const auto& intruder = doc_codes[silent[std::uniform_int_distribution<std::size_t>(0, silent.size() - 1)(rng)]];
        IntrusionItem item;
        item.latent = j;
        for (const auto& b : best) {
            item.doc_ids.push_back(b.doc_id);
        }
        item.intruder = std::uniform_int_distribution<std::size_t>(0, top)(rng);
        item.doc_ids.insert(item.doc_ids.begin() + static_cast<std::ptrdiff_t>(item.intruder), intruder.origin_id);
        for (const auto& id : item.doc_ids) {
            const auto pos = corpus.find(id);
            if (pos == ingest::Corpus::npos) {
                throw ValidationError("intrusion test: doc '" + id + "' is not in the corpus");
            }
            item.passages.push_back(corpus[pos].text);
        }
        item.prompt = prompts::render_intrusion(item.passages);
        items.push_back(std::move(item));
    }
    return items;
}

IntrusionReport intrusion_test(const std::vector<std::uint32_t>& latents, const std::vector<SparseCode>& doc_codes,
                               const ingest::Corpus& corpus, IntrusionJudge& judge, std::uint64_t seed,
                               std::size_t top) {
    IntrusionReport report;
    report.judge = judge.name();
    for (const auto& item : build_intrusion_items(latents, doc_codes, corpus, seed, &report.skipped, top)) {
        IntrusionOutcome o;
        o.latent = item.latent;
        o.intruder = item.intruder;
        o.answer = judge.pick(item);
        o.correct = o.answer == static_cast<int>(item.intruder) + 1;
        report.correct += o.correct ? 1 : 0;
        report.outcomes.push_back(o);
    }
    report.evaluated = report.outcomes.size();
    report.accuracy =
        report.evaluated == 0 ? 0.0 : static_cast<double>(report.correct) / static_cast<double>(report.evaluated);
    return report;
}

std::vector<std::uint32_t> sample_latents(std::uint32_t m, std::size_t n, std::uint64_t seed) {
    std::vector<std::uint32_t> all(m);
    std::iota(all.begin(), all.end(), 0u);
    if (n >= m) {
        return all;
    }
    std::mt19937_64 rng(seed);
    std::shuffle(all.begin(), all.end(), rng);
    all.resize(n);
    std::sort(all.begin(), all.end());
    return all;
}

}  // namespace latentir::concepts
