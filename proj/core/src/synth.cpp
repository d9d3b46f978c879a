#include "latentir/synth.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>
#include <set>

#include <nlohmann/json.hpp>

#include "binary_io.hpp"
#include "latentir/errors.hpp"

namespace latentir::ingest {

namespace {

std::string padded(char prefix, std::size_t i, std::size_t count) {
    const auto width = std::to_string(count > 0 ? count - 1 : 0).size();
    auto digits = std::to_string(i);
    return std::string(1, prefix) + std::string(width - std::min(width, digits.size()), '0') + digits;
}

void normalize(std::vector<double>& v) {
    double norm = 0.0;
    for (double x : v) {
        norm += x * x;
    }
    norm = std::sqrt(norm);
    if (norm > 0.0) {
        for (double& x : v) {
            x /= norm;
        }
    }
}

std::vector<std::vector<std::string>> make_vocabulary(int n_topics, int forms, std::mt19937_64& rng) {
    static constexpr std::string_view kOnsets = "bdfgklmnprstvz";
    static constexpr std::string_view kVowels = "aeiou";
    std::uniform_int_distribution<std::size_t> onset(0, kOnsets.size() - 1);
    std::uniform_int_distribution<std::size_t> vowel(0, kVowels.size() - 1);
    std::set<std::string> used;
    std::vector<std::vector<std::string>> vocab(static_cast<std::size_t>(n_topics));
    for (auto& words : vocab) {
        while (words.size() < static_cast<std::size_t>(forms)) {
            std::string w;
            for (int s = 0; s < 3; ++s) {
                w += kOnsets[onset(rng)];
                w += kVowels[vowel(rng)];
            }
            if (used.insert(w).second) {
                words.push_back(std::move(w));
            }
        }
    }
    return vocab;
}

std::vector<double> noisy_mix(const std::vector<int>& topics,
                              const std::vector<std::vector<double>>& atoms,
                              double sigma,
                              std::mt19937_64& rng) {
    const auto d = atoms.front().size();
    std::vector<double> v(d, 0.0);
    for (int t : topics) {
        for (std::size_t j = 0; j < d; ++j) {
            v[j] += atoms[static_cast<std::size_t>(t)][j];
        }
    }
    if (sigma > 0.0) {
        std::normal_distribution<double> noise(0.0, sigma);
        for (double& x : v) {
            x += noise(rng);
        }
    }
    normalize(v);
    return v;
}

}  // namespace

void SynthSpec::validate() const {
    if (n_topics < 1 || d < 1 || docs < 0 || queries < 0) {
        throw ValidationError("synth spec: n_topics and d must be >= 1, docs/queries >= 0");
    }
    if (topics_per_doc < 1 || topics_per_doc > n_topics) {
        throw ValidationError("synth spec: topics_per_doc must be in [1, n_topics]");
    }
    if (!(noise_sigma >= 0.0)) {
        throw ValidationError("synth spec: noise_sigma must be >= 0");
    }
    if (surface_forms < 1) {
        throw ValidationError("synth spec: surface_forms must be >= 1");
    }
    if (!(query_synonym_rate >= 0.0 && query_synonym_rate <= 1.0)) {
        throw ValidationError("synth spec: query_synonym_rate must be in [0, 1]");
    }
}

SynthData synth_generate(const SynthSpec& spec) {
    spec.validate();
    std::mt19937_64 rng(spec.seed);

    SynthTruth truth;
    truth.d = spec.d;
    truth.vocabulary = make_vocabulary(spec.n_topics, spec.surface_forms, rng);

    std::normal_distribution<double> gauss(0.0, 1.0);
    truth.atoms.resize(static_cast<std::size_t>(spec.n_topics));
    for (auto& atom : truth.atoms) {
        atom.resize(static_cast<std::size_t>(spec.d));
        do {
            for (double& x : atom) {
                x = gauss(rng);
            }
        } while (std::all_of(atom.begin(), atom.end(), [](double x) { return x == 0.0; }));
        normalize(atom);
    }

    SynthData out;
    out.doc_embeddings = EmbeddingStore(static_cast<std::uint32_t>(spec.d));
    out.query_embeddings = EmbeddingStore(static_cast<std::uint32_t>(spec.d));

    std::vector<int> all_topics(static_cast<std::size_t>(spec.n_topics));
    std::iota(all_topics.begin(), all_topics.end(), 0);
    std::map<std::vector<int>, int> set_count;
    const auto n_docs = static_cast<std::size_t>(spec.docs);
    for (std::size_t i = 0; i < n_docs; ++i) {
        std::vector<int> topics;
        std::sample(all_topics.begin(), all_topics.end(), std::back_inserter(topics),
                    spec.topics_per_doc, rng);
        std::shuffle(topics.begin(), topics.end(), rng);
        auto key = topics;
        std::sort(key.begin(), key.end());
        ++set_count[key];

        std::string text;
        for (int t : topics) {
            if (!text.empty()) {
                text += ' ';
            }
            text += truth.vocabulary[static_cast<std::size_t>(t)][0];
        }
        const auto id = padded('d', i, n_docs);
        out.corpus.add(id, std::move(text));
        const auto emb = noisy_mix(topics, truth.atoms, spec.noise_sigma, rng);
        out.doc_embeddings.add(id, std::span<const double>(emb));
        truth.doc_topics.push_back(std::move(topics));
    }

    std::vector<std::size_t> eligible;
    for (std::size_t i = 0; i < n_docs; ++i) {
        auto key = truth.doc_topics[i];
        std::sort(key.begin(), key.end());
        if (set_count[key] == 1) {
            eligible.push_back(i);
        }
    }
    const auto n_queries = static_cast<std::size_t>(spec.queries);
    if (eligible.size() < n_queries) {
        throw ValidationError("synth spec infeasible: " + std::to_string(n_queries) +
                              " queries need distinct gold docs but only " +
                              std::to_string(eligible.size()) + " docs have a unique topic set");
    }
    std::shuffle(eligible.begin(), eligible.end(), rng);

    std::bernoulli_distribution use_synonym(spec.query_synonym_rate);
    for (std::size_t q = 0; q < n_queries; ++q) {
        const auto gold = eligible[q];
        auto topics = truth.doc_topics[gold];
        std::shuffle(topics.begin(), topics.end(), rng);
        std::string text;
        for (int t : topics) {
            const auto& words = truth.vocabulary[static_cast<std::size_t>(t)];
            std::size_t form = 0;
            if (words.size() > 1 && use_synonym(rng)) {
                form = std::uniform_int_distribution<std::size_t>(1, words.size() - 1)(rng);
            }
            if (!text.empty()) {
                text += ' ';
            }
            text += words[form];
        }
        const auto qid = padded('q', q, n_queries);
        out.queries.add(qid, std::move(text));
        const auto emb = noisy_mix(topics, truth.atoms, spec.noise_sigma, rng);
        out.query_embeddings.add(qid, std::span<const double>(emb));
        out.qrels.set(qid, out.corpus[gold].id, 1);
        truth.query_topics.push_back(std::move(topics));
        truth.gold_doc.push_back(gold);
    }

    out.truth = std::move(truth);
    return out;
}

void write_synth_truth(const SynthTruth& truth, const std::string& path) {
    const nlohmann::json j = {
        {"d", truth.d},
        {"atoms", truth.atoms},
        {"vocabulary", truth.vocabulary},
        {"doc_topics", truth.doc_topics},
        {"query_topics", truth.query_topics},
        {"gold_doc", truth.gold_doc},
    };
    detail::write_file_bytes(path, j.dump() + "\n");
}

SynthTruth read_synth_truth(const std::string& path) {
    const auto j = nlohmann::json::parse(detail::read_file_bytes(path));
    SynthTruth t;
    j.at("d").get_to(t.d);
    j.at("atoms").get_to(t.atoms);
    j.at("vocabulary").get_to(t.vocabulary);
    j.at("doc_topics").get_to(t.doc_topics);
    j.at("query_topics").get_to(t.query_topics);
    j.at("gold_doc").get_to(t.gold_doc);
    return t;
}

}  // namespace latentir::ingest
