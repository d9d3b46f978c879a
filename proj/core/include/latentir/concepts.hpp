#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "latentir/ingest.hpp"
#include "latentir/llm.hpp"
#include "latentir/types.hpp"

namespace latentir::concepts {

struct LatentStats {
    std::uint32_t latent = 0;
    std::size_t df = 0;
    double idf = 0.0;
    /// Highest activations first; ties by doc id.
    std::vector<ScoredDoc> top_passages;

    bool operator==(const LatentStats&) const = default;
};

/// One entry per latent id in [0, m).
using StatsTable = std::vector<LatentStats>;

/// ln(n_docs / (1 + df)). Negative only when df == n_docs.
[[nodiscard]] double latent_idf(std::size_t n_docs, std::size_t df);

/// Counts df over `doc_codes` (one per doc of the corpus) and keeps `top_capacity`
/// top passages per latent. Throws ValidationError on an empty code set or a latent >= m.
[[nodiscard]] StatsTable compute_stats(const std::vector<SparseCode>& doc_codes, std::uint32_t m,
                                       std::size_t top_capacity = 30);

struct WeightedLatent {
    std::uint32_t latent = 0;
    double activation = 0.0;
    double weighted = 0.0;  // activation * idf
};

/// Sorted by weighted value desc, ties to the lower latent id. Throws ValidationError
/// when `stats` has no entry for a latent of `code`.
[[nodiscard]] std::vector<WeightedLatent> idf_weighted(const SparseCode& code, const StatsTable& stats);

/// Top n docs by activation of `latent` (ties by doc id). Empty when the latent never fires.
[[nodiscard]] std::vector<ScoredDoc> top_activating(const std::vector<SparseCode>& doc_codes, std::uint32_t latent,
                                                    std::size_t n);

void write_stats(const StatsTable& stats, const std::string& path, const std::string& digest);
[[nodiscard]] StatsTable read_stats(const std::string& path);

enum class DescriptionSource { llm, offline };

struct LatentDescription {
    std::uint32_t latent = 0;
    std::string text;
    DescriptionSource source = DescriptionSource::offline;
    std::optional<std::string> model_name;
    std::string prompt_digest;

    bool operator==(const LatentDescription&) const = default;
};

/// Corpus-wide token document frequencies for the offline describer.
struct TokenDf {
    std::size_t n_docs = 0;
    std::map<std::string, std::size_t> df;
};
[[nodiscard]] TokenDf token_df(const ingest::Corpus& corpus);

/// (passage text, activation) in display order.
using Examples = std::vector<std::pair<std::string, double>>;

/// Sends the rendered description prompt and parses the "[interpretation]:" line.
/// Throws ValidationError on empty examples, prompts::ResponseFormatError on a reply without
/// the marker, llm::TransportError on client failure.
[[nodiscard]] LatentDescription describe_llm(std::uint32_t latent, const Examples& examples, llm::LlmClient& client);

/// Top 5 tokens of the examples by tf * ln(|D| / df), joined with ", " (ties alphabetical).
[[nodiscard]] LatentDescription describe_offline(std::uint32_t latent, const Examples& examples, const TokenDf& tdf);

/// Describes every latent in `latents` with at most `concurrency` client calls in flight.
/// A null client selects the offline describer. Output is ordered by latent id.
/// Latents with an empty example list are skipped.
[[nodiscard]] std::vector<LatentDescription> describe_all(const std::map<std::uint32_t, Examples>& latents,
                                                          llm::LlmClient* client, const TokenDf& tdf,
                                                          std::size_t concurrency = 4);

/// JSONL, preceded by a {"config_digest"} record when a digest is given.
void write_descriptions(const std::vector<LatentDescription>& descriptions, const std::string& path,
                        const std::string& digest = {});
[[nodiscard]] std::vector<LatentDescription> read_descriptions(const std::string& path);

/// Rectified raw embedding dimensions as a latent basis (the neuron comparison).
[[nodiscard]] std::vector<SparseCode> neuron_codes(const ingest::EmbeddingStore& store);

/// One 10-passage intrusion question.
struct IntrusionItem {
    std::uint32_t latent = 0;
    std::vector<std::string> doc_ids;
    std::vector<std::string> passages;
    /// 0-based position of the intruder.
    std::size_t intruder = 0;
    std::string prompt;
};

class IntrusionJudge {
public:
    virtual ~IntrusionJudge() = default;
    /// 1-based document number; 0 when no usable answer came back.
    virtual int pick(const IntrusionItem& item) = 0;
    [[nodiscard]] virtual std::string name() const = 0;
};

/// Always right. Sanity baseline.
class OracleJudge final : public IntrusionJudge {
public:
    int pick(const IntrusionItem& item) override { return static_cast<int>(item.intruder) + 1; }
    [[nodiscard]] std::string name() const override { return "oracle"; }
};

/// Uniform over the 10 documents.
class RandomJudge final : public IntrusionJudge {
public:
    explicit RandomJudge(std::uint64_t seed) : rng_(seed) {}
    int pick(const IntrusionItem& item) override;
    [[nodiscard]] std::string name() const override { return "random"; }

private:
    std::mt19937_64 rng_;
};

/// Picks the passage whose token-frequency vector is least similar (cosine) to the
/// centroid of the other nine. Ties to the earlier document.
class TokenCentroidJudge final : public IntrusionJudge {
public:
    int pick(const IntrusionItem& item) override;
    [[nodiscard]] std::string name() const override { return "offline"; }
};

/// Sends the rendered prompt and parses "[intruder]:Document#".
class LlmJudge final : public IntrusionJudge {
public:
    explicit LlmJudge(llm::LlmClient& client) : client_(client) {}
    int pick(const IntrusionItem& item) override;
    [[nodiscard]] std::string name() const override { return "llm:" + client_.model_name(); }
    [[nodiscard]] std::size_t unparseable() const noexcept { return unparseable_; }

private:
    llm::LlmClient& client_;
    std::size_t unparseable_ = 0;
};

struct IntrusionOutcome {
    std::uint32_t latent = 0;
    std::size_t intruder = 0;  // 0-based
    int answer = 0;            // 1-based, 0 = none
    bool correct = false;
};

struct IntrusionReport {
    std::string judge;
    std::size_t evaluated = 0;
    std::size_t correct = 0;
    double accuracy = 0.0;
    /// Latents with fewer than `top` activating passages or no zero-activation doc.
    std::vector<std::uint32_t> skipped;
    std::vector<IntrusionOutcome> outcomes;
};

/// Builds one question per latent: its `top` most activating passages plus one seeded
/// random passage with zero activation, at a seeded random position. Codes must cover
/// `corpus` (matched by origin id).
[[nodiscard]] std::vector<IntrusionItem> build_intrusion_items(const std::vector<std::uint32_t>& latents,
                                                               const std::vector<SparseCode>& doc_codes,
                                                               const ingest::Corpus& corpus, std::uint64_t seed,
                                                               std::vector<std::uint32_t>* skipped = nullptr,
                                                               std::size_t top = 9);

[[nodiscard]] IntrusionReport intrusion_test(const std::vector<std::uint32_t>& latents,
                                             const std::vector<SparseCode>& doc_codes,
                                             const ingest::Corpus& corpus, IntrusionJudge& judge, std::uint64_t seed,
                                             std::size_t top = 9);

/// n distinct latent ids from [0, m), seeded, ascending. All of them when n >= m.
[[nodiscard]] std::vector<std::uint32_t> sample_latents(std::uint32_t m, std::size_t n, std::uint64_t seed);

}  // namespace latentir::concepts
