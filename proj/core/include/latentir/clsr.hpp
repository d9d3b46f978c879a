#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "latentir/types.hpp"

namespace latentir::clsr {

/// Saturation and length-normalization constants of the concept-level BM25 score.
struct ScoringParams {
    double k1 = 0.6;
    double b = 1.75;
    double k2 = 2.5;

    /// Throws ValidationError unless k1 > 0, b >= 0, k2 > 0.
    void validate() const;
};

struct Preset {
    std::string_view name;
    std::size_t k;    // SAE sparsity the constants were tuned for
    std::size_t cap;  // max latents indexed per doc
    ScoringParams params;
};

/// efficient (k 32, cap 24), k48, k64, max (k 128, cap 65).
[[nodiscard]] const std::vector<Preset>& presets();
/// Throws ValidationError listing the known names.
[[nodiscard]] const Preset& preset(std::string_view name);

struct Posting {
    std::uint32_t doc = 0;
    float activation = 0.0f;

    bool operator==(const Posting&) const = default;
};

struct ConceptIndex {
    std::uint32_t m = 0;
    std::uint32_t cap = 0;
    std::vector<std::string> doc_ids;
    /// latent -> postings sorted by doc.
    std::vector<std::vector<Posting>> postings;
    /// ln(|D| / (1 + df)) over the capped postings.
    std::vector<double> idf;
    /// L1 norm of each doc's capped activations.
    std::vector<double> doc_mass;
    double avg_mass = 0.0;
    /// Docs whose code was empty; they hold no postings.
    std::size_t empty_docs = 0;
    std::string config_digest;

    [[nodiscard]] std::size_t doc_count() const noexcept { return doc_ids.size(); }
    [[nodiscard]] std::size_t df(std::uint32_t latent) const { return postings.at(latent).size(); }
    /// Position of `doc_id`, or npos.
    [[nodiscard]] std::size_t find(std::string_view doc_id) const;
    /// Mean number of latents kept per doc.
    [[nodiscard]] double avg_doc_len() const noexcept;
    /// Latents with df > 0.
    [[nodiscard]] std::size_t vocab_size() const noexcept;
    /// Capped code of doc `i` rebuilt from the postings (latent ids ascending).
    [[nodiscard]] SparseCode doc_code(std::size_t i) const;

    bool operator==(const ConceptIndex&) const = default;
};

/// Keeps each doc's `cap` largest activations (ties to the lower latent id); activations
/// are stored as float32 and mass/idf are derived from the stored values. Throws
/// ValidationError on cap == 0, out-of-range latent, malformed code or duplicate doc id.
[[nodiscard]] ConceptIndex build_index(const std::vector<SparseCode>& doc_codes, std::uint32_t m,
                                       std::uint32_t cap, std::string config_digest = {});

[[nodiscard]] double f_q(double z, double k2) noexcept;
/// Throws ValidationError when avg_mass is 0.
[[nodiscard]] double f_d(double z, double doc_mass, double avg_mass, double k1, double b);

/// One shared latent's share of the score.
struct Contribution {
    std::uint32_t latent = 0;
    double query_activation = 0.0;
    double doc_activation = 0.0;
    double fq = 0.0;
    double fd = 0.0;
    double idf = 0.0;
    double value = 0.0;  // fq * fd * idf
};

/// Score of doc `doc` for `query`: sum over shared latents of f_q * f_d * idf.
[[nodiscard]] double score(const SparseCode& query, std::uint32_t doc, const ConceptIndex& index,
                           const ScoringParams& params);

/// Per shared latent breakdown of score(); values sum to the score. Ordered by latent id.
[[nodiscard]] std::vector<Contribution> explain(const SparseCode& query, std::uint32_t doc,
                                                const ConceptIndex& index, const ScoringParams& params);

enum class SearchStatus {
    ok,
    empty_query_code,  // nothing activated above theta for the query
};

struct SearchResult {
    RankedList list;
    SearchStatus status = SearchStatus::ok;
};

/// Term-at-a-time over the query's latents (no cap on the query side). Output equals
/// scoring every doc sharing a latent, ordered by score then doc id. Docs sharing
/// nothing are never returned.
[[nodiscard]] SearchResult search(const SparseCode& query, const ConceptIndex& index,
                                  const ScoringParams& params, std::size_t top_n);

/// Sum over latents of (fraction of queries activating j) * (df_j / |D|): the expected
/// number of shared latents per query-doc pair. Throws ValidationError on an empty index
/// or empty query set.
[[nodiscard]] double flops_estimate(const std::vector<SparseCode>& queries, const ConceptIndex& index);

/// "CLSR" layout, little-endian:
///   magic | version u32 | config digest string | m u32 | cap u32 | doc count u64
///   doc ids (u32 length + bytes) | doc mass f64 x count | non-empty latent count u32
///   per non-empty latent: latent u32 | posting count varint | (doc gap varint, f32)
/// idf and avg mass are recomputed on load.
inline constexpr std::uint32_t kConceptIndexVersion = 1;
[[nodiscard]] std::string encode_index(const ConceptIndex& index);
[[nodiscard]] ConceptIndex decode_index(std::string_view bytes, const std::string& source);
void write_index(const ConceptIndex& index, const std::string& path);
[[nodiscard]] ConceptIndex read_index(const std::string& path);

/// Exact size of encode_index(index).
[[nodiscard]] std::size_t storage_bytes(const ConceptIndex& index);

}  // namespace latentir::clsr
