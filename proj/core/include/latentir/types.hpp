#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

namespace latentir {

/// Sparse decomposition of one embedding: latent ids (strictly increasing)
/// and their positive activations.
struct SparseCode {
    std::vector<std::uint32_t> indices;
    std::vector<double> values;
    std::string origin_id;

    [[nodiscard]] std::size_t size() const noexcept { return indices.size(); }
    [[nodiscard]] bool empty() const noexcept { return indices.empty(); }

    /// Activation of `latent`, 0 when not present.
    [[nodiscard]] double activation(std::uint32_t latent) const;

    /// Throws ValidationError unless indices are strictly increasing and values positive.
    void check() const;

    bool operator==(const SparseCode&) const = default;
};

struct ScoredDoc {
    std::string doc_id;
    double score = 0.0;

    bool operator==(const ScoredDoc&) const = default;
};

/// Ranked retrieval output for one query: scores non-increasing, doc ids unique.
struct RankedList {
    std::string query_id;
    std::vector<ScoredDoc> entries;

    bool operator==(const RankedList&) const = default;
};

/// qid -> ranked list.
using Run = std::map<std::string, RankedList>;

/// Orders by score descending, then doc id ascending. The shared tie rule for every ranker.
[[nodiscard]] inline bool ranks_before(const ScoredDoc& a, const ScoredDoc& b) noexcept {
    if (a.score != b.score) {
        return a.score > b.score;
    }
    return a.doc_id < b.doc_id;
}

}  // namespace latentir
