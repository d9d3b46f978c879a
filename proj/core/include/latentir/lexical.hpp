#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "latentir/ingest.hpp"
#include "latentir/types.hpp"

namespace latentir::lexical {

/// ASCII-lowercases and splits on every ASCII non-alphanumeric byte. Bytes >= 0x80 are
/// kept inside tokens, so UTF-8 text survives untouched. No stemming, no stopwords.
[[nodiscard]] std::vector<std::string> tokenize(std::string_view text);

/// Identifies the tokenizer rules above; stored in index headers.
[[nodiscard]] const std::string& tokenizer_digest();

struct Bm25Params {
    double k1 = 0.9;
    double b = 0.4;
};

struct Posting {
    std::uint32_t doc = 0;  // position in TermIndex::doc_ids
    std::uint32_t tf = 0;

    bool operator==(const Posting&) const = default;
};

struct TermIndex {
    std::vector<std::string> doc_ids;
    std::vector<std::uint32_t> doc_len;
    double avg_doc_len = 0.0;
    /// term -> postings sorted by doc.
    std::map<std::string, std::vector<Posting>> postings;
    std::string tokenizer;
    std::string config_digest;

    [[nodiscard]] std::size_t doc_count() const noexcept { return doc_ids.size(); }
    [[nodiscard]] std::size_t vocab_size() const noexcept { return postings.size(); }
    [[nodiscard]] std::uint32_t df(const std::string& term) const;
    [[nodiscard]] std::uint32_t tf(const std::string& term, std::uint32_t doc) const;

    bool operator==(const TermIndex&) const = default;
};

/// Throws ValidationError on an empty corpus.
[[nodiscard]] TermIndex build_index(const ingest::Corpus& corpus, std::string config_digest = {});

/// ln(1 + (N - df + 0.5) / (df + 0.5)).
[[nodiscard]] double idf(std::size_t n_docs, std::size_t df) noexcept;

/// Sum over query tokens (repeats count again) of idf * tf (1 + k1) / (tf + k1 (1 - b + b len / avg)).
[[nodiscard]] double bm25_score(const std::vector<std::string>& query_terms, std::uint32_t doc,
                                const TermIndex& index, const Bm25Params& params = {});

enum class SearchStatus {
    ok,
    empty_query,  // no tokens after tokenization
    no_match,     // tokens, but none occur in the corpus
};

struct SearchResult {
    RankedList list;
    SearchStatus status = SearchStatus::ok;
};

/// Scores every doc sharing a term with the query; ties to the smaller doc id.
[[nodiscard]] SearchResult bm25_search(std::string_view query_id, std::string_view query_text,
                                       const TermIndex& index, std::size_t top_n,
                                       const Bm25Params& params = {});

[[nodiscard]] Run bm25_run(const ingest::QuerySet& queries, const TermIndex& index, std::size_t top_n,
                           const Bm25Params& params = {});

/// "BM25" layout: magic | version u32 | tokenizer string | config digest string |
/// doc count u64 | ids | doc_len u32 each | term count u64 |
/// per term: string, posting count varint, (doc gap varint, tf varint) pairs.
inline constexpr std::uint32_t kTermIndexVersion = 1;
[[nodiscard]] std::string encode_index(const TermIndex& index);
/// Throws FormatError on malformed bytes or when the stored tokenizer differs from this build's.
[[nodiscard]] TermIndex decode_index(std::string_view bytes, const std::string& source);
void write_index(const TermIndex& index, const std::string& path);
[[nodiscard]] TermIndex read_index(const std::string& path);

struct MismatchSet {
    std::set<std::string> queries;
    std::size_t cutoff = 0;
    /// Judged queries with at least one grade >= 1 doc.
    std::size_t considered = 0;
    /// Judged queries without any positive; never part of the set.
    std::size_t skipped_no_positive = 0;
};

/// Queries whose top-`cutoff` run entries hold no grade >= 1 doc. Queries missing from
/// the run count as misses. Throws ValidationError when cutoff == 0.
[[nodiscard]] MismatchSet mismatch_set(const Run& run, const ingest::Qrels& qrels, std::size_t cutoff);

}  // namespace latentir::lexical
