#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace latentir::ingest {

struct Passage {
    std::string id;
    std::string text;

    bool operator==(const Passage&) const = default;
};

/// Ordered passages with unique, non-empty ids. Queries use the same shape.
class Corpus {
public:
    Corpus() = default;
    explicit Corpus(std::string source_path) : source_path_(std::move(source_path)) {}

    /// Throws ValidationError on empty/duplicate id or empty text.
    void add(std::string id, std::string text);

    [[nodiscard]] const std::vector<Passage>& passages() const noexcept { return passages_; }
    [[nodiscard]] std::size_t size() const noexcept { return passages_.size(); }
    [[nodiscard]] bool empty() const noexcept { return passages_.empty(); }
    [[nodiscard]] const Passage& operator[](std::size_t i) const { return passages_[i]; }
    [[nodiscard]] const std::string& source_path() const noexcept { return source_path_; }

    /// Position of `id`, or npos.
    [[nodiscard]] std::size_t find(std::string_view id) const;
    [[nodiscard]] bool contains(std::string_view id) const { return find(id) != npos; }

    static constexpr std::size_t npos = static_cast<std::size_t>(-1);

    bool operator==(const Corpus& other) const { return passages_ == other.passages_; }

private:
    std::vector<Passage> passages_;
    std::unordered_map<std::string, std::size_t> by_id_;
    std::string source_path_;
};

using QuerySet = Corpus;

enum class TextFormat { tsv, jsonl };

/// `.jsonl` / `.json` -> jsonl, everything else tsv.
[[nodiscard]] TextFormat format_for_path(std::string_view path);

/// TSV: `id<TAB>text` per line. JSONL: one `{"id": ..., "contents": ...}` object per line.
/// Blank lines are skipped. Errors carry the 1-based line number.
[[nodiscard]] Corpus read_corpus(const std::string& path, TextFormat format);
[[nodiscard]] Corpus parse_corpus(std::string_view text, TextFormat format, const std::string& source);
void write_corpus(const Corpus& corpus, const std::string& path, TextFormat format);

/// Dense embeddings keyed by id; rows are row-major 32-bit floats.
class EmbeddingStore {
public:
    EmbeddingStore() = default;
    explicit EmbeddingStore(std::uint32_t dim);

    void add(std::string id, std::span<const float> row);
    void add(std::string id, std::span<const double> row);

    [[nodiscard]] std::uint32_t dim() const noexcept { return dim_; }
    [[nodiscard]] std::size_t count() const noexcept { return ids_.size(); }
    [[nodiscard]] const std::vector<std::string>& ids() const noexcept { return ids_; }
    [[nodiscard]] std::span<const float> row(std::size_t i) const {
        return {rows_.data() + i * dim_, dim_};
    }
    [[nodiscard]] std::span<float> row(std::size_t i) { return {rows_.data() + i * dim_, dim_}; }
    [[nodiscard]] const std::vector<float>& data() const noexcept { return rows_; }

    /// Row index of `id`, or npos.
    [[nodiscard]] std::size_t find(std::string_view id) const;
    static constexpr std::size_t npos = static_cast<std::size_t>(-1);

    bool operator==(const EmbeddingStore& other) const {
        return dim_ == other.dim_ && ids_ == other.ids_ && rows_ == other.rows_;
    }

private:
    std::uint32_t dim_ = 0;
    std::vector<std::string> ids_;
    std::vector<float> rows_;
    std::unordered_map<std::string, std::size_t> by_id_;
};

/// "DEMB" layout, little-endian:
///   magic "DEMB" | version u32 | count u64 | dim u32
///   count x (u32 byte length + UTF-8 id)
///   count x dim float32, row-major
inline constexpr std::uint32_t kEmbeddingFormatVersion = 1;

[[nodiscard]] std::string encode_embeddings(const EmbeddingStore& store);
[[nodiscard]] EmbeddingStore decode_embeddings(std::string_view bytes, const std::string& source);
void write_embeddings(const EmbeddingStore& store, const std::string& path);
[[nodiscard]] EmbeddingStore read_embeddings(const std::string& path);

/// Graded relevance judgments: qid -> docid -> grade (>= 0).
class Qrels {
public:
    /// Repeated (qid, docid) keeps the last grade.
    void set(const std::string& query_id, const std::string& doc_id, int grade);

    [[nodiscard]] int grade(const std::string& query_id, const std::string& doc_id) const;
    [[nodiscard]] const std::map<std::string, int>* judgments(const std::string& query_id) const;
    /// Docs with grade >= 1.
    [[nodiscard]] std::vector<std::string> positives(const std::string& query_id) const;
    [[nodiscard]] std::vector<std::string> query_ids() const;
    [[nodiscard]] std::size_t size() const noexcept;
    [[nodiscard]] const std::map<std::string, std::map<std::string, int>>& entries() const noexcept {
        return entries_;
    }

    bool operator==(const Qrels&) const = default;

private:
    std::map<std::string, std::map<std::string, int>> entries_;
};

/// TREC layout: `qid 0 docid grade`, whitespace separated.
[[nodiscard]] Qrels read_qrels(const std::string& path);
[[nodiscard]] Qrels parse_qrels(std::string_view text, const std::string& source);
void write_qrels(const Qrels& qrels, const std::string& path);

}  // namespace latentir::ingest
