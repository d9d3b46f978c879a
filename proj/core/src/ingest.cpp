#include "latentir/ingest.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "binary_io.hpp"
#include "latentir/errors.hpp"

namespace latentir::ingest {

namespace {

constexpr char kEmbeddingMagic[4] = {'D', 'E', 'M', 'B'};

template <typename Fn>
void for_each_line(std::string_view text, Fn&& fn) {
    std::size_t line_no = 0;
    std::size_t start = 0;
    while (start <= text.size()) {
        auto end = text.find('\n', start);
        if (end == std::string_view::npos) {
            end = text.size();
        }
        auto line = text.substr(start, end - start);
        if (!line.empty() && line.back() == '\r') {
            line.remove_suffix(1);
        }
        ++line_no;
        fn(line, line_no);
        if (end == text.size()) {
            break;
        }
        start = end + 1;
    }
}

bool is_blank(std::string_view s) {
    return std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c) != 0; });
}

}  // namespace

// ---------------------------------------------------------------- Corpus

void Corpus::add(std::string id, std::string text) {
    if (id.empty()) {
        throw ValidationError("empty passage id");
    }
    if (text.empty()) {
        throw ValidationError("passage '" + id + "' has empty text");
    }
    if (by_id_.contains(id)) {
        throw ValidationError("duplicate passage id '" + id + "'");
    }
    by_id_.emplace(id, passages_.size());
    passages_.push_back({std::move(id), std::move(text)});
}

std::size_t Corpus::find(std::string_view id) const {
    const auto it = by_id_.find(std::string(id));
    return it == by_id_.end() ? npos : it->second;
}

TextFormat format_for_path(std::string_view path) {
    if (path.ends_with(".jsonl") || path.ends_with(".json")) {
        return TextFormat::jsonl;
    }
    return TextFormat::tsv;
}

Corpus parse_corpus(std::string_view text, TextFormat format, const std::string& source) {
    Corpus corpus(source);
    for_each_line(text, [&](std::string_view line, std::size_t line_no) {
        if (is_blank(line)) {
            return;
        }
        std::string id;
        std::string body;
        if (format == TextFormat::tsv) {
            const auto tab = line.find('\t');
            if (tab == std::string_view::npos) {
                throw ParseError(source, line_no, "expected 'id<TAB>text'");
            }
            id = std::string(line.substr(0, tab));
            body = std::string(line.substr(tab + 1));
        } else {
            nlohmann::json obj;
            try {
                obj = nlohmann::json::parse(line);
            } catch (const nlohmann::json::parse_error& e) {
                throw ParseError(source, line_no, std::string("invalid JSON: ") + e.what());
            }
            if (!obj.is_object() || !obj.contains("id") || !obj.contains("contents")) {
                throw ParseError(source, line_no, R"(expected object with "id" and "contents")");
            }
            const auto& jid = obj["id"];
            if (!jid.is_string() && !jid.is_number_integer()) {
                throw ParseError(source, line_no, "\"id\" must be a string or integer");
            }
            id = jid.is_string() ? jid.get<std::string>() : std::to_string(jid.get<long long>());
            if (!obj["contents"].is_string()) {
                throw ParseError(source, line_no, "\"contents\" must be a string");
            }
            body = obj["contents"].get<std::string>();
        }
        try {
            corpus.add(std::move(id), std::move(body));
        } catch (const ValidationError& e) {
            throw ParseError(source, line_no, e.what());
        }
    });
    return corpus;
}

Corpus read_corpus(const std::string& path, TextFormat format) {
    return parse_corpus(detail::read_file_bytes(path), format, path);
}

void write_corpus(const Corpus& corpus, const std::string& path, TextFormat format) {
    std::string out;
    for (const auto& p : corpus.passages()) {
        if (format == TextFormat::tsv) {
            if (p.id.find_first_of("\t\n") != std::string::npos ||
                p.text.find('\n') != std::string::npos) {
                throw ValidationError("passage '" + p.id + "' cannot be written as TSV");
            }
            out += p.id;
            out += '\t';
            out += p.text;
        } else {
            out += nlohmann::json{{"id", p.id}, {"contents", p.text}}.dump();
        }
        out += '\n';
    }
    detail::write_file_bytes(path, out);
}

// -------------------------------------------------------- EmbeddingStore

EmbeddingStore::EmbeddingStore(std::uint32_t dim) : dim_(dim) {
    if (dim == 0) {
        throw ValidationError("embedding dim must be positive");
    }
}

void EmbeddingStore::add(std::string id, std::span<const float> row) {
    if (row.size() != dim_) {
        throw ValidationError("embedding '" + id + "' has dim " + std::to_string(row.size()) +
                              ", store dim is " + std::to_string(dim_));
    }
    if (by_id_.contains(id)) {
        throw ValidationError("duplicate embedding id '" + id + "'");
    }
    by_id_.emplace(id, ids_.size());
    ids_.push_back(std::move(id));
    rows_.insert(rows_.end(), row.begin(), row.end());
}

void EmbeddingStore::add(std::string id, std::span<const double> row) {
    std::vector<float> tmp(row.begin(), row.end());
    add(std::move(id), std::span<const float>(tmp));
}

std::size_t EmbeddingStore::find(std::string_view id) const {
    const auto it = by_id_.find(std::string(id));
    return it == by_id_.end() ? npos : it->second;
}

std::string encode_embeddings(const EmbeddingStore& store) {
    detail::BinaryWriter w;
    w.put_bytes(std::string_view(kEmbeddingMagic, 4));
    w.put(kEmbeddingFormatVersion);
    w.put(static_cast<std::uint64_t>(store.count()));
    w.put(store.dim());
    for (const auto& id : store.ids()) {
        w.put_string(id);
    }
    const auto& data = store.data();
    w.put_bytes(std::string_view(reinterpret_cast<const char*>(data.data()), data.size() * sizeof(float)));
    return w.release();
}

EmbeddingStore decode_embeddings(std::string_view bytes, const std::string& source) {
    detail::BinaryReader r(bytes, source);
    if (r.get_bytes(4, "magic") != std::string_view(kEmbeddingMagic, 4)) {
        throw FormatError(source, 0, "bad magic, expected \"DEMB\"");
    }
    const auto version = r.get<std::uint32_t>("version");
    if (version != kEmbeddingFormatVersion) {
        throw FormatError(source, 4, "unsupported version " + std::to_string(version));
    }
    const auto count = r.get<std::uint64_t>("count");
    const auto dim_offset = r.offset();
    const auto dim = r.get<std::uint32_t>("dim");
    if (dim == 0) {
        throw FormatError(source, dim_offset, "dim must be positive");
    }
    // Each id needs at least its 4-byte length prefix.
    if (count > r.remaining() / 4) {
        r.fail("count " + std::to_string(count) + " exceeds file size");
    }
    std::vector<std::string> ids;
    ids.reserve(count);
    for (std::uint64_t i = 0; i < count; ++i) {
        ids.push_back(r.get_string("id table"));
    }
    const std::uint64_t payload = count * dim * sizeof(float);
    if (r.remaining() != payload) {
        r.fail("payload is " + std::to_string(r.remaining()) + " bytes, expected count*dim*4 = " +
               std::to_string(payload) + " (dim mismatch or truncation)");
    }
    EmbeddingStore store(dim);
    std::vector<float> row(dim);
    for (std::uint64_t i = 0; i < count; ++i) {
        const auto raw = r.get_bytes(dim * sizeof(float), "rows");
        std::memcpy(row.data(), raw.data(), raw.size());
        try {
            store.add(std::move(ids[i]), std::span<const float>(row));
        } catch (const ValidationError& e) {
            throw FormatError(source, r.offset(), e.what());
        }
    }
    return store;
}

void write_embeddings(const EmbeddingStore& store, const std::string& path) {
    detail::write_file_bytes(path, encode_embeddings(store));
}

EmbeddingStore read_embeddings(const std::string& path) {
    return decode_embeddings(detail::read_file_bytes(path), path);
}

// ----------------------------------------------------------------- Qrels

void Qrels::set(const std::string& query_id, const std::string& doc_id, int grade) {
    if (grade < 0) {
        throw ValidationError("negative relevance grade for (" + query_id + ", " + doc_id + ")");
    }
    entries_[query_id][doc_id] = grade;
}

int Qrels::grade(const std::string& query_id, const std::string& doc_id) const {
    const auto q = entries_.find(query_id);
    if (q == entries_.end()) {
        return 0;
    }
    const auto d = q->second.find(doc_id);
    return d == q->second.end() ? 0 : d->second;
}

const std::map<std::string, int>* Qrels::judgments(const std::string& query_id) const {
    const auto q = entries_.find(query_id);
    return q == entries_.end() ? nullptr : &q->second;
}

std::vector<std::string> Qrels::positives(const std::string& query_id) const {
    std::vector<std::string> out;
    if (const auto* j = judgments(query_id)) {
        for (const auto& [doc, g] : *j) {
            if (g >= 1) {
                out.push_back(doc);
            }
        }
    }
    return out;
}

std::vector<std::string> Qrels::query_ids() const {
    std::vector<std::string> out;
    out.reserve(entries_.size());
    for (const auto& [q, _] : entries_) {
        out.push_back(q);
    }
    return out;
}

std::size_t Qrels::size() const noexcept {
    std::size_t n = 0;
    for (const auto& [_, docs] : entries_) {
        n += docs.size();
    }
    return n;
}

Qrels parse_qrels(std::string_view text, const std::string& source) {
    Qrels qrels;
    for_each_line(text, [&](std::string_view line, std::size_t line_no) {
        if (is_blank(line)) {
            return;
        }
        std::istringstream ss{std::string(line)};
        std::string qid, iter, docid, grade_str, extra;
        if (!(ss >> qid >> iter >> docid >> grade_str)) {
            throw ParseError(source, line_no, "expected 'qid 0 docid grade'");
        }
        if (ss >> extra) {
            throw ParseError(source, line_no, "trailing field '" + extra + "'");
        }
        int grade = 0;
        std::size_t used = 0;
        try {
            grade = std::stoi(grade_str, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used != grade_str.size() || used == 0) {
            throw ParseError(source, line_no, "grade '" + grade_str + "' is not an integer");
        }
        if (grade < 0) {
            throw ParseError(source, line_no, "negative grade " + grade_str);
        }
        qrels.set(qid, docid, grade);
    });
    return qrels;
}

Qrels read_qrels(const std::string& path) { return parse_qrels(detail::read_file_bytes(path), path); }

void write_qrels(const Qrels& qrels, const std::string& path) {
    std::string out;
    for (const auto& [q, docs] : qrels.entries()) {
        for (const auto& [d, g] : docs) {
            out += q + " 0 " + d + " " + std::to_string(g) + "\n";
        }
    }
    detail::write_file_bytes(path, out);
}

}  // namespace latentir::ingest
