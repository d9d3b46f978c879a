#include "latentir/lexical.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>

#include "binary_io.hpp"
#include "latentir/errors.hpp"
#include "latentir/hash.hpp"

namespace latentir::lexical {

namespace {

constexpr char kMagic[4] = {'B', 'M', '2', '5'};

bool is_token_byte(unsigned char c) noexcept {
    return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c >= 0x80;
}

}  // namespace

std::vector<std::string> tokenize(std::string_view text) {
    std::vector<std::string> out;
    std::string cur;
    for (const char ch : text) {
        const auto c = static_cast<unsigned char>(ch);
        if (is_token_byte(c)) {
            cur.push_back(c >= 'A' && c <= 'Z' ? static_cast<char>(c - 'A' + 'a') : ch);
        } else if (!cur.empty()) {
            out.push_back(std::move(cur));
            cur.clear();
        }
    }
    if (!cur.empty()) {
        out.push_back(std::move(cur));
    }
    return out;
}

const std::string& tokenizer_digest() {
    static const std::string digest = hex_digest("ascii-lower;split=ascii-non-alnum;keep>=0x80;stem=none;stop=none;v1");
    return digest;
}

std::uint32_t TermIndex::df(const std::string& term) const {
    const auto it = postings.find(term);
    return it == postings.end() ? 0 : static_cast<std::uint32_t>(it->second.size());
}

std::uint32_t TermIndex::tf(const std::string& term, std::uint32_t doc) const {
    const auto it = postings.find(term);
    if (it == postings.end()) {
        return 0;
    }
    const auto& list = it->second;
    const auto p = std::lower_bound(list.begin(), list.end(), doc,
                                    [](const Posting& a, std::uint32_t d) { return a.doc < d; });
    return p != list.end() && p->doc == doc ? p->tf : 0;
}

TermIndex build_index(const ingest::Corpus& corpus, std::string config_digest) {
    if (corpus.empty()) {
        throw ValidationError("bm25 index: empty corpus");
    }
    TermIndex index;
    index.tokenizer = tokenizer_digest();
    index.config_digest = std::move(config_digest);
    double total = 0.0;
    for (std::size_t i = 0; i < corpus.size(); ++i) {
        const auto tokens = tokenize(corpus[i].text);
        std::map<std::string, std::uint32_t> counts;
        for (const auto& t : tokens) {
            ++counts[t];
        }
        const auto doc = static_cast<std::uint32_t>(i);
        for (auto& [term, tf] : counts) {
            index.postings[term].push_back(Posting{doc, tf});
        }
        index.doc_ids.push_back(corpus[i].id);
        index.doc_len.push_back(static_cast<std::uint32_t>(tokens.size()));
        total += static_cast<double>(tokens.size());
    }
    index.avg_doc_len = total / static_cast<double>(corpus.size());
    return index;
}

double idf(std::size_t n_docs, std::size_t df) noexcept {
    const double n = static_cast<double>(n_docs);
    const double f = static_cast<double>(df);
    return std::log(1.0 + (n - f + 0.5) / (f + 0.5));
}

double bm25_score(const std::vector<std::string>& query_terms, std::uint32_t doc, const TermIndex& index,
                  const Bm25Params& params) {
    const double len = static_cast<double>(index.doc_len.at(doc));
    const double norm = params.k1 * (1.0 - params.b + params.b * len / index.avg_doc_len);
    double score = 0.0;
    for (const auto& term : query_terms) {
        const double tf = static_cast<double>(index.tf(term, doc));
        if (tf == 0.0) {
            continue;
        }
        score += idf(index.doc_count(), index.df(term)) * tf * (1.0 + params.k1) / (tf + norm);
    }
    return score;
}

SearchResult bm25_search(std::string_view query_id, std::string_view query_text, const TermIndex& index,
                         std::size_t top_n, const Bm25Params& params) {
    SearchResult result;
    result.list.query_id = std::string(query_id);
    const auto terms = tokenize(query_text);
    if (terms.empty()) {
        result.status = SearchStatus::empty_query;
        return result;
    }
    // Term-at-a-time accumulation; same arithmetic order as bm25_score.
    std::unordered_map<std::uint32_t, double> acc;
    const double n = static_cast<double>(index.doc_count());
    for (const auto& term : terms) {
        const auto it = index.postings.find(term);
        if (it == index.postings.end()) {
            continue;
        }
        const double w = idf(static_cast<std::size_t>(n), it->second.size());
        for (const auto& p : it->second) {
            const double len = static_cast<double>(index.doc_len[p.doc]);
            const double norm = params.k1 * (1.0 - params.b + params.b * len / index.avg_doc_len);
            const double tf = static_cast<double>(p.tf);
            acc[p.doc] += w * tf * (1.0 + params.k1) / (tf + norm);
        }
    }
    if (acc.empty()) {
        result.status = SearchStatus::no_match;
        return result;
    }
    std::vector<ScoredDoc> all;
    all.reserve(acc.size());
    for (const auto& [doc, s] : acc) {
        all.push_back(ScoredDoc{index.doc_ids[doc], s});
    }
    const auto keep = std::min(top_n, all.size());
    std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(keep), all.end(), ranks_before);
    all.resize(keep);
    result.list.entries = std::move(all);
    return result;
}

Run bm25_run(const ingest::QuerySet& queries, const TermIndex& index, std::size_t top_n, const Bm25Params& params) {
    Run run;
    for (const auto& q : queries.passages()) {
        run[q.id] = bm25_search(q.id, q.text, index, top_n, params).list;
    }
    return run;
}

std::string encode_index(const TermIndex& index) {
    detail::BinaryWriter w;
    w.put_bytes(std::string_view(kMagic, 4));
    w.put(kTermIndexVersion);
    w.put_string(index.tokenizer);
    w.put_string(index.config_digest);
    w.put(static_cast<std::uint64_t>(index.doc_ids.size()));
    for (const auto& id : index.doc_ids) {
        w.put_string(id);
    }
    for (const auto len : index.doc_len) {
        w.put(len);
    }
    w.put(static_cast<std::uint64_t>(index.postings.size()));
    for (const auto& [term, list] : index.postings) {
        w.put_string(term);
        w.put_varint(list.size());
        std::uint32_t prev = 0;
        for (const auto& p : list) {
            w.put_varint(p.doc - prev);
            w.put_varint(p.tf);
            prev = p.doc;
        }
    }
    return w.release();
}

TermIndex decode_index(std::string_view bytes, const std::string& source) {
    detail::BinaryReader r(bytes, source);
    if (r.get_bytes(4, "magic") != std::string_view(kMagic, 4)) {
        r.fail("bad magic, expected BM25");
    }
    const auto version = r.get<std::uint32_t>("version");
    if (version != kTermIndexVersion) {
        r.fail("unsupported version " + std::to_string(version));
    }
    TermIndex index;
    index.tokenizer = r.get_string("tokenizer digest");
    if (index.tokenizer != tokenizer_digest()) {
        r.fail("tokenizer digest " + index.tokenizer + " does not match this build (" + tokenizer_digest() + ")");
    }
    index.config_digest = r.get_string("config digest");
    const auto n = r.get<std::uint64_t>("doc count");
    if (n == 0 || n > r.remaining()) {
        r.fail("implausible doc count " + std::to_string(n));
    }
    index.doc_ids.reserve(n);
    for (std::uint64_t i = 0; i < n; ++i) {
        index.doc_ids.push_back(r.get_string("doc id"));
    }
    double total = 0.0;
    for (std::uint64_t i = 0; i < n; ++i) {
        index.doc_len.push_back(r.get<std::uint32_t>("doc length"));
        total += index.doc_len.back();
    }
    index.avg_doc_len = total / static_cast<double>(n);
    const auto terms = r.get<std::uint64_t>("term count");
    for (std::uint64_t t = 0; t < terms; ++t) {
        auto term = r.get_string("term");
        const auto count = r.get_varint("posting count");
        if (count == 0 || count > n) {
            r.fail("bad posting count for term " + term);
        }
        std::vector<Posting> list;
        list.reserve(count);
        std::uint64_t doc = 0;
        for (std::uint64_t i = 0; i < count; ++i) {
            const auto gap = r.get_varint("doc gap");
            if (i > 0 && gap == 0) {
                r.fail("non-increasing posting list for term " + term);
            }
            doc += gap;
            if (doc >= n) {
                r.fail("posting doc out of range for term " + term);
            }
            const auto tf = r.get_varint("term frequency");
            list.push_back(Posting{static_cast<std::uint32_t>(doc), static_cast<std::uint32_t>(tf)});
        }
        index.postings.emplace(std::move(term), std::move(list));
    }
    r.expect_end();
    return index;
}

void write_index(const TermIndex& index, const std::string& path) {
    detail::write_file_bytes(path, encode_index(index));
}

TermIndex read_index(const std::string& path) { return decode_index(detail::read_file_bytes(path), path); }

MismatchSet mismatch_set(const Run& run, const ingest::Qrels& qrels, std::size_t cutoff) {
    if (cutoff == 0) {
        throw ValidationError("mismatch_set: cutoff must be >= 1");
    }
    MismatchSet out;
    out.cutoff = cutoff;
    for (const auto& [qid, judged] : qrels.entries()) {
        const bool has_positive =
            std::any_of(judged.begin(), judged.end(), [](const auto& kv) { return kv.second >= 1; });
        if (!has_positive) {
            ++out.skipped_no_positive;
            continue;
        }
        ++out.considered;
        bool hit = false;
        if (const auto it = run.find(qid); it != run.end()) {
            const auto depth = std::min(cutoff, it->second.entries.size());
            for (std::size_t r = 0; r < depth && !hit; ++r) {
                const auto g = judged.find(it->second.entries[r].doc_id);
                hit = g != judged.end() && g->second >= 1;
            }
        }
        if (!hit) {
            out.queries.insert(qid);
        }
    }
    return out;
}

}  // namespace latentir::lexical
