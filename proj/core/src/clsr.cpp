#include "latentir/clsr.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_set>

#include "binary_io.hpp"
#include "latentir/errors.hpp"

namespace latentir::clsr {

namespace {

constexpr char kMagic[4] = {'C', 'L', 'S', 'R'};

std::size_t varint_size(std::uint64_t v) noexcept {
    std::size_t n = 1;
    while (v >= 0x80) {
        v >>= 7;
        ++n;
    }
    return n;
}

/// Fills idf, avg_mass from postings and doc_mass.
void derive_stats(ConceptIndex& index) {
    const double n = static_cast<double>(index.doc_count());
    index.idf.assign(index.m, 0.0);
    for (std::uint32_t j = 0; j < index.m; ++j) {
        index.idf[j] = n == 0.0 ? 0.0 : std::log(n / (1.0 + static_cast<double>(index.postings[j].size())));
    }
    index.avg_mass = n == 0.0 ? 0.0 : std::accumulate(index.doc_mass.begin(), index.doc_mass.end(), 0.0) / n;
}

const Posting* find_posting(const std::vector<Posting>& list, std::uint32_t doc) {
    const auto it =
        std::lower_bound(list.begin(), list.end(), doc, [](const Posting& p, std::uint32_t d) { return p.doc < d; });
    return it != list.end() && it->doc == doc ? &*it : nullptr;
}

void check_query(const SparseCode& query, const ConceptIndex& index) {
    query.check();
    if (!query.empty() && query.indices.back() >= index.m) {
        throw ValidationError("query latent " + std::to_string(query.indices.back()) + " out of range (m = " +
                              std::to_string(index.m) + ")");
    }
}

}  // namespace

void ScoringParams::validate() const {
    if (!(k1 > 0.0) || !(b >= 0.0) || !(k2 > 0.0)) {
        throw ValidationError("scoring params need k1 > 0, b >= 0, k2 > 0");
    }
}

const std::vector<Preset>& presets() {
    // The k48/k64 caps are not published; they index up to k latents.
    static const std::vector<Preset> all = {
        {"efficient", 32, 24, {0.6, 1.75, 2.5}},
        {"k48", 48, 48, {0.6, 1.25, 2.0}},
        {"k64", 64, 64, {0.4, 0.75, 2.5}},
        {"max", 128, 65, {0.2, 3.0, 0.5}},
    };
    return all;
}

const Preset& preset(std::string_view name) {
    for (const auto& p : presets()) {
        if (p.name == name) {
            return p;
        }
    }
    throw ValidationError("unknown scoring preset '" + std::string(name) + "' (known: efficient, k48, k64, max)");
}

std::size_t ConceptIndex::find(std::string_view doc_id) const {
    for (std::size_t i = 0; i < doc_ids.size(); ++i) {
        if (doc_ids[i] == doc_id) {
            return i;
        }
    }
    return static_cast<std::size_t>(-1);
}

double ConceptIndex::avg_doc_len() const noexcept {
    if (doc_ids.empty()) {
        return 0.0;
    }
    std::size_t total = 0;
    for (const auto& list : postings) {
        total += list.size();
    }
    return static_cast<double>(total) / static_cast<double>(doc_ids.size());
}

std::size_t ConceptIndex::vocab_size() const noexcept {
    return static_cast<std::size_t>(
        std::count_if(postings.begin(), postings.end(), [](const auto& l) { return !l.empty(); }));
}

SparseCode ConceptIndex::doc_code(std::size_t i) const {
    SparseCode code;
    code.origin_id = doc_ids.at(i);
    const auto doc = static_cast<std::uint32_t>(i);
    for (std::uint32_t j = 0; j < m; ++j) {
        if (const auto* p = find_posting(postings[j], doc)) {
            code.indices.push_back(j);
            code.values.push_back(p->activation);
        }
    }
    return code;
}

ConceptIndex build_index(const std::vector<SparseCode>& doc_codes, std::uint32_t m, std::uint32_t cap,
                         std::string config_digest) {
    if (cap == 0) {
        throw ValidationError("concept index: cap must be >= 1");
    }
    ConceptIndex index;
    index.m = m;
    index.cap = cap;
    index.config_digest = std::move(config_digest);
    index.postings.assign(m, {});
    std::unordered_set<std::string> seen;
    std::vector<std::size_t> order;
    for (std::size_t i = 0; i < doc_codes.size(); ++i) {
        const auto& code = doc_codes[i];
        code.check();
        if (!seen.insert(code.origin_id).second) {
            throw ValidationError("concept index: duplicate doc id '" + code.origin_id + "'");
        }
        if (!code.empty() && code.indices.back() >= m) {
            throw ValidationError("concept index: latent " + std::to_string(code.indices.back()) +
                                  " out of range for doc '" + code.origin_id + "'");
        }
        order.resize(code.size());
        std::iota(order.begin(), order.end(), 0);
        const auto keep = std::min<std::size_t>(cap, code.size());
        // indices are ascending, so a stable order on value alone breaks ties to the lower latent.
        std::stable_sort(order.begin(), order.end(),
                         [&](std::size_t a, std::size_t b) { return code.values[a] > code.values[b]; });
        order.resize(keep);
        std::sort(order.begin(), order.end());
        double mass = 0.0;
        const auto doc = static_cast<std::uint32_t>(i);
        for (const auto pos : order) {
            const auto a = static_cast<float>(code.values[pos]);
            index.postings[code.indices[pos]].push_back(Posting{doc, a});
            mass += static_cast<double>(a);
        }
        index.empty_docs += keep == 0 ? 1 : 0;
        index.doc_ids.push_back(code.origin_id);
        index.doc_mass.push_back(mass);
    }
    derive_stats(index);
    return index;
}

double f_q(double z, double k2) noexcept { return z * (1.0 + k2) / (z + k2); }

double f_d(double z, double doc_mass, double avg_mass, double k1, double b) {
    if (avg_mass == 0.0) {
        throw ValidationError("f_d: average doc mass is 0");
    }
    return z * (1.0 + k1) / (z + k1 * (1.0 - b + b * doc_mass / avg_mass));
}

std::vector<Contribution> explain(const SparseCode& query, std::uint32_t doc, const ConceptIndex& index,
                                  const ScoringParams& params) {
    check_query(query, index);
    if (doc >= index.doc_count()) {
        throw ValidationError("explain: doc position out of range");
    }
    std::vector<Contribution> out;
    for (std::size_t n = 0; n < query.size(); ++n) {
        const auto j = query.indices[n];
        const auto* p = find_posting(index.postings[j], doc);
        if (p == nullptr) {
            continue;
        }
        Contribution c;
        c.latent = j;
        c.query_activation = query.values[n];
        c.doc_activation = p->activation;
        c.fq = f_q(c.query_activation, params.k2);
        c.fd = f_d(c.doc_activation, index.doc_mass[doc], index.avg_mass, params.k1, params.b);
        c.idf = index.idf[j];
        c.value = c.fq * c.fd * c.idf;
        out.push_back(c);
    }
    return out;
}

double score(const SparseCode& query, std::uint32_t doc, const ConceptIndex& index, const ScoringParams& params) {
    double s = 0.0;
    for (const auto& c : explain(query, doc, index, params)) {
        s += c.value;
    }
    return s;
}

SearchResult search(const SparseCode& query, const ConceptIndex& index, const ScoringParams& params,
                    std::size_t top_n) {
    params.validate();
    check_query(query, index);
    SearchResult result;
    result.list.query_id = query.origin_id;
    if (query.empty()) {
        result.status = SearchStatus::empty_query_code;
        return result;
    }
    std::vector<double> acc(index.doc_count(), 0.0);
    std::vector<std::uint32_t> touched;
    std::vector<bool> hit(index.doc_count(), false);
    for (std::size_t n = 0; n < query.size(); ++n) {
        const auto j = query.indices[n];
        const double fq = f_q(query.values[n], params.k2);
        for (const auto& p : index.postings[j]) {
            const double fd = f_d(p.activation, index.doc_mass[p.doc], index.avg_mass, params.k1, params.b);
            acc[p.doc] += fq * fd * index.idf[j];
            if (!hit[p.doc]) {
                hit[p.doc] = true;
                touched.push_back(p.doc);
            }
        }
    }
    std::vector<ScoredDoc> all;
    all.reserve(touched.size());
    for (const auto doc : touched) {
        all.push_back(ScoredDoc{index.doc_ids[doc], acc[doc]});
    }
    const auto keep = std::min(top_n, all.size());
    std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(keep), all.end(), ranks_before);
    all.resize(keep);
    result.list.entries = std::move(all);
    return result;
}

double flops_estimate(const std::vector<SparseCode>& queries, const ConceptIndex& index) {
    if (index.doc_count() == 0) {
        throw ValidationError("flops_estimate: empty index");
    }
    if (queries.empty()) {
        throw ValidationError("flops_estimate: empty query set");
    }
    std::vector<std::size_t> qfreq(index.m, 0);
    for (const auto& q : queries) {
        check_query(q, index);
        for (const auto j : q.indices) {
            ++qfreq[j];
        }
    }
    const double nq = static_cast<double>(queries.size());
    const double nd = static_cast<double>(index.doc_count());
    double total = 0.0;
    for (std::uint32_t j = 0; j < index.m; ++j) {
        total += (static_cast<double>(qfreq[j]) / nq) * (static_cast<double>(index.postings[j].size()) / nd);
    }
    return total;
}

std::string encode_index(const ConceptIndex& index) {
    detail::BinaryWriter w;
    w.put_bytes(std::string_view(kMagic, 4));
    w.put(kConceptIndexVersion);
    w.put_string(index.config_digest);
    w.put(index.m);
    w.put(index.cap);
    w.put(static_cast<std::uint64_t>(index.doc_count()));
    for (const auto& id : index.doc_ids) {
        w.put_string(id);
    }
    for (const double mass : index.doc_mass) {
        w.put(mass);
    }
    w.put(static_cast<std::uint32_t>(index.vocab_size()));
    for (std::uint32_t j = 0; j < index.m; ++j) {
        const auto& list = index.postings[j];
        if (list.empty()) {
            continue;
        }
        w.put(j);
        w.put_varint(list.size());
        std::uint32_t prev = 0;
        for (const auto& p : list) {
            w.put_varint(p.doc - prev);
            w.put(p.activation);
            prev = p.doc;
        }
    }
    return w.release();
}

std::size_t storage_bytes(const ConceptIndex& index) {
    std::size_t n = 4 + 4 + 4 + index.config_digest.size() + 4 + 4 + 8;
    for (const auto& id : index.doc_ids) {
        n += 4 + id.size();
    }
    n += 8 * index.doc_mass.size() + 4;
    for (const auto& list : index.postings) {
        if (list.empty()) {
            continue;
        }
        n += 4 + varint_size(list.size());
        std::uint32_t prev = 0;
        for (const auto& p : list) {
            n += varint_size(p.doc - prev) + sizeof(float);
            prev = p.doc;
        }
    }
    return n;
}

ConceptIndex decode_index(std::string_view bytes, const std::string& source) {
    detail::BinaryReader r(bytes, source);
    if (r.get_bytes(4, "magic") != std::string_view(kMagic, 4)) {
        r.fail("bad magic, expected CLSR");
    }
    const auto version = r.get<std::uint32_t>("version");
    if (version != kConceptIndexVersion) {
        r.fail("unsupported version " + std::to_string(version));
    }
    ConceptIndex index;
    index.config_digest = r.get_string("config digest");
    index.m = r.get<std::uint32_t>("m");
    index.cap = r.get<std::uint32_t>("cap");
    if (index.m == 0 || index.cap == 0) {
        r.fail("m and cap must be positive");
    }
    const auto n = r.get<std::uint64_t>("doc count");
    if (n > r.remaining()) {
        r.fail("implausible doc count " + std::to_string(n));
    }
    for (std::uint64_t i = 0; i < n; ++i) {
        index.doc_ids.push_back(r.get_string("doc id"));
    }
    for (std::uint64_t i = 0; i < n; ++i) {
        index.doc_mass.push_back(r.get<double>("doc mass"));
    }
    index.postings.assign(index.m, {});
    std::vector<std::uint32_t> per_doc(n, 0);
    const auto latents = r.get<std::uint32_t>("latent count");
    std::int64_t last = -1;
    for (std::uint32_t t = 0; t < latents; ++t) {
        const auto j = r.get<std::uint32_t>("latent id");
        if (j >= index.m || static_cast<std::int64_t>(j) <= last) {
            r.fail("latent ids must be increasing and < m");
        }
        last = j;
        const auto count = r.get_varint("posting count");
        if (count == 0 || count > n) {
            r.fail("bad posting count for latent " + std::to_string(j));
        }
        auto& list = index.postings[j];
        list.reserve(count);
        std::uint64_t doc = 0;
        for (std::uint64_t i = 0; i < count; ++i) {
            const auto gap = r.get_varint("doc gap");
            if (i > 0 && gap == 0) {
                r.fail("non-increasing postings for latent " + std::to_string(j));
            }
            doc += gap;
            if (doc >= n) {
                r.fail("posting doc out of range for latent " + std::to_string(j));
            }
            const auto a = r.get<float>("activation");
            if (!(a > 0.0f)) {
                r.fail("non-positive activation for latent " + std::to_string(j));
            }
            list.push_back(Posting{static_cast<std::uint32_t>(doc), a});
            if (++per_doc[doc] > index.cap) {
                r.fail("doc exceeds the latent cap");
            }
        }
    }
    r.expect_end();
    index.empty_docs = static_cast<std::size_t>(std::count(per_doc.begin(), per_doc.end(), 0u));
    derive_stats(index);
    return index;
}

void write_index(const ConceptIndex& index, const std::string& path) {
    detail::write_file_bytes(path, encode_index(index));
}

ConceptIndex read_index(const std::string& path) { return decode_index(detail::read_file_bytes(path), path); }

}  // namespace latentir::clsr
