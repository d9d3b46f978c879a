#include "latentir/service.hpp"

#include <cmath>
#include <filesystem>
#include <set>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "binary_io.hpp"
#include "latentir/errors.hpp"
#include "latentir/lexical.hpp"
#include "latentir/workdir.hpp"

namespace latentir::service {

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

void require(const std::string& dir, std::string_view name, std::string_view producer) {
    if (!fs::exists(workdir::path(dir, name))) {
        throw ValidationError("missing " + workdir::path(dir, name) + " (run `" + std::string(producer) + "`)");
    }
}

void send_json(httplib::Response& res, const json& body, int status = 200) {
    res.status = status;
    res.set_content(body.dump(), "application/json; charset=utf-8");
}

void send_error(httplib::Response& res, int status, const std::string& message) {
    send_json(res, json{{"error", message}}, status);
}

std::optional<std::uint64_t> parse_uint(const std::string& s) {
    if (s.empty() || s.size() > 12 || s.find_first_not_of("0123456789") != std::string::npos) {
        return std::nullopt;
    }
    return std::stoull(s);
}

std::string description_of(const SessionStore& s, std::uint32_t latent) {
    const auto it = s.descriptions.find(latent);
    return it == s.descriptions.end() ? std::string{} : it->second.text;
}

json weighted_latents(const SessionStore& s, const SparseCode& code) {
    json arr = json::array();
    for (const auto& w : concepts::idf_weighted(code, s.stats)) {
        arr.push_back({{"latent_id", w.latent},
                       {"activation", w.activation},
                       {"weighted_activation", w.weighted},
                       {"description", description_of(s, w.latent)}});
    }
    return arr;
}

struct ResolvedQuery {
    std::string mode;
    std::string query_id;
    SparseCode code;
};

/// Query id first, then synthetic topic words; nullopt when neither applies.
std::optional<ResolvedQuery> resolve_query(const SessionStore& s, const std::string& q, std::string& why) {
    const auto& params = s.sae.params;
    if (const auto row = s.query_embeddings.find(q); row != ingest::EmbeddingStore::npos) {
        const auto f = s.query_embeddings.row(row);
        std::vector<double> h(f.begin(), f.end());
        return ResolvedQuery{"query_id", q, sae::encode_infer(params, h, s.sae.theta, q)};
    }
    if (!s.truth) {
        why = "'" + q + "' is not a known query id, and free text needs an encoder this service does not have";
        return std::nullopt;
    }
    std::set<std::size_t> topics;
    for (const auto& tok : lexical::tokenize(q)) {
        for (std::size_t t = 0; t < s.truth->vocabulary.size(); ++t) {
            const auto& words = s.truth->vocabulary[t];
            if (std::find(words.begin(), words.end(), tok) != words.end()) {
                topics.insert(t);
            }
        }
    }
    if (topics.empty()) {
        why = "no query id or synthetic topic word in '" + q + "'";
        return std::nullopt;
    }
    std::vector<double> h(params.d(), 0.0);
    for (const auto t : topics) {
        for (std::size_t i = 0; i < h.size(); ++i) {
            h[i] += s.truth->atoms[t][i];
        }
    }
    double norm = 0.0;
    for (const double x : h) {
        norm += x * x;
    }
    norm = std::sqrt(norm);
    for (auto& x : h) {
        x /= norm;
    }
    return ResolvedQuery{"synthetic_text", {}, sae::encode_infer(params, h, s.sae.theta, "text")};
}

}  // namespace

std::unique_ptr<SessionStore> load_session(const std::string& dir, const clsr::ScoringParams& params) {
    require(dir, workdir::kCorpus, "synth");
    require(dir, workdir::kQueries, "synth");
    require(dir, workdir::kDocEmbeddings, "synth");
    require(dir, workdir::kQueryEmbeddings, "synth");
    require(dir, workdir::kCheckpoint, "sae-train");
    require(dir, workdir::kConceptIndex, "index-build");
    require(dir, workdir::kLatentStats, "concept-stats");
    params.validate();

    auto s = std::make_unique<SessionStore>();
    s->workdir = dir;
    s->params = params;
    s->corpus = ingest::read_corpus(workdir::path(dir, workdir::kCorpus), ingest::TextFormat::tsv);
    s->queries = ingest::read_corpus(workdir::path(dir, workdir::kQueries), ingest::TextFormat::tsv);
    s->query_embeddings = ingest::read_embeddings(workdir::path(dir, workdir::kQueryEmbeddings));
    s->sae = sae::read_checkpoint(workdir::path(dir, workdir::kCheckpoint));
    s->index = clsr::read_index(workdir::path(dir, workdir::kConceptIndex));
    s->stats = concepts::read_stats(workdir::path(dir, workdir::kLatentStats));
    if (fs::exists(workdir::path(dir, workdir::kDescriptions))) {
        for (auto& d : concepts::read_descriptions(workdir::path(dir, workdir::kDescriptions))) {
            s->descriptions[d.latent] = std::move(d);
        }
    }
    const auto docs = ingest::read_embeddings(workdir::path(dir, workdir::kDocEmbeddings));
    for (auto& code : sae::encode_store(s->sae.params, s->sae.theta, docs)) {
        auto id = code.origin_id;
        s->doc_codes.emplace(std::move(id), std::move(code));
    }
    for (std::size_t i = 0; i < s->index.doc_count(); ++i) {
        s->doc_position[s->index.doc_ids[i]] = i;
    }
    if (fs::exists(workdir::path(dir, workdir::kSynthTruth))) {
        s->truth = ingest::read_synth_truth(workdir::path(dir, workdir::kSynthTruth));
    }
    if (fs::exists(workdir::path(dir, workdir::kBundles))) {
        const auto path = workdir::path(dir, workdir::kBundles);
        s->bundles = tasks::parse_bundles(detail::read_file_bytes(path), path);
    }
    s->annotations = std::make_unique<tasks::AnnotationStore>(workdir::path(dir, workdir::kAnnotations), s->bundles);
    return s;
}

Server::Server(SessionStore& session, ServerOptions options)
    : session_(session), options_(std::move(options)), http_(std::make_unique<httplib::Server>()) {
    routes();
}

Server::~Server() { stop(); }

int Server::bind() {
    int port = options_.port;
    if (port == 0) {
        port = http_->bind_to_any_port(options_.host);
    } else if (!http_->bind_to_port(options_.host, port)) {
        port = -1;
    }
    if (port <= 0) {
        throw std::runtime_error("cannot bind " + options_.host + ":" + std::to_string(options_.port));
    }
    return port;
}

void Server::listen() { http_->listen_after_bind(); }

void Server::stop() {
    if (http_) {
        http_->stop();
    }
}

bool Server::running() const { return http_->is_running(); }

void Server::routes() {
    auto& s = session_;
    auto& http = *http_;

    http.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
        try {
            std::rethrow_exception(ep);
        } catch (const ValidationError& e) {
            send_error(res, 400, e.what());
        } catch (const std::exception& e) {
            send_error(res, 500, e.what());
        }
    });

    http.Get("/api/search", [&s](const httplib::Request& req, httplib::Response& res) {
        const auto q = req.get_param_value("q");
        if (q.empty()) {
            return send_error(res, 400, "missing q");
        }
        std::size_t n = 10;
        if (req.has_param("n")) {
            const auto parsed = parse_uint(req.get_param_value("n"));
            if (!parsed || *parsed == 0 || *parsed > 1000) {
                return send_error(res, 400, "n must be an integer in [1, 1000]");
            }
            n = *parsed;
        }
        std::string why;
        const auto resolved = resolve_query(s, q, why);
        if (!resolved) {
            return send_error(res, 400, why);
        }
        const auto result = clsr::search(resolved->code, s.index, s.params, n);
        json results = json::array();
        for (std::size_t r = 0; r < result.list.entries.size(); ++r) {
            const auto& e = result.list.entries[r];
            const auto pos = static_cast<std::uint32_t>(s.doc_position.at(e.doc_id));
            json contributions = json::array();
            for (const auto& c : clsr::explain(resolved->code, pos, s.index, s.params)) {
                contributions.push_back({{"latent_id", c.latent},
                                         {"description", description_of(s, c.latent)},
                                         {"query_activation", c.query_activation},
                                         {"doc_activation", c.doc_activation},
                                         {"f_q", c.fq},
                                         {"f_d", c.fd},
                                         {"idf", c.idf},
                                         {"contribution", c.value}});
            }
            const auto cpos = s.corpus.find(e.doc_id);
            results.push_back({{"rank", r + 1},
                               {"doc_id", e.doc_id},
                               {"score", e.score},
                               {"text", cpos == ingest::Corpus::npos ? "" : s.corpus[cpos].text},
                               {"contributions", contributions}});
        }
        send_json(res, {{"mode", resolved->mode},
                        {"query_id", resolved->query_id.empty() ? json(nullptr) : json(resolved->query_id)},
                        {"status", result.status == clsr::SearchStatus::ok ? "ok" : "empty_query_code"},
                        {"query_latents", weighted_latents(s, resolved->code)},
                        {"results", results}});
    });

    http.Get(R"(/api/latent/([^/]+))", [&s](const httplib::Request& req, httplib::Response& res) {
        const auto id = parse_uint(req.matches[1]);
        if (!id || *id >= s.stats.size()) {
            return send_error(res, 404, "unknown latent " + std::string(req.matches[1]));
        }
        const auto& st = s.stats[*id];
        json top = json::array();
        for (const auto& p : st.top_passages) {
            const auto pos = s.corpus.find(p.doc_id);
            top.push_back({{"doc_id", p.doc_id},
                           {"activation", p.score},
                           {"weighted_activation", p.score * st.idf},
                           {"text", pos == ingest::Corpus::npos ? "" : s.corpus[pos].text}});
        }
        const auto d = s.descriptions.find(st.latent);
        json desc = nullptr;
        if (d != s.descriptions.end()) {
            desc = {{"text", d->second.text},
                    {"source", d->second.source == concepts::DescriptionSource::llm ? "llm" : "offline"},
                    {"model_name", d->second.model_name ? json(*d->second.model_name) : json(nullptr)}};
        }
        send_json(res, {{"latent_id", st.latent},
                        {"df", st.df},
                        {"idf", st.idf},
                        {"description", desc},
                        {"top_passages", top}});
    });

    http.Get(R"(/api/passage/([^/]+))", [&s](const httplib::Request& req, httplib::Response& res) {
        const std::string id = req.matches[1];
        const auto pos = s.corpus.find(id);
        const auto code = s.doc_codes.find(id);
        if (pos == ingest::Corpus::npos || code == s.doc_codes.end()) {
            return send_error(res, 404, "unknown passage " + id);
        }
        send_json(res, {{"doc_id", id}, {"text", s.corpus[pos].text}, {"latents", weighted_latents(s, code->second)}});
    });

    http.Get("/api/tasks/next", [&s](const httplib::Request& req, httplib::Response& res) {
        const auto annotator = req.get_param_value("annotator");
        if (annotator.empty()) {
            return send_error(res, 400, "missing annotator");
        }
        std::optional<tasks::TaskKind> kind;
        if (req.has_param("kind") && !req.get_param_value("kind").empty()) {
            try {
                kind = tasks::parse_kind(req.get_param_value("kind"));
            } catch (const ValidationError& e) {
                return send_error(res, 400, e.what());
            }
        }
        const tasks::TaskBundle* next = nullptr;
        std::size_t remaining = 0;
        for (const auto& b : s.bundles) {
            if ((kind && b.kind != *kind) || s.annotations->answered(b.task_id, annotator)) {
                continue;
            }
            ++remaining;
            if (next == nullptr) {
                next = &b;
            }
        }
        if (next == nullptr) {
            return send_json(res, {{"done", true}, {"remaining", 0}});
        }
        send_json(res, {{"done", false},
                        {"remaining", remaining},
                        {"task", json::parse(tasks::bundle_json(*next, /*with_answer=*/false))}});
    });

    const bool feedback = options_.feedback;
    http.Post(R"(/api/tasks/([^/]+)/answer)", [&s, feedback](const httplib::Request& req, httplib::Response& res) {
        const std::string task_id = req.matches[1];
        json body;
        try {
            body = json::parse(req.body);
        } catch (const json::exception&) {
            return send_error(res, 400, "body must be JSON {\"annotator\", \"choice\"}");
        }
        if (!body.is_object() || !body.contains("annotator") || !body.contains("choice") ||
            !body["annotator"].is_string() || !body["choice"].is_string()) {
            return send_error(res, 400, "body must be JSON {\"annotator\", \"choice\"}");
        }
        try {
            const auto a = s.annotations->record(task_id, body["annotator"].get<std::string>(),
                                                 body["choice"].get<std::string>());
            json out = {{"recorded", true},
                        {"task_id", a.task_id},
                        {"annotator", a.annotator_id},
                        {"timestamp", a.timestamp}};
            if (feedback) {
                out["correct"] = a.correct;
            }
            send_json(res, out);
        } catch (const tasks::UnknownTask& e) {
            send_error(res, 404, e.what());
        } catch (const tasks::DuplicateAnnotation& e) {
            // The earlier record lets a retrying client settle without resubmitting.
            json out = {{"error", e.what()}};
            for (const auto& a : s.annotations->all()) {
                if (a.task_id == task_id && a.annotator_id == body["annotator"].get<std::string>()) {
                    out["recorded"] = {{"choice", a.choice}, {"timestamp", a.timestamp}};
                    if (feedback) {
                        out["recorded"]["correct"] = a.correct;
                    }
                }
            }
            send_json(res, out, 409);
        } catch (const ValidationError& e) {
            send_error(res, 400, e.what());
        }
    });

    http.Get("/api/stats", [&s](const httplib::Request&, httplib::Response& res) {
        const auto all = s.annotations->all();
        json groups = json::object();
        for (const auto& [key, g] : tasks::score_annotations(all, s.bundles)) {
            groups[key] = {{"total", g.total}, {"correct", g.correct}, {"accuracy", g.accuracy}};
        }
        send_json(res, {{"annotations", all.size()}, {"tasks", s.bundles.size()}, {"groups", groups}});
    });

    const auto static_dir =
        options_.static_dir.empty() ? workdir::path(s.workdir, workdir::kUiDir) : options_.static_dir;
    if (fs::is_directory(static_dir)) {
        http.set_mount_point("/", static_dir);
    }
}

}  // namespace latentir::service
