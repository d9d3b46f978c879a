#include "latentir/cli.hpp"

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <CLI11.hpp>
#include <cmath>
#include <csignal>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <nlohmann/json.hpp>
#include <set>
#include <sstream>

#include "latentir/clsr.hpp"
#include "latentir/concepts.hpp"
#include "latentir/errors.hpp"
#include "latentir/http_llm.hpp"
#include "latentir/lexical.hpp"
#include "latentir/metrics.hpp"
#include "latentir/prompts.hpp"
#include "latentir/recon_eval.hpp"
#include "latentir/run_config.hpp"
#include "latentir/run_file.hpp"
#include "latentir/sae.hpp"
#include "latentir/service.hpp"
#include "latentir/synth.hpp"
#include "latentir/tasks.hpp"
#include "latentir/workdir.hpp"

namespace latentir::cli {

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

std::string read_text(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw std::runtime_error("cannot read " + path);
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text(const std::string& path, std::string_view text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!out) {
        throw std::runtime_error("cannot write " + path);
    }
}

/// A stage input is absent; the message names the command that produces it.
class MissingInput : public ValidationError {
public:
    MissingInput(const std::string& path, const std::string& producer)
        : ValidationError("missing " + path + "; run `latentir " + producer + "` first") {}
};

/// Exclusive advisory lock on <workdir>/.lock for the lifetime of a command.
class WorkdirLock {
public:
    explicit WorkdirLock(const std::string& dir) {
        fs::create_directories(dir);
        const auto path = dir + "/.lock";
        fd_ = ::open(path.c_str(), O_CREAT | O_RDWR | O_CLOEXEC, 0644);
        if (fd_ < 0) {
            throw std::runtime_error("cannot open " + path);
        }
        if (::flock(fd_, LOCK_EX | LOCK_NB) != 0) {
            ::close(fd_);
            throw std::runtime_error("workdir " + dir + " is locked by another latentir process");
        }
    }
    ~WorkdirLock() {
        ::flock(fd_, LOCK_UN);
        ::close(fd_);
    }
    WorkdirLock(const WorkdirLock&) = delete;
    WorkdirLock& operator=(const WorkdirLock&) = delete;

private:
    int fd_ = -1;
};

struct Context {
    RunConfig cfg;
    std::string wd;
    std::string digest;
    bool json_out = false;
    bool offline_flag = false;
    std::string query_id;
    std::string basis = "both";
    std::ostream* out = nullptr;
    std::ostream* err = nullptr;

    [[nodiscard]] std::string at(std::string_view name) const { return workdir::path(wd, name); }

    /// Path of a workdir artifact that must already exist.
    [[nodiscard]] std::string need(std::string_view name, const std::string& producer) const {
        auto p = at(name);
        if (!fs::exists(p)) {
            throw MissingInput(p, producer);
        }
        return p;
    }

    /// An input that may be redirected through [paths].
    [[nodiscard]] std::string need_input(const std::string& key, std::string_view name) const {
        auto p = cfg.input_path(key, name);
        if (!fs::exists(p)) {
            throw MissingInput(p, "synth");
        }
        return p;
    }

    /// Records which config produced `artifact` in <workdir>/manifest.json.
    void stamp(std::string_view artifact, const std::string& command) const {
        const auto path = at("manifest.json");
        json m = json::object();
        if (fs::exists(path)) {
            try {
                m = json::parse(read_text(path));
            } catch (const json::exception&) {
                m = json::object();
            }
        }
        m[std::string(artifact)] = {{"config_digest", digest}, {"command", command}};
        write_text(path, m.dump(1) + "\n");
    }

    void print(const json& j, const std::string& text) const {
        if (json_out) {
            *out << j.dump(1) << "\n";
        } else {
            *out << text;
        }
    }
};

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), f, v);
    return buf;
}

ingest::Corpus load_corpus(const Context& c) {
    const auto p = c.need_input("paths.corpus", workdir::kCorpus);
    return ingest::read_corpus(p, ingest::format_for_path(p));
}

ingest::QuerySet load_queries(const Context& c) {
    const auto p = c.need_input("paths.queries", workdir::kQueries);
    return ingest::read_corpus(p, ingest::format_for_path(p));
}

ingest::Qrels load_qrels(const Context& c) {
    return ingest::read_qrels(c.need_input("paths.qrels", workdir::kQrels));
}

ingest::EmbeddingStore load_docs(const Context& c) {
    return ingest::read_embeddings(c.need_input("paths.doc_embeddings", workdir::kDocEmbeddings));
}

ingest::EmbeddingStore load_query_embeddings(const Context& c) {
    return ingest::read_embeddings(c.need_input("paths.query_embeddings", workdir::kQueryEmbeddings));
}

sae::Checkpoint load_checkpoint(const Context& c) {
    return sae::read_checkpoint(c.need(workdir::kCheckpoint, "sae-train"));
}

std::vector<std::size_t> parse_cutoffs(const std::string& s) {
    std::vector<std::size_t> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            const auto v = std::stoul(item);
            if (v == 0) {
                throw std::invalid_argument(item);
            }
            out.push_back(v);
        } catch (const std::exception&) {
            throw ValidationError("eval.mismatch_cutoffs: bad cutoff '" + item + "'");
        }
    }
    if (out.empty()) {
        throw ValidationError("eval.mismatch_cutoffs is empty");
    }
    std::sort(out.begin(), out.end());
    return out;
}

Run restrict(const Run& run, const std::set<std::string>& keep) {
    Run out;
    for (const auto& [qid, list] : run) {
        if (keep.count(qid) != 0) {
            out.emplace(qid, list);
        }
    }
    return out;
}

ingest::Qrels restrict(const ingest::Qrels& qrels, const std::set<std::string>& keep) {
    ingest::Qrels out;
    for (const auto& [qid, judged] : qrels.entries()) {
        if (keep.count(qid) != 0) {
            for (const auto& [doc, g] : judged) {
                out.set(qid, doc, g);
            }
        }
    }
    return out;
}

std::unique_ptr<llm::LlmClient> make_client(const Context& c, std::unique_ptr<llm::LlmClient>& inner) {
    if (!c.cfg.get("llm.replay").empty()) {
        return std::make_unique<llm::ReplayClient>(c.cfg.get("llm.replay"));
    }
    inner = std::make_unique<llm::HttpLlmClient>(c.cfg.get("llm.endpoint"), c.cfg.get("llm.model"));
    return std::make_unique<llm::RecordingClient>(*inner, c.at("llm_log.jsonl"));
}

// ---------------------------------------------------------------- commands

int cmd_synth(Context& c) {
    const auto spec = c.cfg.synth_spec();
    const auto data = ingest::synth_generate(spec);
    ingest::write_corpus(data.corpus, c.at(workdir::kCorpus), ingest::TextFormat::tsv);
    ingest::write_corpus(data.queries, c.at(workdir::kQueries), ingest::TextFormat::tsv);
    ingest::write_qrels(data.qrels, c.at(workdir::kQrels));
    ingest::write_embeddings(data.doc_embeddings, c.at(workdir::kDocEmbeddings));
    ingest::write_embeddings(data.query_embeddings, c.at(workdir::kQueryEmbeddings));
    ingest::write_synth_truth(data.truth, c.at(workdir::kSynthTruth));
    for (const auto name : {workdir::kCorpus, workdir::kQueries, workdir::kQrels, workdir::kDocEmbeddings,
                            workdir::kQueryEmbeddings, workdir::kSynthTruth}) {
        c.stamp(name, "synth");
    }
    c.print({{"docs", data.corpus.size()}, {"queries", data.queries.size()}, {"d", spec.d}, {"config_digest", c.digest}},
            "synth: " + std::to_string(data.corpus.size()) + " docs, " + std::to_string(data.queries.size()) +
                " queries, d=" + std::to_string(spec.d) + " -> " + c.wd + "\n");
    return kOk;
}

int cmd_sae_train(Context& c) {
    const auto docs = load_docs(c);
    const auto config = c.cfg.sae_config(docs.dim());
    const auto data = sae::to_matrix(docs);
    auto result = sae::fit(data, config);

    sae::Checkpoint ckpt{result.params, config.k, result.state.theta, c.digest};
    sae::write_checkpoint(ckpt, c.at(workdir::kCheckpoint));
    sae::write_loss_log(result.state.loss_log, c.at(workdir::kTrainLog), c.digest);
    c.stamp(workdir::kCheckpoint, "sae-train");
    c.stamp(workdir::kTrainLog, "sae-train");

    const auto recon = recon::reconstruct_store(result.params, result.state.theta, docs);
    const double err = sae::nmse(data, sae::to_matrix(recon));
    std::size_t dead = 0;
    for (const auto s : result.state.steps_since_fire) {
        dead += s >= config.dead_window ? 1 : 0;
    }
    c.print({{"nmse", err},
             {"theta", result.state.theta},
             {"steps", result.state.step},
             {"dead_latents", dead},
             {"m", config.m},
             {"k", config.k},
             {"config_digest", c.digest}},
            "sae-train: m=" + std::to_string(config.m) + " k=" + std::to_string(config.k) + " steps=" +
                std::to_string(result.state.step) + " nmse=" + fmt("%.4f", err) + " theta=" +
                fmt("%.4f", result.state.theta) + " dead=" + std::to_string(dead) + "\n");
    return kOk;
}

int cmd_sae_eval(Context& c) {
    const auto ckpt = load_checkpoint(c);
    const auto docs = load_docs(c);
    const auto queries = load_query_embeddings(c);
    const auto qrels = load_qrels(c);
    const auto report = recon::recon_report(docs, queries, ckpt.params, ckpt.theta, qrels);
    write_text(c.at(workdir::kReconReport), recon::report_csv(report, c.digest));
    c.stamp(workdir::kReconReport, "sae-eval");
    json rows = json::array();
    for (const auto& r : report.rows) {
        rows.push_back({{"model", r.model},
                        {"nmse", r.nmse},
                        {"mrr_at_10", r.mrr_at_10},
                        {"recall_at_1000", r.recall_at_1000},
                        {"ndcg_at_10", r.ndcg_at_10},
                        {"spearman_mean", r.spearman_mean},
                        {"spearman_var", r.spearman_var}});
    }
    c.print({{"rows", rows}, {"top_n", report.top_n}, {"queries", report.query_count}, {"config_digest", c.digest}},
            recon::report_table(report));
    return kOk;
}

int cmd_concept_stats(Context& c) {
    const auto ckpt = load_checkpoint(c);
    const auto docs = load_docs(c);
    const auto codes = sae::encode_store(ckpt.params, ckpt.theta, docs);
    const auto stats = concepts::compute_stats(codes, static_cast<std::uint32_t>(ckpt.params.m()),
                                               c.cfg.get_size("concepts.top_passages"));
    concepts::write_stats(stats, c.at(workdir::kLatentStats), c.digest);
    c.stamp(workdir::kLatentStats, "concept-stats");
    std::size_t alive = 0;
    double l0 = 0.0;
    for (const auto& s : stats) {
        alive += s.df > 0 ? 1 : 0;
        l0 += static_cast<double>(s.df);
    }
    l0 /= static_cast<double>(codes.size());
    c.print({{"latents", stats.size()}, {"alive", alive}, {"mean_l0", l0}, {"config_digest", c.digest}},
            "concept-stats: " + std::to_string(alive) + "/" + std::to_string(stats.size()) +
                " latents fire, mean active per doc " + fmt("%.2f", l0) + "\n");
    return kOk;
}

int cmd_describe(Context& c) {
    const auto stats = concepts::read_stats(c.need(workdir::kLatentStats, "concept-stats"));
    const auto corpus = load_corpus(c);
    const auto n_examples = c.cfg.get_size("concepts.describe_examples");
    std::map<std::uint32_t, concepts::Examples> examples;
    for (const auto& s : stats) {
        auto& ex = examples[s.latent];
        for (std::size_t i = 0; i < std::min(n_examples, s.top_passages.size()); ++i) {
            const auto pos = corpus.find(s.top_passages[i].doc_id);
            if (pos == ingest::Corpus::npos) {
                throw ValidationError("latent stats reference doc '" + s.top_passages[i].doc_id +
                                      "' missing from the corpus; rerun `latentir concept-stats`");
            }
            ex.emplace_back(corpus[pos].text, s.top_passages[i].score);
        }
    }
    const bool offline = c.offline_flag || c.cfg.get_bool("llm.offline");
    const auto tdf = concepts::token_df(corpus);
    std::unique_ptr<llm::LlmClient> inner;
    std::unique_ptr<llm::LlmClient> client;
    if (!offline) {
        client = make_client(c, inner);
    }
    const auto descriptions =
        concepts::describe_all(examples, client.get(), tdf, c.cfg.get_size("llm.concurrency"));
    concepts::write_descriptions(descriptions, c.at(workdir::kDescriptions), c.digest);
    c.stamp(workdir::kDescriptions, "describe");
    c.print({{"described", descriptions.size()},
             {"source", offline ? "offline" : "llm"},
             {"config_digest", c.digest}},
            "describe: " + std::to_string(descriptions.size()) + " latents (" + (offline ? "offline" : "llm") +
                ")\n");
    return kOk;
}

json intrusion_json(const concepts::IntrusionReport& r) {
    return {{"judge", r.judge},
            {"accuracy", r.accuracy},
            {"evaluated", r.evaluated},
            {"correct", r.correct},
            {"skipped", r.skipped}};
}

int cmd_intrude(Context& c) {
    const auto ckpt = load_checkpoint(c);
    const auto docs = load_docs(c);
    const auto corpus = load_corpus(c);
    const auto n = c.cfg.get_size("concepts.intrusion_latents");
    const auto judge_name = c.cfg.get("concepts.intrusion_judge");
    std::unique_ptr<llm::LlmClient> inner;
    std::unique_ptr<llm::LlmClient> client;
    auto make_judge = [&]() -> std::unique_ptr<concepts::IntrusionJudge> {
        if (judge_name == "offline") {
            return std::make_unique<concepts::TokenCentroidJudge>();
        }
        if (judge_name == "random") {
            return std::make_unique<concepts::RandomJudge>(c.cfg.seed());
        }
        if (judge_name == "oracle") {
            return std::make_unique<concepts::OracleJudge>();
        }
        if (judge_name == "llm") {
            if (!client) {
                client = make_client(c, inner);
            }
            return std::make_unique<concepts::LlmJudge>(*client);
        }
        throw ValidationError("concepts.intrusion_judge must be offline, random, oracle or llm");
    };
    if (c.basis != "sae" && c.basis != "neuron" && c.basis != "both") {
        throw ValidationError("--basis must be sae, neuron or both");
    }
    json report = {{"config_digest", c.digest}};
    std::string text = "intrude (" + judge_name + "):";
    auto run_basis = [&](const std::string& name, std::uint32_t m, const std::vector<SparseCode>& codes) {
        auto judge = make_judge();
        const auto r = concepts::intrusion_test(concepts::sample_latents(m, n, c.cfg.seed()), codes, corpus, *judge,
                                                c.cfg.seed());
        report[name] = intrusion_json(r);
        text += " " + name + " accuracy " + fmt("%.3f", r.accuracy) + " over " + std::to_string(r.evaluated) +
                " latents (" + std::to_string(r.skipped.size()) + " skipped);";
    };
    if (c.basis != "neuron") {
        run_basis("sae", static_cast<std::uint32_t>(ckpt.params.m()),
                  sae::encode_store(ckpt.params, ckpt.theta, docs));
    }
    if (c.basis != "sae") {
        run_basis("neuron", docs.dim(), concepts::neuron_codes(docs));
    }
    text.back() = '\n';
    write_text(c.at(workdir::kIntrusion), report.dump(1) + "\n");
    c.stamp(workdir::kIntrusion, "intrude");
    c.print(report, text);
    return kOk;
}

int cmd_index_build(Context& c) {
    const auto ckpt = load_checkpoint(c);
    const auto docs = load_docs(c);
    const auto codes = sae::encode_store(ckpt.params, ckpt.theta, docs);
    const auto cap = c.cfg.clsr_cap();
    const auto index = clsr::build_index(codes, static_cast<std::uint32_t>(ckpt.params.m()), cap, c.digest);
    clsr::write_index(index, c.at(workdir::kConceptIndex));
    c.stamp(workdir::kConceptIndex, "index-build");
    const auto bytes = clsr::storage_bytes(index);
    c.print({{"docs", index.doc_count()},
             {"cap", cap},
             {"avg_doc_len", index.avg_doc_len()},
             {"vocab_size", index.vocab_size()},
             {"empty_docs", index.empty_docs},
             {"storage_bytes", bytes},
             {"config_digest", c.digest}},
            "index-build: " + std::to_string(index.doc_count()) + " docs, cap " + std::to_string(cap) +
                ", avg latents/doc " + fmt("%.2f", index.avg_doc_len()) + ", " + std::to_string(bytes) + " bytes (" +
                std::to_string(index.empty_docs) + " empty)\n");
    return kOk;
}

std::vector<SparseCode> query_codes(const Context& c, const sae::Checkpoint& ckpt) {
    return sae::encode_store(ckpt.params, ckpt.theta, load_query_embeddings(c));
}

int cmd_search(Context& c) {
    const auto index = clsr::read_index(c.need(workdir::kConceptIndex, "index-build"));
    const auto ckpt = load_checkpoint(c);
    const auto params = c.cfg.scoring_params();
    const auto top_n = c.cfg.get_size("clsr.top_n");
    Run run;
    std::size_t empty = 0;
    for (const auto& code : query_codes(c, ckpt)) {
        auto result = clsr::search(code, index, params, top_n);
        result.list.query_id = code.origin_id;
        empty += result.status == clsr::SearchStatus::empty_query_code ? 1 : 0;
        run[code.origin_id] = std::move(result.list);
    }
    write_run(run, c.at(workdir::kConceptRun), "clsr-" + c.digest);
    c.stamp(workdir::kConceptRun, "search");
    if (!c.query_id.empty()) {
        const auto it = run.find(c.query_id);
        if (it == run.end()) {
            throw ValidationError("unknown query id '" + c.query_id + "'");
        }
        json rows = json::array();
        std::string text;
        for (std::size_t r = 0; r < std::min<std::size_t>(10, it->second.entries.size()); ++r) {
            const auto& e = it->second.entries[r];
            rows.push_back({{"rank", r + 1}, {"doc_id", e.doc_id}, {"score", e.score}});
            text += std::to_string(r + 1) + "\t" + e.doc_id + "\t" + fmt("%.6f", e.score) + "\n";
        }
        c.print({{"query_id", c.query_id}, {"results", rows}}, text);
        return kOk;
    }
    c.print({{"queries", run.size()}, {"empty_query_codes", empty}, {"config_digest", c.digest}},
            "search: " + std::to_string(run.size()) + " queries (" + std::to_string(empty) +
                " with empty codes) -> " + c.at(workdir::kConceptRun) + "\n");
    return kOk;
}

int cmd_bm25_index(Context& c) {
    const auto corpus = load_corpus(c);
    const auto index = lexical::build_index(corpus, c.digest);
    lexical::write_index(index, c.at(workdir::kBm25Index));
    c.stamp(workdir::kBm25Index, "bm25-index");
    c.print({{"docs", index.doc_count()}, {"vocab_size", index.vocab_size()}, {"avg_doc_len", index.avg_doc_len},
             {"config_digest", c.digest}},
            "bm25-index: " + std::to_string(index.doc_count()) + " docs, " + std::to_string(index.vocab_size()) +
                " terms\n");
    return kOk;
}

lexical::Bm25Params bm25_params(const Context& c) {
    return lexical::Bm25Params{c.cfg.get_double("bm25.k1"), c.cfg.get_double("bm25.b")};
}

int cmd_bm25_search(Context& c) {
    const auto index = lexical::read_index(c.need(workdir::kBm25Index, "bm25-index"));
    const auto queries = load_queries(c);
    const auto run = lexical::bm25_run(queries, index, c.cfg.get_size("bm25.top_n"), bm25_params(c));
    write_run(run, c.at(workdir::kBm25Run), "bm25-" + c.digest);
    c.stamp(workdir::kBm25Run, "bm25-search");
    std::size_t empty = 0;
    for (const auto& [qid, list] : run) {
        empty += list.entries.empty() ? 1 : 0;
    }
    c.print({{"queries", run.size()}, {"no_match", empty}, {"config_digest", c.digest}},
            "bm25-search: " + std::to_string(run.size()) + " queries (" + std::to_string(empty) +
                " without any matching doc)\n");
    return kOk;
}

struct EvalRow {
    std::string model;
    metrics::EvalReport report;
    double flops = 0.0;
    double avg_doc_len = 0.0;
    std::size_t storage_bytes = 0;
    std::size_t vocab_size = 0;
};

double bm25_flops(const ingest::QuerySet& queries, const lexical::TermIndex& index) {
    std::map<std::string, std::size_t> qfreq;
    for (const auto& q : queries.passages()) {
        auto terms = lexical::tokenize(q.text);
        std::sort(terms.begin(), terms.end());
        terms.erase(std::unique(terms.begin(), terms.end()), terms.end());
        for (const auto& t : terms) {
            ++qfreq[t];
        }
    }
    double total = 0.0;
    for (const auto& [t, f] : qfreq) {
        total += (static_cast<double>(f) / static_cast<double>(queries.size())) *
                 (static_cast<double>(index.df(t)) / static_cast<double>(index.doc_count()));
    }
    return total;
}

int cmd_eval(Context& c) {
    const auto index_path = c.need(workdir::kConceptIndex, "index-build");
    const auto run_path = c.need(workdir::kConceptRun, "search");
    const auto qrels = load_qrels(c);
    const auto index = clsr::read_index(index_path);
    const auto ckpt = load_checkpoint(c);

    std::vector<EvalRow> rows;
    EvalRow cl;
    cl.model = "clsr";
    cl.report = metrics::evaluate(read_run(run_path), qrels);
    cl.flops = clsr::flops_estimate(query_codes(c, ckpt), index);
    cl.avg_doc_len = index.avg_doc_len();
    cl.storage_bytes = clsr::storage_bytes(index);
    cl.vocab_size = index.vocab_size();
    rows.push_back(cl);

    if (fs::exists(c.at(workdir::kBm25Run)) && fs::exists(c.at(workdir::kBm25Index))) {
        const auto bm_index = lexical::read_index(c.at(workdir::kBm25Index));
        EvalRow bm;
        bm.model = "bm25";
        bm.report = metrics::evaluate(read_run(c.at(workdir::kBm25Run)), qrels);
        bm.flops = bm25_flops(load_queries(c), bm_index);
        bm.avg_doc_len = bm_index.avg_doc_len;
        bm.storage_bytes = fs::file_size(c.at(workdir::kBm25Index));
        bm.vocab_size = bm_index.vocab_size();
        rows.push_back(bm);
    }

    std::string csv = "# config_digest=" + c.digest + "\n";
    csv += "model,mrr_at_10,recall_at_1000,ndcg_at_10,flops,avg_doc_len,storage_bytes,vocab_size\n";
    std::string table = "model   mrr_at_10  recall_at_1000  ndcg_at_10     flops  avg_doc_len  storage_bytes  vocab\n";
    json jrows = json::array();
    char buf[512];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof(buf), "%s,%.9g,%.9g,%.9g,%.9g,%.9g,%zu,%zu\n", r.model.c_str(),
                      r.report.mrr_at_10.mean, r.report.recall_at_1000.mean, r.report.ndcg_at_10.mean, r.flops,
                      r.avg_doc_len, r.storage_bytes, r.vocab_size);
        csv += buf;
        std::snprintf(buf, sizeof(buf), "%-7s %9.4f %15.4f %11.4f %9.4f %12.2f %14zu %6zu\n", r.model.c_str(),
                      r.report.mrr_at_10.mean, r.report.recall_at_1000.mean, r.report.ndcg_at_10.mean, r.flops,
                      r.avg_doc_len, r.storage_bytes, r.vocab_size);
        table += buf;
        jrows.push_back({{"model", r.model},
                         {"mrr_at_10", r.report.mrr_at_10.mean},
                         {"recall_at_1000", r.report.recall_at_1000.mean},
                         {"ndcg_at_10", r.report.ndcg_at_10.mean},
                         {"flops", r.flops},
                         {"avg_doc_len", r.avg_doc_len},
                         {"storage_bytes", r.storage_bytes},
                         {"vocab_size", r.vocab_size},
                         {"queries", r.report.query_count},
                         {"missing_from_run", r.report.mrr_at_10.missing_from_run},
                         {"skipped_no_relevant", r.report.mrr_at_10.skipped_no_relevant},
                         {"unjudged_policy", r.report.unjudged_policy}});
    }
    const json report = {{"config_digest", c.digest}, {"rows", jrows}};
    write_text(c.at(workdir::kEvalCsv), csv);
    write_text(c.at(workdir::kEvalJson), report.dump(1) + "\n");
    c.stamp(workdir::kEvalCsv, "eval");
    c.stamp(workdir::kEvalJson, "eval");
    c.print(report, table);
    return kOk;
}

int cmd_mismatch(Context& c) {
    const auto bm_run = read_run(c.need(workdir::kBm25Run, "bm25-search"));
    const auto cl_run = read_run(c.need(workdir::kConceptRun, "search"));
    const auto qrels = load_qrels(c);
    json levels = json::array();
    std::string text;
    for (const auto cutoff : parse_cutoffs(c.cfg.get("eval.mismatch_cutoffs"))) {
        const auto set = lexical::mismatch_set(bm_run, qrels, cutoff);
        json level = {{"cutoff", cutoff},
                      {"size", set.queries.size()},
                      {"considered", set.considered},
                      {"skipped_no_positive", set.skipped_no_positive},
                      {"queries", set.queries}};
        text += "cutoff " + std::to_string(cutoff) + ": " + std::to_string(set.queries.size()) + " of " +
                std::to_string(set.considered) + " queries";
        if (!set.queries.empty()) {
            const auto sub_qrels = restrict(qrels, set.queries);
            const auto cl = metrics::evaluate(restrict(cl_run, set.queries), sub_qrels);
            const auto bm = metrics::evaluate(restrict(bm_run, set.queries), sub_qrels);
            level["clsr"] = {{"mrr_at_10", cl.mrr_at_10.mean},
                             {"recall_at_1000", cl.recall_at_1000.mean},
                             {"ndcg_at_10", cl.ndcg_at_10.mean}};
            level["bm25"] = {{"mrr_at_10", bm.mrr_at_10.mean},
                             {"recall_at_1000", bm.recall_at_1000.mean},
                             {"ndcg_at_10", bm.ndcg_at_10.mean}};
            text += "; clsr mrr@10 " + fmt("%.4f", cl.mrr_at_10.mean) + " vs bm25 " + fmt("%.4f", bm.mrr_at_10.mean);
        }
        text += "\n";
        levels.push_back(std::move(level));
    }
    const json report = {{"config_digest", c.digest}, {"levels", levels}};
    write_text(c.at(workdir::kMismatch), report.dump(1) + "\n");
    c.stamp(workdir::kMismatch, "mismatch");
    c.print(report, text);
    return kOk;
}

int cmd_tasks_export(Context& c) {
    const auto stats = concepts::read_stats(c.need(workdir::kLatentStats, "concept-stats"));
    const auto descriptions = tasks::description_map(
        concepts::read_descriptions(c.need(workdir::kDescriptions, "describe")));
    const auto ckpt = load_checkpoint(c);
    const auto corpus = load_corpus(c);
    const auto queries = load_queries(c);
    const auto qrels = load_qrels(c);
    const auto docs = load_docs(c);
    const auto query_embeddings = load_query_embeddings(c);

    const auto doc_codes = sae::encode_store(ckpt.params, ckpt.theta, docs);
    std::map<std::string, SparseCode> doc_map, query_map;
    for (const auto& code : doc_codes) {
        doc_map[code.origin_id] = code;
    }
    for (auto& code : sae::encode_store(ckpt.params, ckpt.theta, query_embeddings)) {
        auto id = code.origin_id;
        query_map[id] = std::move(code);
    }

    auto bundles = tasks::export_embedding_tasks(corpus, doc_codes, stats, descriptions,
                                                 c.cfg.get_size("tasks.embedding"), c.cfg.seed());
    // The model whose ranking annotators simulate is the dense retriever itself.
    const auto dense = recon::to_run(recon::dense_search(docs, query_embeddings, docs.count()));
    auto cutoff = c.cfg.get_size("tasks.retrieved_cutoff");
    if (cutoff == 0) {
        cutoff = tasks::default_retrieved_cutoff(docs.count());
    }
    const auto per = c.cfg.get_size("tasks.ranking_per_setting");
    const auto ranking = tasks::export_ranking_tasks(dense, qrels, corpus, queries, doc_map, query_map, stats,
                                                     descriptions, {per, per, per}, cutoff, c.cfg.seed());
    bundles.insert(bundles.end(), ranking.bundles.begin(), ranking.bundles.end());

    fs::create_directories(c.at(workdir::kTaskDir));
    write_text(c.at(workdir::kBundles), tasks::bundles_json(bundles, true, c.digest) + "\n");
    c.stamp(workdir::kBundles, "tasks-export");

    json eligible = json::object();
    json unavailable = json::array();
    for (const auto s : {tasks::PairSetting::RP_RP, tasks::PairSetting::RP_NRP, tasks::PairSetting::RN_NRP}) {
        eligible[tasks::to_string(s)] = ranking.eligible[static_cast<std::size_t>(s)];
    }
    for (const auto s : ranking.unavailable) {
        unavailable.push_back(tasks::to_string(s));
    }
    const json report = {{"config_digest", c.digest},
                         {"embedding_tasks", bundles.size() - ranking.bundles.size()},
                         {"ranking_tasks", ranking.bundles.size()},
                         {"retrieved_cutoff", cutoff},
                         {"eligible_pairs", eligible},
                         {"unavailable_settings", unavailable}};
    write_text(workdir::path(c.at(workdir::kTaskDir), "export.json"), report.dump(1) + "\n");
    std::string text = "tasks-export: " + std::to_string(bundles.size() - ranking.bundles.size()) +
                       " embedding, " + std::to_string(ranking.bundles.size()) + " ranking (cutoff " +
                       std::to_string(cutoff) + ")";
    if (!ranking.unavailable.empty()) {
        text += "; unavailable:";
        for (const auto s : ranking.unavailable) {
            text += " " + tasks::to_string(s);
        }
    }
    c.print(report, text + "\n");
    return kOk;
}

service::Server* g_server = nullptr;

extern "C" void on_signal(int) {
    if (g_server != nullptr) {
        g_server->stop();
    }
}

int cmd_serve(Context& c) {
    auto session = service::load_session(c.wd, c.cfg.scoring_params());
    service::ServerOptions opts;
    opts.host = c.cfg.get("service.host");
    opts.port = static_cast<int>(c.cfg.get_int("service.port"));
    opts.feedback = c.cfg.get_bool("service.feedback");
    service::Server server(*session, opts);
    const int port = server.bind();
    *c.out << "serving " << c.wd << " on http://" << opts.host << ":" << port << "\n" << std::flush;
    g_server = &server;
    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
    server.listen();
    g_server = nullptr;
    return kOk;
}

struct Command {
    const char* name;
    const char* help;
    int (*fn)(Context&);
    bool writes;
};

const std::vector<Command>& commands() {
    static const std::vector<Command> all = {
        {"synth", "generate the synthetic topic corpus, queries, qrels and embeddings", cmd_synth, true},
        {"sae-train", "train the sparse autoencoder on doc embeddings", cmd_sae_train, true},
        {"sae-eval", "reconstruction fidelity report (nmse, retrieval metrics, spearman)", cmd_sae_eval, true},
        {"concept-stats", "per-latent df, idf and top passages", cmd_concept_stats, true},
        {"describe", "natural-language latent descriptions (LLM or --offline)", cmd_describe, true},
        {"intrude", "latent intrusion test for SAE latents and raw neurons", cmd_intrude, true},
        {"index-build", "build the concept inverted index", cmd_index_build, true},
        {"search", "concept-level retrieval for every query", cmd_search, true},
        {"bm25-index", "build the BM25 term index", cmd_bm25_index, true},
        {"bm25-search", "BM25 retrieval for every query", cmd_bm25_search, true},
        {"eval", "retrieval effectiveness and efficiency table", cmd_eval, true},
        {"mismatch", "queries BM25 misses and how concept retrieval does on them", cmd_mismatch, true},
        {"tasks-export", "export embedding and ranking interpretability tasks", cmd_tasks_export, true},
        {"serve", "HTTP service for search, inspection and annotation", cmd_serve, true},
    };
    return all;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"latentir: concept-level retrieval over sparse autoencoder latents"};
    app.require_subcommand(1);
    app.fallthrough();

    std::string config_path;
    std::string workdir_flag;
    bool json_out = false;
    bool offline = false;
    std::string query_id;
    std::string basis = "both";
    app.add_option("--config", config_path, "INI config file");
    app.add_option("--workdir", workdir_flag, "shorthand for --paths.workdir");
    app.add_flag("--json", json_out, "machine-readable output");

    std::map<std::string, std::string> overrides;
    std::vector<std::pair<std::string, CLI::Option*>> override_opts;
    for (const auto& [key, def] : RunConfig::defaults()) {
        auto* opt = app.add_option("--" + key, overrides[key], "config " + key + " (default '" + def + "')");
        opt->group("Config overrides");
        override_opts.emplace_back(key, opt);
    }

    std::map<std::string, CLI::App*> subs;
    for (const auto& cmd : commands()) {
        auto* sub = app.add_subcommand(cmd.name, cmd.help);
        if (std::string_view(cmd.name) == "describe") {
            sub->add_flag("--offline", offline, "deterministic token-statistics descriptions, no network");
        }
        if (std::string_view(cmd.name) == "search") {
            sub->add_option("--query-id", query_id, "print the top 10 for one query");
        }
        if (std::string_view(cmd.name) == "intrude") {
            sub->add_option("--basis", basis, "sae, neuron (raw embedding dimensions) or both")
                ->check(CLI::IsMember({"sae", "neuron", "both"}));
        }
        subs[cmd.name] = sub;
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kOk : kValidationError;
    }

    try {
        Context c;
        c.out = &out;
        c.err = &err;
        c.json_out = json_out;
        c.offline_flag = offline;
        c.query_id = query_id;
        c.basis = basis;
        if (!config_path.empty()) {
            c.cfg.load_ini(config_path);
        }
        if (!workdir_flag.empty()) {
            c.cfg.set("paths.workdir", workdir_flag);
        }
        for (const auto& [key, opt] : override_opts) {
            if (opt->count() > 0) {
                c.cfg.set(key, overrides[key]);
            }
        }
        if (offline) {
            c.cfg.set("llm.offline", "true");
        }
        c.wd = c.cfg.workdir();
        c.digest = c.cfg.digest();
        for (const auto& cmd : commands()) {
            if (subs[cmd.name]->parsed()) {
                std::unique_ptr<WorkdirLock> lock;
                if (cmd.writes) {
                    lock = std::make_unique<WorkdirLock>(c.wd);
                }
                return cmd.fn(c);
            }
        }
        return kValidationError;
    } catch (const ValidationError& e) {
        err << "error: " << e.what() << "\n";
        return kValidationError;
    } catch (const ParseError& e) {
        err << "error: " << e.what() << "\n";
        return kValidationError;
    } catch (const FormatError& e) {
        err << "error: " << e.what() << "\n";
        return kValidationError;
    } catch (const prompts::ResponseFormatError& e) {
        err << "error: " << e.what() << "\nraw response:\n" << e.raw() << "\n";
        return kRuntimeError;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kRuntimeError;
    }
}

}  // namespace latentir::cli
