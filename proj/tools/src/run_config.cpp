#include "latentir/run_config.hpp"

#include <algorithm>
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "latentir/errors.hpp"
#include "latentir/hash.hpp"
#include "latentir/workdir.hpp"

namespace latentir::cli {

namespace {

// Values excluded from the digest: where the run lives and how it is served do not
// change any artifact.
bool digest_excluded(const std::string& key) {
    return key == "paths.workdir" || key.rfind("service.", 0) == 0 || key == "llm.concurrency";
}

}  // namespace

const std::vector<std::pair<std::string, std::string>>& RunConfig::defaults() {
    static const std::vector<std::pair<std::string, std::string>> table = {
        {"run.seed", "7"},
        {"paths.workdir", "work"},
        {"paths.corpus", ""},
        {"paths.queries", ""},
        {"paths.qrels", ""},
        {"paths.doc_embeddings", ""},
        {"paths.query_embeddings", ""},
        {"synth.n_topics", "32"},
        {"synth.d", "16"},
        {"synth.docs", "2000"},
        {"synth.queries", "200"},
        {"synth.topics_per_doc", "3"},
        {"synth.noise_sigma", "0.05"},
        {"synth.surface_forms", "3"},
        {"synth.query_synonym_rate", "0.6"},
        // Desk-scale SAE recipe; the full-scale values are SaeConfig's defaults.
        {"sae.m", "64"},
        {"sae.k", "8"},
        {"sae.lambda", "0.0625"},
        {"sae.lr", "0.001"},
        {"sae.batch_size", "256"},
        {"sae.epochs", "200"},
        {"sae.dead_window", "20"},
        {"sae.aux_width", "0"},
        {"clsr.preset", "efficient"},
        {"clsr.k1", ""},
        {"clsr.b", ""},
        {"clsr.k2", ""},
        {"clsr.cap", "0"},
        {"clsr.top_n", "1000"},
        {"bm25.k1", "0.9"},
        {"bm25.b", "0.4"},
        {"bm25.top_n", "1000"},
        {"eval.mismatch_cutoffs", "10,100,1000"},
        {"concepts.top_passages", "30"},
        {"concepts.describe_examples", "10"},
        {"concepts.intrusion_latents", "64"},
        {"concepts.intrusion_judge", "offline"},
        {"llm.offline", "true"},
        {"llm.endpoint", ""},
        {"llm.model", ""},
        {"llm.replay", ""},
        {"llm.concurrency", "4"},
        {"tasks.embedding", "60"},
        {"tasks.ranking_per_setting", "20"},
        {"tasks.retrieved_cutoff", "0"},
        {"service.host", "127.0.0.1"},
        {"service.port", "8080"},
        {"service.feedback", "true"},
    };
    return table;
}

RunConfig::RunConfig() {
    for (const auto& [k, v] : defaults()) {
        values_[k] = v;
    }
}

void RunConfig::load_ini(const std::string& path) {
    boost::property_tree::ptree tree;
    try {
        boost::property_tree::ini_parser::read_ini(path, tree);
    } catch (const boost::property_tree::ini_parser_error& e) {
        throw ValidationError("config " + path + ": " + e.message() + " (line " + std::to_string(e.line()) + ")");
    }
    for (const auto& [section, body] : tree) {
        if (body.empty()) {
            throw ValidationError("config " + path + ": key '" + section + "' must sit inside a [section]");
        }
        for (const auto& [key, value] : body) {
            set(section + "." + key, value.get_value<std::string>());
        }
    }
}

void RunConfig::set(const std::string& key, const std::string& value) {
    const auto it = values_.find(key);
    if (it == values_.end()) {
        throw ValidationError("unknown config key '" + key + "'");
    }
    it->second = value;
}

const std::string& RunConfig::get(const std::string& key) const {
    const auto it = values_.find(key);
    if (it == values_.end()) {
        throw ValidationError("unknown config key '" + key + "'");
    }
    return it->second;
}

long long RunConfig::get_int(const std::string& key) const {
    const auto& v = get(key);
    try {
        std::size_t used = 0;
        const auto out = std::stoll(v, &used);
        if (used == v.size()) {
            return out;
        }
    } catch (const std::exception&) {
    }
    throw ValidationError(key + " must be an integer, got '" + v + "'");
}

std::size_t RunConfig::get_size(const std::string& key) const {
    const auto v = get_int(key);
    if (v < 0) {
        throw ValidationError(key + " must be >= 0");
    }
    return static_cast<std::size_t>(v);
}

double RunConfig::get_double(const std::string& key) const {
    const auto& v = get(key);
    try {
        std::size_t used = 0;
        const auto out = std::stod(v, &used);
        if (used == v.size()) {
            return out;
        }
    } catch (const std::exception&) {
    }
    throw ValidationError(key + " must be a number, got '" + v + "'");
}

bool RunConfig::get_bool(const std::string& key) const {
    const auto& v = get(key);
    if (v == "true" || v == "1" || v == "yes" || v == "on") {
        return true;
    }
    if (v == "false" || v == "0" || v == "no" || v == "off") {
        return false;
    }
    throw ValidationError(key + " must be true or false, got '" + v + "'");
}

std::string RunConfig::canonical() const {
    std::string out;
    for (const auto& [k, v] : values_) {
        if (!digest_excluded(k)) {
            out += k + "=" + v + "\n";
        }
    }
    return out;
}

std::string RunConfig::digest() const { return hex_digest(canonical()); }

std::string RunConfig::input_path(const std::string& key, std::string_view workdir_name) const {
    const auto& explicit_path = get(key);
    return explicit_path.empty() ? workdir::path(workdir(), workdir_name) : explicit_path;
}

std::uint64_t RunConfig::seed() const {
    const auto v = get_int("run.seed");
    if (v < 0) {
        throw ValidationError("run.seed must be >= 0");
    }
    return static_cast<std::uint64_t>(v);
}

ingest::SynthSpec RunConfig::synth_spec() const {
    ingest::SynthSpec s;
    s.n_topics = static_cast<int>(get_int("synth.n_topics"));
    s.d = static_cast<int>(get_int("synth.d"));
    s.docs = static_cast<int>(get_int("synth.docs"));
    s.queries = static_cast<int>(get_int("synth.queries"));
    s.topics_per_doc = static_cast<int>(get_int("synth.topics_per_doc"));
    s.noise_sigma = get_double("synth.noise_sigma");
    s.surface_forms = static_cast<int>(get_int("synth.surface_forms"));
    s.query_synonym_rate = get_double("synth.query_synonym_rate");
    s.seed = seed();
    s.validate();
    return s;
}

sae::SaeConfig RunConfig::sae_config(std::size_t d) const {
    sae::SaeConfig c;
    c.d = d;
    c.m = get_size("sae.m");
    if (c.m == 0) {
        c.m = 32 * d;
    }
    c.k = get_size("sae.k");
    c.lambda = get_double("sae.lambda");
    c.lr = get_double("sae.lr");
    c.batch_size = get_size("sae.batch_size");
    c.epochs = get_size("sae.epochs");
    c.dead_window = get_size("sae.dead_window");
    c.aux_width = get_size("sae.aux_width");
    c.seed = seed();
    c.validate();
    return c;
}

clsr::ScoringParams RunConfig::scoring_params() const {
    auto p = clsr::preset(get("clsr.preset")).params;
    if (!get("clsr.k1").empty()) {
        p.k1 = get_double("clsr.k1");
    }
    if (!get("clsr.b").empty()) {
        p.b = get_double("clsr.b");
    }
    if (!get("clsr.k2").empty()) {
        p.k2 = get_double("clsr.k2");
    }
    p.validate();
    return p;
}

std::uint32_t RunConfig::clsr_cap() const {
    const auto cap = get_size("clsr.cap");
    return static_cast<std::uint32_t>(cap == 0 ? clsr::preset(get("clsr.preset")).cap : cap);
}

}  // namespace latentir::cli
