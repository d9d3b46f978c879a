#pragma once

#include <atomic>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "latentir/clsr.hpp"
#include "latentir/concepts.hpp"
#include "latentir/ingest.hpp"
#include "latentir/sae.hpp"
#include "latentir/synth.hpp"
#include "latentir/tasks.hpp"

namespace httplib {
class Server;
}

namespace latentir::service {

/// Everything the HTTP layer serves, loaded once from a built workdir. Retrieval
/// state is immutable; only the annotation store changes.
struct SessionStore {
    std::string workdir;
    ingest::Corpus corpus;
    ingest::QuerySet queries;
    ingest::EmbeddingStore query_embeddings;
    sae::Checkpoint sae;
    clsr::ConceptIndex index;
    clsr::ScoringParams params;
    concepts::StatsTable stats;
    std::map<std::uint32_t, concepts::LatentDescription> descriptions;
    /// Full (uncapped) SAE code per doc id.
    std::map<std::string, SparseCode> doc_codes;
    std::map<std::string, std::size_t> doc_position;
    std::optional<ingest::SynthTruth> truth;
    std::vector<tasks::TaskBundle> bundles;
    std::unique_ptr<tasks::AnnotationStore> annotations;
};

/// Throws ValidationError naming the missing artifact and the command that produces it.
/// Task bundles and synthetic ground truth are optional.
[[nodiscard]] std::unique_ptr<SessionStore> load_session(const std::string& workdir,
                                                         const clsr::ScoringParams& params);

struct ServerOptions {
    std::string host = "127.0.0.1";
    /// 0 picks a free port.
    int port = 8080;
    /// Static UI bundle; mounted at / when the directory exists.
    std::string static_dir;
    /// Report correctness in the answer response (never in any GET).
    bool feedback = true;
};

class Server {
public:
    Server(SessionStore& session, ServerOptions options);
    ~Server();
    Server(const Server&) = delete;
    Server& operator=(const Server&) = delete;

    /// Binds the socket and returns the port. Throws std::runtime_error when binding fails.
    int bind();
    /// Serves until stop(); call bind() first.
    void listen();
    void stop();
    [[nodiscard]] bool running() const;

private:
    void routes();

    SessionStore& session_;
    ServerOptions options_;
    std::unique_ptr<httplib::Server> http_;
};

}  // namespace latentir::service
