#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "latentir/concepts.hpp"
#include "latentir/ingest.hpp"
#include "latentir/types.hpp"

namespace latentir::tasks {

enum class TaskKind { embedding_id, ranking_pair };
enum class PairSetting { RP_RP, RP_NRP, RN_NRP };

[[nodiscard]] std::string to_string(TaskKind kind);
[[nodiscard]] std::string to_string(PairSetting setting);
/// Throws ValidationError on unknown names.
[[nodiscard]] TaskKind parse_kind(const std::string& s);
[[nodiscard]] PairSetting parse_setting(const std::string& s);

struct ShownLatent {
    std::uint32_t latent = 0;
    double weighted = 0.0;  // activation * idf
    std::string description;
    /// Ranking tasks: the query activates this latent too.
    bool shared = false;

    bool operator==(const ShownLatent&) const = default;
};

struct Candidate {
    std::string doc_id;
    std::string text;
    /// Ranking tasks only.
    std::vector<ShownLatent> latents;

    bool operator==(const Candidate&) const = default;
};

/// Embedding task: `latents` belong to the hidden target, `candidates` holds 10 passages.
/// Ranking task: `latents` belong to the query, `candidates` holds the two docs.
/// `answer` is the correct doc id and must stay server-side.
struct TaskBundle {
    std::string task_id;
    TaskKind kind = TaskKind::embedding_id;
    std::optional<PairSetting> setting;
    std::string query_id;
    std::string query_text;
    std::size_t retrieved_cutoff = 0;
    std::vector<ShownLatent> latents;
    std::vector<Candidate> candidates;
    std::string answer;

    [[nodiscard]] bool has_option(const std::string& doc_id) const;

    bool operator==(const TaskBundle&) const = default;
};

/// latent id -> description text.
using DescriptionMap = std::map<std::uint32_t, std::string>;
[[nodiscard]] DescriptionMap description_map(const std::vector<concepts::LatentDescription>& descriptions);

/// One target (sampled without replacement among docs with a non-empty code) plus 9
/// seeded distractors per task, candidates shuffled. Shows every activated latent of the
/// target, idf-weighted. Throws ValidationError when the corpus has fewer than 10 docs,
/// n_tasks exceeds the eligible targets, or a shown latent has no description.
[[nodiscard]] std::vector<TaskBundle> export_embedding_tasks(const ingest::Corpus& corpus,
                                                             const std::vector<SparseCode>& doc_codes,
                                                             const concepts::StatsTable& stats,
                                                             const DescriptionMap& descriptions, std::size_t n_tasks,
                                                             std::uint64_t seed);

/// min(1000, |D| / 2), floored at 1.
[[nodiscard]] std::size_t default_retrieved_cutoff(std::size_t n_docs);

using PairCounts = std::array<std::uint64_t, 3>;  // indexed by PairSetting

/// Eligible pairs per setting. Within each query in both run and qrels: RP = positives
/// ranked <= cutoff, NRP = positives ranked below it, RN = non-positives ranked <= cutoff.
/// RP_RP counts unordered pairs. Positives missing from the run have no model score and
/// are not eligible.
[[nodiscard]] PairCounts count_pairs(const Run& run, const ingest::Qrels& qrels, std::size_t cutoff);

struct RankingExport {
    std::vector<TaskBundle> bundles;
    PairCounts eligible{};
    /// Settings with zero eligible pairs; nothing is exported for them.
    std::vector<PairSetting> unavailable;
};

/// Samples up to `per_setting[s]` distinct pairs per setting, uniformly over eligible
/// pairs. The run must rank deep enough to place non-retrieved positives (use the full
/// corpus depth). Answer = the doc with the higher model score (earlier rank on ties).
[[nodiscard]] RankingExport export_ranking_tasks(const Run& run, const ingest::Qrels& qrels,
                                                 const ingest::Corpus& corpus, const ingest::QuerySet& queries,
                                                 const std::map<std::string, SparseCode>& doc_codes,
                                                 const std::map<std::string, SparseCode>& query_codes,
                                                 const concepts::StatsTable& stats,
                                                 const DescriptionMap& descriptions, const PairCounts& per_setting,
                                                 std::size_t cutoff, std::uint64_t seed);

/// JSON object; `answer` only when `with_answer`.
[[nodiscard]] std::string bundle_json(const TaskBundle& bundle, bool with_answer, int indent = -1);
/// {"config_digest", "bundles": [...]}.
[[nodiscard]] std::string bundles_json(const std::vector<TaskBundle>& bundles, bool with_answer,
                                       const std::string& digest = {});
/// Accepts the object above or a bare array.
[[nodiscard]] std::vector<TaskBundle> parse_bundles(std::string_view json_text, const std::string& source);

struct Annotation {
    std::string task_id;
    std::string annotator_id;
    std::string choice;
    std::string timestamp;  // ISO-8601 UTC
    bool correct = false;

    bool operator==(const Annotation&) const = default;
};

struct GroupScore {
    std::size_t total = 0;
    std::size_t correct = 0;
    double accuracy = 0.0;
};

/// Groups "embedding_id" and "ranking_pair/<setting>". Empty input gives an empty map.
/// Throws ValidationError on an unknown task id.
[[nodiscard]] std::map<std::string, GroupScore> score_annotations(const std::vector<Annotation>& annotations,
                                                                  const std::vector<TaskBundle>& bundles);

class DuplicateAnnotation : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class UnknownTask : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Append-only JSONL annotation log; one answer per (task, annotator). Thread-safe.
class AnnotationStore {
public:
    /// Loads existing records from `path` when present.
    AnnotationStore(std::string path, const std::vector<TaskBundle>& bundles);

    /// Throws UnknownTask, ValidationError (choice not an option) or DuplicateAnnotation.
    Annotation record(const std::string& task_id, const std::string& annotator_id, const std::string& choice);

    [[nodiscard]] std::vector<Annotation> all() const;
    [[nodiscard]] bool answered(const std::string& task_id, const std::string& annotator_id) const;

private:
    std::string path_;
    std::map<std::string, const TaskBundle*> by_id_;
    std::vector<TaskBundle> bundles_;
    std::vector<Annotation> records_;
    mutable std::mutex mu_;
};

void write_annotations(const std::vector<Annotation>& annotations, const std::string& path);
[[nodiscard]] std::vector<Annotation> read_annotations(const std::string& path);

}  // namespace latentir::tasks
