#pragma once

#include <string>
#include <string_view>

namespace latentir::workdir {

// File names every stage reads and writes under the working directory.
inline constexpr std::string_view kCorpus = "corpus.tsv";
inline constexpr std::string_view kQueries = "queries.tsv";
inline constexpr std::string_view kQrels = "qrels.txt";
inline constexpr std::string_view kDocEmbeddings = "docs.demb";
inline constexpr std::string_view kQueryEmbeddings = "queries.demb";
inline constexpr std::string_view kSynthTruth = "synth_truth.json";
inline constexpr std::string_view kCheckpoint = "sae.ckpt";
inline constexpr std::string_view kTrainLog = "sae_train_log.csv";
inline constexpr std::string_view kReconReport = "recon_report.csv";
inline constexpr std::string_view kLatentStats = "latent_stats.jsonl";
inline constexpr std::string_view kDescriptions = "descriptions.jsonl";
inline constexpr std::string_view kIntrusion = "intrusion.json";
inline constexpr std::string_view kConceptIndex = "concept.clsr";
inline constexpr std::string_view kConceptRun = "clsr.run";
inline constexpr std::string_view kBm25Index = "bm25.idx";
inline constexpr std::string_view kBm25Run = "bm25.run";
inline constexpr std::string_view kEvalCsv = "eval.csv";
inline constexpr std::string_view kEvalJson = "eval.json";
inline constexpr std::string_view kMismatch = "mismatch.json";
inline constexpr std::string_view kTaskDir = "tasks";
inline constexpr std::string_view kBundles = "tasks/bundles.json";
inline constexpr std::string_view kAnnotations = "annotations.jsonl";
inline constexpr std::string_view kUiDir = "ui";

[[nodiscard]] inline std::string path(const std::string& dir, std::string_view name) {
    return dir + "/" + std::string(name);
}

}  // namespace latentir::workdir
