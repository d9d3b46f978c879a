#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "latentir/clsr.hpp"
#include "latentir/sae.hpp"
#include "latentir/synth.hpp"

namespace latentir::cli {

/// Flat `section.key -> value` settings. Sources, lowest precedence first: built-in
/// defaults, the INI config file, command-line `--section.key` flags.
class RunConfig {
public:
    RunConfig();

    /// Every known key with its default, in a stable order.
    [[nodiscard]] static const std::vector<std::pair<std::string, std::string>>& defaults();

    /// Loads an INI file. Throws ValidationError on unknown sections/keys or unreadable files.
    void load_ini(const std::string& path);
    /// Throws ValidationError on unknown keys.
    void set(const std::string& key, const std::string& value);

    [[nodiscard]] const std::string& get(const std::string& key) const;
    [[nodiscard]] long long get_int(const std::string& key) const;
    [[nodiscard]] std::size_t get_size(const std::string& key) const;
    [[nodiscard]] double get_double(const std::string& key) const;
    [[nodiscard]] bool get_bool(const std::string& key) const;

    /// FNV-1a over `key=value` lines of every setting except workdir and service
    /// binding, sorted by key. Stamped into all artifacts.
    [[nodiscard]] std::string digest() const;
    [[nodiscard]] std::string canonical() const;

    [[nodiscard]] std::string workdir() const { return get("paths.workdir"); }
    /// Input paths default to the workdir file produced by `synth`.
    [[nodiscard]] std::string input_path(const std::string& key, std::string_view workdir_name) const;

    [[nodiscard]] std::uint64_t seed() const;
    [[nodiscard]] ingest::SynthSpec synth_spec() const;
    /// d comes from the embeddings; m = 0 in the config selects 32 d.
    [[nodiscard]] sae::SaeConfig sae_config(std::size_t d) const;
    /// Preset values, with any explicitly set clsr.k1 / clsr.b / clsr.k2 on top.
    [[nodiscard]] clsr::ScoringParams scoring_params() const;
    [[nodiscard]] std::uint32_t clsr_cap() const;

    [[nodiscard]] const std::map<std::string, std::string>& values() const noexcept { return values_; }

private:
    std::map<std::string, std::string> values_;
};

}  // namespace latentir::cli
