#pragma once

#include <sstream>
#include <string>
#include <vector>

#include "latentir/cli.hpp"

namespace latentir::test {

struct CliResult {
    int code = 0;
    std::string out;
    std::string err;
};

/// Runs the tool in-process, e.g. run_cli({"synth", "--workdir", dir}).
inline CliResult run_cli(const std::vector<std::string>& args) {
    std::vector<const char*> argv = {"latentir"};
    for (const auto& a : args) {
        argv.push_back(a.c_str());
    }
    std::ostringstream out;
    std::ostringstream err;
    CliResult r;
    r.code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
    r.out = out.str();
    r.err = err.str();
    return r;
}

/// Settings for a workdir that builds in a couple of seconds.
inline std::vector<std::string> small_settings() {
    return {"--synth.docs",   "300", "--synth.queries",    "30", "--synth.n_topics",  "16", "--synth.noise_sigma", "0.2",
            "--sae.m",        "32",  "--sae.k",            "4",  "--sae.epochs",      "40",
            "--sae.batch_size", "64", "--tasks.embedding", "12", "--tasks.ranking_per_setting", "4",
            "--tasks.retrieved_cutoff", "2", "--concepts.intrusion_latents", "16"};
}

/// `command --workdir dir <small settings> <extra>`.
inline CliResult run_step(const std::string& command, const std::string& dir,
                          const std::vector<std::string>& extra = {}) {
    std::vector<std::string> args = {command, "--workdir", dir};
    const auto s = small_settings();
    args.insert(args.end(), s.begin(), s.end());
    args.insert(args.end(), extra.begin(), extra.end());
    return run_cli(args);
}

}  // namespace latentir::test
