#include "latentir/llm.hpp"

#include <fstream>

#include <nlohmann/json.hpp>

#include "latentir/errors.hpp"
#include "latentir/hash.hpp"

namespace latentir::llm {

ReplayClient::ReplayClient(const std::string& fixture_path) {
    std::ifstream in(fixture_path);
    if (!in) {
        throw ValidationError("cannot open LLM fixture " + fixture_path);
    }
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) {
            continue;
        }
        try {
            const auto j = nlohmann::json::parse(line);
            responses_[j.at("prompt_digest").get<std::string>()] = j.at("response").get<std::string>();
            if (j.contains("model")) {
                model_ = j["model"].get<std::string>();
            }
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(fixture_path, line_no, e.what());
        }
    }
}

std::string ReplayClient::complete(const std::string& prompt) {
    const auto it = responses_.find(hex_digest(prompt));
    if (it == responses_.end()) {
        throw TransportError("replay fixture has no response for prompt " + hex_digest(prompt));
    }
    return it->second;
}

std::string RecordingClient::complete(const std::string& prompt) {
    auto response = inner_.complete(prompt);
    const nlohmann::json rec = {{"prompt_digest", hex_digest(prompt)},
                                {"prompt", prompt},
                                {"response", response},
                                {"model", inner_.model_name()}};
    std::lock_guard lock(mu_);
    std::ofstream out(path_, std::ios::app);
    out << rec.dump() << '\n';
    return response;
}

}  // namespace latentir::llm
