#include "latentir/http_llm.hpp"

#include <cstdlib>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "latentir/errors.hpp"

namespace latentir::llm {

HttpLlmClient::HttpLlmClient(std::string endpoint, std::string model, std::string path, int timeout_seconds)
    : endpoint_(std::move(endpoint)), model_(std::move(model)), path_(std::move(path)), timeout_seconds_(timeout_seconds) {
    if (endpoint_.empty() || model_.empty()) {
        throw ValidationError("LLM endpoint and model must be set (or use --offline)");
    }
}

std::string HttpLlmClient::complete(const std::string& prompt) {
    httplib::Client client(endpoint_);
    if (!client.is_valid()) {
        throw TransportError("unsupported LLM endpoint " + endpoint_);
    }
    client.set_connection_timeout(timeout_seconds_);
    client.set_read_timeout(timeout_seconds_);
    httplib::Headers headers;
    if (const char* key = std::getenv("LATENTIR_LLM_API_KEY"); key != nullptr && *key != '\0') {
        headers.emplace("Authorization", std::string("Bearer ") + key);
    }
    const nlohmann::json body = {
        {"model", model_},
        {"temperature", 0},
        {"messages", nlohmann::json::array({{{"role", "user"}, {"content", prompt}}})},
    };
    const auto res = client.Post(path_, headers, body.dump(), "application/json");
    if (!res) {
        throw TransportError("LLM request to " + endpoint_ + " failed: " + httplib::to_string(res.error()));
    }
    if (res->status != 200) {
        throw TransportError("LLM endpoint returned HTTP " + std::to_string(res->status));
    }
    try {
        const auto reply = nlohmann::json::parse(res->body);
        return reply.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
        throw TransportError(std::string("malformed LLM response: ") + e.what());
    }
}

}  // namespace latentir::llm
