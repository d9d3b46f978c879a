#pragma once

#include <string>

#include "latentir/llm.hpp"

namespace latentir::llm {

/// OpenAI-compatible chat-completions client. The API key comes from the
/// LATENTIR_LLM_API_KEY environment variable only.
class HttpLlmClient final : public LlmClient {
public:
    /// `endpoint` is scheme://host[:port]; `path` defaults to /v1/chat/completions.
    HttpLlmClient(std::string endpoint, std::string model, std::string path = "/v1/chat/completions",
                  int timeout_seconds = 60);

    std::string complete(const std::string& prompt) override;
    [[nodiscard]] std::string model_name() const override { return model_; }

private:
    std::string endpoint_;
    std::string model_;
    std::string path_;
    int timeout_seconds_;
};

}  // namespace latentir::llm
