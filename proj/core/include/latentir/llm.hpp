#pragma once

#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <stdexcept>
#include <string>

namespace latentir::llm {

/// Network or protocol failure talking to a model endpoint.
class TransportError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Text-in, text-out model access. Implementations must be safe to call from
/// several threads at once.
class LlmClient {
public:
    virtual ~LlmClient() = default;
    /// Throws TransportError on failure.
    virtual std::string complete(const std::string& prompt) = 0;
    [[nodiscard]] virtual std::string model_name() const = 0;
};

/// Wraps a callable; handy for tests and scripted runs.
class FunctionClient final : public LlmClient {
public:
    FunctionClient(std::function<std::string(const std::string&)> fn, std::string name)
        : fn_(std::move(fn)), name_(std::move(name)) {}
    std::string complete(const std::string& prompt) override { return fn_(prompt); }
    [[nodiscard]] std::string model_name() const override { return name_; }

private:
    std::function<std::string(const std::string&)> fn_;
    std::string name_;
};

/// Answers from a JSONL fixture of {"prompt_digest", "response", "model"} records
/// (the format RecordingClient writes). Unknown prompts raise TransportError.
class ReplayClient final : public LlmClient {
public:
    explicit ReplayClient(const std::string& fixture_path);
    std::string complete(const std::string& prompt) override;
    [[nodiscard]] std::string model_name() const override { return model_; }
    [[nodiscard]] std::size_t size() const noexcept { return responses_.size(); }

private:
    std::map<std::string, std::string> responses_;
    std::string model_ = "replay";
};

/// Forwards to `inner` and appends every exchange to a JSONL log.
class RecordingClient final : public LlmClient {
public:
    RecordingClient(LlmClient& inner, std::string log_path) : inner_(inner), path_(std::move(log_path)) {}
    std::string complete(const std::string& prompt) override;
    [[nodiscard]] std::string model_name() const override { return inner_.model_name(); }

private:
    LlmClient& inner_;
    std::string path_;
    std::mutex mu_;
};

}  // namespace latentir::llm
