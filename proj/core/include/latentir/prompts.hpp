#pragma once

#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace latentir::prompts {

/// Raw templates as shipped in core/assets. The single `<...{i}...>` line is the
/// per-item pattern expanded by the renderers below.
[[nodiscard]] std::string_view intrusion_template();
[[nodiscard]] std::string_view description_template();

/// Documents are numbered from 1 in the given order.
[[nodiscard]] std::string render_intrusion(const std::vector<std::string>& passages);

/// (passage, activation) pairs, numbered from 1. Activations printed with 4 decimals.
[[nodiscard]] std::string render_description(const std::vector<std::pair<std::string, double>>& examples);

/// The LLM reply did not follow the formatting contract. `raw()` keeps the full reply.
class ResponseFormatError : public std::runtime_error {
public:
    ResponseFormatError(const std::string& what, std::string raw)
        : std::runtime_error(what), raw_(std::move(raw)) {}
    [[nodiscard]] const std::string& raw() const noexcept { return raw_; }

private:
    std::string raw_;
};

/// Text after the last "[interpretation]:" marker, trimmed. Throws ResponseFormatError
/// when the marker is missing or followed by nothing.
[[nodiscard]] std::string parse_interpretation(std::string_view response);

/// 1-based document number after the last "[intruder]:" marker ("Document7", "7" and
/// "Document #7" all parse). Throws ResponseFormatError otherwise.
[[nodiscard]] int parse_intruder(std::string_view response);

}  // namespace latentir::prompts
