#include "latentir/prompts.hpp"

#include <cctype>
#include <cstdio>

#include "prompt_assets.hpp"

namespace latentir::prompts {

namespace {

std::string replace_all(std::string s, std::string_view from, std::string_view to) {
    std::size_t pos = 0;
    while ((pos = s.find(from, pos)) != std::string::npos) {
        s.replace(pos, from.size(), to);
        pos += to.size();
    }
    return s;
}

/// Splits the template around its `<...{i}...>` line; returns (before, pattern, after).
struct Parts {
    std::string before;
    std::string pattern;
    std::string after;
};

Parts split_template(std::string_view tmpl) {
    const auto marker = tmpl.find("{i}");
    const auto open = tmpl.rfind('<', marker);
    const auto close = tmpl.find('>', marker);
    Parts p;
    p.before = std::string(tmpl.substr(0, open));
    p.pattern = replace_all(std::string(tmpl.substr(open + 1, close - open - 1)), "\\n", "\n");
    p.after = std::string(tmpl.substr(close + 1));
    return p;
}

std::string trim(std::string_view s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) {
        ++b;
    }
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) {
        --e;
    }
    return std::string(s.substr(b, e - b));
}

}  // namespace

std::string_view intrusion_template() { return assets::kIntrusionPrompt; }
std::string_view description_template() { return assets::kDescriptionPrompt; }

std::string render_intrusion(const std::vector<std::string>& passages) {
    const auto parts = split_template(intrusion_template());
    std::string body;
    for (std::size_t i = 0; i < passages.size(); ++i) {
        auto item = replace_all(parts.pattern, "{i}", std::to_string(i + 1));
        body += replace_all(item, "{passage}", passages[i]);
        body += '\n';
    }
    return parts.before + body + parts.after;
}

std::string render_description(const std::vector<std::pair<std::string, double>>& examples) {
    const auto parts = split_template(description_template());
    std::string body;
    char act[64];
    for (std::size_t i = 0; i < examples.size(); ++i) {
        std::snprintf(act, sizeof(act), "%.4f", examples[i].second);
        auto item = replace_all(parts.pattern, "{i}", std::to_string(i + 1));
        item = replace_all(item, "{act}", act);
        body += replace_all(item, "{passage}", examples[i].first);
        body += '\n';
    }
    return parts.before + body + parts.after;
}

std::string parse_interpretation(std::string_view response) {
    constexpr std::string_view marker = "[interpretation]:";
    const auto pos = response.rfind(marker);
    if (pos == std::string_view::npos) {
        throw ResponseFormatError("response has no [interpretation]: line", std::string(response));
    }
    auto rest = response.substr(pos + marker.size());
    rest = rest.substr(0, rest.find('\n'));
    auto text = trim(rest);
    if (text.empty()) {
        throw ResponseFormatError("empty [interpretation]: line", std::string(response));
    }
    return text;
}

int parse_intruder(std::string_view response) {
    constexpr std::string_view marker = "[intruder]:";
    const auto pos = response.rfind(marker);
    if (pos == std::string_view::npos) {
        throw ResponseFormatError("response has no [intruder]: line", std::string(response));
    }
    auto rest = response.substr(pos + marker.size());
    rest = rest.substr(0, rest.find('\n'));
    std::size_t i = 0;
    while (i < rest.size() && !std::isdigit(static_cast<unsigned char>(rest[i]))) {
        ++i;
    }
    int n = 0;
    std::size_t digits = 0;
    while (i < rest.size() && std::isdigit(static_cast<unsigned char>(rest[i])) && digits < 6) {
        n = n * 10 + (rest[i] - '0');
        ++i;
        ++digits;
    }
    if (digits == 0 || n == 0) {
        throw ResponseFormatError("no document number after [intruder]:", std::string(response));
    }
    return n;
}

}  // namespace latentir::prompts
