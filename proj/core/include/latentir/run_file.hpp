#pragma once

#include <string>
#include <string_view>

#include "latentir/types.hpp"

namespace latentir {

/// TREC run layout: `qid Q0 docid rank score tag`, ranks 1-based, one line per entry.
[[nodiscard]] std::string format_run(const Run& run, std::string_view tag);
void write_run(const Run& run, const std::string& path, std::string_view tag);

/// Entries are re-ordered by rank. Throws ParseError on malformed lines or repeated ranks.
[[nodiscard]] Run parse_run(std::string_view text, const std::string& source);
[[nodiscard]] Run read_run(const std::string& path);

}  // namespace latentir
