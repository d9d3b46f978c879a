#include "latentir/run_file.hpp"

#include <algorithm>
#include <cstdio>
#include <map>
#include <sstream>

#include "binary_io.hpp"
#include "latentir/errors.hpp"

namespace latentir {

std::string format_run(const Run& run, std::string_view tag) {
    std::string out;
    char score[64];
    for (const auto& [qid, list] : run) {
        for (std::size_t r = 0; r < list.entries.size(); ++r) {
            std::snprintf(score, sizeof(score), "%.17g", list.entries[r].score);
            out += qid;
            out += " Q0 ";
            out += list.entries[r].doc_id;
            out += ' ';
            out += std::to_string(r + 1);
            out += ' ';
            out += score;
            out += ' ';
            out += tag;
            out += '\n';
        }
    }
    return out;
}

void write_run(const Run& run, const std::string& path, std::string_view tag) {
    detail::write_file_bytes(path, format_run(run, tag));
}

Run parse_run(std::string_view text, const std::string& source) {
    std::map<std::string, std::map<std::size_t, ScoredDoc>> by_rank;
    std::istringstream in{std::string(text)};
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) {
            continue;
        }
        std::istringstream ss(line);
        std::string qid, q0, doc, rank_s, score_s, tag;
        if (!(ss >> qid >> q0 >> doc >> rank_s >> score_s >> tag)) {
            throw ParseError(source, line_no, "expected 'qid Q0 docid rank score tag'");
        }
        std::size_t rank = 0;
        double score = 0.0;
        try {
            std::size_t used = 0;
            rank = std::stoul(rank_s, &used);
            if (used != rank_s.size()) {
                throw std::invalid_argument(rank_s);
            }
            score = std::stod(score_s, &used);
            if (used != score_s.size()) {
                throw std::invalid_argument(score_s);
            }
        } catch (const std::exception&) {
            throw ParseError(source, line_no, "non-numeric rank or score");
        }
        if (!by_rank[qid].emplace(rank, ScoredDoc{doc, score}).second) {
            throw ParseError(source, line_no, "repeated rank " + rank_s + " for query " + qid);
        }
    }
    Run run;
    for (auto& [qid, ranks] : by_rank) {
        auto& list = run[qid];
        list.query_id = qid;
        for (auto& [_, entry] : ranks) {
            list.entries.push_back(std::move(entry));
        }
    }
    return run;
}

Run read_run(const std::string& path) { return parse_run(detail::read_file_bytes(path), path); }

}  // namespace latentir
