#pragma once

#include <filesystem>
#include <string>
#include <tuple>
#include <vector>

#include "umt/dataset.hpp"

namespace umt::testing {

// (head begin, head end, relation, tail begin, tail end)
using SpanTriplet = std::tuple<std::size_t, std::size_t, std::string, std::size_t, std::size_t>;

inline EntitySpan span_of(const std::vector<std::string>& tokens, std::size_t b, std::size_t e) {
    return {b, e, join_tokens(tokens, b, e, " ")};
}

// Whitespace-tokenised sentence with span texts filled from the tokens.
inline Sentence make_sentence(const std::string& text, const std::vector<SpanTriplet>& triplets = {}) {
    Sentence s;
    s.text = text;
    s.tokens = tokenize(text, Tokenization::Whitespace);
    for (const auto& [hb, he, rel, tb, te] : triplets)
        s.triplets.push_back({span_of(s.tokens, hb, he), rel, span_of(s.tokens, tb, te)});
    return s;
}

// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / ("umt_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

}  // namespace umt::testing
