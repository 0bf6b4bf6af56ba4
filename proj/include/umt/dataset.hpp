#pragma once

#include <algorithm>
#include <cctype>
#include <compare>
#include <cstddef>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "umt/error.hpp"

namespace umt {

enum class Tokenization { Whitespace, Character };

inline Tokenization parse_tokenization(const std::string& s) {
    if (s == "whitespace") return Tokenization::Whitespace;
    if (s == "char" || s == "character") return Tokenization::Character;
    throw config_error("unknown tokenization '" + s + "' (expected whitespace|char)");
}

inline std::string to_string(Tokenization t) {
    return t == Tokenization::Whitespace ? "whitespace" : "char";
}

// Whitespace mode splits on ASCII whitespace. Character mode emits one token
// per UTF-8 code point and drops whitespace.
inline std::vector<std::string> tokenize(const std::string& text, Tokenization mode) {
    std::vector<std::string> out;
    if (mode == Tokenization::Whitespace) {
        std::istringstream is(text);
        std::string tok;
        while (is >> tok) out.push_back(tok);
        return out;
    }
    for (std::size_t i = 0; i < text.size();) {
        const auto lead = static_cast<unsigned char>(text[i]);
        std::size_t len = 1;
        if (lead >= 0xF0) len = 4;
        else if (lead >= 0xE0) len = 3;
        else if (lead >= 0xC0) len = 2;
        len = std::min(len, text.size() - i);
        if (!(len == 1 && std::isspace(lead))) out.push_back(text.substr(i, len));
        i += len;
    }
    return out;
}

inline std::string joiner_for(Tokenization mode) { return mode == Tokenization::Whitespace ? " " : ""; }

inline std::string join_tokens(const std::vector<std::string>& tokens, std::size_t begin, std::size_t end,
                               const std::string& joiner) {
    std::string s;
    for (std::size_t i = begin; i <= end && i < tokens.size(); ++i) {
        if (i > begin) s += joiner;
        s += tokens[i];
    }
    return s;
}

struct EntitySpan {
    std::size_t begin = 0;  // inclusive
    std::size_t end = 0;    // inclusive
    std::string text;

    // Identity inside a sentence is positional; surface text follows from it.
    auto key() const { return std::pair(begin, end); }
    friend bool operator==(const EntitySpan& a, const EntitySpan& b) { return a.key() == b.key(); }
    friend auto operator<=>(const EntitySpan& a, const EntitySpan& b) { return a.key() <=> b.key(); }
};

struct Triplet {
    EntitySpan head;
    std::string relation;
    EntitySpan tail;

    friend bool operator==(const Triplet& a, const Triplet& b) {
        return a.head == b.head && a.relation == b.relation && a.tail == b.tail;
    }
    friend auto operator<=>(const Triplet& a, const Triplet& b) {
        if (auto c = a.head <=> b.head; c != 0) return c;
        if (auto c = a.relation <=> b.relation; c != 0) return c;
        return a.tail <=> b.tail;
    }
};

// (head surface, relation, tail surface): the unit of evaluation matching.
using SurfaceTriplet = std::tuple<std::string, std::string, std::string>;

inline SurfaceTriplet surface(const Triplet& t) { return {t.head.text, t.relation, t.tail.text}; }

struct Sentence {
    std::string text;
    std::vector<std::string> tokens;
    std::vector<Triplet> triplets;
};

using Dataset = std::vector<Sentence>;

struct Reject {
    std::size_t line = 0;
    std::string reason;
};

struct LoadResult {
    Dataset data;
    std::vector<Reject> rejects;
};

// Empty optional when the sentence is valid; the reason otherwise.
inline std::optional<std::string> validate(const Sentence& s) {
    const std::size_t n = s.tokens.size();
    auto check_span = [&](const EntitySpan& e, const char* role) -> std::optional<std::string> {
        if (e.end < e.begin) {
            return std::string(role) + " span end " + std::to_string(e.end) + " < begin " +
                   std::to_string(e.begin);
        }
        if (e.end >= n) {
            return std::string(role) + " span [" + std::to_string(e.begin) + ", " + std::to_string(e.end) +
                   "] outside " + std::to_string(n) + " tokens";
        }
        if (e.text != join_tokens(s.tokens, e.begin, e.end, " ") &&
            e.text != join_tokens(s.tokens, e.begin, e.end, "")) {
            return std::string(role) + " text '" + e.text + "' does not match its tokens";
        }
        return std::nullopt;
    };
    for (const auto& t : s.triplets) {
        if (auto r = check_span(t.head, "head")) return r;
        if (auto r = check_span(t.tail, "tail")) return r;
        if (t.relation.empty()) return std::string("empty relation name");
    }
    return std::nullopt;
}

namespace detail {

inline EntitySpan span_from_json(const nlohmann::json& j) {
    EntitySpan e;
    const auto b = j.at("begin").get<long long>();
    const auto en = j.at("end").get<long long>();
    if (b < 0 || en < 0) throw data_error("negative span index");
    e.begin = static_cast<std::size_t>(b);
    e.end = static_cast<std::size_t>(en);
    e.text = j.at("text").get<std::string>();
    return e;
}

inline nlohmann::ordered_json span_to_json(const EntitySpan& e) {
    nlohmann::ordered_json j;
    j["begin"] = e.begin;
    j["end"] = e.end;
    j["text"] = e.text;
    return j;
}

}  // namespace detail

inline Sentence sentence_from_json(const nlohmann::json& j, std::optional<Tokenization> mode = std::nullopt) {
    Sentence s;
    s.text = j.at("text").get<std::string>();
    if (j.contains("tokens")) {
        s.tokens = j.at("tokens").get<std::vector<std::string>>();
    } else if (mode) {
        s.tokens = tokenize(s.text, *mode);
    } else {
        throw data_error("missing \"tokens\" field");
    }
    if (j.contains("triplets")) {
        for (const auto& t : j.at("triplets")) {
            s.triplets.push_back({detail::span_from_json(t.at("head")), t.at("relation").get<std::string>(),
                                  detail::span_from_json(t.at("tail"))});
        }
    }
    return s;
}

inline std::string sentence_to_json(const Sentence& s) {
    nlohmann::ordered_json j;
    j["text"] = s.text;
    j["tokens"] = s.tokens;
    j["triplets"] = nlohmann::ordered_json::array();
    for (const auto& t : s.triplets) {
        nlohmann::ordered_json tj;
        tj["head"] = detail::span_to_json(t.head);
        tj["relation"] = t.relation;
        tj["tail"] = detail::span_to_json(t.tail);
        j["triplets"].push_back(std::move(tj));
    }
    return j.dump();
}

// Parses line-delimited JSON. Malformed JSON aborts with the line number;
// structurally valid lines that break a sentence invariant are rejected and
// reported, and loading continues.
inline LoadResult parse_jsonl(std::istream& is, const std::string& source,
                              std::optional<Tokenization> mode = std::nullopt) {
    LoadResult result;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error& e) {
            throw parse_error(source + ":" + std::to_string(lineno) + ": malformed JSON: " + e.what());
        }
        try {
            Sentence s = sentence_from_json(j, mode);
            if (auto why = validate(s)) {
                result.rejects.push_back({lineno, *why});
                continue;
            }
            result.data.push_back(std::move(s));
        } catch (const nlohmann::json::exception& e) {
            result.rejects.push_back({lineno, std::string("schema: ") + e.what()});
        } catch (const Error& e) {
            result.rejects.push_back({lineno, e.what()});
        }
    }
    return result;
}

inline LoadResult load_jsonl(const std::string& path, std::optional<Tokenization> mode = std::nullopt) {
    std::ifstream is(path);
    if (!is) throw io_error("cannot open dataset '" + path + "'");
    return parse_jsonl(is, path, mode);
}

inline void save_jsonl(const Dataset& data, const std::string& path) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw io_error("cannot open '" + path + "' for writing");
    for (const auto& s : data) os << sentence_to_json(s) << '\n';
    if (!os) throw io_error("failed writing '" + path + "'");
}

inline Dataset filter_no_triplet(const Dataset& data) {
    Dataset out;
    std::copy_if(data.begin(), data.end(), std::back_inserter(out),
                 [](const Sentence& s) { return !s.triplets.empty(); });
    return out;
}

class RelationDict {
public:
    RelationDict() = default;
    explicit RelationDict(std::vector<std::string> names) : names_(std::move(names)) {
        for (std::size_t i = 0; i < names_.size(); ++i) {
            if (!ids_.emplace(names_[i], i).second)
                throw data_error("duplicate relation '" + names_[i] + "'");
        }
    }

    // Sorted, so the dictionary does not depend on sentence order.
    static RelationDict from_dataset(const Dataset& data) {
        std::vector<std::string> names;
        for (const auto& s : data)
            for (const auto& t : s.triplets) names.push_back(t.relation);
        std::sort(names.begin(), names.end());
        names.erase(std::unique(names.begin(), names.end()), names.end());
        return RelationDict(std::move(names));
    }

    static RelationDict load(const std::string& path) {
        std::ifstream is(path);
        if (!is) throw io_error("cannot open relation dictionary '" + path + "'");
        try {
            return RelationDict(nlohmann::json::parse(is).get<std::vector<std::string>>());
        } catch (const nlohmann::json::exception& e) {
            throw parse_error("relation dictionary '" + path + "': " + e.what());
        }
    }

    void save(const std::string& path) const {
        std::ofstream os(path, std::ios::trunc);
        if (!os) throw io_error("cannot open '" + path + "' for writing");
        os << nlohmann::json(names_).dump() << '\n';
    }

    std::size_t size() const { return names_.size(); }
    const std::string& name(std::size_t id) const { return names_.at(id); }
    const std::vector<std::string>& names() const { return names_; }

    std::optional<std::size_t> find(const std::string& name) const {
        auto it = ids_.find(name);
        if (it == ids_.end()) return std::nullopt;
        return it->second;
    }

    std::size_t id(const std::string& name) const {
        auto it = ids_.find(name);
        if (it == ids_.end()) throw data_error("relation '" + name + "' not in dictionary");
        return it->second;
    }

private:
    std::vector<std::string> names_;
    std::map<std::string, std::size_t> ids_;
};

}  // namespace umt
