#pragma once

#include <algorithm>
#include <cstddef>
#include <fstream>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "umt/dataset.hpp"
#include "umt/error.hpp"

namespace umt {

// Token <-> id map with PAD = 0 and UNK = 1 reserved.
class Vocab {
public:
    static constexpr std::size_t kPad = 0;
    static constexpr std::size_t kUnk = 1;

    Vocab() : tokens_{"<pad>", "<unk>"}, freqs_{0, 0} {}

    // Built from the training split only. Ordered by descending frequency,
    // ties broken by token, so the result is independent of sentence order.
    static Vocab build(const Dataset& train, std::size_t min_freq = 1) {
        std::map<std::string, std::size_t> counts;
        for (const auto& s : train)
            for (const auto& t : s.tokens) ++counts[t];
        std::vector<std::pair<std::string, std::size_t>> entries(counts.begin(), counts.end());
        std::stable_sort(entries.begin(), entries.end(),
                         [](const auto& a, const auto& b) { return a.second > b.second; });
        Vocab v;
        for (const auto& [tok, freq] : entries) {
            if (freq >= min_freq) v.insert(tok, freq);
        }
        return v;
    }

    // Line format: "token<TAB>frequency"; reserved entries are implicit.
    static Vocab load(const std::string& path) {
        std::ifstream is(path);
        if (!is) throw io_error("cannot open vocabulary '" + path + "'");
        Vocab v;
        std::string line;
        std::size_t lineno = 0;
        while (std::getline(is, line)) {
            ++lineno;
            if (line.empty()) continue;
            const auto tab = line.rfind('\t');
            if (tab == std::string::npos)
                throw parse_error(path + ":" + std::to_string(lineno) + ": expected token<TAB>frequency");
            std::size_t freq = 0;
            try {
                freq = std::stoul(line.substr(tab + 1));
            } catch (const std::exception&) {
                throw parse_error(path + ":" + std::to_string(lineno) + ": bad frequency");
            }
            v.insert(line.substr(0, tab), freq);
        }
        return v;
    }

    void save(const std::string& path) const {
        std::ofstream os(path, std::ios::trunc);
        if (!os) throw io_error("cannot open '" + path + "' for writing");
        for (std::size_t i = 2; i < tokens_.size(); ++i) os << tokens_[i] << '\t' << freqs_[i] << '\n';
    }

    std::size_t size() const { return tokens_.size(); }
    const std::string& token(std::size_t id) const { return tokens_.at(id); }

    std::size_t id(const std::string& token) const {
        auto it = ids_.find(token);
        return it == ids_.end() ? kUnk : it->second;
    }

    bool contains(const std::string& token) const { return ids_.count(token) != 0; }

    std::vector<std::size_t> encode(const std::vector<std::string>& tokens) const {
        std::vector<std::size_t> ids;
        ids.reserve(tokens.size());
        for (const auto& t : tokens) ids.push_back(id(t));
        return ids;
    }

private:
    void insert(const std::string& token, std::size_t freq) {
        if (ids_.count(token)) throw data_error("duplicate vocabulary token '" + token + "'");
        ids_.emplace(token, tokens_.size());
        tokens_.push_back(token);
        freqs_.push_back(freq);
    }

    std::vector<std::string> tokens_;
    std::vector<std::size_t> freqs_;
    std::unordered_map<std::string, std::size_t> ids_;
};

}  // namespace umt
