#pragma once

#include <algorithm>
#include <compare>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "dsc/error.hpp"
#include "dsc/util.hpp"

namespace dsc {

// Reserved by the chain model; never valid strategy labels.
inline constexpr std::string_view kStartSymbol = "<s>";
inline constexpr std::string_view kEndSymbol = "</s>";

// Canonicalizes a raw label and rejects anything that would break the
// bracketed serialization or collide with reserved model symbols.
inline std::string canonical_strategy_label(std::string_view raw) {
    std::string label = trim(raw);
    if (label.empty()) throw DataError("strategy label is empty");
    if (label.find('[') != std::string::npos || label.find(']') != std::string::npos)
        throw DataError("strategy label contains brackets: " + label);
    if (label == kStartSymbol || label == kEndSymbol)
        throw DataError("strategy label is a reserved symbol: " + label);
    return label;
}

class StrategyVocabulary {
public:
    enum class Source { BuiltinDefault, CorpusDerived };

    StrategyVocabulary() : source_(Source::CorpusDerived) {}

    static StrategyVocabulary builtin_default() {
        StrategyVocabulary v;
        v.source_ = Source::BuiltinDefault;
        for (const char* label : {"Information", "Direct Guidance", "Approval And Reassurance",
                                  "Restatement", "Interpretation", "Self-disclosure"})
            v.add(label);
        return v;
    }

    static StrategyVocabulary from_labels(const std::vector<std::string>& labels, Source source) {
        StrategyVocabulary v;
        v.source_ = source;
        for (const auto& label : labels) v.add(label);
        return v;
    }

    void add(std::string_view raw) {
        std::string label = canonical_strategy_label(raw);
        if (index_.count(label)) throw DataError("duplicate strategy label: " + label);
        index_.emplace(label, labels_.size());
        labels_.push_back(std::move(label));
    }

    // Adds unseen labels; used while deriving a vocabulary from a corpus.
    void add_if_absent(std::string_view raw) {
        std::string label = canonical_strategy_label(raw);
        if (!index_.count(label)) {
            index_.emplace(label, labels_.size());
            labels_.push_back(std::move(label));
        }
    }

    bool contains(std::string_view label) const { return index_.count(std::string(label)) > 0; }
    const std::vector<std::string>& labels() const { return labels_; }
    std::size_t size() const { return labels_.size(); }
    Source source() const { return source_; }

private:
    std::vector<std::string> labels_;
    std::unordered_map<std::string, std::size_t> index_;
    Source source_;
};

// Ordered sequence of strategy labels. Steps are kept as plain strings;
// vocabulary membership is enforced at ingestion boundaries.
struct StrategyChain {
    std::vector<std::string> steps;

    StrategyChain() = default;
    explicit StrategyChain(std::vector<std::string> s) : steps(std::move(s)) {}
    StrategyChain(std::initializer_list<std::string> s) : steps(s) {}

    std::size_t size() const { return steps.size(); }
    bool empty() const { return steps.empty(); }

    bool has_adjacent_duplicates() const {
        for (std::size_t i = 1; i < steps.size(); ++i)
            if (steps[i] == steps[i - 1]) return true;
        return false;
    }

    // "[Label1][Label2]..." as in the counseling figures.
    std::string bracketed() const {
        std::string out;
        for (const auto& s : steps) {
            out += '[';
            out += s;
            out += ']';
        }
        return out;
    }

    // Parses "[A][B]..."; whitespace between groups is tolerated when
    // `lenient_whitespace` is set (used on LLM output). The whole text must
    // be consumed.
    static StrategyChain parse_bracketed(std::string_view text, bool lenient_whitespace = false) {
        StrategyChain chain;
        std::size_t i = 0;
        auto skip_ws = [&] {
            while (lenient_whitespace && i < text.size() &&
                   std::isspace(static_cast<unsigned char>(text[i])))
                ++i;
        };
        skip_ws();
        while (i < text.size()) {
            if (text[i] != '[') throw DataError("malformed strategy chain: " + std::string(text));
            const std::size_t close = text.find(']', i + 1);
            if (close == std::string_view::npos)
                throw DataError("unterminated strategy bracket: " + std::string(text));
            std::string label = trim(text.substr(i + 1, close - i - 1));
            if (label.empty()) throw DataError("empty strategy bracket: " + std::string(text));
            chain.steps.push_back(std::move(label));
            i = close + 1;
            skip_ws();
        }
        if (chain.empty()) throw DataError("empty strategy chain text");
        return chain;
    }

    auto operator<=>(const StrategyChain&) const = default;
};

// Run-length collapse: consecutive identical strategies become one.
inline StrategyChain merge_adjacent(const StrategyChain& chain) {
    StrategyChain out;
    for (const auto& step : chain.steps)
        if (out.steps.empty() || out.steps.back() != step) out.steps.push_back(step);
    return out;
}

} // namespace dsc
