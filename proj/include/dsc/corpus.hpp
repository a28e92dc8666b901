#pragma once

#include <array>
#include <cstddef>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <nlohmann/json.hpp>

#include "dsc/error.hpp"
#include "dsc/strategy.hpp"
#include "dsc/version.hpp"

namespace dsc {

using json = nlohmann::json;

enum class RiskLevel { Green, Amber, Red };

inline const char* to_string(RiskLevel r) {
    switch (r) {
    case RiskLevel::Green: return "Green";
    case RiskLevel::Amber: return "Amber";
    case RiskLevel::Red: return "Red";
    }
    return "?";
}

inline RiskLevel risk_from_string(std::string_view s) {
    if (s == "Green") return RiskLevel::Green;
    if (s == "Amber") return RiskLevel::Amber;
    if (s == "Red") return RiskLevel::Red;
    throw DataError("unknown risk level: " + std::string(s));
}

// The eight counseling topic categories used for complexity annotation.
inline const std::array<std::string, 8>& topic_categories() {
    static const std::array<std::string, 8> kTopics = {
        "background", "cause", "empathy", "symptom",
        "experience", "cognition", "behavior", "support"};
    return kTopics;
}

inline bool is_known_topic(std::string_view t) {
    for (const auto& k : topic_categories())
        if (k == t) return true;
    return false;
}

// A help-seeker post. `title` fills the prompt Q slot, `description` the D
// slot and `label` the opaque L conditioning token.
struct QuestionRecord {
    std::string id;
    std::string title;
    std::string description;
    std::string label;
    std::optional<std::vector<std::string>> topics; // sorted, unique
    std::optional<RiskLevel> risk;

    bool operator==(const QuestionRecord&) const = default;
};

struct AnswerSegment {
    std::string strategy;
    std::string text;

    bool operator==(const AnswerSegment&) const = default;
};

struct AnswerRecord {
    std::string question_id;
    std::vector<AnswerSegment> segments;

    std::string full_text() const {
        std::string out;
        for (const auto& seg : segments) out += seg.text;
        return out;
    }

    bool operator==(const AnswerRecord&) const = default;
};

struct Corpus {
    std::vector<QuestionRecord> questions;
    std::vector<AnswerRecord> answers;
    StrategyVocabulary vocabulary;

    const QuestionRecord* find_question(std::string_view id) const {
        for (const auto& q : questions)
            if (q.id == id) return &q;
        return nullptr;
    }
};

// Projection of the per-segment strategy annotations, in order, un-normalized.
inline StrategyChain extract_chain(const AnswerRecord& answer) {
    StrategyChain chain;
    chain.steps.reserve(answer.segments.size());
    for (const auto& seg : answer.segments) chain.steps.push_back(seg.strategy);
    return chain;
}

inline StrategyChain merged_chain(const AnswerRecord& answer) {
    return merge_adjacent(extract_chain(answer));
}

enum class VocabMode { BuiltinDefault, CorpusDerived };

namespace detail {

inline QuestionRecord parse_question_line(const json& j, std::size_t line_no) {
    QuestionRecord q;
    q.id = j.at("id").get<std::string>();
    if (q.id.empty()) throw DataError("line " + std::to_string(line_no) + ": empty question id");
    q.title = j.at("title").get<std::string>();
    if (trim(q.title).empty())
        throw DataError("line " + std::to_string(line_no) + ": question " + q.id + " has empty title");
    q.description = j.value("description", std::string{});
    q.label = j.value("label", std::string{});
    if (j.contains("topics")) {
        std::set<std::string> topics;
        for (const auto& t : j.at("topics")) {
            std::string topic = t.get<std::string>();
            if (!is_known_topic(topic))
                throw DataError("line " + std::to_string(line_no) + ": unknown topic: " + topic);
            topics.insert(std::move(topic));
        }
        q.topics = std::vector<std::string>(topics.begin(), topics.end());
    }
    if (j.contains("risk")) q.risk = risk_from_string(j.at("risk").get<std::string>());
    return q;
}

inline AnswerRecord parse_answer_line(const json& j, std::size_t line_no) {
    AnswerRecord a;
    a.question_id = j.at("question_id").get<std::string>();
    for (const auto& s : j.at("segments")) {
        AnswerSegment seg;
        seg.strategy = canonical_strategy_label(s.at("strategy").get<std::string>());
        seg.text = s.at("text").get<std::string>();
        a.segments.push_back(std::move(seg));
    }
    (void)line_no;
    return a;
}

} // namespace detail

// Reads the JSON Lines corpus format. Under BuiltinDefault an unknown
// strategy label is an error; under CorpusDerived the vocabulary is exactly
// the labels present, in order of first appearance.
inline Corpus parse_corpus(std::istream& in, VocabMode vocab_mode = VocabMode::BuiltinDefault) {
    Corpus corpus;
    corpus.vocabulary = vocab_mode == VocabMode::BuiltinDefault
                            ? StrategyVocabulary::builtin_default()
                            : StrategyVocabulary();
    std::unordered_set<std::string> question_ids;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw DataError("line " + std::to_string(line_no) + ": malformed JSON: " + e.what());
        }
        try {
            if (j.value("v", 0) != kCorpusSchemaVersion)
                throw DataError("unsupported schema version");
            const std::string kind = j.at("kind").get<std::string>();
            if (kind == "question") {
                QuestionRecord q = detail::parse_question_line(j, line_no);
                if (!question_ids.insert(q.id).second)
                    throw DataError("duplicate question id: " + q.id);
                corpus.questions.push_back(std::move(q));
            } else if (kind == "answer") {
                AnswerRecord a = detail::parse_answer_line(j, line_no);
                for (const auto& seg : a.segments) {
                    if (vocab_mode == VocabMode::CorpusDerived)
                        corpus.vocabulary.add_if_absent(seg.strategy);
                    else if (!corpus.vocabulary.contains(seg.strategy))
                        throw DataError("unknown strategy label: " + seg.strategy);
                }
                corpus.answers.push_back(std::move(a));
            } else {
                throw DataError("unknown record kind: " + kind);
            }
        } catch (const json::exception& e) {
            throw DataError("line " + std::to_string(line_no) + ": malformed record: " + e.what());
        } catch (const DataError& e) {
            throw DataError("line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    for (const auto& a : corpus.answers)
        if (!question_ids.count(a.question_id))
            throw DataError("answer references absent question id: " + a.question_id);
    return corpus;
}

inline json question_to_json(const QuestionRecord& q) {
    json j{{"v", kCorpusSchemaVersion}, {"kind", "question"}, {"id", q.id},
           {"title", q.title}, {"description", q.description}, {"label", q.label}};
    if (q.topics) j["topics"] = *q.topics;
    if (q.risk) j["risk"] = to_string(*q.risk);
    return j;
}

inline json answer_to_json(const AnswerRecord& a) {
    json segs = json::array();
    for (const auto& seg : a.segments) segs.push_back({{"strategy", seg.strategy}, {"text", seg.text}});
    return json{{"v", kCorpusSchemaVersion}, {"kind", "answer"},
                {"question_id", a.question_id}, {"segments", std::move(segs)}};
}

inline void serialize_corpus(const Corpus& corpus, std::ostream& out) {
    for (const auto& q : corpus.questions) out << question_to_json(q).dump() << '\n';
    for (const auto& a : corpus.answers) out << answer_to_json(a).dump() << '\n';
}

// Relative frequency of merged-chain lengths over the nonempty chains.
// Empty chains are counted apart, never in the distribution.
struct ChainLengthHistogram {
    std::map<std::size_t, double> frequency;
    std::size_t empty_chains = 0;
    std::size_t total_nonempty = 0;
};

inline ChainLengthHistogram chain_length_histogram(const Corpus& corpus) {
    if (corpus.answers.empty()) throw DataError("corpus has no answers");
    ChainLengthHistogram hist;
    std::map<std::size_t, std::size_t> counts;
    for (const auto& a : corpus.answers) {
        const std::size_t len = merged_chain(a).size();
        if (len == 0)
            ++hist.empty_chains;
        else
            ++counts[len];
    }
    for (const auto& [len, n] : counts) hist.total_nonempty += n;
    for (const auto& [len, n] : counts)
        hist.frequency[len] = static_cast<double>(n) / static_cast<double>(hist.total_nonempty);
    return hist;
}

enum class FilterBasis { Length, Pattern };

struct FilterOptions {
    double min_length_freq = 0.05;
    std::size_t max_len = 8;
    FilterBasis basis = FilterBasis::Length;
};

struct FilterResult {
    Corpus corpus;
    std::size_t removed_answers = 0;
    std::size_t removed_questions = 0;
};

// Sample filtering: keeps answers whose merged chain has length in
// [1, max_len] and whose pre-filter frequency (length bucket by default,
// whole-pattern when basis is Pattern) is at least min_length_freq.
// Questions left without answers are dropped. The input is not modified.
inline FilterResult filter_samples(const Corpus& corpus, const FilterOptions& opts = {}) {
    if (corpus.answers.empty()) throw DataError("corpus has no answers");

    std::vector<StrategyChain> chains;
    chains.reserve(corpus.answers.size());
    std::size_t nonempty = 0;
    std::map<std::size_t, std::size_t> length_counts;
    std::map<StrategyChain, std::size_t> pattern_counts;
    for (const auto& a : corpus.answers) {
        chains.push_back(merged_chain(a));
        const auto& c = chains.back();
        if (!c.empty()) {
            ++nonempty;
            ++length_counts[c.size()];
            ++pattern_counts[c];
        }
    }

    FilterResult result;
    result.corpus.vocabulary = corpus.vocabulary;
    std::unordered_set<std::string> kept_questions;
    for (std::size_t i = 0; i < corpus.answers.size(); ++i) {
        const auto& c = chains[i];
        bool keep = !c.empty() && c.size() <= opts.max_len;
        if (keep && nonempty > 0) {
            const std::size_t n = opts.basis == FilterBasis::Length ? length_counts[c.size()]
                                                                    : pattern_counts[c];
            keep = static_cast<double>(n) / static_cast<double>(nonempty) >= opts.min_length_freq;
        }
        if (keep) {
            result.corpus.answers.push_back(corpus.answers[i]);
            kept_questions.insert(corpus.answers[i].question_id);
        } else {
            ++result.removed_answers;
        }
    }
    for (const auto& q : corpus.questions) {
        if (kept_questions.count(q.id))
            result.corpus.questions.push_back(q);
        else
            ++result.removed_questions;
    }
    if (result.corpus.answers.empty())
        throw DataError("filtering removed every answer");
    return result;
}

// Most frequent merged chain; ties resolved toward the lexicographically
// smaller label sequence so the result is corpus-order independent.
inline StrategyChain most_frequent_chain(const Corpus& corpus) {
    std::map<StrategyChain, std::size_t> counts;
    for (const auto& a : corpus.answers) {
        StrategyChain c = merged_chain(a);
        if (!c.empty()) ++counts[c];
    }
    if (counts.empty()) throw DataError("corpus has no nonempty strategy chains");
    const StrategyChain* best = nullptr;
    std::size_t best_count = 0;
    for (const auto& [chain, n] : counts) {
        if (n > best_count) { // map iteration is lex order, first max wins ties
            best = &chain;
            best_count = n;
        }
    }
    return *best;
}

} // namespace dsc
