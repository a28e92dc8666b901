#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <fstream>
#include <map>
#include <queue>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dsc/corpus.hpp"
#include "dsc/error.hpp"
#include "dsc/strategy.hpp"
#include "dsc/util.hpp"
#include "dsc/version.hpp"

namespace dsc {

// ---------------------------------------------------------------------------
// Training-sequence token format

inline constexpr std::string_view kQuestionMarker = "[QUESTION]";
inline constexpr std::string_view kDescriptionMarker = "[DESCRIPTION]";
inline constexpr std::string_view kLabelMarker = "[LABEL]";
inline constexpr std::string_view kChainMarker = "[STRATEGY-CHAIN]";
inline constexpr std::string_view kEosMarker = "[EOS]";

struct TrainingSequence {
    std::string question;
    std::string description;
    std::string label;
    StrategyChain chain;

    bool operator==(const TrainingSequence&) const = default;
};

namespace detail {

inline void reject_marker_text(std::string_view field, std::string_view value) {
    for (std::string_view marker : {kQuestionMarker, kDescriptionMarker, kLabelMarker,
                                    kChainMarker, kEosMarker}) {
        if (value.find(marker) != std::string_view::npos)
            throw DataError(std::string(field) + " must not contain section marker " +
                            std::string(marker));
    }
}

} // namespace detail

// "[QUESTION] Q [DESCRIPTION] D [LABEL] L [STRATEGY-CHAIN] [S1][S2]... [EOS]".
// The chain must already be merged; section markers may not occur in the
// text fields so the encoding stays invertible.
inline std::string encode_training_sequence(const std::string& question,
                                            const std::string& description,
                                            const std::string& label,
                                            const StrategyChain& chain) {
    if (chain.empty()) throw DataError("training chain is empty");
    if (chain.has_adjacent_duplicates())
        throw DataError("training chain has adjacent duplicate strategies; merge first");
    detail::reject_marker_text("question", question);
    detail::reject_marker_text("description", description);
    detail::reject_marker_text("label", label);
    std::string out;
    out += kQuestionMarker;
    out += ' ';
    out += question;
    out += ' ';
    out += kDescriptionMarker;
    out += ' ';
    out += description;
    out += ' ';
    out += kLabelMarker;
    out += ' ';
    out += label;
    out += ' ';
    out += kChainMarker;
    out += ' ';
    out += chain.bracketed();
    out += ' ';
    out += kEosMarker;
    return out;
}

inline std::string encode_training_sequence(const TrainingSequence& seq) {
    return encode_training_sequence(seq.question, seq.description, seq.label, seq.chain);
}

inline TrainingSequence decode_training_sequence(std::string_view text) {
    auto section = [&](std::string_view open, std::string_view close,
                       std::size_t& cursor) -> std::string {
        const std::size_t start = text.find(open, cursor);
        if (start != cursor) throw DataError("expected marker " + std::string(open));
        std::size_t body = cursor + open.size();
        if (body >= text.size() || text[body] != ' ')
            throw DataError("expected space after " + std::string(open));
        ++body;
        const std::size_t next = text.find(close, body);
        if (next == std::string_view::npos)
            throw DataError("missing marker " + std::string(close));
        if (next == body || text[next - 1] != ' ')
            throw DataError("expected space before " + std::string(close));
        cursor = next;
        return std::string(text.substr(body, next - body - 1));
    };
    std::size_t cursor = 0;
    TrainingSequence seq;
    seq.question = section(kQuestionMarker, kDescriptionMarker, cursor);
    seq.description = section(kDescriptionMarker, kLabelMarker, cursor);
    seq.label = section(kLabelMarker, kChainMarker, cursor);
    const std::string chain_text = section(kChainMarker, kEosMarker, cursor);
    if (cursor + kEosMarker.size() != text.size())
        throw DataError("trailing text after " + std::string(kEosMarker));
    seq.chain = StrategyChain::parse_bracketed(chain_text, false);
    if (seq.chain.has_adjacent_duplicates())
        throw DataError("decoded chain has adjacent duplicates");
    return seq;
}

// ---------------------------------------------------------------------------
// Conditioned additive-smoothed Markov model over strategy sequences

enum class ConditioningMode { LabelOnly, None };

inline const char* to_string(ConditioningMode m) {
    return m == ConditioningMode::LabelOnly ? "label-only" : "none";
}

inline ConditioningMode conditioning_mode_from_string(std::string_view s) {
    if (s == "label-only") return ConditioningMode::LabelOnly;
    if (s == "none") return ConditioningMode::None;
    throw DataError("unknown conditioning mode: " + std::string(s));
}

struct GenerationConfig {
    int k = 3;
    double temperature = 1.0;
    std::size_t max_len = 8;
    std::size_t max_attempts = 64;
    std::uint64_t seed = 0;

    void validate() const {
        if (k < 1) throw UsageError("generation k must be >= 1");
        if (max_len < 1) throw UsageError("generation max_len must be >= 1");
        if (max_attempts < static_cast<std::size_t>(k))
            throw UsageError("generation max_attempts must be >= k");
        if (temperature < 0.0) throw UsageError("generation temperature must be >= 0");
    }
};

class ChainModel {
public:
    // cond -> context (order symbols, start-padded) -> next symbol -> count
    using CountTable =
        std::map<std::string, std::map<std::vector<std::string>, std::map<std::string, std::uint64_t>>>;

    ChainModel(StrategyVocabulary vocab, int order, double lambda, ConditioningMode mode)
        : vocab_(std::move(vocab)), order_(order), lambda_(lambda), mode_(mode) {
        if (order_ < 1) throw UsageError("model order must be >= 1");
        if (lambda_ <= 0.0) throw UsageError("smoothing lambda must be > 0");
        if (vocab_.size() == 0) throw DataError("model vocabulary is empty");
        symbols_ = vocab_.labels();
        symbols_.push_back(std::string(kEndSymbol));
    }

    // Closed-form maximum-likelihood fit of the cross-entropy objective:
    // counts of (conditioning key, context) -> next transitions over all
    // merged chains, contexts padded with the start symbol.
    static ChainModel train(const Corpus& corpus, int order = 2, double lambda = 0.1,
                            ConditioningMode mode = ConditioningMode::LabelOnly) {
        if (corpus.answers.empty()) throw DataError("training corpus has no answers");
        ChainModel model(corpus.vocabulary, order, lambda, mode);
        std::unordered_map<std::string, const QuestionRecord*> questions;
        for (const auto& q : corpus.questions) questions.emplace(q.id, &q);
        for (const auto& a : corpus.answers) {
            std::string cond;
            if (mode == ConditioningMode::LabelOnly) {
                auto it = questions.find(a.question_id);
                if (it == questions.end())
                    throw DataError("answer references absent question id: " + a.question_id);
                cond = it->second->label;
            }
            model.observe(cond, merged_chain(a));
        }
        return model;
    }

    int order() const { return order_; }
    double lambda() const { return lambda_; }
    ConditioningMode conditioning_mode() const { return mode_; }
    const StrategyVocabulary& vocabulary() const { return vocab_; }
    const CountTable& counts() const { return counts_; }

    // Add-lambda estimate over vocabulary + terminator. Contexts never seen
    // in training fall back to the uniform 1/(V+1).
    double transition_probability(const std::string& cond, const std::vector<std::string>& context,
                                  const std::string& next) const {
        const double v_prime = static_cast<double>(symbols_.size());
        std::uint64_t count = 0;
        std::uint64_t total = 0;
        auto cit = counts_.find(mode_ == ConditioningMode::None ? std::string{} : cond);
        if (cit != counts_.end()) {
            auto ctx_it = cit->second.find(context);
            if (ctx_it != cit->second.end()) {
                for (const auto& [sym, n] : ctx_it->second) total += n;
                auto nit = ctx_it->second.find(next);
                if (nit != ctx_it->second.end()) count = nit->second;
            }
        }
        return (static_cast<double>(count) + lambda_) /
               (static_cast<double>(total) + lambda_ * v_prime);
    }

    // Mean -log2 P(next | context) in bits per strategy token, terminator
    // transitions included. Smoothing keeps every term finite.
    double cross_entropy_bits(const Corpus& heldout) const {
        if (heldout.answers.empty()) throw DataError("held-out corpus has no answers");
        std::unordered_map<std::string, const QuestionRecord*> questions;
        for (const auto& q : heldout.questions) questions.emplace(q.id, &q);
        double total_bits = 0.0;
        std::size_t transitions = 0;
        for (const auto& a : heldout.answers) {
            std::string cond;
            if (mode_ == ConditioningMode::LabelOnly) {
                auto it = questions.find(a.question_id);
                if (it == questions.end())
                    throw DataError("answer references absent question id: " + a.question_id);
                cond = it->second->label;
            }
            std::vector<std::string> context(static_cast<std::size_t>(order_),
                                             std::string(kStartSymbol));
            const StrategyChain chain = merged_chain(a);
            for (std::size_t i = 0; i <= chain.size(); ++i) {
                const std::string& next =
                    i < chain.size() ? chain.steps[i] : std::string(kEndSymbol);
                total_bits -= std::log2(transition_probability(cond, context, next));
                push_context(context, next);
                ++transitions;
            }
        }
        return total_bits / static_cast<double>(transitions);
    }

    // Generates exactly k pairwise-distinct merged chains of length in
    // [1, max_len]: temperature-scaled ancestral sampling with duplicate
    // rejection, then a deterministic best-first enumeration of the highest
    // probability unseen chains if the sampling budget runs out.
    std::vector<StrategyChain> generate(const QuestionRecord& question,
                                        const GenerationConfig& config) const {
        config.validate();
        const std::string cond =
            mode_ == ConditioningMode::LabelOnly ? question.label : std::string{};
        if (distinct_chain_capacity(config.max_len, static_cast<std::size_t>(config.k)) <
            static_cast<std::size_t>(config.k))
            throw UsageError("k unreachable: fewer than k distinct merged chains exist within max_len");

        std::vector<StrategyChain> out;
        std::set<StrategyChain> seen;
        std::mt19937_64 rng(config.seed);
        for (std::size_t attempt = 0;
             attempt < config.max_attempts && out.size() < static_cast<std::size_t>(config.k);
             ++attempt) {
            StrategyChain raw = sample_chain(cond, config, rng);
            StrategyChain merged = merge_adjacent(raw);
            if (merged.empty()) continue;
            if (seen.insert(merged).second) out.push_back(std::move(merged));
        }
        if (out.size() < static_cast<std::size_t>(config.k))
            enumerate_top_chains(cond, config, seen, out);
        return out;
    }

    json to_json() const {
        json counts = json::object();
        for (const auto& [cond, contexts] : counts_) {
            json per_cond = json::object();
            for (const auto& [ctx, nexts] : contexts) {
                json per_ctx = json::object();
                for (const auto& [next, n] : nexts) per_ctx[next] = n;
                per_cond[json(ctx).dump()] = std::move(per_ctx);
            }
            counts[cond] = std::move(per_cond);
        }
        return json{{"v", kModelSchemaVersion},
                    {"order", order_},
                    {"lambda", lambda_},
                    {"conditioning_mode", to_string(mode_)},
                    {"vocab", vocab_.labels()},
                    {"counts", std::move(counts)}};
    }

    static ChainModel from_json(const json& j) {
        try {
            if (j.at("v").get<int>() != kModelSchemaVersion)
                throw DataError("unsupported model schema version");
            ChainModel model(
                StrategyVocabulary::from_labels(j.at("vocab").get<std::vector<std::string>>(),
                                                StrategyVocabulary::Source::CorpusDerived),
                j.at("order").get<int>(), j.at("lambda").get<double>(),
                conditioning_mode_from_string(j.at("conditioning_mode").get<std::string>()));
            for (const auto& [cond, contexts] : j.at("counts").items()) {
                for (const auto& [ctx_key, nexts] : contexts.items()) {
                    const auto ctx = json::parse(ctx_key).get<std::vector<std::string>>();
                    if (ctx.size() != static_cast<std::size_t>(model.order_))
                        throw DataError("context length does not match model order");
                    for (const auto& [next, n] : nexts.items())
                        model.counts_[cond][ctx][next] = n.get<std::uint64_t>();
                }
            }
            return model;
        } catch (const json::exception& e) {
            throw DataError(std::string("malformed model file: ") + e.what());
        }
    }

    void save(const std::filesystem::path& path) const { write_file(path, to_json().dump() + "\n"); }

    static ChainModel load(const std::filesystem::path& path) {
        try {
            return from_json(json::parse(read_file(path)));
        } catch (const json::exception& e) {
            throw DataError("malformed model file " + path.string() + ": " + e.what());
        }
    }

private:
    void observe(const std::string& cond, const StrategyChain& chain) {
        for (const auto& step : chain.steps)
            if (!vocab_.contains(step))
                throw DataError("chain strategy not in vocabulary: " + step);
        std::vector<std::string> context(static_cast<std::size_t>(order_),
                                         std::string(kStartSymbol));
        for (std::size_t i = 0; i <= chain.size(); ++i) {
            const std::string& next = i < chain.size() ? chain.steps[i] : std::string(kEndSymbol);
            ++counts_[mode_ == ConditioningMode::None ? std::string{} : cond][context][next];
            push_context(context, next);
        }
    }

    static void push_context(std::vector<std::string>& context, const std::string& symbol) {
        context.erase(context.begin());
        context.push_back(symbol);
    }

    // Number of distinct merged chains with length in [1, max_len], saturated
    // at `need` since only the comparison matters.
    std::size_t distinct_chain_capacity(std::size_t max_len, std::size_t need) const {
        const std::size_t v = vocab_.size();
        std::size_t total = 0;
        double per_len = static_cast<double>(v);
        for (std::size_t len = 1; len <= max_len; ++len) {
            total += static_cast<std::size_t>(std::min<double>(per_len, static_cast<double>(need)));
            if (total >= need) return need;
            per_len *= static_cast<double>(v - 1);
            if (per_len == 0.0) break;
        }
        return total;
    }

    std::vector<double> next_distribution(const std::string& cond,
                                          const std::vector<std::string>& context) const {
        std::vector<double> probs(symbols_.size());
        for (std::size_t i = 0; i < symbols_.size(); ++i)
            probs[i] = transition_probability(cond, context, symbols_[i]);
        return probs;
    }

    std::size_t sample_symbol(const std::vector<double>& probs, double temperature,
                              std::mt19937_64& rng) const {
        constexpr double kGreedyEps = 1e-9;
        if (temperature < kGreedyEps) {
            std::size_t best = 0;
            for (std::size_t i = 1; i < probs.size(); ++i)
                if (probs[i] > probs[best]) best = i;
            return best;
        }
        std::vector<double> logits(probs.size());
        double max_logit = -std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < probs.size(); ++i) {
            logits[i] = std::log(probs[i]) / temperature;
            max_logit = std::max(max_logit, logits[i]);
        }
        double z = 0.0;
        for (double& l : logits) {
            l = std::exp(l - max_logit);
            z += l;
        }
        const double u = uniform_unit(rng) * z;
        double cum = 0.0;
        for (std::size_t i = 0; i < logits.size(); ++i) {
            cum += logits[i];
            if (u < cum) return i;
        }
        return logits.size() - 1;
    }

    StrategyChain sample_chain(const std::string& cond, const GenerationConfig& config,
                               std::mt19937_64& rng) const {
        StrategyChain chain;
        std::vector<std::string> context(static_cast<std::size_t>(order_),
                                         std::string(kStartSymbol));
        while (chain.size() < config.max_len) {
            const std::size_t idx =
                sample_symbol(next_distribution(cond, context), config.temperature, rng);
            if (symbols_[idx] == kEndSymbol) break;
            chain.steps.push_back(symbols_[idx]);
            push_context(context, symbols_[idx]);
        }
        return chain;
    }

    // Deterministic fallback: best-first enumeration of merged-form chains by
    // model probability (ties toward the lexicographically smaller chain).
    void enumerate_top_chains(const std::string& cond, const GenerationConfig& config,
                              std::set<StrategyChain>& seen,
                              std::vector<StrategyChain>& out) const {
        struct Node {
            double log_prob;
            bool complete;
            std::vector<std::string> steps;
            std::vector<std::string> context;
        };
        auto worse = [](const Node& a, const Node& b) {
            if (a.log_prob != b.log_prob) return a.log_prob < b.log_prob;
            return a.steps > b.steps;
        };
        std::priority_queue<Node, std::vector<Node>, decltype(worse)> queue(worse);
        queue.push(Node{0.0, false, {},
                        std::vector<std::string>(static_cast<std::size_t>(order_),
                                                 std::string(kStartSymbol))});
        while (!queue.empty() && out.size() < static_cast<std::size_t>(config.k)) {
            Node node = queue.top();
            queue.pop();
            if (node.complete) {
                StrategyChain chain{node.steps};
                if (seen.insert(chain).second) out.push_back(std::move(chain));
                continue;
            }
            const std::vector<double> probs = next_distribution(cond, node.context);
            for (std::size_t i = 0; i < symbols_.size(); ++i) {
                const std::string& sym = symbols_[i];
                if (sym == kEndSymbol) {
                    if (!node.steps.empty())
                        queue.push(Node{node.log_prob + std::log(probs[i]), true, node.steps, {}});
                    continue;
                }
                if (node.steps.size() >= config.max_len) continue;
                if (!node.steps.empty() && node.steps.back() == sym) continue;
                Node child{node.log_prob + std::log(probs[i]), false, node.steps, node.context};
                child.steps.push_back(sym);
                push_context(child.context, sym);
                queue.push(std::move(child));
            }
        }
        if (out.size() < static_cast<std::size_t>(config.k))
            throw UsageError("k unreachable: fewer than k distinct merged chains exist within max_len");
    }

    StrategyVocabulary vocab_;
    int order_;
    double lambda_;
    ConditioningMode mode_;
    std::vector<std::string> symbols_; // vocabulary order, then terminator
    CountTable counts_;
};

} // namespace dsc
