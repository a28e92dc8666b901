#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "dsc/corpus.hpp"
#include "dsc/error.hpp"
#include "dsc/strategy.hpp"
#include "dsc/util.hpp"

namespace dsc {

// Prompting methods (2)-(6); method (1) needs a fine-tuned reply PLM and is
// out of scope.
enum class Method { CoT, MHS, SC, DSC, DSCs };

inline const std::vector<Method>& all_methods() {
    static const std::vector<Method> kAll = {Method::CoT, Method::MHS, Method::SC, Method::DSC,
                                             Method::DSCs};
    return kAll;
}

inline const char* to_string(Method m) {
    switch (m) {
    case Method::CoT: return "CoT";
    case Method::MHS: return "MHS";
    case Method::SC: return "SC";
    case Method::DSC: return "DSC";
    case Method::DSCs: return "DSCs";
    }
    return "?";
}

inline Method method_from_string(std::string_view s) {
    for (Method m : all_methods())
        if (s == to_string(m)) return m;
    throw UsageError("unknown method: " + std::string(s));
}

inline constexpr std::string_view kSelectedChainMarker = "[SELECTED-STRATEGY-CHAIN]";
inline constexpr std::string_view kReplyMarker = "[REPLY]";

// ---------------------------------------------------------------------------
// Templates

// Prompt texts live in swappable template sets: five files with {{question}},
// {{description}} and {{chain_i}} placeholders. The builtin sets transcribe
// the five baseline prompt scaffolds; a template directory can override them
// per language or experiment.
struct TemplateSet {
    std::string name;
    std::string version;
    std::map<Method, std::string> texts;

    static TemplateSet builtin(std::string_view name = "figure4-en") {
        TemplateSet t;
        t.name = std::string(name);
        t.version = std::string(name) + "@1";
        if (name == "figure4-en") {
            t.texts[Method::CoT] =
                "[QUESTION]: {{question}}\n"
                "[DESCRIPTION]: {{description}}\n"
                "\n"
                "Think step by step to answer the question.\n";
            t.texts[Method::MHS] =
                "Mental Health Support\n"
                "\n"
                "[QUESTION]: {{question}}\n"
                "[DESCRIPTION]: {{description}}\n"
                "\n"
                "Please answer my question.\n";
            t.texts[Method::SC] =
                "[QUESTION]: {{question}}\n"
                "[DESCRIPTION]: {{description}}\n"
                "\n"
                "[STRATEGY-CHAIN]: {{chain_1}}\n"
                "\n"
                "Please answer my question following the strategy chain above, "
                "using every strategy in order.\n";
            t.texts[Method::DSC] =
                "[QUESTION]: {{question}}\n"
                "[DESCRIPTION]: {{description}}\n"
                "\n"
                "[STRATEGY-CHAIN]: {{chain_1}}\n"
                "\n"
                "Please answer my question following the strategy chain above, "
                "using every strategy in order.\n";
            t.texts[Method::DSCs] =
                "[QUESTION]: {{question}}\n"
                "[DESCRIPTION]: {{description}}\n"
                "\n"
                "[STRATEGY-CHAIN 1]: {{chain_1}}\n"
                "[STRATEGY-CHAIN 2]: {{chain_2}}\n"
                "[STRATEGY-CHAIN 3]: {{chain_3}}\n"
                "\n"
                "First choose the most appropriate chain of strategies for my problem "
                "from the options above, then create a response for me based on the "
                "chosen chain. Answer in the following format:\n"
                "\n"
                "'[SELECTED-STRATEGY-CHAIN]': <the chosen strategy chain>\n"
                "'[REPLY]': <the response you create for the individual seeking help "
                "based on the chosen strategy chain>\n";
        } else if (name == "figure4-zh") {
            t.texts[Method::CoT] =
                "[QUESTION]: {{question}}\n"
                "[DESCRIPTION]: {{description}}\n"
                "\n"
                "请一步一步思考来回答这个问题。\n";
            t.texts[Method::MHS] =
                "心理健康支持\n"
                "\n"
                "[QUESTION]: {{question}}\n"
                "[DESCRIPTION]: {{description}}\n"
                "\n"
                "请回答我的问题。\n";
            t.texts[Method::SC] =
                "[QUESTION]: {{question}}\n"
                "[DESCRIPTION]: {{description}}\n"
                "\n"
                "[STRATEGY-CHAIN]: {{chain_1}}\n"
                "\n"
                "请按照上面的策略链依次使用每个策略来回答我的问题。\n";
            t.texts[Method::DSC] =
                "[QUESTION]: {{question}}\n"
                "[DESCRIPTION]: {{description}}\n"
                "\n"
                "[STRATEGY-CHAIN]: {{chain_1}}\n"
                "\n"
                "请按照上面的策略链依次使用每个策略来回答我的问题。\n";
            t.texts[Method::DSCs] =
                "[QUESTION]: {{question}}\n"
                "[DESCRIPTION]: {{description}}\n"
                "\n"
                "[STRATEGY-CHAIN 1]: {{chain_1}}\n"
                "[STRATEGY-CHAIN 2]: {{chain_2}}\n"
                "[STRATEGY-CHAIN 3]: {{chain_3}}\n"
                "\n"
                "请先从上面的选项中选出最适合我的问题的策略链，再根据所选策略链"
                "为我生成回复。请按照以下格式回答：\n"
                "\n"
                "'[SELECTED-STRATEGY-CHAIN]': <所选的策略链>\n"
                "'[REPLY]': <根据所选策略链为求助者生成的回复>\n";
        } else {
            throw UsageError("unknown builtin template set: " + std::string(name));
        }
        return t;
    }

    // Loads cot.txt/mhs.txt/sc.txt/dsc.txt/dscs.txt from a directory; an
    // optional `version` file (first line) names the set version.
    static TemplateSet load_dir(const std::filesystem::path& dir) {
        TemplateSet t;
        t.name = dir.filename().string();
        const std::filesystem::path version_file = dir / "version";
        if (std::filesystem::exists(version_file))
            t.version = trim(read_file(version_file));
        else
            t.version = t.name + "@dir";
        const std::map<Method, std::string> files = {{Method::CoT, "cot.txt"},
                                                     {Method::MHS, "mhs.txt"},
                                                     {Method::SC, "sc.txt"},
                                                     {Method::DSC, "dsc.txt"},
                                                     {Method::DSCs, "dscs.txt"}};
        for (const auto& [method, file] : files) t.texts[method] = read_file(dir / file);
        return t;
    }

    std::size_t chain_slots(Method method) const {
        const std::string& text = texts.at(method);
        std::size_t n = 0;
        while (text.find("{{chain_" + std::to_string(n + 1) + "}}") != std::string::npos) ++n;
        return n;
    }

    // Every {{...}} in a template must be a known placeholder.
    void validate_placeholders(Method method) const {
        const std::string& text = texts.at(method);
        const std::size_t slots = chain_slots(method);
        std::size_t pos = 0;
        while ((pos = text.find("{{", pos)) != std::string::npos) {
            const std::size_t end = text.find("}}", pos + 2);
            if (end == std::string::npos)
                throw UsageError("template " + name + "/" + to_string(method) +
                                 " has an unterminated placeholder");
            const std::string ph = text.substr(pos + 2, end - pos - 2);
            bool known = ph == "question" || ph == "description";
            for (std::size_t i = 1; !known && i <= slots; ++i)
                known = ph == "chain_" + std::to_string(i);
            if (!known)
                throw UsageError("template " + name + "/" + to_string(method) +
                                 " has unknown placeholder {{" + ph + "}}");
            pos = end + 2;
        }
    }
};

// ---------------------------------------------------------------------------
// Prompt building

struct PromptBundle {
    Method method;
    std::string question_id;
    std::string rendered;
    std::vector<StrategyChain> offered_chains; // empty CoT/MHS; 1 SC/DSC; k DSCs
};

namespace detail {

inline void replace_all(std::string& text, std::string_view placeholder, std::string_view value) {
    std::size_t pos = 0;
    while ((pos = text.find(placeholder, pos)) != std::string::npos) {
        text.replace(pos, placeholder.size(), value);
        pos += value.size();
    }
}

} // namespace detail

inline PromptBundle build_prompt(Method method, const QuestionRecord& question,
                                 const std::vector<StrategyChain>& chains = {},
                                 const TemplateSet& templates = TemplateSet::builtin()) {
    switch (method) {
    case Method::CoT:
    case Method::MHS:
        if (!chains.empty())
            throw UsageError(std::string(to_string(method)) + " takes no strategy chains");
        break;
    case Method::SC:
    case Method::DSC:
        if (chains.size() != 1)
            throw UsageError(std::string(to_string(method)) + " requires exactly 1 strategy chain");
        break;
    case Method::DSCs:
        if (chains.size() < 2)
            throw UsageError("DSCs requires at least 2 strategy chains");
        break;
    }
    for (const auto& c : chains) {
        if (c.empty()) throw UsageError("offered strategy chain is empty");
        if (c.has_adjacent_duplicates())
            throw UsageError("offered strategy chain has adjacent duplicates; merge first");
    }
    for (std::size_t i = 0; i < chains.size(); ++i)
        for (std::size_t j = i + 1; j < chains.size(); ++j)
            if (chains[i] == chains[j]) throw UsageError("offered strategy chains must be distinct");

    auto it = templates.texts.find(method);
    if (it == templates.texts.end())
        throw UsageError(std::string("template set ") + templates.name + " lacks method " +
                         to_string(method));
    const std::size_t slots = templates.chain_slots(method);
    if (slots != chains.size())
        throw UsageError("template " + templates.name + "/" + to_string(method) + " has " +
                         std::to_string(slots) + " chain slot(s), got " +
                         std::to_string(chains.size()) + " chain(s)");
    templates.validate_placeholders(method);

    std::string rendered = it->second;
    detail::replace_all(rendered, "{{question}}", question.title);
    detail::replace_all(rendered, "{{description}}", question.description);
    for (std::size_t i = 0; i < chains.size(); ++i)
        detail::replace_all(rendered, "{{chain_" + std::to_string(i + 1) + "}}",
                            chains[i].bracketed());
    return PromptBundle{method, question.id, std::move(rendered), chains};
}

// ---------------------------------------------------------------------------
// Reply parsing

struct ParsedReply {
    std::optional<StrategyChain> selected_chain;
    std::string reply_text;
    std::string raw;
};

class ReplyParseError : public DataError {
public:
    enum class Kind { MissingMarker, BadChain, ChainNotOffered, EmptyReply };

    ReplyParseError(Kind kind, const std::string& message) : DataError(message), kind_(kind) {}
    Kind kind() const noexcept { return kind_; }

private:
    Kind kind_;
};

namespace detail {

// Tolerance applied after a slot marker: whitespace, one optional colon,
// whitespace. Anything else belongs to the slot body.
inline std::size_t skip_marker_separator(std::string_view text, std::size_t pos) {
    while (pos < text.size() && std::isspace(static_cast<unsigned char>(text[pos]))) ++pos;
    if (pos < text.size() && text[pos] == ':') ++pos;
    while (pos < text.size() && std::isspace(static_cast<unsigned char>(text[pos]))) ++pos;
    return pos;
}

} // namespace detail

// For DSCs: extracts the chain after [SELECTED-STRATEGY-CHAIN], validates it
// against the offered chains and takes everything after [REPLY] as the reply
// body. Markers match case-insensitively with an optional colon; anything
// looser is a typed error, never a silent misparse. Other methods pass the
// raw text through.
inline ParsedReply parse_reply(Method method, const PromptBundle& bundle, const std::string& raw) {
    ParsedReply parsed;
    parsed.raw = raw;
    if (method != Method::DSCs) {
        if (trim(raw).empty())
            throw ReplyParseError(ReplyParseError::Kind::EmptyReply, "reply body is empty");
        parsed.reply_text = raw;
        return parsed;
    }

    const std::size_t sel = ifind(raw, kSelectedChainMarker);
    if (sel == std::string::npos)
        throw ReplyParseError(ReplyParseError::Kind::MissingMarker,
                              "reply lacks " + std::string(kSelectedChainMarker) + " marker");
    const std::size_t rep = ifind(raw, kReplyMarker, sel + kSelectedChainMarker.size());
    if (rep == std::string::npos)
        throw ReplyParseError(ReplyParseError::Kind::MissingMarker,
                              "reply lacks " + std::string(kReplyMarker) + " marker");

    const std::size_t chain_begin =
        detail::skip_marker_separator(raw, sel + kSelectedChainMarker.size());
    const std::string chain_text = trim(std::string_view(raw).substr(chain_begin, rep - chain_begin));
    StrategyChain selected;
    try {
        selected = StrategyChain::parse_bracketed(chain_text, true);
    } catch (const DataError& e) {
        throw ReplyParseError(ReplyParseError::Kind::BadChain,
                              std::string("unparseable selected chain: ") + e.what());
    }
    bool offered = false;
    for (const auto& c : bundle.offered_chains)
        if (c == selected) offered = true;
    if (!offered)
        throw ReplyParseError(ReplyParseError::Kind::ChainNotOffered,
                              "selected chain " + selected.bracketed() + " was not offered");

    const std::size_t body_begin = detail::skip_marker_separator(raw, rep + kReplyMarker.size());
    parsed.reply_text = raw.substr(body_begin);
    if (trim(parsed.reply_text).empty())
        throw ReplyParseError(ReplyParseError::Kind::EmptyReply, "reply body is empty");
    parsed.selected_chain = std::move(selected);
    return parsed;
}

} // namespace dsc
