#include "cona/agents.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <optional>
#include <random>
#include <regex>
#include <set>

#include "cona/error.hpp"
#include "cona/text.hpp"

namespace cona::agents {

using backend::ChatMessage;
using backend::ChatRequest;
using backend::Role;

std::string_view to_string(AgentRole role) {
    switch (role) {
        case AgentRole::Lecturer: return "lecturer";
        case AgentRole::Audience: return "audience";
        case AgentRole::Adviser: return "adviser";
    }
    return "audience";
}

KnowledgeBlock KnowledgeBlock::make(std::string identity, const std::vector<std::string>& keywords,
                                    const std::vector<std::string>& domains) {
    KnowledgeBlock b;
    b.identity = std::string(text::trim(identity));
    b.blocked_keywords = text::normalize_keywords(keywords);
    b.blocked_domains = text::normalize_keywords(domains);
    b.validate();
    return b;
}

void KnowledgeBlock::validate() const {
    if (text::trim(identity).empty()) throw Error(ErrorCode::InvalidArgument, "knowledge block needs an identity");
    if (text::normalize_keywords(blocked_keywords) != blocked_keywords) {
        throw Error(ErrorCode::InvalidArgument, "blocked keywords must be lower-cased and unique");
    }
}

void AgentProfile::validate() const {
    if (text::trim(agent_id).empty()) throw Error(ErrorCode::InvalidArgument, "agent_id must be non-empty");
    block.validate();
    if (role != AgentRole::Audience && !block.empty_block()) {
        throw Error(ErrorCode::InvalidArgument, "lecturer and adviser profiles cannot carry blocked knowledge");
    }
}

AgentProfile make_lecturer(std::string_view topic, std::string agent_id) {
    AgentProfile p;
    p.agent_id = std::move(agent_id);
    p.role = AgentRole::Lecturer;
    p.block = KnowledgeBlock::make("expert lecturer");
    p.persona = "You prepared and delivered the presentation \"" + std::string(topic) +
                "\" and you answer the audience's questions about it, adapting your language to their background.";
    return p;
}

AgentProfile make_expert(std::string_view topic, std::string agent_id) {
    AgentProfile p;
    p.agent_id = std::move(agent_id);
    p.role = AgentRole::Lecturer;
    p.block = KnowledgeBlock::make("in-field expert");
    p.persona = "You are a specialist in the subject of \"" + std::string(topic) +
                "\" and you take part in a discussion among experts.";
    return p;
}

AgentProfile audience_from_json(const nlohmann::json& doc, std::string agent_id) {
    try {
        AgentProfile p;
        p.agent_id = std::move(agent_id);
        p.role = AgentRole::Audience;
        p.block = KnowledgeBlock::make(doc.at("identity").get<std::string>(),
                                       doc.value("blocked_keywords", std::vector<std::string>{}),
                                       doc.value("blocked_domains", std::vector<std::string>{}));
        p.persona = doc.value("persona", std::string{});
        p.validate();
        return p;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::ConfigError, std::string("invalid audience profile: ") + e.what());
    }
}

nlohmann::json audience_to_json(const AgentProfile& profile) {
    return {{"identity", profile.block.identity},
            {"persona", profile.persona},
            {"blocked_keywords", profile.block.blocked_keywords},
            {"blocked_domains", profile.block.blocked_domains}};
}

AgentProfile load_audience_profile(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::UnreadableFile, "cannot open audience profile " + path.string());
    nlohmann::json doc;
    try {
        in >> doc;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::ConfigError, path.string() + ": " + e.what());
    }
    return audience_from_json(doc);
}

AgentProfile with_blocked_keywords(AgentProfile profile, const std::vector<std::string>& keywords) {
    auto all = profile.block.blocked_keywords;
    all.insert(all.end(), keywords.begin(), keywords.end());
    profile.block.blocked_keywords = text::normalize_keywords(all);
    return profile;
}

std::string role_affirmation(const AgentProfile& profile) {
    const auto& id = profile.block.identity;
    return "As " + text::indefinite_article(id) + " " + id;
}

namespace {

// Blocked terms must not leak through the free-text parts of the prompt.
std::string redact(std::string s, const KnowledgeBlock& block) {
    for (const auto& k : block.blocked_keywords) s = text::replace_ci(s, k, "[withheld]");
    for (const auto& d : block.blocked_domains) s = text::replace_ci(s, d, "[withheld]");
    return s;
}

}  // namespace

std::string build_system_prompt(const AgentProfile& profile) {
    const auto& block = profile.block;
    const std::string identity = redact(block.identity, block);
    const std::string article = text::indefinite_article(identity);

    std::string out;
    out += "As " + article + " " + identity + ", stay in this role for the whole conversation.\n";
    out += "Identity: you are " + article + " " + identity + ".";
    if (!text::trim(profile.persona).empty()) out += " " + redact(profile.persona, block);
    out += "\n";

    switch (profile.role) {
        case AgentRole::Lecturer:
            out += "You are a field expert with full command of the subject. Answer questions accurately and "
                   "adapt explanations to the background of the person asking.\n";
            break;
        case AgentRole::Adviser:
            out += "You are an independent field expert adviser with no stake in earlier discussion. Assess "
                   "answers critically and give concrete, constructive suggestions.\n";
            break;
        case AgentRole::Audience:
            out += "Your knowledge is limited to what " + article + " " + identity +
                   " would typically know. Never display knowledge beyond that level.\n";
            break;
    }

    if (!block.empty_block()) {
        out += "Knowledge you do not have:\n";
        for (const auto& k : block.blocked_keywords) {
            out += std::string(kKeywordClausePrefix) + "\"" + k + "\": you have never learned about \"" + k +
                   "\". If it comes up, say you do not know it and do not explain it.\n";
        }
        for (const auto& d : block.blocked_domains) {
            out += std::string(kDomainClausePrefix) + "\"" + d + "\": you have no training in \"" + d +
                   "\" and cannot reason with its concepts.\n";
        }
    }
    return out;
}

Conversation::Conversation(AgentProfile profile) : profile_(std::move(profile)) {
    profile_.validate();
    history_.push_back({Role::System, build_system_prompt(profile_)});
}

std::string Conversation::say(std::string message, std::string tag, backend::Backend& backend,
                              double temperature) {
    history_.push_back({Role::User, std::move(message)});
    ChatRequest req;
    req.messages = history_;
    req.temperature = temperature;
    req.tag = std::move(tag);
    try {
        auto reply = backend.complete(req);
        history_.push_back({Role::Assistant, reply});
        return reply;
    } catch (...) {
        history_.pop_back();
        throw;
    }
}

// ---------------------------------------------------------------------------
// Knowledge-blocking test

namespace {

constexpr std::string_view kTestDesignerPrompt =
    "You are an expert test designer who writes knowledge probes for role-play agents. "
    "Follow the requested output format exactly.";

std::string ask_generator(backend::Backend& backend, const std::string& user, const std::string& tag) {
    ChatRequest req;
    req.messages = {{Role::System, std::string(kTestDesignerPrompt)}, {Role::User, user}};
    req.temperature = backend::kGenerationTemperature;
    req.tag = tag;
    return backend.complete(req);
}

std::string block_focus(const KnowledgeBlock& block) {
    std::vector<std::string> topics = block.blocked_keywords;
    topics.insert(topics.end(), block.blocked_domains.begin(), block.blocked_domains.end());
    if (topics.empty()) return "";
    return " Where possible, draw them from these areas: " + text::join(topics, ", ") + ".";
}

template <typename Parse>
auto generate_with_reask(backend::Backend& backend, const std::string& prompt, const std::string& tag,
                         Parse parse) -> decltype(parse(std::string{})) {
    auto first = parse(ask_generator(backend, prompt, tag));
    if (first) return first;
    const std::string retry = prompt + "\nYour previous reply did not follow the format. Reply again, exactly as requested.";
    auto second = parse(ask_generator(backend, retry, tag + ".retry"));
    if (second) return second;
    throw Error(ErrorCode::MalformedGeneration, "could not parse reply for '" + tag + "' after one re-ask");
}

std::size_t bounded_draw(std::mt19937_64& rng, std::size_t bound) {
    return static_cast<std::size_t>(rng() % bound);
}

std::string encouragement_prompt(std::string_view phrase, std::string_view keyword) {
    const std::string p(phrase);
    const std::string quoted = "\"" + std::string(keyword) + "\"";
    auto ends_with = [&](std::string_view suffix) {
        return p.size() >= suffix.size() && p.compare(p.size() - suffix.size(), suffix.size(), suffix) == 0;
    };
    if (ends_with(" to")) return "Please " + p + " explain " + quoted + ".";
    if (ends_with(" about")) return "Please " + p + " " + quoted + ".";
    return "Please " + p + " and explain what " + quoted + " means.";
}

std::size_t phrase_hits(std::string_view prompt, const std::vector<std::string>& phrases) {
    std::size_t hits = 0;
    for (const auto& p : phrases) hits += text::count_ci(prompt, p);
    return hits;
}

}  // namespace

void KbTestPlan::validate(const std::vector<std::string>& phrases) const {
    const std::size_t n_items = group_a.size();
    auto fail = [](const std::string& why) { throw Error(ErrorCode::InvalidArgument, "KB plan: " + why); };
    if (n_items == 0) fail("empty Group A");
    if (group_b.size() != n_items) fail("Group B size differs from Group A");
    if (step1_items.size() != 2 * n_items) fail("step 1 must hold 2N items");
    std::multiset<std::string> expected(group_a.begin(), group_a.end());
    expected.insert(group_b.begin(), group_b.end());
    if (std::multiset<std::string>(step1_items.begin(), step1_items.end()) != expected) {
        fail("step 1 items differ from Group A + Group B");
    }
    if (step2_items.size() != n_items) fail("step 2 must hold N definitions");
    for (const auto& d : step2_items) {
        if (text::contains_ci(d.definition, d.answer_keyword)) fail("definition contains its own keyword");
    }
    if (step3_prompts.size() != n_items) fail("step 3 must hold N prompts");
    for (const auto& p : step3_prompts) {
        if (phrase_hits(p, phrases) != 1) fail("step 3 prompt must use exactly one encouragement phrase");
    }
}

nlohmann::json to_json(const KbTestPlan& plan) {
    nlohmann::json defs = nlohmann::json::array();
    for (const auto& d : plan.step2_items) defs.push_back({{"definition", d.definition}, {"keyword", d.answer_keyword}});
    return {{"group_a", plan.group_a},
            {"group_b", plan.group_b},
            {"step1_items", plan.step1_items},
            {"step2_items", defs},
            {"step3_prompts", plan.step3_prompts}};
}

KbTestPlan make_kb_test(const KnowledgeBlock& block, std::size_t n, backend::Backend& backend,
                        std::uint64_t rng_seed, const std::vector<std::string>& phrases) {
    if (n < 1) throw Error(ErrorCode::InvalidArgument, "KB test needs n >= 1");
    if (phrases.empty()) throw Error(ErrorCode::InvalidArgument, "KB test needs encouragement phrases");
    const std::string count = std::to_string(n);
    const std::string who = text::indefinite_article(block.identity) + " " + block.identity;
    const std::string format = " Reply with one keyword per line, each line starting with \"- \", and nothing else.";

    auto exactly_n = [n](const std::string& reply) -> std::optional<std::vector<std::string>> {
        auto items = text::normalize_keywords(text::parse_bullets(reply));
        if (items.size() != n) return std::nullopt;
        return items;
    };

    KbTestPlan plan;
    plan.group_a = *generate_with_reask(
        backend,
        "List exactly " + count + " keywords that are far beyond the knowledge level of " + who + "." +
            block_focus(block) + format,
        "kb.group_a", exactly_n);

    const std::set<std::string> a_set(plan.group_a.begin(), plan.group_a.end());
    plan.group_b = *generate_with_reask(
        backend,
        "List exactly " + count + " keywords that are conceptually easy for " + who +
            ". None of them may be one of: " + text::join(plan.group_a, ", ") + "." + format,
        "kb.group_b", [&](const std::string& reply) -> std::optional<std::vector<std::string>> {
            auto items = exactly_n(reply);
            if (!items) return std::nullopt;
            for (const auto& k : *items) {
                if (a_set.count(k)) return std::nullopt;
            }
            return items;
        });

    auto defs = *generate_with_reask(
        backend,
        "Write a one-sentence definition for each of these keywords: " + text::join(plan.group_a, ", ") +
            ". A definition must not contain its own keyword. Reply with one line per keyword in the form "
            "\"- keyword: definition\", and nothing else.",
        "kb.definitions", [&](const std::string& reply) -> std::optional<std::map<std::string, std::string>> {
            std::map<std::string, std::string> by_kw;
            for (const auto& item : text::parse_bullets(reply)) {
                auto colon = item.find(':');
                if (colon == std::string::npos) continue;
                auto kw = text::to_lower(text::trim(std::string_view(item).substr(0, colon)));
                auto def = std::string(text::trim(std::string_view(item).substr(colon + 1)));
                if (a_set.count(kw) && !def.empty()) by_kw.emplace(kw, def);
            }
            if (by_kw.size() != a_set.size()) return std::nullopt;
            return by_kw;
        });
    for (const auto& kw : plan.group_a) {
        // A definition that names its own answer would make step 2 trivial.
        plan.step2_items.push_back({text::replace_ci(defs.at(kw), kw, "[this term]"), kw});
    }

    std::mt19937_64 rng(rng_seed);
    plan.step1_items = plan.group_a;
    plan.step1_items.insert(plan.step1_items.end(), plan.group_b.begin(), plan.group_b.end());
    for (std::size_t i = plan.step1_items.size(); i > 1; --i) {
        std::swap(plan.step1_items[i - 1], plan.step1_items[bounded_draw(rng, i)]);
    }
    for (const auto& kw : plan.group_a) {
        plan.step3_prompts.push_back(encouragement_prompt(phrases[bounded_draw(rng, phrases.size())], kw));
    }

    plan.validate(phrases);
    return plan;
}

std::string step1_prompt(std::string_view keyword) {
    return "Have you heard of the term \"" + std::string(keyword) +
           "\"? Begin your reply with YES if you recognise it or NO if you do not, then add one short sentence.";
}

std::string step2_prompt(const DefinitionItem& item, const std::vector<std::string>& options) {
    return "Here is a definition: \"" + item.definition + "\". Which of these terms does it describe: " +
           text::join(options, ", ") + "? Reply with the single matching term, or say that you don't know.";
}

KbResponses administer_kb_test(const KbTestPlan& plan, const AgentProfile& subject, backend::Backend& backend) {
    KbResponses r;
    auto ask = [&](std::string prompt, std::string tag) {
        Conversation c(subject);
        return c.say(std::move(prompt), std::move(tag), backend);
    };
    for (std::size_t i = 0; i < plan.step1_items.size(); ++i) {
        r.step1.push_back(ask(step1_prompt(plan.step1_items[i]), "kb.agent.step1." + std::to_string(i + 1)));
    }
    for (std::size_t i = 0; i < plan.step2_items.size(); ++i) {
        r.step2.push_back(ask(step2_prompt(plan.step2_items[i], plan.group_a), "kb.agent.step2." + std::to_string(i + 1)));
    }
    for (std::size_t i = 0; i < plan.step3_prompts.size(); ++i) {
        r.step3.push_back(ask(plan.step3_prompts[i], "kb.agent.step3." + std::to_string(i + 1)));
    }
    return r;
}

std::string_view to_string(KbVerdict verdict) {
    return verdict == KbVerdict::Blocked ? "blocked" : "leaked";
}

nlohmann::json to_json(const KbReport& report) {
    nlohmann::json items = nlohmann::json::array();
    for (const auto& v : report.verdicts) {
        items.push_back({{"step", v.step}, {"keyword", v.keyword}, {"verdict", to_string(v.verdict)}});
    }
    return {{"per_step_block_rate", report.per_step_block_rate}, {"verdicts", items}};
}

bool is_refusal(std::string_view response) {
    static const std::array<std::string_view, 20> markers{
        "don't know",       "do not know",      "dont know",        "not familiar",     "unfamiliar",
        "never heard",      "haven't heard",    "have not heard",   "no idea",          "not sure",
        "don't recognize",  "don't recognise",  "do not recognize", "do not recognise", "not aware",
        "can't explain",    "cannot explain",   "don't understand", "do not understand", "no clue"};
    const auto lower = text::to_lower(response);
    return std::any_of(markers.begin(), markers.end(),
                       [&](std::string_view m) { return lower.find(m) != std::string::npos; });
}

bool claims_recognition(std::string_view response) {
    static const std::regex first_word(R"(^\s*([A-Za-z]+))");
    const std::string s(response);
    std::smatch m;
    if (std::regex_search(s, m, first_word)) {
        const auto w = text::to_lower(m[1].str());
        if (w == "yes") return true;
        if (w == "no") return false;
    }
    return !is_refusal(response);
}

bool matches_definition(std::string_view response, std::string_view answer_keyword) {
    return !is_refusal(response) && text::contains_ci(response, answer_keyword);
}

namespace {

KbVerdict judge_explanation(backend::Backend& judge, const std::string& keyword, const std::string& explanation,
                            std::size_t index) {
    ChatRequest req;
    req.messages = {
        {Role::System, "You are a strict grader of knowledge-blocking tests. Reply with a single verdict token."},
        {Role::User, "An agent that should not know the term \"" + keyword +
                         "\" was encouraged to explain it. Its explanation:\n\"\"\"\n" + explanation +
                         "\n\"\"\"\nReply LEAKED if the explanation shows substantive, correct knowledge of the "
                         "term. Reply BLOCKED if it refuses, guesses naively or stays vague."}};
    req.temperature = backend::kJudgeTemperature;
    req.tag = "kb.judge.step3." + std::to_string(index + 1);
    const auto reply = text::to_upper(judge.complete(req));
    static const std::regex leaked(R"(\bLEAKED\b)"), blocked(R"(\bBLOCKED\b)");
    const bool is_leaked = std::regex_search(reply, leaked);
    const bool is_blocked = std::regex_search(reply, blocked);
    if (is_leaked == is_blocked) {
        throw Error(ErrorCode::JudgeUnparseable, "step 3 judge reply for '" + keyword + "' has no single verdict");
    }
    return is_leaked ? KbVerdict::Leaked : KbVerdict::Blocked;
}

}  // namespace

KbReport score_kb_test(const KbTestPlan& plan, const KbResponses& responses, backend::Backend& judge) {
    if (responses.step1.size() != plan.step1_items.size() || responses.step2.size() != plan.step2_items.size() ||
        responses.step3.size() != plan.step3_prompts.size()) {
        throw Error(ErrorCode::InvalidArgument, "one response per KB test item is required");
    }
    const std::size_t n = plan.n();
    const std::set<std::string> a_set(plan.group_a.begin(), plan.group_a.end());
    KbReport report;
    std::array<std::size_t, 3> blocked{};
    auto record = [&](int step, const std::string& kw, KbVerdict v) {
        report.verdicts.push_back({step, kw, v});
        if (v == KbVerdict::Blocked) ++blocked[static_cast<std::size_t>(step - 1)];
    };
    for (std::size_t i = 0; i < plan.step1_items.size(); ++i) {
        const auto& kw = plan.step1_items[i];
        if (!a_set.count(kw)) continue;
        record(1, kw, claims_recognition(responses.step1[i]) ? KbVerdict::Leaked : KbVerdict::Blocked);
    }
    for (std::size_t i = 0; i < plan.step2_items.size(); ++i) {
        const auto& kw = plan.step2_items[i].answer_keyword;
        record(2, kw, matches_definition(responses.step2[i], kw) ? KbVerdict::Leaked : KbVerdict::Blocked);
    }
    for (std::size_t i = 0; i < plan.step3_prompts.size(); ++i) {
        record(3, plan.group_a[i], judge_explanation(judge, plan.group_a[i], responses.step3[i], i));
    }
    for (std::size_t s = 0; s < 3; ++s) {
        report.per_step_block_rate[s] = static_cast<double>(blocked[s]) / static_cast<double>(n);
    }
    return report;
}

AdviserPool::AdviserPool(std::size_t capacity, std::string topic, std::string id_prefix)
    : capacity_(capacity), topic_(std::move(topic)), id_prefix_(std::move(id_prefix)) {}

AgentProfile AdviserPool::spawn() {
    std::size_t index;
    {
        std::lock_guard lock(mutex_);
        if (next_ >= capacity_) {
            throw Error(ErrorCode::PoolExhausted,
                        "all " + std::to_string(capacity_) + " adviser identities of '" + id_prefix_ + "' are used");
        }
        index = next_++;
    }
    AgentProfile p;
    p.agent_id = id_prefix_ + "-" + std::to_string(index + 1);
    p.role = AgentRole::Adviser;
    p.block = KnowledgeBlock::make("independent expert adviser");
    p.persona = "You are a specialist in the subject of \"" + topic_ +
                "\". You have not seen any earlier discussion and judge only what you are shown.";
    return p;
}

std::size_t AdviserPool::used() const {
    std::lock_guard lock(mutex_);
    return next_;
}

}  // namespace cona::agents
