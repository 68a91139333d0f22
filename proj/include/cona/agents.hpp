#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <mutex>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "cona/backend.hpp"

namespace cona::agents {

enum class AgentRole { Lecturer, Audience, Adviser };

std::string_view to_string(AgentRole role);

// Identity blocking caps the overall knowledge level; keyword and domain
// blocking remove specific concepts. Keywords are stored lower-cased and
// de-duplicated in first-seen order.
struct KnowledgeBlock {
    std::string identity;
    std::vector<std::string> blocked_keywords;
    std::vector<std::string> blocked_domains;

    static KnowledgeBlock make(std::string identity, const std::vector<std::string>& keywords = {},
                               const std::vector<std::string>& domains = {});

    bool empty_block() const { return blocked_keywords.empty() && blocked_domains.empty(); }
    void validate() const;

    bool operator==(const KnowledgeBlock&) const = default;
};

struct AgentProfile {
    std::string agent_id;
    AgentRole role = AgentRole::Audience;
    KnowledgeBlock block;
    std::string persona;

    void validate() const;

    bool operator==(const AgentProfile&) const = default;
};

AgentProfile make_lecturer(std::string_view topic, std::string agent_id = "lecturer");

// Expert-grade stand-in used where no external audience takes part.
AgentProfile make_expert(std::string_view topic, std::string agent_id);

AgentProfile audience_from_json(const nlohmann::json& doc, std::string agent_id = "audience");
nlohmann::json audience_to_json(const AgentProfile& profile);
AgentProfile load_audience_profile(const std::filesystem::path& path);

// Adds keywords to an audience profile's block, keeping normalization.
AgentProfile with_blocked_keywords(AgentProfile profile, const std::vector<std::string>& keywords);

// "As a primary school student", "As an AI expert".
std::string role_affirmation(const AgentProfile& profile);

inline constexpr std::string_view kKeywordClausePrefix = "- Blocked keyword ";
inline constexpr std::string_view kDomainClausePrefix = "- Blocked domain ";

// Deterministic. Blocked keywords appear only on the clause lines that start
// with kKeywordClausePrefix / kDomainClausePrefix.
std::string build_system_prompt(const AgentProfile& profile);

// An agent plus its private message history (system prompt first).
class Conversation {
public:
    explicit Conversation(AgentProfile profile);

    const AgentProfile& profile() const noexcept { return profile_; }
    const std::vector<backend::ChatMessage>& history() const noexcept { return history_; }

    // Number of user/assistant exchanges so far.
    std::size_t exchanges() const noexcept { return (history_.size() - 1) / 2; }

    // Appends `message` as a user turn, asks the backend and records the reply.
    std::string say(std::string message, std::string tag, backend::Backend& backend,
                    double temperature = backend::kGenerationTemperature);

private:
    AgentProfile profile_;
    std::vector<backend::ChatMessage> history_;
};

inline const std::vector<std::string> kDefaultEncouragementPhrases{
    "try your best",
    "act like a teacher and teach your friend about",
    "use all your imagination to",
};

inline constexpr std::size_t kDefaultTestKeywords = 5;

struct DefinitionItem {
    std::string definition;
    std::string answer_keyword;

    bool operator==(const DefinitionItem&) const = default;
};

struct KbTestPlan {
    std::vector<std::string> group_a;  // beyond the agent's level
    std::vector<std::string> group_b;  // easier
    std::vector<std::string> step1_items;
    std::vector<DefinitionItem> step2_items;
    std::vector<std::string> step3_prompts;

    std::size_t n() const noexcept { return group_a.size(); }
    void validate(const std::vector<std::string>& phrases = kDefaultEncouragementPhrases) const;

    bool operator==(const KbTestPlan&) const = default;
};

nlohmann::json to_json(const KbTestPlan& plan);

KbTestPlan make_kb_test(const KnowledgeBlock& block, std::size_t n, backend::Backend& backend,
                        std::uint64_t rng_seed,
                        const std::vector<std::string>& phrases = kDefaultEncouragementPhrases);

struct KbResponses {
    std::vector<std::string> step1;  // aligned with step1_items
    std::vector<std::string> step2;  // aligned with step2_items
    std::vector<std::string> step3;  // aligned with step3_prompts
};

std::string step1_prompt(std::string_view keyword);
std::string step2_prompt(const DefinitionItem& item, const std::vector<std::string>& options);

// Puts every test item to the blocked agent, one fresh conversation per item.
KbResponses administer_kb_test(const KbTestPlan& plan, const AgentProfile& subject,
                               backend::Backend& backend);

enum class KbVerdict { Blocked, Leaked };

std::string_view to_string(KbVerdict verdict);

struct KbItemVerdict {
    int step = 1;
    std::string keyword;
    KbVerdict verdict = KbVerdict::Blocked;

    bool operator==(const KbItemVerdict&) const = default;
};

struct KbReport {
    std::array<double, 3> per_step_block_rate{};
    std::vector<KbItemVerdict> verdicts;  // step 1, then 2, then 3; Group A only

    bool operator==(const KbReport&) const = default;
};

nlohmann::json to_json(const KbReport& report);

bool is_refusal(std::string_view response);
bool claims_recognition(std::string_view response);
bool matches_definition(std::string_view response, std::string_view answer_keyword);

KbReport score_kb_test(const KbTestPlan& plan, const KbResponses& responses, backend::Backend& judge);

// Hands out adviser identities, each exactly once. take-one is linearizable.
class AdviserPool {
public:
    AdviserPool(std::size_t capacity, std::string topic, std::string id_prefix = "adviser");

    AgentProfile spawn();

    std::size_t capacity() const noexcept { return capacity_; }
    std::size_t used() const;

private:
    std::size_t capacity_;
    std::string topic_;
    std::string id_prefix_;
    mutable std::mutex mutex_;
    std::size_t next_ = 0;
};

inline AgentProfile spawn_adviser(AdviserPool& pool) { return pool.spawn(); }

}  // namespace cona::agents
