#pragma once

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "cona/agents.hpp"
#include "cona/backend.hpp"
#include "cona/dikw.hpp"
#include "cona/guidance.hpp"

namespace cona::rsp {

inline constexpr std::size_t kDefaultMaxRounds = 4;
inline constexpr std::string_view kApproveVerdict = "VERDICT: APPROVE";
inline constexpr std::string_view kReviseVerdict = "VERDICT: REVISE";

struct RspRound {
    std::size_t round_index = 1;  // 1-based
    std::string adviser_id;
    std::string answer_draft;
    std::string suggestions;  // adviser reply without the verdict line
    std::optional<double> score;  // filled by eval
    std::string prompt_text;  // the swap prompt that produced answer_draft
    bool approved = false;

    bool operator==(const RspRound&) const = default;
};

struct RspResult {
    std::size_t qa_ref = 0;
    FeedbackLoopType loop_type = FeedbackLoopType::Analogy;
    std::vector<RspRound> rounds;
    std::string final_answer;  // last round's draft

    bool operator==(const RspResult&) const = default;
};

enum class AdviserContext { PairAndSummary, FullSession };

std::string_view to_string(AdviserContext context);
AdviserContext adviser_context_from_string(std::string_view name);

struct RspOptions {
    std::size_t max_rounds = kDefaultMaxRounds;
    AdviserContext adviser_context = AdviserContext::PairAndSummary;
    std::string material_summary;  // shown to advisers with PairAndSummary
    std::string session_text;      // shown to advisers with FullSession
};

// Round 1 asks the answering agent to answer its own question in its own
// words. Later rounds quote the previous draft and the adviser's suggestions
// verbatim. Dilemma prompts ask for movement towards a neutral position.
std::string build_swap_prompt(const guidance::QaPair& qa, const RspRound* prior,
                              const agents::AgentProfile& audience, FeedbackLoopType loop_type);

std::string build_adviser_prompt(const guidance::QaPair& qa, std::string_view draft,
                                 const agents::AgentProfile& audience, FeedbackLoopType loop_type,
                                 const RspOptions& options);

struct AdviserVerdict {
    std::string suggestions;
    bool approved = false;
};

AdviserVerdict parse_adviser_reply(std::string_view reply);

// Every round spawns a fresh adviser from `pool`; PoolExhausted surfaces at
// the round that cannot get one.
RspResult run_rsp(const guidance::QaPair& qa, FeedbackLoopType loop_type, const agents::AgentProfile& audience,
                  agents::AdviserPool& pool, const RspOptions& options, backend::Backend& backend);

// Copy of `transcript` whose referenced answer turns carry final_answer.
guidance::Transcript merge_improved_answers(const guidance::Transcript& transcript,
                                            const std::vector<RspResult>& results);

void write_jsonl(std::ostream& out, const std::string& run_id, const std::vector<RspResult>& results);
std::vector<RspResult> read_jsonl(std::istream& in, std::string* run_id = nullptr);

}  // namespace cona::rsp
