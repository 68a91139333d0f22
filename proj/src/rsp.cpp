#include "cona/rsp.hpp"

#include <istream>
#include <ostream>
#include <regex>
#include <set>

#include <nlohmann/json.hpp>

#include "cona/error.hpp"
#include "cona/text.hpp"

namespace cona::rsp {

using agents::AgentProfile;
using guidance::QaPair;

std::string_view to_string(AdviserContext context) {
    return context == AdviserContext::PairAndSummary ? "pair_and_summary" : "full_session";
}

AdviserContext adviser_context_from_string(std::string_view name) {
    const auto lower = text::to_lower(text::trim(name));
    if (lower == "pair_and_summary") return AdviserContext::PairAndSummary;
    if (lower == "full_session") return AdviserContext::FullSession;
    throw Error(ErrorCode::InvalidArgument, "unknown adviser context '" + std::string(name) + "'");
}

namespace {

std::string loop_instruction(FeedbackLoopType loop) {
    switch (loop) {
        case FeedbackLoopType::Analogy:
            return "Explain it through an analogy drawn from your own background.";
        case FeedbackLoopType::ProblemSolving:
            return "Give concrete, step-by-step actions that apply to your own field.";
        case FeedbackLoopType::Dilemma:
            return "Move your position towards a neutral, balanced view that weighs the competing perspectives "
                   "before reaching a conclusion.";
    }
    return {};
}

std::string adviser_criteria(FeedbackLoopType loop) {
    switch (loop) {
        case FeedbackLoopType::Analogy:
            return "Judge whether the analogy is clear, accurate and fitted to the answerer's background.";
        case FeedbackLoopType::ProblemSolving:
            return "Judge whether the answer gives concrete, applicable steps that fit the answerer's field.";
        case FeedbackLoopType::Dilemma:
            return "Judge how balanced the position is and steer it towards neutrality: point out missing "
                   "perspectives and one-sided claims.";
    }
    return {};
}

std::string quoted_block(std::string_view body) { return "\"\"\"\n" + std::string(body) + "\n\"\"\"\n"; }

}  // namespace

std::string build_swap_prompt(const QaPair& qa, const RspRound* prior, const AgentProfile& audience,
                              FeedbackLoopType loop_type) {
    std::string out = agents::role_affirmation(audience);
    out += audience.role == agents::AgentRole::Audience ? ", earlier you asked the lecturer: \""
                                                        : ", consider this question raised in the session: \"";
    out += qa.question + "\"\n";
    out += "The lecturer answered:\n" + quoted_block(qa.answer);
    if (!prior) {
        out += "Now the roles are swapped: answer your own question in your own words, the way you would explain "
               "it to someone who shares your background. ";
    } else {
        out += "Your previous answer:\n" + quoted_block(prior->answer_draft);
        out += "An independent adviser suggested:\n" + quoted_block(prior->suggestions);
        out += "Revise your answer in your own words, taking the suggestions into account. ";
    }
    out += loop_instruction(loop_type);
    return out;
}

std::string build_adviser_prompt(const QaPair& qa, std::string_view draft, const AgentProfile& audience,
                                 FeedbackLoopType loop_type, const RspOptions& options) {
    std::string out;
    if (options.adviser_context == AdviserContext::PairAndSummary) {
        if (!text::trim(options.material_summary).empty()) {
            out += "Material summary:\n" + quoted_block(options.material_summary);
        }
    } else if (!text::trim(options.session_text).empty()) {
        out += "Session so far:\n" + quoted_block(options.session_text);
    }
    out += "Question asked by " + text::indefinite_article(audience.block.identity) + " " +
           audience.block.identity + ": \"" + qa.question + "\"\n";
    out += "Their answer, in their own words:\n" + quoted_block(draft);
    out += adviser_criteria(loop_type) + "\n";
    out += "Give numbered suggestions for improving the answer. End your reply with a final line \"" +
           std::string(kApproveVerdict) + "\" if no further revision is needed, or \"" + std::string(kReviseVerdict) +
           "\" otherwise.";
    return out;
}

AdviserVerdict parse_adviser_reply(std::string_view reply) {
    static const std::regex verdict_line(R"(^\s*VERDICT:\s*(APPROVE|REVISE)\s*\.?\s*$)", std::regex::icase);
    std::vector<std::string> lines;
    std::size_t start = 0;
    while (start <= reply.size()) {
        auto end = reply.find('\n', start);
        if (end == std::string_view::npos) end = reply.size();
        lines.emplace_back(reply.substr(start, end - start));
        start = end + 1;
    }
    AdviserVerdict v;
    std::vector<std::string> kept;
    for (const auto& line : lines) {
        std::smatch m;
        if (std::regex_match(line, m, verdict_line)) {
            v.approved = text::to_upper(m[1].str()) == "APPROVE";
        } else {
            kept.push_back(line);
        }
    }
    v.suggestions = std::string(text::trim(text::join(kept, "\n")));
    return v;
}

RspResult run_rsp(const QaPair& qa, FeedbackLoopType loop_type, const AgentProfile& audience,
                  agents::AdviserPool& pool, const RspOptions& options, backend::Backend& backend) {
    if (options.max_rounds < 1) throw Error(ErrorCode::InvalidArgument, "max_rounds must be at least 1");
    RspResult result;
    result.qa_ref = qa.index;
    result.loop_type = loop_type;
    const std::string tag_base = "rsp.q" + std::to_string(qa.index + 1) + ".r";

    for (std::size_t k = 1; k <= options.max_rounds; ++k) {
        RspRound round;
        round.round_index = k;
        round.prompt_text = build_swap_prompt(qa, result.rounds.empty() ? nullptr : &result.rounds.back(), audience,
                                              loop_type);
        {
            agents::Conversation answerer(audience);
            round.answer_draft = answerer.say(round.prompt_text, tag_base + std::to_string(k) + ".draft", backend);
        }

        const AgentProfile adviser = agents::spawn_adviser(pool);
        round.adviser_id = adviser.agent_id;
        agents::Conversation critic(adviser);
        const auto reply = critic.say(build_adviser_prompt(qa, round.answer_draft, audience, loop_type, options),
                                      tag_base + std::to_string(k) + ".advice", backend);
        auto verdict = parse_adviser_reply(reply);
        round.suggestions = std::move(verdict.suggestions);
        round.approved = verdict.approved;

        result.rounds.push_back(std::move(round));
        if (result.rounds.back().approved) break;
    }
    result.final_answer = result.rounds.back().answer_draft;
    return result;
}

guidance::Transcript merge_improved_answers(const guidance::Transcript& transcript,
                                            const std::vector<RspResult>& results) {
    const auto pairs = transcript.qa_pairs();
    std::set<std::size_t> seen;
    for (const auto& r : results) {
        if (!seen.insert(r.qa_ref).second) {
            throw Error(ErrorCode::IndexClash, "two results refer to Q&A pair " + std::to_string(r.qa_ref));
        }
        if (r.qa_ref >= pairs.size()) {
            throw Error(ErrorCode::InvalidArgument, "qa_ref " + std::to_string(r.qa_ref) + " is out of range");
        }
    }
    guidance::Transcript out = transcript;
    for (const auto& r : results) out.turns[pairs[r.qa_ref].answer_turn].text = r.final_answer;
    return out;
}

void write_jsonl(std::ostream& out, const std::string& run_id, const std::vector<RspResult>& results) {
    for (const auto& r : results) {
        nlohmann::ordered_json rounds = nlohmann::ordered_json::array();
        for (const auto& rd : r.rounds) {
            nlohmann::ordered_json j;
            j["round_index"] = rd.round_index;
            j["adviser_id"] = rd.adviser_id;
            j["answer_draft"] = rd.answer_draft;
            j["suggestions"] = rd.suggestions;
            j["score"] = rd.score ? nlohmann::ordered_json(*rd.score) : nlohmann::ordered_json(nullptr);
            j["approved"] = rd.approved;
            j["prompt_text"] = rd.prompt_text;
            rounds.push_back(std::move(j));
        }
        nlohmann::ordered_json rec;
        rec["run_id"] = run_id;
        rec["qa_ref"] = r.qa_ref;
        rec["loop_type"] = to_string(r.loop_type);
        rec["final_answer"] = r.final_answer;
        rec["rounds"] = std::move(rounds);
        out << rec.dump() << '\n';
    }
}

std::vector<RspResult> read_jsonl(std::istream& in, std::string* run_id) {
    std::vector<RspResult> results;
    std::string line;
    while (std::getline(in, line)) {
        if (text::trim(line).empty()) continue;
        try {
            auto j = nlohmann::json::parse(line);
            if (run_id) *run_id = j.at("run_id").get<std::string>();
            RspResult r;
            r.qa_ref = j.at("qa_ref").get<std::size_t>();
            r.loop_type = loop_type_from_string(j.at("loop_type").get<std::string>());
            r.final_answer = j.at("final_answer").get<std::string>();
            for (const auto& rj : j.at("rounds")) {
                RspRound rd;
                rd.round_index = rj.at("round_index").get<std::size_t>();
                rd.adviser_id = rj.at("adviser_id").get<std::string>();
                rd.answer_draft = rj.at("answer_draft").get<std::string>();
                rd.suggestions = rj.at("suggestions").get<std::string>();
                if (!rj.at("score").is_null()) rd.score = rj["score"].get<double>();
                rd.approved = rj.at("approved").get<bool>();
                rd.prompt_text = rj.at("prompt_text").get<std::string>();
                r.rounds.push_back(std::move(rd));
            }
            results.push_back(std::move(r));
        } catch (const nlohmann::json::exception& e) {
            throw Error(ErrorCode::InvalidArgument, std::string("rsp sidecar: ") + e.what());
        }
    }
    return results;
}

}  // namespace cona::rsp
