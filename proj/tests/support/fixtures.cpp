#include "fixtures.hpp"

#include <fstream>
#include <regex>
#include <stdexcept>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

namespace cona::fixtures {

using backend::ChatRequest;
using backend::Role;

namespace {

std::string bullets(const std::vector<std::string>& items) {
    std::string out;
    for (const auto& i : items) out += "- " + i + "\n";
    return out;
}

std::size_t number_after(const std::string& tag, const std::string& marker) {
    const std::regex re(marker + R"((\d+))");
    std::smatch m;
    if (!std::regex_search(tag, m, re)) throw std::runtime_error("fixture: no " + marker + " index in " + tag);
    return std::stoul(m[1].str());
}

bool starts_with(const std::string& s, std::string_view prefix) { return s.rfind(prefix, 0) == 0; }

bool ends_with(const std::string& s, std::string_view suffix) {
    return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

const std::string& last_user(const ChatRequest& req) {
    for (auto it = req.messages.rbegin(); it != req.messages.rend(); ++it) {
        if (it->role == Role::User) return it->content;
    }
    throw std::runtime_error("fixture: request has no user message");
}

std::string kb_reply(const FixtureOptions& o, const ChatRequest& req) {
    const auto& tag = req.tag;
    if (starts_with(tag, "kb.group_a")) return bullets(o.group_a);
    if (starts_with(tag, "kb.group_b")) return bullets(o.group_b);
    if (starts_with(tag, "kb.definitions")) {
        std::string out;
        for (std::size_t i = 0; i < o.group_a.size(); ++i) {
            out += fmt::format("- {}: Definition {} describes an advanced idea studied at university.\n", o.group_a[i],
                               i + 1);
        }
        return out;
    }
    const bool leaky = o.kb == KbBehaviour::Leaky;
    if (starts_with(tag, "kb.agent.step1.")) {
        return leaky ? "YES, I know that term well." : "NO, I don't know that term.";
    }
    if (starts_with(tag, "kb.agent.step2.")) {
        if (!leaky) return "I don't know which term that is.";
        const auto i = number_after(last_user(req), "Definition ");
        return o.group_a.at(i - 1);
    }
    if (starts_with(tag, "kb.agent.step3.")) {
        if (leaky) return "It is a precise mathematical construction; here is how it works in detail.";
        return "I'm not sure, maybe it is something to do with numbers?";
    }
    if (starts_with(tag, "kb.judge.step3.")) {
        const auto i = number_after(tag, "step3\\.");
        if (leaky) return "LEAKED";
        if (o.kb == KbBehaviour::Mixed && i == o.group_a.size()) return "LEAKED";
        return "BLOCKED";
    }
    throw std::runtime_error("fixture: unexpected tag " + tag);
}

}  // namespace

std::vector<std::string> improved_answers_in(const ChatRequest& request) {
    static constexpr std::string_view kMarker = "Improved answer:\n";
    std::vector<std::string> out;
    for (const auto& m : request.messages) {
        if (m.role != Role::User) continue;
        const auto pos = m.content.find(kMarker);
        if (pos != std::string::npos) out.push_back(m.content.substr(pos + kMarker.size()));
    }
    return out;
}

backend::CallbackBackend::Handler make_responder(FixtureOptions o) {
    return [o = std::move(o)](const ChatRequest& req) -> std::string {
        const auto& tag = req.tag;
        if (starts_with(tag, "materials.summary")) {
            return "The talk explains how models learn from data by repeatedly adjusting their parameters, why the "
                   "step size matters, and how to keep a model from memorising its training set.";
        }
        if (starts_with(tag, "materials.keywords")) return bullets(o.material_keywords);
        if (starts_with(tag, "materials.notes")) {
            std::string notes = "Lecture notes\n\nThese notes retell the talk for the audience.\n";
            for (const auto& a : improved_answers_in(req)) notes += "\n" + a + "\n";
            return notes;
        }
        if (tag == "guidance.intro.lecturer") {
            return "Hello, I am the lecturer. The talk covered how machines learn by adjusting their settings step "
                   "by step.";
        }
        if (tag == "guidance.intro.audience") {
            return "Hi, I am a curious student. I would like to understand how a computer can learn at all.";
        }
        if (starts_with(tag, "guidance.q")) {
            const auto k = number_after(tag, "q");
            if (ends_with(tag, ".question")) return fmt::format("Question {}: how does this idea work in practice?", k);
            if (ends_with(tag, ".draft")) return fmt::format("First explanation for question {} using a ball rolling downhill.", k);
            if (ends_with(tag, ".feedback")) {
                return o.too_complex(k) ? "Yes, the part about slopes was too complex for me."
                                        : "No, that was clear, thank you.";
            }
            if (ends_with(tag, ".complexity")) return o.too_complex(k) ? "TOO_COMPLEX" : "CLEAR";
            if (ends_with(tag, ".answer")) {
                return fmt::format("Answer to question {}: picture a ball rolling down a hill until it settles at "
                                   "the lowest point it can find.",
                                   k);
            }
        }
        if (starts_with(tag, "rsp.q")) {
            const auto q = number_after(tag, "q");
            const auto r = number_after(tag, "\\.r");
            if (ends_with(tag, ".draft")) {
                return fmt::format("Own-words answer {}.{}: the model keeps taking small steps downhill until "
                                   "it stops improving.",
                                   q, r);
            }
            if (ends_with(tag, ".advice")) {
                const bool approve = o.approve_at_round != 0 && r >= o.approve_at_round;
                return fmt::format("Suggestion {}.{}: mention why the step size must be neither too big nor too "
                                   "small.\n{}",
                                   q, r, approve ? "VERDICT: APPROVE" : "VERDICT: REVISE");
            }
        }
        if (starts_with(tag, "eval.dikw.q")) return o.dikw_labels(number_after(tag, "q"));
        if (starts_with(tag, "eval.loop.q")) {
            const auto q = number_after(tag, "q");
            const auto r = number_after(tag, "\\.r");
            const auto t = number_after(tag, "\\.t");
            return fmt::format("{}", o.loop_score(q, r, t));
        }
        if (starts_with(tag, "kb.")) return kb_reply(o, req);
        throw std::runtime_error("fixture: unexpected tag " + tag);
    };
}

backend::CallbackBackend::Handler recording(backend::CallbackBackend::Handler inner,
                                            std::vector<backend::ScriptEntry>& sink) {
    return [inner = std::move(inner), &sink](const ChatRequest& req) {
        auto reply = inner(req);
        sink.push_back({req.tag, reply});
        return reply;
    };
}

guidance::QaPair dilemma_pair() {
    guidance::QaPair p;
    p.index = 6;
    p.question_turn = 26;
    p.answer_turn = 29;
    p.target = DikwLevel::Wisdom;
    p.question = "If a contagious tumour is pushing a wild marsupial towards extinction, should rangers cull "
                 "every visibly sick animal, or leave the population alone so that resistance can evolve?";
    p.answer = "Both options carry real costs. Culling slows spread but removes animals that might carry "
               "resistance, while doing nothing risks local extinction before resistance can spread.";
    return p;
}

std::vector<backend::ScriptEntry> dilemma_script(std::size_t qa_index) {
    static const std::vector<std::pair<std::string, std::string>> rounds{
        {"Culling is the only responsible option. Every sick animal left alive infects others, so removing "
         "them all is clearly right.",
         "1. The answer dismisses the chance that resistant animals exist.\n2. It treats culling as free of cost; "
         "mention the genetic diversity lost."},
        {"Culling protects healthy animals in the short run, but it may also remove animals carrying resistance "
         "and shrink genetic diversity.",
         "1. Good progress; now weigh the non-intervention option on its merits.\n2. Consider a middle path such "
         "as insurance populations kept apart from the wild."},
        {"A balanced plan might combine limited, targeted culling near disease fronts with isolated insurance "
         "populations, while monitoring for natural resistance.",
         "1. State the uncertainty openly and say what evidence would change the plan.\n2. Acknowledge the "
         "welfare concerns of both approaches."},
        {"Neither extreme is clearly right. Given uncertain evidence, a cautious mix of targeted measures, "
         "protected reserve groups and ongoing monitoring respects both animal welfare and long-term survival, "
         "and the plan should change as evidence about resistance accumulates.",
         "1. Mention who should review the evidence and how often.\n2. Otherwise this is close to neutral."},
    };
    std::vector<backend::ScriptEntry> out;
    const std::string base = "rsp.q" + std::to_string(qa_index + 1) + ".r";
    for (std::size_t r = 0; r < rounds.size(); ++r) {
        std::string advice = rounds[r].second;
        out.push_back({base + std::to_string(r + 1) + ".draft", rounds[r].first});
        out.push_back({base + std::to_string(r + 1) + ".advice", advice + "\nVERDICT: REVISE"});
    }
    return out;
}

std::optional<std::string> grammar_violation(const guidance::Transcript& transcript, const std::string& lecturer_id,
                                             const std::string& audience_id) {
    using guidance::Phase;
    enum class State { Start, LecturerIntroduced, Ready, Asked, Probed, Replied };
    State s = State::Start;
    bool any_pair = false;
    for (std::size_t i = 0; i < transcript.turns.size(); ++i) {
        const auto& t = transcript.turns[i];
        if (t.turn_index != i) return fmt::format("turn {} carries index {}", i, t.turn_index);
        auto expect = [&](Phase phase, const std::string& who, State next) -> std::optional<std::string> {
            if (t.phase != phase || t.speaker != who) {
                return fmt::format("turn {}: unexpected {} by {}", i, guidance::to_string(t.phase), t.speaker);
            }
            s = next;
            return std::nullopt;
        };
        std::optional<std::string> err;
        switch (s) {
            case State::Start: err = expect(Phase::SelfIntro, lecturer_id, State::LecturerIntroduced); break;
            case State::LecturerIntroduced: err = expect(Phase::SelfIntro, audience_id, State::Ready); break;
            case State::Ready: err = expect(Phase::Question, audience_id, State::Asked); break;
            case State::Asked:
                err = t.phase == Phase::FeedbackProbe ? expect(Phase::FeedbackProbe, lecturer_id, State::Probed)
                                                      : expect(Phase::Answer, lecturer_id, State::Ready);
                if (!err && s == State::Ready) any_pair = true;
                break;
            case State::Probed: err = expect(Phase::FeedbackReply, audience_id, State::Replied); break;
            case State::Replied:
                err = expect(Phase::Answer, lecturer_id, State::Ready);
                any_pair = any_pair || !err;
                break;
        }
        if (err) return err;
        const bool is_question = t.phase == Phase::Question;
        if (is_question != t.dikw_target.has_value() || is_question != t.countdown_shown.has_value()) {
            return fmt::format("turn {}: target/countdown present on the wrong phase", i);
        }
    }
    if (s != State::Ready || !any_pair) return std::string("transcript does not end after a complete Q&A pair");
    return std::nullopt;
}

void write_demo_material(const std::filesystem::path& path) {
    static const std::vector<std::string> paragraphs{
        "Machine learning systems improve by comparing their predictions with known answers and adjusting "
        "internal settings to shrink the gap. The size of that gap is measured by a loss function, a single "
        "number that is large when predictions are poor and small when they are good.",
        "Gradient descent is the workhorse behind this adjustment. Imagine standing on a foggy hillside and "
        "wanting to reach the valley floor. You cannot see the valley, but you can feel which way the ground "
        "slopes under your feet, so you take a step downhill and repeat. The gradient is that local slope, "
        "computed for every parameter at once.",
        "The learning rate decides how long each step is. With tiny steps progress is slow and training can "
        "stall on flat stretches. With huge steps the model overshoots the valley and may bounce between the "
        "hillsides or climb out entirely. Practitioners often start with a moderate value and shrink it as "
        "training proceeds.",
        "A model that fits its training examples perfectly is not necessarily useful. Overfitting happens when "
        "the model memorises quirks and noise rather than the pattern that generalises. The symptom is a "
        "training loss that keeps falling while the loss on held-out data starts to rise.",
        "Regularization counters overfitting by adding a preference for simpler models. A common form adds "
        "a penalty proportional to the size of the parameters, nudging the model away from extreme settings "
        "that only explain a handful of examples. Early stopping, dropout and data augmentation pursue the same "
        "goal by different means.",
    };
    std::ofstream out(path);
    out << "# How machines learn from data\n\nSource: https://example.org/lectures/learning\n\n";
    // Repeat the paragraphs so the material lands in the advised length range.
    for (int pass = 0; pass < 3; ++pass) {
        for (const auto& p : paragraphs) out << p << "\n\n";
    }
}

void write_demo_audience(const std::filesystem::path& path) {
    nlohmann::ordered_json doc;
    doc["identity"] = "primary school student";
    doc["persona"] = "A ten-year-old who likes football and video games and has never studied calculus.";
    doc["blocked_keywords"] = {"calculus", "derivative"};
    doc["blocked_domains"] = {"university mathematics"};
    std::ofstream out(path);
    out << doc.dump(2) << "\n";
}

}  // namespace cona::fixtures
