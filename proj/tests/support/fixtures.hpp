#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include <optional>

#include "cona/backend.hpp"
#include "cona/guidance.hpp"

namespace cona::fixtures {

enum class KbBehaviour { FullyBlocked, Mixed, Leaky };

// Knobs for the tag-driven responder. Defaults give a quiet session: every
// explanation is clear, advisers never approve, judges are well-formed.
struct FixtureOptions {
    std::vector<std::string> material_keywords{"gradient descent", "loss surface", "learning rate", "overfitting",
                                               "regularization"};
    std::function<bool(std::size_t pair)> too_complex = [](std::size_t) { return false; };
    std::size_t approve_at_round = 0;  // 0 means never
    std::function<std::string(std::size_t pair)> dikw_labels = [](std::size_t) { return "DATA, INFORMATION"; };
    std::function<double(std::size_t pair, std::size_t round, std::size_t trial)> loop_score =
        [](std::size_t pair, std::size_t round, std::size_t trial) {
            return 5.0 + 0.5 * static_cast<double>(round) + 0.25 * static_cast<double>(trial % 3) +
                   0.1 * static_cast<double>(pair % 2);
        };
    std::vector<std::string> group_a{"eigenvalue", "fourier transform", "tensor calculus", "hilbert space",
                                     "lagrangian"};
    std::vector<std::string> group_b{"addition", "triangle", "fraction", "circle", "counting"};
    KbBehaviour kb = KbBehaviour::FullyBlocked;
};

backend::CallbackBackend::Handler make_responder(FixtureOptions options = {});

// Wraps a handler so every (tag, reply) it produces is appended to `sink`.
backend::CallbackBackend::Handler recording(backend::CallbackBackend::Handler inner,
                                            std::vector<backend::ScriptEntry>& sink);

// The answer blocks a notes request quotes, in order.
std::vector<std::string> improved_answers_in(const backend::ChatRequest& request);

// A wildlife-disease dilemma between two experts, with a four-round
// draft/suggestion chain in which every adviser asks for revision.
guidance::QaPair dilemma_pair();
std::vector<backend::ScriptEntry> dilemma_script(std::size_t qa_index);

// Runs the transcript through the phase automaton
//   self_intro(L) self_intro(A) ( question(A) [feedback_probe(L) feedback_reply(A)] answer(L) )+
// and returns a description of the first violation, if any.
std::optional<std::string> grammar_violation(const guidance::Transcript& transcript, const std::string& lecturer_id,
                                             const std::string& audience_id);

// Writes a 600-1000 word demo material and an audience profile.
void write_demo_material(const std::filesystem::path& path);
void write_demo_audience(const std::filesystem::path& path);

}  // namespace cona::fixtures
