#pragma once

#include <cstddef>
#include <optional>
#include <string>

#include "cona/dikw.hpp"

namespace cona {

// Presentation material. word_count is derived from body by whitespace
// tokenization.
struct Material {
    std::string title;
    std::string body;
    std::size_t word_count = 0;
    TextLevel text_level = TextLevel::Commonsense;
    std::optional<std::string> source_ref;

    bool operator==(const Material&) const = default;
};

Material make_material(std::string title, std::string body, TextLevel level,
                       std::optional<std::string> source_ref = std::nullopt);

}  // namespace cona
