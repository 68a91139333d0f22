#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

// Small string helpers shared by the prompt builders and reply parsers.
namespace cona::text {

std::string_view trim(std::string_view s);
std::string to_lower(std::string_view s);
std::string to_upper(std::string_view s);
bool contains_ci(std::string_view haystack, std::string_view needle);
std::size_t count_ci(std::string_view haystack, std::string_view needle);

// Number of UTF-8 code points; malformed continuation bytes count as one each.
std::size_t utf8_length(std::string_view s);

std::size_t word_count(std::string_view s);

// Items from lines of the form "- item". Other lines are ignored.
std::vector<std::string> parse_bullets(std::string_view reply);

// Lower-cased, trimmed, order-preserving de-duplication; empty items dropped.
std::vector<std::string> normalize_keywords(const std::vector<std::string>& items);

std::string join(const std::vector<std::string>& parts, std::string_view sep);

// Case-insensitive replacement of every occurrence of `needle`.
std::string replace_ci(std::string_view haystack, std::string_view needle, std::string_view with);

// "a" or "an" by the first letter of `noun`.
std::string indefinite_article(std::string_view noun);

}  // namespace cona::text
