#include "cona/text.hpp"

#include <algorithm>
#include <cctype>
#include <sstream>
#include <unordered_set>

namespace cona::text {

std::string_view trim(std::string_view s) {
    auto is_space = [](char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; };
    while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
    while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
    return s;
}

std::string to_lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

std::string to_upper(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
    return out;
}

std::size_t count_ci(std::string_view haystack, std::string_view needle) {
    if (needle.empty()) return 0;
    const std::string h = to_lower(haystack);
    const std::string n = to_lower(needle);
    std::size_t count = 0;
    for (auto pos = h.find(n); pos != std::string::npos; pos = h.find(n, pos + 1)) ++count;
    return count;
}

bool contains_ci(std::string_view haystack, std::string_view needle) {
    return count_ci(haystack, needle) > 0;
}

std::size_t utf8_length(std::string_view s) {
    std::size_t n = 0;
    for (unsigned char c : s) {
        if ((c & 0xC0) != 0x80) ++n;
    }
    return n;
}

std::size_t word_count(std::string_view s) {
    std::istringstream in{std::string(s)};
    std::size_t n = 0;
    for (std::string w; in >> w;) ++n;
    return n;
}

std::vector<std::string> parse_bullets(std::string_view reply) {
    std::vector<std::string> items;
    std::size_t start = 0;
    while (start <= reply.size()) {
        auto end = reply.find('\n', start);
        if (end == std::string_view::npos) end = reply.size();
        auto line = trim(reply.substr(start, end - start));
        if (line.size() > 2 && line.substr(0, 2) == "- ") {
            auto item = trim(line.substr(2));
            if (!item.empty()) items.emplace_back(item);
        }
        start = end + 1;
    }
    return items;
}

std::vector<std::string> normalize_keywords(const std::vector<std::string>& items) {
    std::vector<std::string> out;
    std::unordered_set<std::string> seen;
    for (const auto& item : items) {
        auto k = to_lower(trim(item));
        if (k.empty()) continue;
        if (seen.insert(k).second) out.push_back(std::move(k));
    }
    return out;
}

std::string join(const std::vector<std::string>& parts, std::string_view sep) {
    std::string out;
    for (std::size_t i = 0; i < parts.size(); ++i) {
        if (i) out += sep;
        out += parts[i];
    }
    return out;
}

std::string replace_ci(std::string_view haystack, std::string_view needle, std::string_view with) {
    if (needle.empty()) return std::string(haystack);
    const std::string h = to_lower(haystack);
    const std::string n = to_lower(needle);
    std::string out;
    std::size_t last = 0;
    for (auto pos = h.find(n); pos != std::string::npos; pos = h.find(n, last)) {
        out.append(haystack.substr(last, pos - last));
        out.append(with);
        last = pos + n.size();
    }
    out.append(haystack.substr(last));
    return out;
}

std::string indefinite_article(std::string_view noun) {
    auto t = trim(noun);
    if (t.empty()) return "a";
    char c = static_cast<char>(std::tolower(static_cast<unsigned char>(t.front())));
    return std::string("aeiou").find(c) != std::string::npos ? "an" : "a";
}

}  // namespace cona::text
