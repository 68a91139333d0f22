#include "cona/backend.hpp"

#include <fstream>
#include <regex>
#include <thread>

#include <httplib.h>
#include <spdlog/spdlog.h>

#include "cona/error.hpp"
#include "cona/text.hpp"

namespace cona::backend {

std::string_view to_string(Role role) {
    switch (role) {
        case Role::System: return "system";
        case Role::User: return "user";
        case Role::Assistant: return "assistant";
    }
    return "user";
}

Role role_from_string(std::string_view name) {
    if (name == "system") return Role::System;
    if (name == "user") return Role::User;
    if (name == "assistant") return Role::Assistant;
    throw Error(ErrorCode::InvalidArgument, "unknown chat role '" + std::string(name) + "'");
}

void ChatRequest::validate() const {
    if (messages.empty() || messages.front().role != Role::System) {
        throw Error(ErrorCode::InvalidArgument, "request '" + tag + "' must start with a system message");
    }
    bool has_turn = false;
    for (const auto& m : messages) {
        if (text::trim(m.content).empty()) {
            throw Error(ErrorCode::InvalidArgument, "request '" + tag + "' contains a blank message");
        }
        has_turn = has_turn || m.role != Role::System;
    }
    if (!has_turn) {
        throw Error(ErrorCode::InvalidArgument, "request '" + tag + "' has no non-system message");
    }
    if (!(temperature >= 0.0 && temperature <= 2.0)) {
        throw Error(ErrorCode::InvalidArgument, "temperature out of [0, 2]");
    }
    if (max_reply_tokens <= 0) {
        throw Error(ErrorCode::InvalidArgument, "max_reply_tokens must be positive");
    }
}

std::size_t estimate_tokens(std::span<const ChatMessage> messages) {
    std::size_t total = 0;
    for (const auto& m : messages) {
        total += (text::utf8_length(m.content) + 3) / 4 + 4;
    }
    return total;
}

std::vector<ChatMessage> truncate_context(std::span<const ChatMessage> messages, std::size_t budget) {
    if (messages.empty() || messages.front().role != Role::System) {
        throw Error(ErrorCode::InvalidArgument, "truncate_context needs a leading system message");
    }
    if (estimate_tokens(messages) <= budget) {
        return {messages.begin(), messages.end()};
    }
    std::size_t used = estimate_tokens(messages.first(1));
    // Walk backwards, taking messages while they fit.
    std::size_t keep_from = messages.size();
    while (keep_from > 1) {
        std::size_t cost = estimate_tokens(messages.subspan(keep_from - 1, 1));
        if (used + cost > budget) break;
        used += cost;
        --keep_from;
    }
    if (keep_from == messages.size()) {
        throw Error(ErrorCode::BudgetTooSmall,
                    "system message plus the newest message exceed " + std::to_string(budget) + " tokens");
    }
    std::vector<ChatMessage> out;
    out.reserve(1 + messages.size() - keep_from);
    out.push_back(messages.front());
    out.insert(out.end(), messages.begin() + static_cast<std::ptrdiff_t>(keep_from), messages.end());
    return out;
}

Backend::Backend(std::size_t context_budget_tokens) : context_budget_(context_budget_tokens) {
    if (context_budget_ == 0) throw Error(ErrorCode::InvalidArgument, "context budget must be positive");
}

std::string Backend::complete(const ChatRequest& request) {
    request.validate();
    const auto reply_tokens = static_cast<std::size_t>(request.max_reply_tokens);
    if (reply_tokens >= context_budget_) {
        throw Error(ErrorCode::InvalidArgument,
                    "max_reply_tokens " + std::to_string(reply_tokens) + " does not fit the context budget");
    }
    const std::size_t prompt_budget = context_budget_ - reply_tokens;

    std::string reply;
    if (estimate_tokens(request.messages) <= prompt_budget) {
        reply = send(request);
    } else {
        ChatRequest fitted = request;
        try {
            fitted.messages = truncate_context(request.messages, prompt_budget);
        } catch (const Error& e) {
            if (e.code() != ErrorCode::BudgetTooSmall) throw;
            throw Error(ErrorCode::BudgetExceeded, "request '" + request.tag + "' does not fit " +
                                                       std::to_string(prompt_budget) + " prompt tokens");
        }
        spdlog::debug("request '{}' truncated from {} to {} messages", request.tag,
                      request.messages.size(), fitted.messages.size());
        reply = send(fitted);
    }
    if (text::trim(reply).empty()) {
        throw Error(ErrorCode::TransportError, "empty completion for '" + request.tag + "'");
    }
    return reply;
}

std::vector<ScriptEntry> load_script(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::UnreadableFile, "cannot open script " + path.string());
    std::vector<ScriptEntry> script;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (text::trim(line).empty()) continue;
        try {
            auto j = nlohmann::json::parse(line);
            script.push_back({j.at("tag").get<std::string>(), j.at("reply").get<std::string>()});
        } catch (const nlohmann::json::exception& e) {
            throw Error(ErrorCode::ConfigError,
                        path.string() + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
    return script;
}

void save_script(const std::filesystem::path& path, std::span<const ScriptEntry> script) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorCode::IoError, "cannot write script " + path.string());
    for (const auto& e : script) {
        out << nlohmann::json{{"tag", e.tag}, {"reply", e.reply}}.dump() << '\n';
    }
}

ScriptedBackend::ScriptedBackend(std::vector<ScriptEntry> script, std::size_t context_budget_tokens)
    : Backend(context_budget_tokens), script_(std::move(script)) {}

std::size_t ScriptedBackend::cursor() const {
    std::lock_guard lock(mutex_);
    return cursor_;
}

std::size_t ScriptedBackend::remaining() const {
    std::lock_guard lock(mutex_);
    return script_.size() - cursor_;
}

std::vector<ChatRequest> ScriptedBackend::requests() const {
    std::lock_guard lock(mutex_);
    return seen_;
}

std::string ScriptedBackend::send(const ChatRequest& request) {
    std::lock_guard lock(mutex_);
    if (cursor_ >= script_.size()) {
        throw Error(ErrorCode::ScriptExhausted,
                    "no scripted reply left for '" + request.tag + "' after " + std::to_string(cursor_) + " calls");
    }
    const auto& entry = script_[cursor_];
    if (entry.tag != "*" && entry.tag != request.tag) {
        throw Error(ErrorCode::TagMismatch, "script entry " + std::to_string(cursor_) + " expects '" +
                                                entry.tag + "' but request is '" + request.tag + "'");
    }
    ++cursor_;
    seen_.push_back(request);
    return entry.reply;
}

CallbackBackend::CallbackBackend(Handler handler, std::size_t context_budget_tokens)
    : Backend(context_budget_tokens), handler_(std::move(handler)) {}

std::string CallbackBackend::send(const ChatRequest& request) { return handler_(request); }

nlohmann::json make_wire_body(const ChatRequest& request, const std::string& model) {
    nlohmann::json messages = nlohmann::json::array();
    for (const auto& m : request.messages) {
        messages.push_back({{"role", to_string(m.role)}, {"content", m.content}});
    }
    return {{"model", model},
            {"messages", std::move(messages)},
            {"temperature", request.temperature},
            {"max_tokens", request.max_reply_tokens}};
}

std::string extract_completion(const nlohmann::json& reply) {
    try {
        return reply.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::TransportError, std::string("reply has no completion text: ") + e.what());
    }
}

HttpBackend::HttpBackend(HttpOptions options)
    : Backend(options.context_budget_tokens), options_(std::move(options)) {
    static const std::regex url(R"(^(https?://[^/]+)(/.*)?$)", std::regex::icase);
    std::smatch m;
    if (!std::regex_match(options_.endpoint, m, url)) {
        throw Error(ErrorCode::ConfigError, "invalid endpoint URL '" + options_.endpoint + "'");
    }
    origin_ = m[1].str();
    path_ = m[2].matched ? m[2].str() : "/";
    if (options_.attempts < 1) throw Error(ErrorCode::ConfigError, "http attempts must be >= 1");
}

std::string HttpBackend::send(const ChatRequest& request) {
    const std::string body = make_wire_body(request, options_.model).dump();
    httplib::Headers headers;
    if (const char* key = std::getenv(options_.api_key_env.c_str()); key && *key) {
        headers.emplace("Authorization", std::string("Bearer ") + key);
    }

    auto backoff = options_.initial_backoff;
    std::string last_error;
    for (int attempt = 1; attempt <= options_.attempts; ++attempt) {
        httplib::Client client(origin_);
        client.set_connection_timeout(options_.timeout);
        client.set_read_timeout(options_.timeout);
        client.set_write_timeout(options_.timeout);

        auto res = client.Post(path_, headers, body, "application/json");
        if (!res) {
            last_error = "transport failure: " + httplib::to_string(res.error());
        } else if (res->status >= 200 && res->status < 300) {
            try {
                return extract_completion(nlohmann::json::parse(res->body));
            } catch (const nlohmann::json::exception& e) {
                throw Error(ErrorCode::TransportError, std::string("unparseable reply body: ") + e.what());
            }
        } else if (res->status == 429 || res->status >= 500) {
            last_error = "HTTP " + std::to_string(res->status);
        } else {
            throw Error(ErrorCode::TransportError,
                        "HTTP " + std::to_string(res->status) + " for '" + request.tag + "': " + res->body);
        }
        if (attempt < options_.attempts) {
            spdlog::warn("request '{}' attempt {} failed ({}); retrying in {} ms", request.tag, attempt,
                         last_error, backoff.count());
            std::this_thread::sleep_for(backoff);
            backoff *= 2;
        }
    }
    throw Error(ErrorCode::TransportError, "request '" + request.tag + "' failed after " +
                                               std::to_string(options_.attempts) + " attempts: " + last_error);
}

}  // namespace cona::backend
