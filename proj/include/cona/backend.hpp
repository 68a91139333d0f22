#pragma once

#include <chrono>
#include <cstddef>
#include <filesystem>
#include <functional>
#include <mutex>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace cona::backend {

inline constexpr double kGenerationTemperature = 0.7;
inline constexpr double kJudgeTemperature = 0.0;
inline constexpr std::size_t kDefaultContextBudget = 8000;
inline constexpr int kDefaultMaxReplyTokens = 1024;

enum class Role { System, User, Assistant };

std::string_view to_string(Role role);
Role role_from_string(std::string_view name);

struct ChatMessage {
    Role role = Role::User;
    std::string content;

    bool operator==(const ChatMessage&) const = default;
};

struct ChatRequest {
    std::vector<ChatMessage> messages;
    double temperature = kGenerationTemperature;
    int max_reply_tokens = kDefaultMaxReplyTokens;
    std::string tag;

    // Throws InvalidArgument unless the first message is the system prompt,
    // a non-system message follows, every content is non-blank and the
    // sampling parameters are in range.
    void validate() const;
};

// ceil(code points / 4) + 4 per message. Additive over concatenation.
std::size_t estimate_tokens(std::span<const ChatMessage> messages);

// Keeps the system message plus the longest recent suffix that fits `budget`.
// Throws BudgetTooSmall when the system message and the newest message alone
// do not fit.
std::vector<ChatMessage> truncate_context(std::span<const ChatMessage> messages, std::size_t budget);

class Backend {
public:
    explicit Backend(std::size_t context_budget_tokens = kDefaultContextBudget);
    virtual ~Backend() = default;

    Backend(const Backend&) = delete;
    Backend& operator=(const Backend&) = delete;

    // Validates the request, truncates history to fit
    // context_budget - max_reply_tokens, then dispatches. The returned text is
    // never blank.
    std::string complete(const ChatRequest& request);

    std::size_t context_budget() const noexcept { return context_budget_; }

    // True when concurrent complete() calls keep the backend's observable
    // behaviour independent of call interleaving.
    virtual bool supports_concurrency() const noexcept { return false; }

protected:
    virtual std::string send(const ChatRequest& request) = 0;

private:
    std::size_t context_budget_;
};

struct ScriptEntry {
    std::string tag;  // "*" matches any request tag
    std::string reply;

    bool operator==(const ScriptEntry&) const = default;
};

std::vector<ScriptEntry> load_script(const std::filesystem::path& path);
void save_script(const std::filesystem::path& path, std::span<const ScriptEntry> script);

// Replays canned replies strictly in order. Each reply is checked against the
// request tag so that a reordered pipeline fails loudly with TagMismatch.
class ScriptedBackend final : public Backend {
public:
    explicit ScriptedBackend(std::vector<ScriptEntry> script,
                             std::size_t context_budget_tokens = kDefaultContextBudget);

    std::size_t cursor() const;
    std::size_t remaining() const;

    // Requests as dispatched (after truncation), in call order.
    std::vector<ChatRequest> requests() const;

protected:
    std::string send(const ChatRequest& request) override;

private:
    mutable std::mutex mutex_;
    std::vector<ScriptEntry> script_;
    std::size_t cursor_ = 0;
    std::vector<ChatRequest> seen_;
};

// Delegates to a callable. Used to synthesize fixtures and in tests.
class CallbackBackend final : public Backend {
public:
    using Handler = std::function<std::string(const ChatRequest&)>;

    explicit CallbackBackend(Handler handler,
                             std::size_t context_budget_tokens = kDefaultContextBudget);

protected:
    std::string send(const ChatRequest& request) override;

private:
    Handler handler_;
};

struct HttpOptions {
    std::string endpoint;
    std::string model;
    std::string api_key_env = "CONA_API_KEY";
    std::size_t context_budget_tokens = kDefaultContextBudget;
    int attempts = 3;
    std::chrono::milliseconds initial_backoff{1000};
    std::chrono::seconds timeout{120};
};

nlohmann::json make_wire_body(const ChatRequest& request, const std::string& model);

// First completion text of a chat-completion reply document.
std::string extract_completion(const nlohmann::json& reply);

class HttpBackend final : public Backend {
public:
    explicit HttpBackend(HttpOptions options);

    bool supports_concurrency() const noexcept override { return true; }

protected:
    std::string send(const ChatRequest& request) override;

private:
    HttpOptions options_;
    std::string origin_;
    std::string path_;
};

}  // namespace cona::backend
