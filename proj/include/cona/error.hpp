#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace cona {

enum class ErrorCode {
    InvalidArgument,
    BudgetExceeded,
    BudgetTooSmall,
    ScriptExhausted,
    TagMismatch,
    TransportError,
    MalformedGeneration,
    JudgeUnparseable,
    PoolExhausted,
    MalformedTurn,
    IndexClash,
    EmptyLabels,
    EmptyFile,
    UnreadableFile,
    SpliceCheckFailed,
    IoError,
    ConfigError,
};

std::string_view to_string(ErrorCode code);

// Every failure raised by the library carries one of the codes above so
// callers (and the CLI exit-code mapping) can branch without string matching.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

}  // namespace cona
