#include "cona/error.hpp"

namespace cona {

std::string_view to_string(ErrorCode code) {
    switch (code) {
        case ErrorCode::InvalidArgument: return "InvalidArgument";
        case ErrorCode::BudgetExceeded: return "BudgetExceeded";
        case ErrorCode::BudgetTooSmall: return "BudgetTooSmall";
        case ErrorCode::ScriptExhausted: return "ScriptExhausted";
        case ErrorCode::TagMismatch: return "TagMismatch";
        case ErrorCode::TransportError: return "TransportError";
        case ErrorCode::MalformedGeneration: return "MalformedGeneration";
        case ErrorCode::JudgeUnparseable: return "JudgeUnparseable";
        case ErrorCode::PoolExhausted: return "PoolExhausted";
        case ErrorCode::MalformedTurn: return "MalformedTurn";
        case ErrorCode::IndexClash: return "IndexClash";
        case ErrorCode::EmptyLabels: return "EmptyLabels";
        case ErrorCode::EmptyFile: return "EmptyFile";
        case ErrorCode::UnreadableFile: return "UnreadableFile";
        case ErrorCode::SpliceCheckFailed: return "SpliceCheckFailed";
        case ErrorCode::IoError: return "IoError";
        case ErrorCode::ConfigError: return "ConfigError";
    }
    return "Unknown";
}

}  // namespace cona
