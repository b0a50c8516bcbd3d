#pragma once

#include <stdexcept>
#include <string>

namespace pathforge {

enum class ErrorCode {
    MalformedTree,
    DuplicateId,
    MultipleRoots,
    Cycle,
    EmptyClause,
    NoSuchLeaf,
    DegenerateTree,
    OracleRefused,
    StructuralMismatch,
    InvalidRecord,
    InfeasibleDerangement,
    GroupTooSmall,
    DegenerateRatio,
    UndefinedMetric,
    UnknownScenario,
    InvalidArgument,
    Io,
};

inline const char* to_string(ErrorCode code) {
    switch (code) {
        case ErrorCode::MalformedTree: return "MalformedTree";
        case ErrorCode::DuplicateId: return "DuplicateId";
        case ErrorCode::MultipleRoots: return "MultipleRoots";
        case ErrorCode::Cycle: return "Cycle";
        case ErrorCode::EmptyClause: return "EmptyClause";
        case ErrorCode::NoSuchLeaf: return "NoSuchLeaf";
        case ErrorCode::DegenerateTree: return "DegenerateTree";
        case ErrorCode::OracleRefused: return "OracleRefused";
        case ErrorCode::StructuralMismatch: return "StructuralMismatch";
        case ErrorCode::InvalidRecord: return "InvalidRecord";
        case ErrorCode::InfeasibleDerangement: return "InfeasibleDerangement";
        case ErrorCode::GroupTooSmall: return "GroupTooSmall";
        case ErrorCode::DegenerateRatio: return "DegenerateRatio";
        case ErrorCode::UndefinedMetric: return "UndefinedMetric";
        case ErrorCode::UnknownScenario: return "UnknownScenario";
        case ErrorCode::InvalidArgument: return "InvalidArgument";
        case ErrorCode::Io: return "Io";
    }
    return "Unknown";
}

/// Every failure raised by the library carries a machine-checkable code.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

} // namespace pathforge
