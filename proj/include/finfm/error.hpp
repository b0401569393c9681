#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace finfm {

enum class ErrorCode {
    MalformedRow,
    NonPositivePrice,
    DuplicateTimestamp,
    EmptySide,
    EmptySplit,
    InvalidConfig,
    ContextTooLong,
    NonFiniteActivation,
    NonFiniteGradient,
    NonPositiveInput,
    SeriesTooShort,
    AllMasked,
    NoChanges,
    InsufficientData,
    DegenerateFit,
    EmptyOutcomes,
    HorizonTooShort,
    MissingPrice,
    ParameterFile,
    Io,
};

constexpr std::string_view to_string(ErrorCode code) {
    switch (code) {
    case ErrorCode::MalformedRow: return "MalformedRow";
    case ErrorCode::NonPositivePrice: return "NonPositivePrice";
    case ErrorCode::DuplicateTimestamp: return "DuplicateTimestamp";
    case ErrorCode::EmptySide: return "EmptySide";
    case ErrorCode::EmptySplit: return "EmptySplit";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::ContextTooLong: return "ContextTooLong";
    case ErrorCode::NonFiniteActivation: return "NonFiniteActivation";
    case ErrorCode::NonFiniteGradient: return "NonFiniteGradient";
    case ErrorCode::NonPositiveInput: return "NonPositiveInput";
    case ErrorCode::SeriesTooShort: return "SeriesTooShort";
    case ErrorCode::AllMasked: return "AllMasked";
    case ErrorCode::NoChanges: return "NoChanges";
    case ErrorCode::InsufficientData: return "InsufficientData";
    case ErrorCode::DegenerateFit: return "DegenerateFit";
    case ErrorCode::EmptyOutcomes: return "EmptyOutcomes";
    case ErrorCode::HorizonTooShort: return "HorizonTooShort";
    case ErrorCode::MissingPrice: return "MissingPrice";
    case ErrorCode::ParameterFile: return "ParameterFile";
    case ErrorCode::Io: return "Io";
    }
    return "Unknown";
}

/// Every failure raised by the library carries one of the codes above so
/// callers (and tests) can branch on the kind without parsing messages.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what)
        : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

} // namespace finfm
