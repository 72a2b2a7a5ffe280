#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>

namespace cctsne {

enum class ErrorCode {
    DimensionMismatch,
    NotRowStochastic,
    NonFiniteValue,
    InvalidSize,
    InvalidArgument,
    CalibrationFailed,
    NonFiniteUpdate,
    InvalidK,
    SingleClass,
    SingleClassTrainingSet,
    EmptySet,
    ParseError,
    EmptyFile,
    IoError,
};

const char* to_string(ErrorCode code);

/// Library-wide exception. `index()` carries the offending row, line or
/// iteration when one is meaningful for the error code.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message, std::optional<std::size_t> index = std::nullopt);

    ErrorCode code() const noexcept { return code_; }
    std::optional<std::size_t> index() const noexcept { return index_; }

private:
    ErrorCode code_;
    std::optional<std::size_t> index_;
};

/// True for the codes that describe malformed user input (as opposed to
/// numerical divergence or I/O failures).
bool is_validation_error(ErrorCode code);

}  // namespace cctsne
