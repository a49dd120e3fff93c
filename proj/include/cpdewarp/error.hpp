#pragma once

#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace cpd {

enum class ErrorCode {
    InvalidArgument,
    InvalidSpec,
    InvalidStep,
    InvalidResolution,
    DegenerateConfiguration,
    RetryableDegenerate,
    ShapeMismatch,
    DimensionMismatch,
    IndexOutOfRange,
    Io,
    Format,
};

std::string_view to_string(ErrorCode code);

/// Exception type thrown by every cpdewarp operation.
///
/// `valid_steps` is populated for InvalidStep so callers can offer the
/// admissible alternatives.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message, std::vector<int> valid_steps = {})
        : std::runtime_error(message), code_(code), valid_steps_(std::move(valid_steps)) {}

    ErrorCode code() const noexcept { return code_; }
    const std::vector<int>& valid_steps() const noexcept { return valid_steps_; }

private:
    ErrorCode code_;
    std::vector<int> valid_steps_;
};

}  // namespace cpd
