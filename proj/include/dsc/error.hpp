#pragma once

#include <stdexcept>
#include <string>

namespace dsc {

// Error taxonomy mirrored by the CLI exit codes: usage -> 2, data -> 3,
// backend -> 4, internal -> 5.
enum class ErrorCategory { Usage, Data, Backend, Internal };

class Error : public std::runtime_error {
public:
    Error(ErrorCategory category, const std::string& message)
        : std::runtime_error(message), category_(category) {}

    ErrorCategory category() const noexcept { return category_; }

private:
    ErrorCategory category_;
};

class UsageError : public Error {
public:
    explicit UsageError(const std::string& message) : Error(ErrorCategory::Usage, message) {}
};

class DataError : public Error {
public:
    explicit DataError(const std::string& message) : Error(ErrorCategory::Data, message) {}
};

class BackendError : public Error {
public:
    enum class Kind { Transport, ExhaustedRetries, Auth, MalformedResponse, Rejected, NoScript };

    BackendError(Kind kind, const std::string& message)
        : Error(ErrorCategory::Backend, message), kind_(kind) {}

    Kind kind() const noexcept { return kind_; }

private:
    Kind kind_;
};

class InternalError : public Error {
public:
    explicit InternalError(const std::string& message) : Error(ErrorCategory::Internal, message) {}
};

} // namespace dsc
