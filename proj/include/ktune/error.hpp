#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace ktune {

// Error categories double as CLI exit codes.
enum class ErrorKind : int {
    Validation = 2,
    Backend = 3,
    Trainer = 4,
    Internal = 5,
};

const char* to_string(ErrorKind kind);

// Base of every error the toolkit throws. `code` is a stable machine-readable
// identifier such as "DuplicateId" or "PoolTooSmall".
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, std::string code, const std::string& message);

    ErrorKind kind() const noexcept { return kind_; }
    const std::string& code() const noexcept { return code_; }

private:
    ErrorKind kind_;
    std::string code_;
};

class ValidationError : public Error {
public:
    ValidationError(std::string code, const std::string& message)
        : Error(ErrorKind::Validation, std::move(code), message) {}
};

class BackendError : public Error {
public:
    BackendError(std::string code, const std::string& message)
        : Error(ErrorKind::Backend, std::move(code), message) {}
};

class TrainerError : public Error {
public:
    TrainerError(std::string code, const std::string& message)
        : Error(ErrorKind::Trainer, std::move(code), message) {}
};

// Raised by a probe campaign that could not finish every pair. The checkpoint
// has already been persisted when this is thrown.
class CampaignError : public BackendError {
public:
    CampaignError(std::vector<std::string> pending_ids, const std::string& cause);

    const std::vector<std::string>& pending_ids() const noexcept { return pending_; }

private:
    std::vector<std::string> pending_;
};

} // namespace ktune
