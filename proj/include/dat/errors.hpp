#pragma once

#include <stdexcept>
#include <string>

namespace dat {

// Base class for all library errors.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Invalid or inconsistent configuration (CLI maps this to exit code 2).
class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& msg) : Error(msg) {}
};

// Transport-level failure after exhausting retries.
class TransportError : public Error {
public:
    TransportError(const std::string& msg, int last_status)
        : Error(msg), last_status_(last_status) {}
    int last_status() const { return last_status_; }

private:
    int last_status_;
};

// Non-retryable HTTP 4xx (auth, bad request) from the endpoint.
class AuthError : public Error {
public:
    AuthError(const std::string& msg, int status) : Error(msg), status_(status) {}
    int status() const { return status_; }

private:
    int status_;
};

// Endpoint answered but the payload was unusable.
class MalformedResponseError : public Error {
public:
    explicit MalformedResponseError(const std::string& msg) : Error(msg) {}
};

// Replay store has no entry for the requested message list.
class ReplayMissError : public Error {
public:
    explicit ReplayMissError(const std::string& msg) : Error(msg) {}
};

// Candidate or pair generation failed; carries the raw model output.
class GenerationError : public Error {
public:
    GenerationError(const std::string& msg, std::string raw_response)
        : Error(msg), raw_response_(std::move(raw_response)) {}
    const std::string& raw_response() const { return raw_response_; }

private:
    std::string raw_response_;
};

// Persistent store (pool, transcript) could not be read or written.
class StoreError : public Error {
public:
    explicit StoreError(const std::string& msg) : Error(msg) {}
};

}  // namespace dat
