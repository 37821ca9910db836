#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace m3ace {

// Base error: every failure carries a stable machine-readable code
// (e.g. "MixedRounds", "ParseFailure") plus a human message.
class Error : public std::runtime_error {
public:
    Error(std::string code, const std::string& message)
        : std::runtime_error(message), code_(std::move(code)) {}

    const std::string& code() const noexcept { return code_; }

private:
    std::string code_;
};

// Structured response could not be parsed; callers re-prompt up to the
// configured limit before treating the agent as abstaining.
class ParseFailure : public Error {
public:
    explicit ParseFailure(std::string reason)
        : Error("ParseFailure", "parse failure: " + reason), reason_(std::move(reason)) {}

    const std::string& reason() const noexcept { return reason_; }

private:
    std::string reason_;
};

// Remote endpoint failed after all retries.
class Transport : public Error {
public:
    Transport(int status, std::string body_excerpt)
        : Error("Transport", "transport failure (status " + std::to_string(status) + "): " + body_excerpt),
          status_(status),
          body_excerpt_(std::move(body_excerpt)) {}

    int status() const noexcept { return status_; }
    const std::string& body_excerpt() const noexcept { return body_excerpt_; }

private:
    int status_;
    std::string body_excerpt_;
};

class FixtureExhausted : public Error {
public:
    explicit FixtureExhausted(const std::string& key)
        : Error("FixtureExhausted", "no scripted response left for " + key) {}
};

class JudgeUnavailable : public Error {
public:
    explicit JudgeUnavailable(const std::string& why)
        : Error("JudgeUnavailable", "judge agent unavailable: " + why) {}
};

// Dataset line failed validation.
class SchemaError : public Error {
public:
    SchemaError(int line, std::string field, const std::string& why)
        : Error("SchemaError", "line " + std::to_string(line) + ", field '" + field + "': " + why),
          line_(line),
          field_(std::move(field)) {}

    int line() const noexcept { return line_; }
    const std::string& field() const noexcept { return field_; }

private:
    int line_;
    std::string field_;
};

class ConfigError : public Error {
public:
    ConfigError(std::string key, const std::string& why)
        : Error("ConfigError", "config key '" + key + "': " + why), key_(std::move(key)) {}

    const std::string& key() const noexcept { return key_; }

private:
    std::string key_;
};

class CorruptRun : public Error {
public:
    explicit CorruptRun(const std::string& why) : Error("CorruptRun", "corrupt run: " + why) {}
};

} // namespace m3ace
