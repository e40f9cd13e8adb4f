// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace dermtrace {

/// Root of every exception thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A precondition stated by an operation's contract was not met.
class ContractViolation : public Error {
public:
    using Error::Error;
};

class ValidationError : public Error {
public:
    using Error::Error;
};

class ParseError : public Error {
public:
    ParseError(const std::string& what, std::string raw)
        : Error(what), raw_(std::move(raw)) {}

    const std::string& raw() const noexcept { return raw_; }

private:
    std::string raw_;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

class RegistrationError : public Error {
public:
    using Error::Error;
};

class DispatchError : public Error {
public:
    using Error::Error;
};

/// Fixture lookup found no canned result for the request.
class UnknownInputError : public Error {
public:
    using Error::Error;
};

enum class TransportFailure { connection, timeout, status, malformed };

class TransportError : public Error {
public:
    TransportError(TransportFailure category, const std::string& what, int status = 0)
        : Error(what), category_(category), status_(status) {}

    TransportFailure category() const noexcept { return category_; }
    int status() const noexcept { return status_; }

private:
    TransportFailure category_;
    int status_;
};

const char* to_string(TransportFailure f) noexcept;

class IngestionError : public Error {
public:
    using Error::Error;
};

class QueryError : public Error {
public:
    using Error::Error;
};

class EvidenceError : public Error {
public:
    using Error::Error;
};

class StructuralError : public Error {
public:
    using Error::Error;
};

class NotFoundError : public Error {
public:
    NotFoundError(const std::string& what, std::vector<std::string> nearest)
        : Error(what), nearest_(std::move(nearest)) {}

    const std::vector<std::string>& nearest() const noexcept { return nearest_; }

private:
    std::vector<std::string> nearest_;
};

class PlannerError : public Error {
public:
    using Error::Error;
};

class SynthesisError : public Error {
public:
    using Error::Error;
};

class MetricError : public Error {
public:
    using Error::Error;
};

} // namespace dermtrace
