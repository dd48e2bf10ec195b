#pragma once

#include <stdexcept>
#include <string>

namespace providence {

// Every library error derives from Error so the service and CLI can map them
// to one status code / exit code each.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
    virtual const char* code() const noexcept { return "internal"; }
};

// Argument outside the mathematical domain of an operation.
class DomainError : public Error {
public:
    using Error::Error;
    const char* code() const noexcept override { return "domain_error"; }
};

// A Minerva history that departs from its predetermined schedule.
class ScheduleViolation : public Error {
public:
    using Error::Error;
    const char* code() const noexcept override { return "schedule_violation"; }
};

class ParseError : public Error {
public:
    ParseError(const std::string& message, int line)
        : Error(line > 0 ? "line " + std::to_string(line) + ": " + message : message),
          line_(line) {}
    int line() const noexcept { return line_; }
    const char* code() const noexcept override { return "parse_error"; }

private:
    int line_;
};

// Persisted data that fails revalidation on load.
class IntegrityError : public Error {
public:
    using Error::Error;
    const char* code() const noexcept override { return "integrity_error"; }
};

// Optimistic-concurrency or append-only violation.
class ConflictError : public Error {
public:
    using Error::Error;
    const char* code() const noexcept override { return "conflict"; }
};

class NotFoundError : public Error {
public:
    using Error::Error;
    const char* code() const noexcept override { return "not_found"; }
};

}  // namespace providence
