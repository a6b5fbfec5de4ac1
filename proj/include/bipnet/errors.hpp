#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace bipnet {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Bad numeric input to a family (overflowing predictor, value outside support).
class DomainError : public Error {
public:
    using Error::Error;
};

// Malformed input file. line() is 1-based, 0 when not tied to a line.
class ParseError : public Error {
public:
    ParseError(const std::string& what, std::size_t line = 0)
        : Error(line ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}
    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

class ValidationError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

class SingularJacobianError : public Error {
public:
    using Error::Error;
};

// Some mean derivative is not strictly positive at the current predictor.
class DegeneracyError : public Error {
public:
    using Error::Error;
};

// The moment equations have no finite solution reachable from the start point.
class NonExistenceError : public Error {
public:
    NonExistenceError(const std::string& what, std::vector<double> trace)
        : Error(what), trace_(std::move(trace)) {}
    const std::vector<double>& trace() const noexcept { return trace_; }

private:
    std::vector<double> trace_;
};

// H(theta, gamma) is not positive definite, so gamma is not identified.
class IllPosedError : public Error {
public:
    using Error::Error;
};

class MaxIterationsError : public Error {
public:
    using Error::Error;
};

} // namespace bipnet
