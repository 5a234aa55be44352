#pragma once

#include <stdexcept>
#include <string>

namespace hsconv {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// duty or other argument outside the domain of a closed form
class DomainError : public Error {
public:
    using Error::Error;
};

class ParseError : public Error {
public:
    ParseError(const std::string& what, int line)
        : Error(what + " at line " + std::to_string(line)), line_(line) {}
    int line() const noexcept { return line_; }

private:
    int line_;
};

class TopologyError : public Error {
public:
    using Error::Error;
};

class ConvergenceError : public Error {
public:
    ConvergenceError(const std::string& what, double t)
        : Error(what + " at t=" + std::to_string(t) + " s"), time_(t) {}
    double time() const noexcept { return time_; }

private:
    double time_;
};

}  // namespace hsconv
