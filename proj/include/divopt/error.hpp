#pragma once

#include <stdexcept>
#include <string>

namespace divopt {

// Base class for everything the library throws.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Bad parameters, out-of-domain arguments, malformed configuration.
class InvalidInput : public Error {
public:
    using Error::Error;
};

// Value iteration hit its sweep cap before the stopping rule fired.
class NonConvergence : public Error {
public:
    NonConvergence(const std::string& what, double last_increment)
        : Error(what), last_increment_(last_increment) {}

    double last_increment() const noexcept { return last_increment_; }

private:
    double last_increment_;
};

// The truncation window does not reach the terminal lump region.
class TruncationTooSmall : public Error {
public:
    using Error::Error;
};

}  // namespace divopt
