#pragma once

#include <stdexcept>
#include <string>

namespace visage {

// Base class for all recoverable domain errors raised by the library.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct InvalidArgument : Error {
    using Error::Error;
};

struct InvalidState : Error {
    using Error::Error;
};

struct NotFound : Error {
    using Error::Error;
};

struct IoError : Error {
    using Error::Error;
};

// Parse failures carry the 1-based line number of the offending record when
// the parsed text is line-oriented; line 0 means "not applicable".
struct ParseError : Error {
    explicit ParseError(const std::string& msg) : Error(msg), line(0) {}
    ParseError(const std::string& msg, long line_no)
        : Error(msg + " (line " + std::to_string(line_no) + ")"), line(line_no) {}
    long line;
};

struct ConfigConflict : Error {
    using Error::Error;
};

struct IntegrityError : Error {
    using Error::Error;
};

}  // namespace visage
