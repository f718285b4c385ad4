#pragma once

#include <stdexcept>
#include <string>

namespace scan {

// Error classes map 1:1 onto CLI exit codes (see README).
enum class ErrorClass {
    usage = 2,       // bad flags, malformed config
    format = 3,      // binary/JSON format violations
    validation = 4,  // domain invariant violations, bad arguments
    train = 5,       // training cannot proceed (no neighbors, no views, ...)
    io = 6,          // filesystem failures
};

class Error : public std::runtime_error {
public:
    Error(ErrorClass cls, const std::string& msg) : std::runtime_error(msg), cls_(cls) {}
    ErrorClass cls() const { return cls_; }

private:
    ErrorClass cls_;
};

class UsageError : public Error {
public:
    explicit UsageError(const std::string& msg) : Error(ErrorClass::usage, msg) {}
};

class FormatError : public Error {
public:
    enum class Reason { bad_magic, bad_version, truncated, bad_payload, out_of_range };

    FormatError(Reason reason, const std::string& msg)
        : Error(ErrorClass::format, msg), reason_(reason) {}
    Reason reason() const { return reason_; }

private:
    Reason reason_;
};

class ValidationError : public Error {
public:
    explicit ValidationError(const std::string& msg) : Error(ErrorClass::validation, msg) {}
};

class TrainError : public Error {
public:
    explicit TrainError(const std::string& msg) : Error(ErrorClass::train, msg) {}
};

class IoError : public Error {
public:
    explicit IoError(const std::string& msg) : Error(ErrorClass::io, msg) {}
};

}  // namespace scan
