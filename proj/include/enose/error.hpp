#pragma once

#include <stdexcept>
#include <string>

namespace enose {

// Root of every failure raised by the library. Callers that only need a
// message catch this; the CLI maps subclasses onto exit codes.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Malformed input files (CSV rows, JSON manifests, reports).
class ParseError : public Error {
public:
    using Error::Error;
};

// Data that parses but contradicts itself (manifest vs. traces, bottle labels).
class IntegrityError : public Error {
public:
    using Error::Error;
};

class BoundsError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

// Evaluation protocol cannot be formed (too few groups, folds > groups).
class ProtocolError : public Error {
public:
    using Error::Error;
};

class InputError : public Error {
public:
    using Error::Error;
};

// Model training failed: single-class input, empty class, and similar.
class TrainingError : public Error {
public:
    using Error::Error;
};

// Non-finite values produced by a numerical routine.
class NumericalError : public Error {
public:
    using Error::Error;
};

class DivergenceError : public NumericalError {
public:
    DivergenceError(const std::string& what, int epoch)
        : NumericalError(what), epoch_(epoch) {}
    int epoch() const noexcept { return epoch_; }

private:
    int epoch_;
};

} // namespace enose
