#pragma once

#include <stdexcept>
#include <string>

namespace godeflow {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Shapes of operands disagree.
class DimensionError : public Error {
public:
    using Error::Error;
};

// A caller-supplied parameter is outside its admissible range.
class ParameterError : public Error {
public:
    using Error::Error;
};

// A value lies outside the mathematical domain of an operation.
class DomainError : public Error {
public:
    using Error::Error;
};

// An object is not in the state an operation requires.
class StateError : public Error {
public:
    using Error::Error;
};

class SimulationError : public Error {
public:
    using Error::Error;
};

class SolveError : public Error {
public:
    using Error::Error;
};

class TrainingError : public Error {
public:
    using Error::Error;
};

// File could not be read or written, or its contents are malformed.
class IoError : public Error {
public:
    using Error::Error;
};

}  // namespace godeflow
