#pragma once

#include <stdexcept>
#include <string>

namespace pessilab {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct DimensionMismatch : Error {
    using Error::Error;
};

struct NotPositiveDefinite : Error {
    using Error::Error;
};

struct InvalidConfig : Error {
    using Error::Error;
};

struct IndexOutOfRange : Error {
    using Error::Error;
};

struct EmptySplit : Error {
    using Error::Error;
};

struct EmptyBatch : Error {
    using Error::Error;
};

struct DegenerateInput : Error {
    using Error::Error;
};

struct MissingInput : Error {
    using Error::Error;
};

struct NonFiniteEncountered : Error {
    using Error::Error;
};

struct SeedMismatch : Error {
    using Error::Error;
};

struct IoError : Error {
    using Error::Error;
};

}  // namespace pessilab
