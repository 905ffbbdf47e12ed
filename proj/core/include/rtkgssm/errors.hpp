#pragma once

#include <stdexcept>
#include <string>

namespace rtkgssm {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed input file (syntax or schema).
class ParseError : public Error {
public:
    using Error::Error;
};

/// Well-formed input that breaks a domain invariant.
class ValidationError : public Error {
public:
    using Error::Error;
};

/// Too few satellites, coincident positions and similar degenerate geometry.
class GeometryError : public Error {
public:
    using Error::Error;
};

/// Factor assembly failed, e.g. a carrier row without a covering arc.
class AssemblyError : public Error {
public:
    using Error::Error;
};

class SolverError : public Error {
public:
    SolverError(const std::string& what, int pivot = -1) : Error(what), pivot_(pivot) {}

    /// Column (in original ordering) of the first non-positive pivot, or -1.
    int pivot() const noexcept { return pivot_; }

private:
    int pivot_;
};

}  // namespace rtkgssm
