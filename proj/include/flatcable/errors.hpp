#pragma once

#include <stdexcept>
#include <string>

namespace flatcable {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Geometry / force-law degeneracies.
struct SeparationTooSmall : Error {
    explicit SeparationTooSmall(const std::string& what) : Error(what) {}
};
struct ZeroNorm : Error {
    explicit ZeroNorm(const std::string& what) : Error(what) {}
};
struct ZeroForce : Error {
    double time = 0.0;
    int segment = -1;
    ZeroForce(const std::string& what, double t, int seg)
        : Error(what), time(t), segment(seg) {}
};
struct DegenerateThrust : Error {
    double time = 0.0;
    DegenerateThrust(const std::string& what, double t) : Error(what), time(t) {}
};
struct GimbalDegeneracy : Error {
    explicit GimbalDegeneracy(const std::string& what) : Error(what) {}
};

// Jet bookkeeping.
struct InsufficientDepth : Error {
    explicit InsufficientDepth(const std::string& what) : Error(what) {}
};

// Solvers.
struct NoConvergence : Error {
    explicit NoConvergence(const std::string& what) : Error(what) {}
};
struct NoDescent : Error {
    int stage = -1;
    NoDescent(const std::string& what, int stage_index) : Error(what), stage(stage_index) {}
};
struct NonFiniteDerivative : Error {
    explicit NonFiniteDerivative(const std::string& what) : Error(what) {}
};

// Input validation.
struct SchemaError : Error {
    explicit SchemaError(const std::string& what) : Error(what) {}
};
struct ExcessiveGaps : Error {
    explicit ExcessiveGaps(const std::string& what) : Error(what) {}
};
struct InvalidLambda : Error {
    explicit InvalidLambda(const std::string& what) : Error(what) {}
};

// Filesystem / stream failures (distinct from schema problems so callers can
// map them to a different exit code).
struct IoError : Error {
    explicit IoError(const std::string& what) : Error(what) {}
};

}  // namespace flatcable
