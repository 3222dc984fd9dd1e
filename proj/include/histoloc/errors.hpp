#ifndef HISTOLOC_ERRORS_HPP
#define HISTOLOC_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace histoloc {

// Input/validation failures (bad files, bad arguments). CLI exit code 1.
struct ValidationError : std::runtime_error {
    explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

// Numerical failures (no root, degenerate geometry). CLI exit code 2.
struct NumericalError : std::runtime_error {
    explicit NumericalError(const std::string& msg) : std::runtime_error(msg) {}
};

struct TooFewPoints : ValidationError {
    explicit TooFewPoints(const std::string& msg) : ValidationError(msg) {}
};
struct DegenerateChord : ValidationError {
    explicit DegenerateChord(const std::string& msg) : ValidationError(msg) {}
};
struct StationaryPoint : NumericalError {
    explicit StationaryPoint(const std::string& msg) : NumericalError(msg) {}
};
struct NoRoot : NumericalError {
    explicit NoRoot(const std::string& msg) : NumericalError(msg) {}
};
struct DegenerateTangents : NumericalError {
    explicit DegenerateTangents(const std::string& msg) : NumericalError(msg) {}
};
struct TangentParallelToChord : NumericalError {
    explicit TangentParallelToChord(const std::string& msg) : NumericalError(msg) {}
};
struct DegenerateLandmarks : NumericalError {
    explicit DegenerateLandmarks(const std::string& msg) : NumericalError(msg) {}
};
struct NegativeScale : NumericalError {
    explicit NegativeScale(const std::string& msg) : NumericalError(msg) {}
};
struct LandmarkOffPlane : ValidationError {
    explicit LandmarkOffPlane(const std::string& msg) : ValidationError(msg) {}
};
struct CollinearFiducials : NumericalError {
    explicit CollinearFiducials(const std::string& msg) : NumericalError(msg) {}
};
struct TooFewPairs : ValidationError {
    explicit TooFewPairs(const std::string& msg) : ValidationError(msg) {}
};
struct EmptyMask : ValidationError {
    explicit EmptyMask(const std::string& msg) : ValidationError(msg) {}
};
struct EdgeIntersectionMissing : NumericalError {
    explicit EdgeIntersectionMissing(const std::string& msg) : NumericalError(msg) {}
};
struct InsufficientData : ValidationError {
    explicit InsufficientData(const std::string& msg) : ValidationError(msg) {}
};
struct OutOfRangeN : ValidationError {
    explicit OutOfRangeN(const std::string& msg) : ValidationError(msg) {}
};
struct ZeroVariance : NumericalError {
    explicit ZeroVariance(const std::string& msg) : NumericalError(msg) {}
};
struct InvalidParams : ValidationError {
    explicit InvalidParams(const std::string& msg) : ValidationError(msg) {}
};
struct ParseError : ValidationError {
    explicit ParseError(const std::string& msg) : ValidationError(msg) {}
};
struct UnknownCoordinateSystem : ParseError {
    explicit UnknownCoordinateSystem(const std::string& msg) : ParseError(msg) {}
};
struct EmptyMarkup : ValidationError {
    explicit EmptyMarkup(const std::string& msg) : ValidationError(msg) {}
};
struct DuplicateIndex : ValidationError {
    explicit DuplicateIndex(const std::string& msg) : ValidationError(msg) {}
};
struct NegativeDistance : ValidationError {
    explicit NegativeDistance(const std::string& msg) : ValidationError(msg) {}
};
struct UnsupportedEncoding : ValidationError {
    explicit UnsupportedEncoding(const std::string& msg) : ValidationError(msg) {}
};
struct HeaderMismatch : ValidationError {
    explicit HeaderMismatch(const std::string& msg) : ValidationError(msg) {}
};

} // namespace histoloc

#endif
