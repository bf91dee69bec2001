#pragma once

#include <stdexcept>
#include <string>

namespace speedest {

// Base of every error raised by the library. Each subclass maps onto one
// failure kind of the public contract so callers can dispatch on type.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

#define SPEEDEST_DEFINE_ERROR(Name)            \
    class Name : public Error {                \
    public:                                    \
        using Error::Error;                    \
    }

// interchange
SPEEDEST_DEFINE_ERROR(ParseError);
SPEEDEST_DEFINE_ERROR(ValidationError);
SPEEDEST_DEFINE_ERROR(MissingFileError);
SPEEDEST_DEFINE_ERROR(BadMagicError);
SPEEDEST_DEFINE_ERROR(TruncatedFileError);
SPEEDEST_DEFINE_ERROR(NonFiniteValueError);
SPEEDEST_DEFINE_ERROR(ValueError);
SPEEDEST_DEFINE_ERROR(IoError);

// feature extraction
SPEEDEST_DEFINE_ERROR(NoVehicleError);
SPEEDEST_DEFINE_ERROR(EmptyRegionError);
SPEEDEST_DEFINE_ERROR(DimensionMismatchError);
SPEEDEST_DEFINE_ERROR(InsufficientFramesError);

// regression
SPEEDEST_DEFINE_ERROR(RankDeficiencyError);
SPEEDEST_DEFINE_ERROR(ZeroVarianceError);
SPEEDEST_DEFINE_ERROR(DegenerateDofError);
SPEEDEST_DEFINE_ERROR(TooFewSamplesError);
SPEEDEST_DEFINE_ERROR(SchemaMismatchError);

// synthetic scenes
SPEEDEST_DEFINE_ERROR(GeometryError);
SPEEDEST_DEFINE_ERROR(InfeasibleRangesError);

#undef SPEEDEST_DEFINE_ERROR

} // namespace speedest
