#pragma once

#include <stdexcept>
#include <string>

namespace masscrf {

// Base class for everything this library throws on contract violations.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

#define MASSCRF_DEFINE_ERROR(NAME)                                  \
  class NAME : public Error {                                       \
   public:                                                          \
    explicit NAME(const std::string& msg) : Error(#NAME ": " + msg) {} \
  }

MASSCRF_DEFINE_ERROR(ShapeMismatchError);
MASSCRF_DEFINE_ERROR(NonFiniteError);
MASSCRF_DEFINE_ERROR(OddSpatialDimError);
MASSCRF_DEFINE_ERROR(NotScalarError);
MASSCRF_DEFINE_ERROR(TapeConsumedError);
MASSCRF_DEFINE_ERROR(BadParamError);
MASSCRF_DEFINE_ERROR(EmptyImageError);
MASSCRF_DEFINE_ERROR(DegenerateRangeError);
MASSCRF_DEFINE_ERROR(NotTrainSplitError);
MASSCRF_DEFINE_ERROR(EmptyDatasetError);
MASSCRF_DEFINE_ERROR(MissingPairError);
MASSCRF_DEFINE_ERROR(UnreadableFileError);
MASSCRF_DEFINE_ERROR(NonBinaryMaskError);
MASSCRF_DEFINE_ERROR(FieldTooLargeError);
MASSCRF_DEFINE_ERROR(LengthMismatchError);
MASSCRF_DEFINE_ERROR(DegenerateGradientError);
MASSCRF_DEFINE_ERROR(VariantMismatchError);
MASSCRF_DEFINE_ERROR(NoDiscordantPairsError);
MASSCRF_DEFINE_ERROR(ConfigError);
MASSCRF_DEFINE_ERROR(IoError);

#undef MASSCRF_DEFINE_ERROR

}  // namespace masscrf
