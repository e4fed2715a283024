// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace afd {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define AFD_DEFINE_ERROR(Name)             \
  class Name : public Error {              \
   public:                                 \
    explicit Name(const std::string& what) \
        : Error(#Name ": " + what) {}      \
  };

AFD_DEFINE_ERROR(ShapeMismatch)
AFD_DEFINE_ERROR(DomainError)
AFD_DEFINE_ERROR(InvalidAxis)
AFD_DEFINE_ERROR(NotScalar)
AFD_DEFINE_ERROR(DetachedTensor)
AFD_DEFINE_ERROR(EmptyRegion)
AFD_DEFINE_ERROR(IndivisibleShape)
AFD_DEFINE_ERROR(BoxOutOfBounds)
AFD_DEFINE_ERROR(InvalidBox)
AFD_DEFINE_ERROR(DegenerateBatch)
AFD_DEFINE_ERROR(NoSampledAnchors)
AFD_DEFINE_ERROR(NonFiniteComponent)
AFD_DEFINE_ERROR(NoGroundTruth)
AFD_DEFINE_ERROR(ConfigError)
AFD_DEFINE_ERROR(IoError)
AFD_DEFINE_ERROR(CheckpointMismatch)
AFD_DEFINE_ERROR(GradCheckFailure)

#undef AFD_DEFINE_ERROR

}  // namespace afd
