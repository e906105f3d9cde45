// Copyright 2026 The fastpoint Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace fastpoint {

/// Base of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define FASTPOINT_DEFINE_ERROR(Name)            \
  class Name : public Error {                   \
   public:                                      \
    explicit Name(const std::string& what_arg)  \
        : Error(#Name ": " + what_arg) {}       \
  }

FASTPOINT_DEFINE_ERROR(IoError);
FASTPOINT_DEFINE_ERROR(TruncatedFile);
FASTPOINT_DEFINE_ERROR(MalformedLabel);
FASTPOINT_DEFINE_ERROR(MalformedCalibration);
FASTPOINT_DEFINE_ERROR(PointOutOfRange);
FASTPOINT_DEFINE_ERROR(ShapeMismatch);
FASTPOINT_DEFINE_ERROR(ConfigMismatch);
FASTPOINT_DEFINE_ERROR(EmptyProposal);
FASTPOINT_DEFINE_ERROR(NotScalar);
FASTPOINT_DEFINE_ERROR(DegenerateCorners);
FASTPOINT_DEFINE_ERROR(MissingFrame);
FASTPOINT_DEFINE_ERROR(MissingCheckpoint);
FASTPOINT_DEFINE_ERROR(DivergedLoss);
FASTPOINT_DEFINE_ERROR(FormatError);

#undef FASTPOINT_DEFINE_ERROR

}  // namespace fastpoint
