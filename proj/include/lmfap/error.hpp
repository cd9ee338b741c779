#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace lmfap {

/// Base class for every error raised by the toolkit.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define LMFAP_DEFINE_ERROR(Name)              \
  class Name : public Error {                 \
   public:                                    \
    using Error::Error;                       \
  }

// imaging
LMFAP_DEFINE_ERROR(UnreadableImage);
LMFAP_DEFINE_ERROR(UnsupportedFormat);
LMFAP_DEFINE_ERROR(IoFailure);
LMFAP_DEFINE_ERROR(EmptyManifest);

class MalformedLine : public Error {
 public:
  MalformedLine(std::size_t line, const std::string& what)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

// models
LMFAP_DEFINE_ERROR(ShapeMismatch);
LMFAP_DEFINE_ERROR(NonFiniteGradient);
LMFAP_DEFINE_ERROR(LabelOutOfRange);
LMFAP_DEFINE_ERROR(UnknownArchitecture);
LMFAP_DEFINE_ERROR(CorruptCheckpoint);

// frequency tooling and codec
LMFAP_DEFINE_ERROR(NonSquareInput);
LMFAP_DEFINE_ERROR(BandOutOfRange);
LMFAP_DEFINE_ERROR(QualityOutOfRange);

// attacks and training
LMFAP_DEFINE_ERROR(InvalidPlan);
LMFAP_DEFINE_ERROR(EmptyAdmixPool);
LMFAP_DEFINE_ERROR(InvalidConfig);
LMFAP_DEFINE_ERROR(DatasetTooSmall);
LMFAP_DEFINE_ERROR(NonFiniteLoss);

// evaluation
LMFAP_DEFINE_ERROR(NeedsBothLabels);
LMFAP_DEFINE_ERROR(PairCountMismatch);
LMFAP_DEFINE_ERROR(NoTargets);

#undef LMFAP_DEFINE_ERROR

}  // namespace lmfap
