#pragma once

#include <stdexcept>
#include <string>

namespace rdmc {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class SymmetryViolation : public Error { using Error::Error; };
class DimensionMismatch : public Error { using Error::Error; };
class DegenerateSystem : public Error { using Error::Error; };
class NotIdempotent : public Error { using Error::Error; };
class ZeroReference : public Error { using Error::Error; };
class RankExhausted : public Error { using Error::Error; };
class TooLarge : public Error { using Error::Error; };
class OptimizationFailure : public Error { using Error::Error; };
class BudgetExceedsUnique : public Error { using Error::Error; };
class NonFiniteObjective : public Error { using Error::Error; };
class NoFeasiblePoint : public Error { using Error::Error; };
class UnphysicalExpectation : public Error { using Error::Error; };
class BudgetCap : public Error { using Error::Error; };
class ModeMismatch : public Error { using Error::Error; };
class ZeroTrace : public Error { using Error::Error; };
class SampleSetMismatch : public Error { using Error::Error; };
class BundleFormatError : public Error { using Error::Error; };

}  // namespace rdmc
