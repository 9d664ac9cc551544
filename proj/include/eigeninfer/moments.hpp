#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace eigeninfer {

// Which matrix a moment vector describes: the population covariance or the
// sample covariance built from it.
enum class MatrixSubject { Sigma, S };

// Normal moments are (1/N) tr M^k; dual moments are (1/N) tr M^-k.
enum class MomentFamily { Normal, Dual };

enum class TowerDirection { SigmaToS, SToSigma };

struct MomentVector {
  MatrixSubject subject = MatrixSubject::Sigma;
  MomentFamily family = MomentFamily::Normal;
  // values[k-1] holds the k-th moment of the declared family.
  std::vector<double> values;
  // N/T for subject S; 0 means not applicable.
  double rectangularity = 0.0;

  int order() const { return static_cast<int>(values.size()); }
};

struct InsufficientOrderError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct RectangularityError : std::domain_error {
  using std::domain_error::domain_error;
};

struct DegenerateDenominatorError : std::domain_error {
  using std::domain_error::domain_error;
};

struct MultiplicityRoundingError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct SingularSampleError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct InsufficientAcceptedError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline void require_order(int have, int need, const std::string& what) {
  if (have < need)
    throw InsufficientOrderError(what + ": need " + std::to_string(need) +
                                 " moments, have " + std::to_string(have));
}

// r = 0 is admitted as the undistorted limit: every tower reduces to the
// identity map there.
inline void require_rectangularity(double r, MomentFamily family) {
  if (!(r >= 0.0))
    throw RectangularityError("rectangularity must be nonnegative, got " + std::to_string(r));
  if (family == MomentFamily::Dual && !(r < 1.0))
    throw RectangularityError("dual relations require r < 1, got " + std::to_string(r));
}

}  // namespace eigeninfer
