#pragma once

#include <array>
#include <cmath>
#include <complex>
#include <cstdint>
#include <fstream>
#include <limits>
#include <numbers>
#include <ostream>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "eigeninfer/moments.hpp"
#include "eigeninfer/spectrum_model.hpp"

namespace eigeninfer {

// Counter-based generator (Philox4x32, 10 rounds). A 64-bit seed becomes the
// key; the 128-bit counter starts at zero and increments per block. Distinct
// seeds give independent streams, so ensemble members can be generated in
// parallel with seed = base ^ index and still reproduce bit-exactly.
class Philox4x32 {
 public:
  explicit Philox4x32(std::uint64_t seed)
      : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)} {}

  static std::array<std::uint32_t, 4> block(std::array<std::uint32_t, 4> counter,
                                            std::array<std::uint32_t, 2> key) {
    for (int round = 0; round < 10; ++round) {
      const std::uint64_t product0 = 0xD2511F53ULL * counter[0];
      const std::uint64_t product1 = 0xCD9E8D57ULL * counter[2];
      const auto hi0 = static_cast<std::uint32_t>(product0 >> 32);
      const auto lo0 = static_cast<std::uint32_t>(product0);
      const auto hi1 = static_cast<std::uint32_t>(product1 >> 32);
      const auto lo1 = static_cast<std::uint32_t>(product1);
      counter = {hi1 ^ counter[1] ^ key[0], lo1, hi0 ^ counter[3] ^ key[1], lo0};
      key[0] += 0x9E3779B9u;
      key[1] += 0xBB67AE85u;
    }
    return counter;
  }

  std::uint32_t next_u32() {
    if (position_ == 4) {
      buffer_ = block(counter_, key_);
      for (int limb = 0; limb < 4; ++limb) {
        if (++counter_[static_cast<std::size_t>(limb)] != 0) break;
      }
      position_ = 0;
    }
    return buffer_[static_cast<std::size_t>(position_++)];
  }

  // Uniform double in [0, 1) with 53 random bits.
  double next_double() {
    const std::uint64_t hi = next_u32();
    const std::uint64_t lo = next_u32();
    return static_cast<double>(((hi << 32) | lo) >> 11) * 0x1.0p-53;
  }

 private:
  std::array<std::uint32_t, 2> key_;
  std::array<std::uint32_t, 4> counter_{0, 0, 0, 0};
  std::array<std::uint32_t, 4> buffer_{0, 0, 0, 0};
  int position_ = 4;
};

// Standard Gaussian deviates via the Marsaglia polar transform on Philox
// uniforms. The transform produces pairs; the spare is cached.
class GaussianSource {
 public:
  explicit GaussianSource(std::uint64_t seed) : rng_(seed) {}

  double next() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u, v, s;
    do {
      u = 2.0 * rng_.next_double() - 1.0;
      v = 2.0 * rng_.next_double() - 1.0;
      s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double scale = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * scale;
    have_spare_ = true;
    return u * scale;
  }

 private:
  Philox4x32 rng_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

enum class FieldKind { Real, Complex };

inline int dyson_beta(FieldKind field) { return field == FieldKind::Real ? 1 : 2; }

// Fluctuation covariances scale by 2/beta: 1 for complex data, 2 for real.
inline double beta_scale(FieldKind field) { return 2.0 / dyson_beta(field); }

struct WishartConfig {
  SpectrumModel model;
  int n = 0;
  int t = 0;
  FieldKind field = FieldKind::Complex;
  std::uint64_t seed = 0;

  double rectangularity() const { return static_cast<double>(n) / static_cast<double>(t); }
};

// One realized data matrix X (N x T), its sample covariance S = X X^dagger / T
// and the eigenvalues of S in ascending order.
struct SampleSet {
  WishartConfig config;
  std::variant<Eigen::MatrixXd, Eigen::MatrixXcd> x;
  std::variant<Eigen::MatrixXd, Eigen::MatrixXcd> s;
  Eigen::VectorXd eigenvalues;

  double min_eigenvalue() const { return eigenvalues(0); }
  double max_eigenvalue() const { return eigenvalues(eigenvalues.size() - 1); }

  // With r < 1 the spectrum is strictly positive almost surely; a
  // non-positive eigenvalue marks a degenerate draw.
  bool degenerate() const { return config.rectangularity() < 1.0 && !(min_eigenvalue() > 0.0); }
};

// Integer multiplicities n_i = round(p_i * N); the largest-weight atom absorbs
// the rounding remainder. Fails when an atom receives no index or when the
// absorbed remainder pushes a multiplicity further than 1/N from its weight.
inline std::vector<int> atom_multiplicities(const SpectrumModel& model, int n) {
  const auto& atoms = model.atoms();
  if (n < model.atom_count())
    throw MultiplicityRoundingError("need at least one index per atom: N = " + std::to_string(n) +
                                    ", atoms = " + std::to_string(model.atom_count()));
  std::vector<int> counts(atoms.size(), 0);
  long long total = 0;
  std::size_t heaviest = 0;
  for (std::size_t i = 0; i < atoms.size(); ++i) {
    counts[i] = static_cast<int>(std::llround(atoms[i].weight * n));
    total += counts[i];
    if (atoms[i].weight > atoms[heaviest].weight) heaviest = i;
  }
  counts[heaviest] += static_cast<int>(n - total);
  for (std::size_t i = 0; i < atoms.size(); ++i) {
    const double deviation = std::abs(static_cast<double>(counts[i]) / n - atoms[i].weight);
    if (counts[i] < 1 || deviation >= 1.0 / n)
      throw MultiplicityRoundingError(
          "no integer multiplicity within 1/N of weight " + std::to_string(atoms[i].weight) +
          " at N = " + std::to_string(n));
  }
  return counts;
}

namespace detail {

// Population covariance is diagonal by construction, so X = Sigma^(1/2) Y
// rescales row i of the iid Gaussian matrix Y by sqrt(Lambda at row i).
inline Eigen::VectorXd row_scales(const SpectrumModel& model, int n) {
  const auto counts = atom_multiplicities(model, n);
  Eigen::VectorXd scales(n);
  int row = 0;
  const auto& atoms = model.atoms();
  for (std::size_t i = 0; i < atoms.size(); ++i) {
    const double s = std::sqrt(atoms[i].value);
    for (int c = 0; c < counts[i]; ++c) scales(row++) = s;
  }
  return scales;
}

}  // namespace detail

// Data matrices X = Sigma^(1/2) Y with iid standard Gaussian Y. Complex
// entries are (g1 + i g2) / sqrt(2) so that the second moment of each entry
// is 1. Entries are generated column by column, rows innermost; this order
// is part of the determinism contract.
inline Eigen::MatrixXd sample_data_real(const SpectrumModel& model, int n, int t,
                                        std::uint64_t seed) {
  const Eigen::VectorXd scales = detail::row_scales(model, n);
  GaussianSource gauss(seed);
  Eigen::MatrixXd x(n, t);
  for (int j = 0; j < t; ++j)
    for (int i = 0; i < n; ++i) x(i, j) = scales(i) * gauss.next();
  return x;
}

inline Eigen::MatrixXcd sample_data_complex(const SpectrumModel& model, int n, int t,
                                            std::uint64_t seed) {
  const Eigen::VectorXd scales = detail::row_scales(model, n);
  GaussianSource gauss(seed);
  const double inv_sqrt2 = 1.0 / std::sqrt(2.0);
  Eigen::MatrixXcd x(n, t);
  for (int j = 0; j < t; ++j)
    for (int i = 0; i < n; ++i) {
      const double re = gauss.next();
      const double im = gauss.next();
      x(i, j) = scales(i) * inv_sqrt2 * std::complex<double>(re, im);
    }
  return x;
}

namespace detail {

template <class Matrix>
Matrix covariance_of(const Matrix& x, int t) {
  Matrix s = Matrix::Zero(x.rows(), x.rows());
  s.template selfadjointView<Eigen::Lower>().rankUpdate(x, 1.0 / t);
  s.template triangularView<Eigen::StrictlyUpper>() = s.adjoint();
  return s;
}

}  // namespace detail

// Full draw: X, S = X X^dagger / T and the eigenvalues of S.
inline SampleSet sample(const SpectrumModel& model, int n, int t, FieldKind field,
                        std::uint64_t seed) {
  if (n < 2 || t < 2) throw std::invalid_argument("sample needs N, T >= 2");
  SampleSet out;
  out.config = {model, n, t, field, seed};
  if (field == FieldKind::Real) {
    Eigen::MatrixXd x = sample_data_real(model, n, t, seed);
    Eigen::MatrixXd s = detail::covariance_of(x, t);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(s, Eigen::EigenvaluesOnly);
    out.eigenvalues = solver.eigenvalues();
    out.x = std::move(x);
    out.s = std::move(s);
  } else {
    Eigen::MatrixXcd x = sample_data_complex(model, n, t, seed);
    Eigen::MatrixXcd s = detail::covariance_of(x, t);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> solver(s, Eigen::EigenvaluesOnly);
    out.eigenvalues = solver.eigenvalues();
    out.x = std::move(x);
    out.s = std::move(s);
  }
  return out;
}

inline SampleSet sample(const WishartConfig& config) {
  return sample(config.model, config.n, config.t, config.field, config.seed);
}

// Empirical alpha_k = (1/N) sum lambda^k (Normal) or (1/N) sum lambda^-k
// (Dual), computed from the eigenvalues as power sums. Dual moments refuse
// samples whose smallest eigenvalue is negligible against the largest.
inline MomentVector empirical_moments(const SampleSet& s, int order, MomentFamily family) {
  if (order < 1) throw std::invalid_argument("moment order must be >= 1");
  const Eigen::VectorXd& lambda = s.eigenvalues;
  const auto n = lambda.size();
  if (family == MomentFamily::Dual && !(lambda(0) > 1e-10 * lambda(n - 1)))
    throw SingularSampleError("dual moments need a strictly positive spectrum: min/max = " +
                              std::to_string(lambda(0) / lambda(n - 1)));
  MomentVector mv;
  mv.subject = MatrixSubject::S;
  mv.family = family;
  mv.rectangularity = s.config.rectangularity();
  mv.values.assign(static_cast<std::size_t>(order), 0.0);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double step = family == MomentFamily::Normal ? lambda(i) : 1.0 / lambda(i);
    double pw = 1.0;
    for (int k = 0; k < order; ++k) {
      pw *= step;
      mv.values[static_cast<std::size_t>(k)] += pw;
    }
  }
  for (double& v : mv.values) v /= static_cast<double>(n);
  return mv;
}

// Marchenko-Pastur reference for Sigma = identity: spectral edges
// (1 +- sqrt(r))^2, the density between them, and closed-form moments.
struct MpReference {
  double rectangularity = 0.0;
  double lower_edge = 0.0;
  double upper_edge = 0.0;

  double density(double lambda) const {
    if (lambda <= lower_edge || lambda >= upper_edge) return 0.0;
    const double arch = (lambda - lower_edge) * (upper_edge - lambda);
    return std::sqrt(arch) / (2.0 * std::numbers::pi_v<double> * rectangularity * lambda);
  }

  // k-th moment: sum_j binom(k, j) binom(k-1, j) r^j / (j + 1), the
  // Narayana-polynomial form of the spectral moments.
  double moment(int k) const {
    double sum = 0.0;
    double binom_k = 1.0;    // binom(k, j)
    double binom_km1 = 1.0;  // binom(k-1, j)
    double rpow = 1.0;
    for (int j = 0; j <= k - 1; ++j) {
      sum += binom_k * binom_km1 * rpow / (j + 1);
      binom_k *= static_cast<double>(k - j) / (j + 1);
      binom_km1 *= static_cast<double>(k - 1 - j) / (j + 1);
      rpow *= rectangularity;
    }
    return sum;
  }
};

inline MpReference mp_reference(double r) {
  if (!(r > 0.0) || !(r <= 1.0))
    throw RectangularityError("Marchenko-Pastur reference needs 0 < r <= 1, got " +
                              std::to_string(r));
  const double root = std::sqrt(r);
  return {r, (1.0 - root) * (1.0 - root), (1.0 + root) * (1.0 + root)};
}

// First three unnormalized traces tr S, tr S^2, tr S^3 straight from the
// matrix: the diagonal, the squared Frobenius norm, and the entrywise
// product of S^2 with conj(S). No eigendecomposition is involved, which
// keeps large Monte-Carlo trace ensembles cheap.
struct TraceTriple {
  double t1 = 0.0;
  double t2 = 0.0;
  double t3 = 0.0;
};

inline TraceTriple trace_triple(const Eigen::MatrixXd& s) {
  TraceTriple out;
  out.t1 = s.trace();
  out.t2 = s.squaredNorm();
  // tr S^3 = sum_ij (S^2)_ij S_ij for symmetric S; only the lower triangle of
  // S^2 is formed and off-diagonal terms are counted twice.
  Eigen::MatrixXd s2 = Eigen::MatrixXd::Zero(s.rows(), s.cols());
  s2.selfadjointView<Eigen::Lower>().rankUpdate(s, 1.0);
  double diag = 0.0, off = 0.0;
  for (Eigen::Index j = 0; j < s.cols(); ++j) {
    diag += s2(j, j) * s(j, j);
    for (Eigen::Index i = j + 1; i < s.rows(); ++i) off += s2(i, j) * s(i, j);
  }
  out.t3 = diag + 2.0 * off;
  return out;
}

inline TraceTriple trace_triple(const Eigen::MatrixXcd& s) {
  TraceTriple out;
  out.t1 = s.trace().real();
  out.t2 = s.squaredNorm();
  // tr S^3 = sum_ij (S^2)_ij conj(S_ij); Hermitian pairs contribute twice
  // their real part, so the lower triangle suffices.
  Eigen::MatrixXcd s2 = Eigen::MatrixXcd::Zero(s.rows(), s.cols());
  s2.selfadjointView<Eigen::Lower>().rankUpdate(s, 1.0);
  double diag = 0.0, off = 0.0;
  for (Eigen::Index j = 0; j < s.cols(); ++j) {
    diag += s2(j, j).real() * s(j, j).real();
    for (Eigen::Index i = j + 1; i < s.rows(); ++i)
      off += s2(i, j).real() * s(i, j).real() + s2(i, j).imag() * s(i, j).imag();
  }
  out.t3 = diag + 2.0 * off;
  return out;
}

inline TraceTriple trace_triple(const SampleSet& s) {
  if (std::holds_alternative<Eigen::MatrixXd>(s.s))
    return trace_triple(std::get<Eigen::MatrixXd>(s.s));
  return trace_triple(std::get<Eigen::MatrixXcd>(s.s));
}

// Draws a data matrix and reduces it straight to the trace triple of S,
// skipping the eigendecomposition. Used by trace-level Monte-Carlo loops.
inline TraceTriple sample_trace_triple(const SpectrumModel& model, int n, int t, FieldKind field,
                                       std::uint64_t seed) {
  if (field == FieldKind::Real)
    return trace_triple(detail::covariance_of(sample_data_real(model, n, t, seed), t));
  return trace_triple(detail::covariance_of(sample_data_complex(model, n, t, seed), t));
}

// One eigenvalue per line, 17 significant digits.
inline void write_eigenvalue_csv(const SampleSet& s, std::ostream& out) {
  out.precision(17);
  for (Eigen::Index i = 0; i < s.eigenvalues.size(); ++i) out << s.eigenvalues(i) << "\n";
}

inline void write_eigenvalue_csv(const SampleSet& s, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  write_eigenvalue_csv(s, out);
}

}  // namespace eigeninfer
