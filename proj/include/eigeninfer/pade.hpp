#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "eigeninfer/moments.hpp"
#include "eigeninfer/spectrum_model.hpp"
#include "eigeninfer/towers.hpp"
#include "eigeninfer/wishart.hpp"

namespace eigeninfer {

struct RootFindingFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// [m-1/m] rational approximant to F(x) = 1 + sum_k alpha_k x^k, the moment
// generating function z G(z) written in x = 1/z. For an m-atom spectrum F is
// exactly rational: F(x) = sum_i p_i / (1 - Lambda_i x).
struct RationalApproximant {
  std::vector<double> numerator;    // A_0 .. A_{m-1}
  std::vector<double> denominator;  // B_0 .. B_m, B_0 = 1
  double condition = 0.0;           // singular value ratio of the Hankel system
  bool ill_conditioned = false;

  int order() const { return static_cast<int>(denominator.size()) - 1; }

  // Taylor coefficients alpha_1..alpha_K of A/B - 1, for re-expansion checks.
  std::vector<double> taylor_moments(int K) const {
    const int m = order();
    std::vector<double> f(static_cast<std::size_t>(K) + 1, 0.0);
    for (int k = 0; k <= K; ++k) {
      double v = k < m ? numerator[static_cast<std::size_t>(k)] : 0.0;
      for (int l = 1; l <= std::min(k, m); ++l)
        v -= denominator[static_cast<std::size_t>(l)] * f[static_cast<std::size_t>(k - l)];
      f[static_cast<std::size_t>(k)] = v;
    }
    return {f.begin() + 1, f.end()};
  }

  std::complex<double> numerator_at(std::complex<double> x) const {
    std::complex<double> acc = 0.0;
    for (auto it = numerator.rbegin(); it != numerator.rend(); ++it) acc = acc * x + *it;
    return acc;
  }

  std::complex<double> denominator_derivative_at(std::complex<double> x) const {
    std::complex<double> acc = 0.0;
    for (int l = order(); l >= 1; --l)
      acc = acc * x + static_cast<double>(l) * denominator[static_cast<std::size_t>(l)];
    return acc;
  }
};

struct PadeOptions {
  double condition_limit = 1e12;
};

// Denominator from the m x m Hankel system sum_{l=1..m} B_l F_{j-l} = -F_j
// for j = m..2m-1 (F_0 = 1, F_k = alpha_k), numerator by convolution. Solved
// by SVD so that rank-deficient systems (true atom count below m) still give
// the minimum-norm answer; those come back with ill_conditioned set.
inline RationalApproximant pade(std::span<const double> moments, int m,
                                const PadeOptions& options = {}) {
  if (m < 1) throw std::invalid_argument("pade order must be at least 1");
  require_order(static_cast<int>(moments.size()), 2 * m - 1, "pade");
  auto f = [&moments](int k) { return k == 0 ? 1.0 : moments[static_cast<std::size_t>(k - 1)]; };

  Eigen::MatrixXd h(m, m);
  Eigen::VectorXd rhs(m);
  for (int j = m; j <= 2 * m - 1; ++j) {
    for (int l = 1; l <= m; ++l) h(j - m, l - 1) = f(j - l);
    rhs(j - m) = -f(j);
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(h, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const double smax = svd.singularValues()(0);
  const double smin = svd.singularValues()(m - 1);
  const Eigen::VectorXd b = svd.solve(rhs);

  RationalApproximant out;
  out.condition = smin > 0.0 ? smax / smin : std::numeric_limits<double>::infinity();
  out.ill_conditioned = !(out.condition < options.condition_limit);
  out.denominator.assign(static_cast<std::size_t>(m) + 1, 0.0);
  out.denominator[0] = 1.0;
  for (int l = 1; l <= m; ++l) out.denominator[static_cast<std::size_t>(l)] = b(l - 1);
  out.numerator.assign(static_cast<std::size_t>(m), 0.0);
  for (int j = 0; j < m; ++j) {
    double v = 0.0;
    for (int l = 0; l <= j; ++l) v += out.denominator[static_cast<std::size_t>(l)] * f(j - l);
    out.numerator[static_cast<std::size_t>(j)] = v;
  }
  return out;
}

enum class AtomStatus { Ok, ComplexPair, NegativeValue, TinyWeight, OutOfRange };

inline const char* atom_status_name(AtomStatus s) {
  switch (s) {
    case AtomStatus::Ok: return "ok";
    case AtomStatus::ComplexPair: return "complex_pair";
    case AtomStatus::NegativeValue: return "negative_value";
    case AtomStatus::TinyWeight: return "tiny_weight";
    default: return "out_of_range";
  }
}

// One denominator root as seen in Lambda space, before any filtering.
struct AtomDiagnostic {
  std::complex<double> value;   // candidate atom of Sigma
  std::complex<double> weight;  // residue
  AtomStatus status = AtomStatus::Ok;
};

struct InferenceOptions {
  double imag_ratio_tol = 1e-6;  // |Im| / |root| above this is a complex pair
  double tiny_weight = 1e-3;     // accepted weights must reach this
  double atom_min = 1e-8;        // accepted atoms must lie in (atom_min, atom_max)
  double atom_max = 1e8;
  PadeOptions pade;
};

struct InferenceResult {
  MomentFamily family = MomentFamily::Normal;
  int m = 0;
  RationalApproximant approximant;
  std::vector<AtomDiagnostic> raw;
  // Atoms that passed every filter, weights renormalized; empty when all of
  // them were rejected.
  std::optional<SpectrumModel> model;
  double weight_sum_deviation = 0.0;  // |sum of accepted weights - 1| before renormalizing

  bool accepted() const { return model.has_value(); }
  int rejected_count() const {
    int n = 0;
    for (const auto& a : raw) n += a.status != AtomStatus::Ok;
    return n;
  }
};

namespace detail {

// Roots of B(x) in Lambda = 1/x space: eigenvalues of the companion matrix of
// z^m B(1/z) = z^m + B_1 z^{m-1} + ... + B_m, which is already monic.
inline std::vector<std::complex<double>> denominator_poles(const RationalApproximant& approx) {
  const int m = approx.order();
  if (m == 1) return {std::complex<double>(-approx.denominator[1], 0.0)};
  Eigen::MatrixXd companion = Eigen::MatrixXd::Zero(m, m);
  for (int i = 1; i < m; ++i) companion(i, i - 1) = 1.0;
  for (int i = 0; i < m; ++i)
    companion(i, m - 1) = -approx.denominator[static_cast<std::size_t>(m - i)];
  Eigen::EigenSolver<Eigen::MatrixXd> solver(companion);
  if (solver.info() != Eigen::Success)
    throw RootFindingFailure("companion matrix eigensolver did not converge");
  std::vector<std::complex<double>> roots(static_cast<std::size_t>(m));
  for (int i = 0; i < m; ++i) roots[static_cast<std::size_t>(i)] = solver.eigenvalues()(i);
  return roots;
}

inline AtomStatus classify_atom(std::complex<double> value, std::complex<double> weight,
                                const InferenceOptions& options) {
  if (!std::isfinite(value.real()) || !std::isfinite(value.imag()))
    return AtomStatus::OutOfRange;
  if (std::abs(value.imag()) > options.imag_ratio_tol * std::abs(value))
    return AtomStatus::ComplexPair;
  if (!(value.real() > 0.0)) return AtomStatus::NegativeValue;
  if (value.real() <= options.atom_min || value.real() >= options.atom_max)
    return AtomStatus::OutOfRange;
  if (!(weight.real() >= options.tiny_weight)) return AtomStatus::TinyWeight;
  return AtomStatus::Ok;
}

inline void classify_and_assemble(InferenceResult& out, const InferenceOptions& options) {
  for (auto& a : out.raw) a.status = classify_atom(a.value, a.weight, options);
  std::vector<double> values, weights;
  double sum = 0.0;
  for (const auto& a : out.raw) {
    if (a.status != AtomStatus::Ok) continue;
    values.push_back(a.value.real());
    weights.push_back(a.weight.real());
    sum += a.weight.real();
  }
  if (!values.empty()) {
    out.weight_sum_deviation = std::abs(sum - 1.0);
    out.model.emplace(values, weights, 1e-12, std::numeric_limits<double>::infinity());
  }
}

inline InferenceResult infer_from_sigma_moments(std::span<const double> sigma_moments, int m,
                                                MomentFamily family,
                                                const InferenceOptions& options) {
  InferenceResult out;
  out.family = family;
  out.m = m;
  out.approximant = pade(sigma_moments, m, options.pade);

  for (std::complex<double> pole : denominator_poles(out.approximant)) {
    const std::complex<double> x = 1.0 / pole;
    std::complex<double> weight =
        -pole * out.approximant.numerator_at(x) / out.approximant.denominator_derivative_at(x);
    AtomDiagnostic atom;
    // The dual pipeline feeds moments of the inverse spectrum, so its poles
    // are atoms of Sigma^-1 and map back through one more reciprocal.
    atom.value = family == MomentFamily::Dual ? 1.0 / pole : pole;
    atom.weight = weight;
    out.raw.push_back(atom);
  }
  classify_and_assemble(out, options);
  return out;
}

}  // namespace detail

// Analytic one-point estimator: backward tower to Sigma moments, Pade, poles
// and residues. The dual family works on inverse moments throughout and
// reports atoms of Sigma (the Sigma^-1 atoms inverted, weights unchanged).
inline InferenceResult infer_analytic(const MomentVector& s_moments, double r, int m,
                                      const InferenceOptions& options = {}) {
  if (s_moments.subject != MatrixSubject::S)
    throw std::invalid_argument("infer_analytic expects moments of the sample matrix");
  const int k = 2 * m - 1;
  require_order(s_moments.order(), k, "infer_analytic");
  if (s_moments.family == MomentFamily::Normal) {
    const MomentVector sigma = s_to_sigma(s_moments, r, k);
    return detail::infer_from_sigma_moments(sigma.values, m, MomentFamily::Normal, options);
  }
  const MomentVector sigma = dual_towers(s_moments, r, k, TowerDirection::SToSigma);
  return detail::infer_from_sigma_moments(sigma.values, m, MomentFamily::Dual, options);
}

inline InferenceResult infer_analytic(const SampleSet& sample, int m, MomentFamily family,
                                      const InferenceOptions& options = {}) {
  const MomentVector mv = empirical_moments(sample, 2 * m - 1, family);
  return infer_analytic(mv, sample.config.rectangularity(), m, options);
}

// ---------------------------------------------------------------------------
// Precision-parametric variant. Double moments stop being informative at
// strong spectral distortion: the backward dual tower at rectangularity r
// amplifies input rounding by roughly (alpha_{-1}^S / (1-r))^(K-1), so near
// r = 1 the Sigma moments behind a double-rounded input are only determined
// to ~1e-7 no matter how carefully the map is evaluated. Carrying a wider
// scalar (long double, __float128) end to end removes that ceiling. The
// towers are shared templates; here the Hankel solve, root polish and
// residues get wide counterparts. Results are rounded to double on return.

namespace detail {

template <class Real>
bool wide_is_finite(Real x) {
  return x == x && x - x == Real(0);
}

template <class Real>
Real wide_abs(Real x) {
  return x < Real(0) ? -x : x;
}

template <class Real>
Real norm_squared(const std::complex<Real>& z) {
  return z.real() * z.real() + z.imag() * z.imag();
}

// Denominator coefficients from the Hankel system, by Gaussian elimination
// with partial pivoting. The reported condition proxy is the pivot spread,
// cruder than a singular value ratio but adequate for flagging.
template <class Real>
std::vector<Real> wide_pade_denominator(std::span<const Real> moments, int m,
                                        Real& pivot_spread) {
  auto f = [&moments](int k) {
    return k == 0 ? Real(1) : moments[static_cast<std::size_t>(k - 1)];
  };
  std::vector<std::vector<Real>> a(static_cast<std::size_t>(m),
                                   std::vector<Real>(static_cast<std::size_t>(m) + 1));
  for (int j = m; j <= 2 * m - 1; ++j) {
    for (int l = 1; l <= m; ++l)
      a[static_cast<std::size_t>(j - m)][static_cast<std::size_t>(l - 1)] = f(j - l);
    a[static_cast<std::size_t>(j - m)][static_cast<std::size_t>(m)] = -f(j);
  }
  Real pivot_max(0), pivot_min(0);
  bool first = true;
  for (int col = 0; col < m; ++col) {
    int pivot = col;
    for (int row = col + 1; row < m; ++row)
      if (wide_abs(a[static_cast<std::size_t>(row)][static_cast<std::size_t>(col)]) >
          wide_abs(a[static_cast<std::size_t>(pivot)][static_cast<std::size_t>(col)]))
        pivot = row;
    std::swap(a[static_cast<std::size_t>(col)], a[static_cast<std::size_t>(pivot)]);
    const Real p = a[static_cast<std::size_t>(col)][static_cast<std::size_t>(col)];
    const Real ap = wide_abs(p);
    if (first || ap > pivot_max) pivot_max = ap;
    if (first || ap < pivot_min) pivot_min = ap;
    first = false;
    if (p == Real(0)) {
      // singular system: surface a unit denominator with no poles and let the
      // infinite condition estimate mark the result unusable
      pivot_spread = Real(0);
      std::vector<Real> unit(static_cast<std::size_t>(m) + 1, Real(0));
      unit[0] = Real(1);
      return unit;
    }
    for (int row = col + 1; row < m; ++row) {
      const Real factor =
          a[static_cast<std::size_t>(row)][static_cast<std::size_t>(col)] / p;
      for (int k = col; k <= m; ++k)
        a[static_cast<std::size_t>(row)][static_cast<std::size_t>(k)] -=
            factor * a[static_cast<std::size_t>(col)][static_cast<std::size_t>(k)];
    }
  }
  pivot_spread = pivot_min > Real(0) ? pivot_max / pivot_min : Real(0);
  std::vector<Real> b(static_cast<std::size_t>(m) + 1, Real(0));
  b[0] = Real(1);
  for (int row = m - 1; row >= 0; --row) {
    Real v = a[static_cast<std::size_t>(row)][static_cast<std::size_t>(m)];
    for (int col = row + 1; col < m; ++col)
      v -= a[static_cast<std::size_t>(row)][static_cast<std::size_t>(col)] *
           b[static_cast<std::size_t>(col) + 1];
    b[static_cast<std::size_t>(row) + 1] =
        v / a[static_cast<std::size_t>(row)][static_cast<std::size_t>(row)];
  }
  return b;
}

// One step short of machine precision for the scalar, found at runtime so
// no numeric_limits specialization is required of Real.
template <class Real>
Real wide_epsilon() {
  Real eps(1);
  while (Real(1) + eps / Real(2) != Real(1)) eps /= Real(2);
  return eps;
}

// Newton refinement of a denominator root in Lambda space, i.e. a root of
// p(z) = z^m B(1/z) = sum_l B_l z^(m-l), starting from a double-precision
// companion matrix seed. Complex arithmetic throughout; the polished value
// is kept only if it tightened the residual.
template <class Real>
std::complex<Real> polish_pole(const std::vector<Real>& b, std::complex<Real> z) {
  const int m = static_cast<int>(b.size()) - 1;
  auto p_and_dp = [&b, m](std::complex<Real> at) {
    std::complex<Real> p(Real(0), Real(0)), dp(Real(0), Real(0));
    for (int l = 0; l <= m; ++l) {
      dp = dp * at + p;
      p = p * at + b[static_cast<std::size_t>(l)];
    }
    return std::pair{p, dp};
  };
  std::complex<Real> best = z;
  Real best_norm = norm_squared(p_and_dp(z).first);
  for (int it = 0; it < 80; ++it) {
    const auto [p, dp] = p_and_dp(z);
    if (norm_squared(dp) == Real(0)) break;
    z -= p / dp;
    const Real n = norm_squared(p_and_dp(z).first);
    if (!wide_is_finite(n)) break;
    if (n < best_norm) {
      best_norm = n;
      best = z;
    } else if (it > 3) {
      break;
    }
  }
  return best;
}

template <class Real>
InferenceResult wide_infer_from_sigma_moments(std::span<const Real> sigma_moments, int m,
                                              MomentFamily family,
                                              const InferenceOptions& options) {
  InferenceResult out;
  out.family = family;
  out.m = m;

  Real pivot_spread(0);
  const std::vector<Real> b = wide_pade_denominator(sigma_moments, m, pivot_spread);
  std::vector<Real> numerator(static_cast<std::size_t>(m), Real(0));
  for (int j = 0; j < m; ++j) {
    Real v(0);
    for (int l = 0; l <= j; ++l)
      v += b[static_cast<std::size_t>(l)] *
           (j - l == 0 ? Real(1) : sigma_moments[static_cast<std::size_t>(j - l - 1)]);
    numerator[static_cast<std::size_t>(j)] = v;
  }

  out.approximant.denominator.resize(b.size());
  for (std::size_t i = 0; i < b.size(); ++i)
    out.approximant.denominator[i] = static_cast<double>(b[i]);
  out.approximant.numerator.resize(numerator.size());
  for (std::size_t i = 0; i < numerator.size(); ++i)
    out.approximant.numerator[i] = static_cast<double>(numerator[i]);
  out.approximant.condition =
      pivot_spread == Real(0) ? std::numeric_limits<double>::infinity()
                              : static_cast<double>(pivot_spread);
  out.approximant.ill_conditioned =
      !(out.approximant.condition < options.pade.condition_limit);

  for (std::complex<double> seed : denominator_poles(out.approximant)) {
    const std::complex<Real> pole =
        polish_pole(b, std::complex<Real>(Real(seed.real()), Real(seed.imag())));
    const std::complex<Real> x = std::complex<Real>(Real(1), Real(0)) / pole;
    std::complex<Real> dbdx(Real(0), Real(0));
    for (int l = m; l >= 1; --l)
      dbdx = dbdx * x + Real(l) * b[static_cast<std::size_t>(l)];
    std::complex<Real> ax(Real(0), Real(0));
    for (int l = m - 1; l >= 0; --l) ax = ax * x + numerator[static_cast<std::size_t>(l)];
    const std::complex<Real> weight = -pole * ax / dbdx;
    const std::complex<Real> value =
        family == MomentFamily::Dual ? std::complex<Real>(Real(1), Real(0)) / pole : pole;
    AtomDiagnostic atom;
    atom.value = {static_cast<double>(value.real()), static_cast<double>(value.imag())};
    atom.weight = {static_cast<double>(weight.real()), static_cast<double>(weight.imag())};
    out.raw.push_back(atom);
  }
  classify_and_assemble(out, options);
  return out;
}

}  // namespace detail

// infer_analytic carried in a caller-chosen scalar: the moment vector, both
// towers, the Hankel solve, the root polish and the residues all stay in
// Real, and only the reported result is rounded to double. With
// Real = __float128 the noiseless pipeline stays exact (to ~1e-20) even at
// r = 0.99 in the dual family, where double moments bottom out near 1e-4.
template <class Real>
InferenceResult infer_analytic_precise(std::span<const Real> s_moments, Real r, int m,
                                       MomentFamily family,
                                       const InferenceOptions& options = {}) {
  if (m < 1) throw std::invalid_argument("pade order must be at least 1");
  const int k = 2 * m - 1;
  require_order(static_cast<int>(s_moments.size()), k, "infer_analytic_precise");
  require_rectangularity(static_cast<double>(r), family);

  Series<Real> s(k, Real(0));
  for (int i = 1; i <= k; ++i) s[i] = s_moments[static_cast<std::size_t>(i - 1)];
  const Series<Real> sigma = family == MomentFamily::Normal
                                 ? backward_tower_series(s, r)
                                 : dual_backward_series(s, r);
  std::vector<Real> sigma_moments(static_cast<std::size_t>(k));
  for (int i = 1; i <= k; ++i) sigma_moments[static_cast<std::size_t>(i - 1)] = sigma[i];
  return detail::wide_infer_from_sigma_moments(std::span<const Real>(sigma_moments), m,
                                               family, options);
}

struct ScanEntry {
  InferenceResult result;
  int rejections = 0;
  // Relative L2 gap between the measured moments and the accepted model's
  // prediction of them, over the full measured order; infinite when nothing
  // was accepted.
  double residual = std::numeric_limits<double>::infinity();
};

struct ModelOrderScan {
  std::vector<ScanEntry> entries;
  int selected = -1;  // index into entries

  const InferenceResult& best() const {
    if (selected < 0) throw std::logic_error("empty model order scan");
    return entries[static_cast<std::size_t>(selected)].result;
  }
};

namespace detail {

inline double refit_residual(const InferenceResult& result, const MomentVector& measured,
                             double r) {
  if (!result.accepted()) return std::numeric_limits<double>::infinity();
  const int k = measured.order();
  const MomentVector sigma = moments_of_model(*result.model, k, measured.family);
  const MomentVector predicted =
      measured.family == MomentFamily::Normal
          ? sigma_to_s(sigma, r, k)
          : dual_towers(sigma, r, k, TowerDirection::SigmaToS);
  double acc = 0.0;
  for (int i = 0; i < k; ++i) {
    const double want = measured.values[static_cast<std::size_t>(i)];
    const double got = predicted.values[static_cast<std::size_t>(i)];
    const double d = (got - want) / std::max(1.0, std::abs(want));
    acc += d * d;
  }
  return std::sqrt(acc / k);
}

}  // namespace detail

// Runs infer_analytic for every candidate order and keeps the largest m whose
// atoms all survived filtering; when every order rejects something, falls
// back to the smallest refit residual. All candidates are scored against the
// same measured moments (at the largest order) so residuals are comparable.
inline ModelOrderScan model_order_scan(const MomentVector& s_moments, double r,
                                       std::span<const int> orders,
                                       const InferenceOptions& options = {}) {
  if (orders.empty()) throw std::invalid_argument("model_order_scan needs candidate orders");
  const int m_max = *std::max_element(orders.begin(), orders.end());
  require_order(s_moments.order(), 2 * m_max - 1, "model_order_scan");

  ModelOrderScan scan;
  for (int m : orders) {
    ScanEntry entry;
    entry.result = infer_analytic(s_moments, r, m, options);
    entry.rejections = entry.result.rejected_count();
    entry.residual = detail::refit_residual(entry.result, s_moments, r);
    scan.entries.push_back(std::move(entry));
  }

  int best_clean = -1, best_residual = -1;
  for (std::size_t i = 0; i < scan.entries.size(); ++i) {
    const ScanEntry& e = scan.entries[i];
    if (e.rejections == 0 && e.result.accepted() &&
        (best_clean < 0 ||
         e.result.m > scan.entries[static_cast<std::size_t>(best_clean)].result.m))
      best_clean = static_cast<int>(i);
    if (best_residual < 0 ||
        e.residual < scan.entries[static_cast<std::size_t>(best_residual)].residual)
      best_residual = static_cast<int>(i);
  }
  scan.selected = best_clean >= 0 ? best_clean : best_residual;
  return scan;
}

inline ModelOrderScan model_order_scan(const SampleSet& sample, std::span<const int> orders,
                                       MomentFamily family,
                                       const InferenceOptions& options = {}) {
  if (orders.empty()) throw std::invalid_argument("model_order_scan needs candidate orders");
  const int m_max = *std::max_element(orders.begin(), orders.end());
  const MomentVector mv = empirical_moments(sample, 2 * m_max - 1, family);
  return model_order_scan(mv, sample.config.rectangularity(), orders, options);
}

}  // namespace eigeninfer
