#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <Eigen/LU>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "eigeninfer/double_moments.hpp"
#include "eigeninfer/pade.hpp"
#include "eigeninfer/parallel.hpp"
#include "eigeninfer/spectrum_model.hpp"
#include "eigeninfer/towers.hpp"
#include "eigeninfer/wishart.hpp"

// Statistical (two-point) inference: the measured traces of one sample
// covariance matrix are compared against their expectations under a candidate
// spectrum through the Gaussian fluctuation objective
//
//   g(theta) = v' Q(theta)^-1 v + ln det Q(theta),
//   v_j      = tr S^j - N alpha_j^S(theta),
//
// where Q is the trace covariance matrix of the candidate (dual family: the
// traces are tr S^-j and Q comes from the dual relations). The minimizer is a
// derivative-free simplex over unconstrained coordinates, multi-started from
// a deterministic spread, optionally warm started from the analytic method.

namespace eigeninfer {

struct NoFeasibleMinimumError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Measured side of the objective. traces[j-1] holds tr S^j for the normal
// family and tr S^-j for the dual one, j = 1..k; n is the dimension of S.
struct Objective {
  std::vector<double> traces;
  double r = 0.0;
  int n = 0;
  int k = 0;
  MomentFamily family = MomentFamily::Normal;
  double beta_scale = 1.0;  // 2/beta: 1 for complex data, 2 for real
};

struct ObjectiveValue {
  double g = std::numeric_limits<double>::infinity();
  double det_q = 0.0;
  bool positive_definite = false;
};

inline Objective make_objective(const SampleSet& sample, int k, MomentFamily family) {
  const MomentVector mv = empirical_moments(sample, k, family);
  Objective obj;
  obj.traces.resize(static_cast<std::size_t>(k));
  for (int j = 0; j < k; ++j)
    obj.traces[static_cast<std::size_t>(j)] =
        mv.values[static_cast<std::size_t>(j)] * static_cast<double>(sample.config.n);
  obj.r = sample.config.rectangularity();
  obj.n = sample.config.n;
  obj.k = k;
  obj.family = family;
  obj.beta_scale = beta_scale(sample.config.field);
  return obj;
}

// Expected per-eigenvalue moments of S under theta: population moments of the
// candidate pushed through the forward tower.
inline std::vector<double> predicted_s_moments(const SpectrumModel& theta, double r, int K,
                                               MomentFamily family) {
  if (family == MomentFamily::Normal) return forward_tower(theta.moments(K), r, K);
  return dual_forward_tower(theta.dual_moments(K), r, K);
}

inline Eigen::VectorXd fluctuation_vector(std::span<const double> traces,
                                          const SpectrumModel& theta, double r, int n, int k,
                                          MomentFamily family) {
  require_order(static_cast<int>(traces.size()), k, "fluctuation vector");
  const std::vector<double> alpha = predicted_s_moments(theta, r, k, family);
  Eigen::VectorXd v(k);
  for (int j = 0; j < k; ++j)
    v(j) = traces[static_cast<std::size_t>(j)] -
           static_cast<double>(n) * alpha[static_cast<std::size_t>(j)];
  return v;
}

namespace detail {

// Power sums of the candidate atoms, family-signed exponent.
inline void atom_power_moments(std::span<const double> lambdas, std::span<const double> weights,
                               MomentFamily family, int K, std::vector<double>& out) {
  out.assign(static_cast<std::size_t>(K), 0.0);
  for (std::size_t i = 0; i < lambdas.size(); ++i) {
    const double base = family == MomentFamily::Normal ? lambdas[i] : 1.0 / lambdas[i];
    double pw = weights[i];
    for (int k = 0; k < K; ++k) {
      pw *= base;
      out[static_cast<std::size_t>(k)] += pw;
    }
  }
}

inline std::vector<double> candidate_s_moments(std::span<const double> lambdas,
                                               std::span<const double> weights, double r, int K,
                                               MomentFamily family, std::vector<double>& scratch) {
  atom_power_moments(lambdas, weights, family, K, scratch);
  if (family == MomentFamily::Normal) return forward_tower(scratch, r, K);
  return dual_forward_tower(scratch, r, K);
}

// g from an explicit (Q, v) pair. Solves Q y = v through a Cholesky
// factorization and refuses anything that is not numerically positive
// definite: ln det Q is undefined there and the minimizer treats the region
// as a hard barrier. The solve is verified (one refinement step allowed)
// against a 1e-10 backward-error bound; failing that the matrix is treated
// as singular. det Q is always reported, via pivoted LU when Cholesky fails,
// so callers can see how the barrier was hit.
inline ObjectiveValue gaussian_objective(const Eigen::MatrixXd& q, const Eigen::VectorXd& v) {
  constexpr double kInf = std::numeric_limits<double>::infinity();
  Eigen::LLT<Eigen::MatrixXd> llt(q);
  if (llt.info() != Eigen::Success)
    return {kInf, Eigen::PartialPivLU<Eigen::MatrixXd>(q).determinant(), false};
  Eigen::VectorXd y = llt.solve(v);
  const double scale = std::max(1.0, q.norm() * y.norm() + v.norm());
  if ((q * y - v).norm() > 1e-10 * scale) {
    y += llt.solve(v - q * y);
    if ((q * y - v).norm() > 1e-10 * scale)
      return {kInf, Eigen::PartialPivLU<Eigen::MatrixXd>(q).determinant(), false};
  }
  const auto& factor = llt.matrixLLT();
  double log_det = 0.0;
  double det = 1.0;
  for (Eigen::Index i = 0; i < q.rows(); ++i) {
    log_det += std::log(factor(i, i));
    det *= factor(i, i);
  }
  return {v.dot(y) + 2.0 * log_det, det * det, true};
}

inline ObjectiveValue objective_eval_core(const Objective& obj, std::span<const double> lambdas,
                                          std::span<const double> weights,
                                          std::vector<double>& scratch) {
  require_order(static_cast<int>(obj.traces.size()), obj.k, "objective traces");
  require_rectangularity(obj.r, obj.family);
  if (obj.n <= 0) throw std::invalid_argument("objective needs a positive matrix dimension");
  const int K = obj.family == MomentFamily::Normal ? 2 * obj.k : 2 * obj.k + 2;
  const std::vector<double> s_moments =
      candidate_s_moments(lambdas, weights, obj.r, K, obj.family, scratch);
  MomentVector mv;
  mv.subject = MatrixSubject::S;
  mv.family = obj.family;
  mv.rectangularity = obj.r;
  mv.values = s_moments;
  const DoubleMomentMatrix q = obj.family == MomentFamily::Normal
                                   ? double_moments_from_single(mv, obj.k, obj.beta_scale)
                                   : dual_double_moments(mv, obj.k, obj.beta_scale);
  Eigen::VectorXd v(obj.k);
  for (int j = 0; j < obj.k; ++j)
    v(j) = obj.traces[static_cast<std::size_t>(j)] -
           static_cast<double>(obj.n) * s_moments[static_cast<std::size_t>(j)];
  return gaussian_objective(q.q, v);
}

}  // namespace detail

// Throws DegenerateDenominatorError when the dual relations cannot divide by
// the candidate's second dual moment.
inline ObjectiveValue objective_eval(const Objective& obj, const SpectrumModel& theta) {
  std::vector<double> lambdas, weights, scratch;
  for (const auto& a : theta.atoms()) {
    lambdas.push_back(a.value);
    weights.push_back(a.weight);
  }
  return detail::objective_eval_core(obj, lambdas, weights, scratch);
}

// ---------------------------------------------------------------------------
// Minimizer coordinates. x[0..m-1] are log eigenvalues; x[m..2m-2] are
// stick-breaking logits, so every real vector decodes to a feasible candidate
// (positive atoms, weights in (0,1) summing to one).

inline void coordinates_to_atoms(const Eigen::VectorXd& x, int m, std::vector<double>& lambdas,
                                 std::vector<double>& weights) {
  lambdas.resize(static_cast<std::size_t>(m));
  weights.resize(static_cast<std::size_t>(m));
  for (int i = 0; i < m; ++i) lambdas[static_cast<std::size_t>(i)] = std::exp(x(i));
  double remaining = 1.0;
  for (int i = 0; i + 1 < m; ++i) {
    const double share = remaining / (1.0 + std::exp(-x(m + i)));
    weights[static_cast<std::size_t>(i)] = share;
    remaining -= share;
  }
  weights[static_cast<std::size_t>(m - 1)] = remaining;
}

namespace detail {

// Pads or trims a warm-start model to exactly m atoms: extra atoms drop from
// the lightest up, a short atom list splits its heaviest atom into a close
// pair until the count fits.
inline void resize_candidate(std::vector<double>& lambdas, std::vector<double>& weights, int m) {
  while (static_cast<int>(lambdas.size()) > m) {
    std::size_t lightest = 0;
    for (std::size_t i = 1; i < weights.size(); ++i)
      if (weights[i] < weights[lightest]) lightest = i;
    lambdas.erase(lambdas.begin() + static_cast<std::ptrdiff_t>(lightest));
    weights.erase(weights.begin() + static_cast<std::ptrdiff_t>(lightest));
  }
  while (static_cast<int>(lambdas.size()) < m) {
    std::size_t heaviest = 0;
    for (std::size_t i = 1; i < weights.size(); ++i)
      if (weights[i] > weights[heaviest]) heaviest = i;
    const double value = lambdas[heaviest];
    const double weight = weights[heaviest];
    lambdas[heaviest] = value * 1.05;
    weights[heaviest] = weight / 2.0;
    lambdas.push_back(value / 1.05);
    weights.push_back(weight / 2.0);
  }
  double sum = 0.0;
  for (double w : weights) sum += w;
  for (double& w : weights) w /= sum;
}

}  // namespace detail

inline Eigen::VectorXd atoms_to_coordinates(const SpectrumModel& theta, int m) {
  std::vector<double> lambdas, weights;
  for (const auto& a : theta.atoms()) {
    lambdas.push_back(a.value);
    weights.push_back(a.weight);
  }
  detail::resize_candidate(lambdas, weights, m);
  Eigen::VectorXd x(2 * m - 1);
  for (int i = 0; i < m; ++i) x(i) = std::log(lambdas[static_cast<std::size_t>(i)]);
  double remaining = 1.0;
  for (int i = 0; i + 1 < m; ++i) {
    double share = weights[static_cast<std::size_t>(i)] / remaining;
    share = std::clamp(share, 1e-12, 1.0 - 1e-12);
    x(m + i) = std::log(share / (1.0 - share));
    remaining -= weights[static_cast<std::size_t>(i)];
  }
  return x;
}

inline ObjectiveValue objective_at_coordinates(const Objective& obj, int m,
                                               const Eigen::VectorXd& x) {
  std::vector<double> lambdas, weights, scratch;
  coordinates_to_atoms(x, m, lambdas, weights);
  return detail::objective_eval_core(obj, lambdas, weights, scratch);
}

// ---------------------------------------------------------------------------
// Derivative-free simplex minimizer (Nelder-Mead with the standard
// reflection/expansion/contraction/shrink coefficients). Infinite objective
// values are legal; an all-infinite simplex shrinks in place and terminates
// on the diameter criterion.

struct SimplexOptions {
  double diameter_tol = 1e-8;
  int max_evaluations = 20000;
  double initial_step = 0.25;
  double reflection = 1.0;
  double expansion = 2.0;
  double contraction = 0.5;
  double shrink = 0.5;
};

struct SimplexResult {
  Eigen::VectorXd x;
  double value = std::numeric_limits<double>::infinity();
  int evaluations = 0;
  bool converged = false;  // diameter criterion met before the budget ran out
};

template <class F>
SimplexResult nelder_mead(F&& f, const Eigen::VectorXd& start, const SimplexOptions& options = {}) {
  const int d = static_cast<int>(start.size());
  const int count = d + 1;
  std::vector<Eigen::VectorXd> xs(static_cast<std::size_t>(count));
  std::vector<double> values(static_cast<std::size_t>(count));
  std::vector<int> order(static_cast<std::size_t>(count));
  int evaluations = 0;
  auto eval = [&](const Eigen::VectorXd& x) {
    ++evaluations;
    return f(x);
  };
  xs[0] = start;
  values[0] = eval(start);
  for (int i = 0; i < d; ++i) {
    Eigen::VectorXd x = start;
    x(i) += options.initial_step;
    xs[static_cast<std::size_t>(i + 1)] = std::move(x);
    values[static_cast<std::size_t>(i + 1)] = eval(xs[static_cast<std::size_t>(i + 1)]);
  }

  SimplexResult result;
  for (;;) {
    for (int i = 0; i < count; ++i) order[static_cast<std::size_t>(i)] = i;
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
      return values[static_cast<std::size_t>(a)] < values[static_cast<std::size_t>(b)];
    });
    const int best = order[0];
    const int second_worst = order[static_cast<std::size_t>(count - 2)];
    const int worst = order[static_cast<std::size_t>(count - 1)];

    double diameter = 0.0;
    for (int i = 0; i < count; ++i)
      diameter = std::max(diameter, (xs[static_cast<std::size_t>(i)] -
                                     xs[static_cast<std::size_t>(best)])
                                        .cwiseAbs()
                                        .maxCoeff());
    if (diameter < options.diameter_tol) {
      result.converged = true;
      break;
    }
    if (evaluations >= options.max_evaluations) break;

    Eigen::VectorXd centroid = Eigen::VectorXd::Zero(d);
    for (int i = 0; i < count; ++i)
      if (i != worst) centroid += xs[static_cast<std::size_t>(i)];
    centroid /= static_cast<double>(d);

    const Eigen::VectorXd away = centroid - xs[static_cast<std::size_t>(worst)];
    Eigen::VectorXd reflected = centroid + options.reflection * away;
    const double f_reflected = eval(reflected);

    if (f_reflected < values[static_cast<std::size_t>(best)]) {
      Eigen::VectorXd expanded = centroid + options.expansion * away;
      const double f_expanded = eval(expanded);
      if (f_expanded < f_reflected) {
        xs[static_cast<std::size_t>(worst)] = std::move(expanded);
        values[static_cast<std::size_t>(worst)] = f_expanded;
      } else {
        xs[static_cast<std::size_t>(worst)] = std::move(reflected);
        values[static_cast<std::size_t>(worst)] = f_reflected;
      }
      continue;
    }
    if (f_reflected < values[static_cast<std::size_t>(second_worst)]) {
      xs[static_cast<std::size_t>(worst)] = std::move(reflected);
      values[static_cast<std::size_t>(worst)] = f_reflected;
      continue;
    }
    if (f_reflected < values[static_cast<std::size_t>(worst)]) {
      Eigen::VectorXd contracted = centroid + options.contraction * (reflected - centroid);
      const double f_contracted = eval(contracted);
      if (f_contracted <= f_reflected) {
        xs[static_cast<std::size_t>(worst)] = std::move(contracted);
        values[static_cast<std::size_t>(worst)] = f_contracted;
        continue;
      }
    } else {
      Eigen::VectorXd contracted =
          centroid - options.contraction * (centroid - xs[static_cast<std::size_t>(worst)]);
      const double f_contracted = eval(contracted);
      if (f_contracted < values[static_cast<std::size_t>(worst)]) {
        xs[static_cast<std::size_t>(worst)] = std::move(contracted);
        values[static_cast<std::size_t>(worst)] = f_contracted;
        continue;
      }
    }
    for (int i = 0; i < count; ++i) {
      if (i == best) continue;
      xs[static_cast<std::size_t>(i)] =
          xs[static_cast<std::size_t>(best)] +
          options.shrink * (xs[static_cast<std::size_t>(i)] - xs[static_cast<std::size_t>(best)]);
      values[static_cast<std::size_t>(i)] = eval(xs[static_cast<std::size_t>(i)]);
    }
  }

  int best = 0;
  for (int i = 1; i < count; ++i)
    if (values[static_cast<std::size_t>(i)] < values[static_cast<std::size_t>(best)]) best = i;
  result.x = xs[static_cast<std::size_t>(best)];
  result.value = values[static_cast<std::size_t>(best)];
  result.evaluations = evaluations;
  return result;
}

// ---------------------------------------------------------------------------
// Multi-start minimization of the objective.

struct StatisticalOptions {
  int starts = 8;  // total starts; a warm start occupies the first slot
  SimplexOptions simplex;
  InferenceOptions filter;  // atom acceptance thresholds for the reported model
  double log_box = 2.302585092994046;  // ln 10: half-width of the log-eigenvalue start box
  double logit_box = 2.5;              // half-width of the stick-breaking logit start box
  int workers = 0;                     // 0 = hardware count (env-capped)
};

struct StatisticalResult : InferenceResult {
  double g = std::numeric_limits<double>::infinity();
  double det_q = 0.0;
  int evaluations = 0;      // objective evaluations summed over all starts
  int feasible_starts = 0;  // starts whose final point had positive definite Q
  bool hit_nonpositive = false;  // some iterate left the positive definite region
};

namespace detail {

// Levels 0..count-1 in a fixed shuffled order per coordinate, so the starts
// form a Latin hypercube that is identical on every run. The key is an
// arbitrary constant; only its fixedness matters.
inline std::vector<int> start_levels(int coordinate, int count) {
  std::vector<int> levels(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) levels[static_cast<std::size_t>(i)] = i;
  Philox4x32 rng(0x696e666572ull + 0x9E3779B97F4A7C15ull * static_cast<std::uint64_t>(coordinate));
  for (int i = count - 1; i > 0; --i) {
    const int j = static_cast<int>(rng.next_u32() % static_cast<std::uint32_t>(i + 1));
    std::swap(levels[static_cast<std::size_t>(i)], levels[static_cast<std::size_t>(j)]);
  }
  return levels;
}

// Center of the log-eigenvalue start box: the scale the first measured trace
// suggests. Dual traces see the harmonic mean through the tower's (1-r).
inline double start_center(const Objective& obj) {
  const double first = obj.traces.empty() ? 1.0 : obj.traces[0] / static_cast<double>(obj.n);
  double anchor = 1.0;
  if (obj.family == MomentFamily::Normal) {
    anchor = first;
  } else if (first > 0.0) {
    anchor = 1.0 / ((1.0 - obj.r) * first);
  }
  if (!(anchor > 0.0) || !std::isfinite(anchor)) anchor = 1.0;
  return std::log(anchor);
}

}  // namespace detail

inline StatisticalResult infer_statistical(const Objective& obj, int m,
                                           std::optional<SpectrumModel> warm_start = {},
                                           const StatisticalOptions& options = {}) {
  if (obj.k < 3 || obj.k > 5)
    throw std::invalid_argument("statistical inference supports k = 3, 4 or 5");
  if (m < 2 || m > 3) throw std::invalid_argument("statistical inference supports m = 2 or 3");
  if (2 * m - 1 > obj.k)
    throw std::invalid_argument("Q must be at least (2m-1) x (2m-1): k >= " +
                                std::to_string(2 * m - 1) + " needed for m = " + std::to_string(m));
  require_order(static_cast<int>(obj.traces.size()), obj.k, "statistical traces");

  const int d = 2 * m - 1;
  const int starts = std::max(1, options.starts);
  std::vector<Eigen::VectorXd> start_points;
  start_points.reserve(static_cast<std::size_t>(starts));
  if (warm_start) start_points.push_back(atoms_to_coordinates(*warm_start, m));

  const int spread = starts - static_cast<int>(start_points.size());
  if (spread > 0) {
    const double center = detail::start_center(obj);
    std::vector<std::vector<int>> levels(static_cast<std::size_t>(d));
    for (int c = 0; c < d; ++c) levels[static_cast<std::size_t>(c)] = detail::start_levels(c, spread);
    for (int s = 0; s < spread; ++s) {
      Eigen::VectorXd x(d);
      for (int c = 0; c < d; ++c) {
        const double unit =
            2.0 * (static_cast<double>(levels[static_cast<std::size_t>(c)][static_cast<std::size_t>(s)]) + 0.5) /
                static_cast<double>(spread) -
            1.0;
        x(c) = c < m ? center + options.log_box * unit : options.logit_box * unit;
      }
      start_points.push_back(std::move(x));
    }
  }

  struct StartOutcome {
    SimplexResult run;
    bool hit_nonpositive = false;
  };
  std::vector<StartOutcome> outcomes(start_points.size());
  parallel_for(static_cast<int>(start_points.size()), worker_count(options.workers), [&](int i) {
    StartOutcome& outcome = outcomes[static_cast<std::size_t>(i)];
    std::vector<double> lambdas, weights, scratch;
    auto f = [&](const Eigen::VectorXd& x) {
      coordinates_to_atoms(x, m, lambdas, weights);
      try {
        const ObjectiveValue value = detail::objective_eval_core(obj, lambdas, weights, scratch);
        if (!value.positive_definite) outcome.hit_nonpositive = true;
        return value.g;
      } catch (const DegenerateDenominatorError&) {
        return std::numeric_limits<double>::infinity();
      }
    };
    outcome.run = nelder_mead(f, start_points[static_cast<std::size_t>(i)], options.simplex);
  });

  StatisticalResult result;
  result.family = obj.family;
  result.m = m;
  int best = -1;
  for (std::size_t i = 0; i < outcomes.size(); ++i) {
    result.evaluations += outcomes[i].run.evaluations;
    result.hit_nonpositive = result.hit_nonpositive || outcomes[i].hit_nonpositive;
    if (std::isfinite(outcomes[i].run.value)) {
      ++result.feasible_starts;
      if (best < 0 || outcomes[i].run.value < outcomes[static_cast<std::size_t>(best)].run.value)
        best = static_cast<int>(i);
    }
  }
  if (best < 0)
    throw NoFeasibleMinimumError(
        "every start terminated outside the positive definite region (" +
        std::to_string(outcomes.size()) + " starts)");

  const SimplexResult& winner = outcomes[static_cast<std::size_t>(best)].run;
  std::vector<double> lambdas, weights;
  coordinates_to_atoms(winner.x, m, lambdas, weights);
  for (int i = 0; i < m; ++i)
    result.raw.push_back({std::complex<double>(lambdas[static_cast<std::size_t>(i)], 0.0),
                          std::complex<double>(weights[static_cast<std::size_t>(i)], 0.0),
                          AtomStatus::Ok});
  detail::classify_and_assemble(result, options.filter);
  const ObjectiveValue at_minimum = objective_at_coordinates(obj, m, winner.x);
  result.g = at_minimum.g;
  result.det_q = at_minimum.det_q;
  return result;
}

inline StatisticalResult infer_statistical(const SampleSet& sample, int k, MomentFamily family,
                                           std::optional<SpectrumModel> warm_start, int m,
                                           const StatisticalOptions& options = {}) {
  return infer_statistical(make_objective(sample, k, family), m, std::move(warm_start), options);
}

// ---------------------------------------------------------------------------
// Sign of det Q across the two-atom parameter plane: first atom at lambda_s
// with weight p, second atom fixed at 1. The sign is independent of the
// beta scaling (det(cQ) = c^k det Q with c > 0), so the maps use beta_scale 1.

inline double theta_detq(const SpectrumModel& theta, double r, int k, MomentFamily family,
                         double beta_scale = 1.0) {
  const int K = family == MomentFamily::Normal ? 2 * k : 2 * k + 2;
  MomentVector mv;
  mv.subject = MatrixSubject::S;
  mv.family = family;
  mv.rectangularity = r;
  mv.values = predicted_s_moments(theta, r, K, family);
  const DoubleMomentMatrix q = family == MomentFamily::Normal
                                   ? double_moments_from_single(mv, k, beta_scale)
                                   : dual_double_moments(mv, k, beta_scale);
  return Eigen::PartialPivLU<Eigen::MatrixXd>(q.q).determinant();
}

struct SignMapGrid {
  double r = 0.0;
  int k = 0;
  MomentFamily family = MomentFamily::Normal;
  std::vector<double> lambda_s;  // column coordinates: first atom value
  std::vector<double> p;         // row coordinates: first atom weight
  double zero_tol = 0.0;
  std::vector<int> signs;  // signs[row * width + col], -1 / 0 / +1

  int width() const { return static_cast<int>(lambda_s.size()); }
  int height() const { return static_cast<int>(p.size()); }
  int sign_at(int row, int col) const {
    return signs[static_cast<std::size_t>(row) * lambda_s.size() + static_cast<std::size_t>(col)];
  }
  double negative_fraction() const {
    if (signs.empty()) return 0.0;
    std::size_t negative = 0;
    for (int s : signs) negative += s < 0;
    return static_cast<double>(negative) / static_cast<double>(signs.size());
  }
};

// count cell centers spanning (lo, hi): the endpoints themselves are excluded,
// which keeps p strictly inside (0, 1) and lambda_s positive.
inline std::vector<double> cell_centers(double lo, double hi, int count) {
  if (count < 1) throw std::invalid_argument("grid needs at least one cell");
  std::vector<double> centers(static_cast<std::size_t>(count));
  const double h = (hi - lo) / static_cast<double>(count);
  for (int i = 0; i < count; ++i)
    centers[static_cast<std::size_t>(i)] = lo + (static_cast<double>(i) + 0.5) * h;
  return centers;
}

inline SignMapGrid detq_sign_map(double r, int k, MomentFamily family,
                                 std::vector<double> lambda_s, std::vector<double> p,
                                 double zero_tol = 1e-12, int workers = 0) {
  require_rectangularity(r, family);
  SignMapGrid grid;
  grid.r = r;
  grid.k = k;
  grid.family = family;
  grid.lambda_s = std::move(lambda_s);
  grid.p = std::move(p);
  grid.zero_tol = zero_tol;
  grid.signs.assign(grid.lambda_s.size() * grid.p.size(), 0);
  const int width = grid.width();
  const int cells = width * grid.height();
  parallel_for(cells, worker_count(workers), [&](int cell) {
    const int row = cell / width;
    const int col = cell % width;
    const double ls = grid.lambda_s[static_cast<std::size_t>(col)];
    const double weight = grid.p[static_cast<std::size_t>(row)];
    int sign = 0;
    try {
      const SpectrumModel theta({ls, 1.0}, {weight, 1.0 - weight});
      const double det = theta_detq(theta, r, k, family);
      if (det > zero_tol)
        sign = 1;
      else if (det < -zero_tol)
        sign = -1;
    } catch (const DegenerateDenominatorError&) {
      sign = 0;  // dual relations could not divide; mark the cell near-zero
    }
    grid.signs[static_cast<std::size_t>(cell)] = sign;
  });
  return grid;
}

// Triples in row order: p ascending outer, lambda_s ascending inner.
inline void write_sign_map_csv(const SignMapGrid& grid, std::ostream& out) {
  out.precision(17);
  out << "lambda_s,p,sign\n";
  for (int row = 0; row < grid.height(); ++row)
    for (int col = 0; col < grid.width(); ++col)
      out << grid.lambda_s[static_cast<std::size_t>(col)] << ','
          << grid.p[static_cast<std::size_t>(row)] << ',' << grid.sign_at(row, col) << "\n";
}

inline void write_sign_map_csv(const SignMapGrid& grid, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  write_sign_map_csv(grid, out);
}

// Plain graymap, one pixel per cell: negative 0, near-zero 128, positive 255.
// The top image row is the largest p, so the picture reads like a plot.
inline void write_sign_map_pgm(const SignMapGrid& grid, std::ostream& out) {
  out << "P2\n" << grid.width() << " " << grid.height() << "\n255\n";
  for (int row = grid.height() - 1; row >= 0; --row) {
    for (int col = 0; col < grid.width(); ++col) {
      const int sign = grid.sign_at(row, col);
      out << (sign < 0 ? 0 : sign == 0 ? 128 : 255);
      out << (col + 1 < grid.width() ? ' ' : '\n');
    }
  }
}

inline void write_sign_map_pgm(const SignMapGrid& grid, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  write_sign_map_pgm(grid, out);
}

}  // namespace eigeninfer
