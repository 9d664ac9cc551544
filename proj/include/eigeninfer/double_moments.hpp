#pragma once

#include <Eigen/Core>
#include <cmath>
#include <mutex>
#include <span>

#include "eigeninfer/moments.hpp"
#include "eigeninfer/relations.hpp"

namespace eigeninfer {

// O(1) covariance matrix of traces, Q_ij = lim N cov(tr S^i, tr S^j) for
// i, j = 1..k (dual: inverse traces), evaluated from the S-side moments.
// beta_scale = 2/beta multiplies every entry (1 for complex, 2 for real).
struct DoubleMomentMatrix {
  MomentFamily family = MomentFamily::Normal;
  double beta_scale = 1.0;
  Eigen::MatrixXd q;
};

namespace detail {

struct CompiledRelationSet {
  std::vector<CompiledPolynomial> upper;  // (i,j), i<=j, row-major in that order
  std::vector<int> denominator_powers;
  int k = 0;
};

inline const CompiledRelationSet& compiled_double_relations(RelationKind kind, int k) {
  static std::mutex mu;
  static std::map<std::pair<int, int>, CompiledRelationSet> cache;
  std::scoped_lock lock(mu);
  auto key = std::make_pair(static_cast<int>(kind), k);
  auto it = cache.find(key);
  if (it == cache.end()) {
    const RelationTable& table = generate_relations(kind, k);
    CompiledRelationSet set;
    set.k = k;
    for (const Relation& rln : table.relations) {
      set.upper.push_back(CompiledPolynomial::from(rln.value));
      set.denominator_powers.push_back(rln.denominator_power);
    }
    it = cache.emplace(key, std::move(set)).first;
  }
  return it->second;
}

inline Eigen::MatrixXd evaluate_double_matrix(const CompiledRelationSet& set,
                                              std::span<const double> vars,
                                              double denominator_base,
                                              double beta_scale) {
  const int k = set.k;
  Eigen::MatrixXd q(k, k);
  std::size_t idx = 0;
  for (int i = 1; i <= k; ++i)
    for (int j = i; j <= k; ++j, ++idx) {
      double v = set.upper[idx].evaluate(vars);
      for (int n = 0; n < set.denominator_powers[idx]; ++n) v /= denominator_base;
      v *= beta_scale;
      q(i - 1, j - 1) = v;
      q(j - 1, i - 1) = v;
    }
  return q;
}

}  // namespace detail

// Q from normal S moments alpha_1..alpha_2k (values[0..2k-1]).
inline DoubleMomentMatrix double_moments_from_single(const MomentVector& s_moments, int k,
                                                     double beta_scale = 1.0) {
  if (s_moments.family != MomentFamily::Normal)
    throw std::invalid_argument("double_moments_from_single expects normal moments");
  require_order(s_moments.order(), 2 * k, "double moments");
  const auto& set = detail::compiled_double_relations(RelationKind::DoubleMoment, k);
  DoubleMomentMatrix out;
  out.family = MomentFamily::Normal;
  out.beta_scale = beta_scale;
  out.q = detail::evaluate_double_matrix(
      set, std::span<const double>(s_moments.values.data(), static_cast<std::size_t>(2 * k)),
      1.0, beta_scale);
  return out;
}

// Q~ from dual S moments alpha_{-1}..alpha_{-(2k+2)}; entries carry the
// a2^(i+j) denominators, so the second dual moment must be healthy.
inline DoubleMomentMatrix dual_double_moments(const MomentVector& s_dual_moments, int k,
                                              double beta_scale = 1.0) {
  if (s_dual_moments.family != MomentFamily::Dual)
    throw std::invalid_argument("dual_double_moments expects dual moments");
  require_order(s_dual_moments.order(), 2 * k + 2, "dual double moments");
  const double a2 = s_dual_moments.values[1];
  if (!(a2 > 1e-150) || !std::isfinite(a2))
    throw DegenerateDenominatorError("second dual moment too small to divide by");
  const auto& set = detail::compiled_double_relations(RelationKind::DualDoubleMoment, k);
  // Table variables are a2..a_{2k+2}, i.e. values[1..2k+1].
  DoubleMomentMatrix out;
  out.family = MomentFamily::Dual;
  out.beta_scale = beta_scale;
  out.q = detail::evaluate_double_matrix(
      set,
      std::span<const double>(s_dual_moments.values.data() + 1,
                              static_cast<std::size_t>(2 * k + 1)),
      a2, beta_scale);
  return out;
}

}  // namespace eigeninfer
