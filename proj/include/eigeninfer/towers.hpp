#pragma once

#include <span>
#include <vector>

#include "eigeninfer/moments.hpp"
#include "eigeninfer/series.hpp"

namespace eigeninfer {

// Moment towers connecting the population covariance Sigma and the sample
// covariance S at rectangularity r = N/T, as truncated-series fixed points.
//
// With m(x) = sum_{k>=1} alpha_k x^k collecting normal moments (x = 1/z of
// the resolvent argument), the forward map solves
//     m_S(x) = m_Sigma(x (1 + r m_S(x)))
// and the backward map composes m_S with the functional inverse of
// y(x) = x (1 + r m_S(x)), obtained from the fixed point
//     W(y) = y / (1 + r m_S(W(y))).
//
// The dual family collects moments of the inverse matrices,
// mt(x) = sum_{k>=1} alpha_{-k} x^k, and uses the conformal map
//     mt_S(x) = mt_Sigma(x t / (1 - (t-1) mt_S(x))),  t = 1/(1-r),
// with backward fixed point W(y) = y ((1-r) - r mt_S(W(y))).
//
// Each engine is templated on the coefficient ring so the same code serves
// numeric towers (T = double) and exact table generation (T = Polynomial,
// with r or t as a symbol). One fixed-point sweep settles one further order,
// so order+1 sweeps from zero are exact at the series truncation.

namespace detail {

template <class T>
Series<T> constant_series(int order, const T& value) {
  Series<T> s(order, RingOps<T>::zero_like(value));
  s[0] = value;
  return s;
}

}  // namespace detail

template <class T>
Series<T> forward_tower_series(const Series<T>& m_sigma, const T& r) {
  const int K = m_sigma.order();
  const T zero = RingOps<T>::zero_like(r);
  const T one = RingOps<T>::one_like(r);
  Series<T> one_s = detail::constant_series(K, one);
  Series<T> m(K, zero);
  for (int sweep = 0; sweep <= K; ++sweep) {
    Series<T> u = shift_up(one_s + scale(m, r));
    m = compose(m_sigma, u);
  }
  return m;
}

template <class T>
Series<T> backward_tower_series(const Series<T>& m_s, const T& r) {
  const int K = m_s.order();
  const T zero = RingOps<T>::zero_like(r);
  const T one = RingOps<T>::one_like(r);
  Series<T> one_s = detail::constant_series(K, one);
  Series<T> w(K, zero);
  for (int sweep = 0; sweep <= K; ++sweep)
    w = shift_up(reciprocal(one_s + scale(compose(m_s, w), r)));
  return compose(m_s, w);
}

// Dual forward engine in the variable t = 1/(1-r); keeping t symbolic makes
// the relations polynomial, since r = (t-1)/t always cancels.
template <class T>
Series<T> dual_forward_series(const Series<T>& m_sigma_dual, const T& t) {
  const int K = m_sigma_dual.order();
  const T zero = RingOps<T>::zero_like(t);
  const T one = RingOps<T>::one_like(t);
  const T t_minus_one = t - one;
  Series<T> one_s = detail::constant_series(K, one);
  Series<T> m(K, zero);
  for (int sweep = 0; sweep <= K; ++sweep) {
    Series<T> u = shift_up(scale(reciprocal(one_s - scale(m, t_minus_one)), t));
    m = compose(m_sigma_dual, u);
  }
  return m;
}

template <class T>
Series<T> dual_backward_series(const Series<T>& m_s_dual, const T& r) {
  const int K = m_s_dual.order();
  const T zero = RingOps<T>::zero_like(r);
  const T one = RingOps<T>::one_like(r);
  const T shrink = one - r;
  Series<T> one_minus_r = detail::constant_series(K, shrink);
  Series<T> w(K, zero);
  for (int sweep = 0; sweep <= K; ++sweep)
    w = shift_up(one_minus_r - scale(compose(m_s_dual, w), r));
  return compose(m_s_dual, w);
}

namespace detail {

inline Series<double> series_from_moments(std::span<const double> moments, int K) {
  Series<double> m(K, 0.0);
  for (int k = 1; k <= K; ++k) m[k] = moments[static_cast<std::size_t>(k - 1)];
  return m;
}

inline std::vector<double> moments_from_series(const Series<double>& s) {
  std::vector<double> out(static_cast<std::size_t>(s.order()));
  for (int k = 1; k <= s.order(); ++k) out[static_cast<std::size_t>(k - 1)] = s[k];
  return out;
}

}  // namespace detail

// alpha^S_1..K from alpha^Sigma_1..K.
inline std::vector<double> forward_tower(std::span<const double> sigma_moments, double r,
                                         int K) {
  require_order(static_cast<int>(sigma_moments.size()), K, "forward tower");
  require_rectangularity(r, MomentFamily::Normal);
  return detail::moments_from_series(
      forward_tower_series(detail::series_from_moments(sigma_moments, K), r));
}

// alpha^Sigma_1..K from alpha^S_1..K.
inline std::vector<double> backward_tower(std::span<const double> s_moments, double r,
                                          int K) {
  require_order(static_cast<int>(s_moments.size()), K, "backward tower");
  require_rectangularity(r, MomentFamily::Normal);
  return detail::moments_from_series(
      backward_tower_series(detail::series_from_moments(s_moments, K), r));
}

inline std::vector<double> dual_forward_tower(std::span<const double> sigma_dual_moments,
                                              double r, int K) {
  require_order(static_cast<int>(sigma_dual_moments.size()), K, "dual forward tower");
  require_rectangularity(r, MomentFamily::Dual);
  return detail::moments_from_series(dual_forward_series(
      detail::series_from_moments(sigma_dual_moments, K), 1.0 / (1.0 - r)));
}

inline std::vector<double> dual_backward_tower(std::span<const double> s_dual_moments,
                                               double r, int K) {
  require_order(static_cast<int>(s_dual_moments.size()), K, "dual backward tower");
  require_rectangularity(r, MomentFamily::Dual);
  return detail::moments_from_series(
      dual_backward_series(detail::series_from_moments(s_dual_moments, K), r));
}

// MomentVector front ends. Subjects and families are validated so that a
// vector can only flow through a tower that matches its declaration.

inline MomentVector sigma_to_s(const MomentVector& sigma, double r, int K) {
  if (sigma.subject != MatrixSubject::Sigma || sigma.family != MomentFamily::Normal)
    throw std::invalid_argument("sigma_to_s expects normal Sigma moments");
  MomentVector out;
  out.subject = MatrixSubject::S;
  out.family = MomentFamily::Normal;
  out.rectangularity = r;
  out.values = forward_tower(sigma.values, r, K);
  return out;
}

inline MomentVector s_to_sigma(const MomentVector& s, double r, int K) {
  if (s.subject != MatrixSubject::S || s.family != MomentFamily::Normal)
    throw std::invalid_argument("s_to_sigma expects normal S moments");
  MomentVector out;
  out.subject = MatrixSubject::Sigma;
  out.family = MomentFamily::Normal;
  out.values = backward_tower(s.values, r, K);
  return out;
}

inline MomentVector dual_towers(const MomentVector& in, double r, int K,
                                TowerDirection direction) {
  if (in.family != MomentFamily::Dual)
    throw std::invalid_argument("dual_towers expects dual moments");
  MomentVector out;
  out.family = MomentFamily::Dual;
  if (direction == TowerDirection::SigmaToS) {
    if (in.subject != MatrixSubject::Sigma)
      throw std::invalid_argument("dual_towers SigmaToS expects Sigma moments");
    out.subject = MatrixSubject::S;
    out.rectangularity = r;
    out.values = dual_forward_tower(in.values, r, K);
  } else {
    if (in.subject != MatrixSubject::S)
      throw std::invalid_argument("dual_towers SToSigma expects S moments");
    out.subject = MatrixSubject::Sigma;
    out.values = dual_backward_tower(in.values, r, K);
  }
  return out;
}

}  // namespace eigeninfer
