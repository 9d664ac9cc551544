#pragma once

#include <stdexcept>
#include <vector>

#include "eigeninfer/polynomial.hpp"

namespace eigeninfer {

// Ring hooks the series code needs beyond +,-,*. Prototype arguments let
// context-carrying rings (Polynomial tracks its arity) build constants.
template <class T>
struct RingOps {
  static T zero_like(const T&) { return T(0); }
  static T one_like(const T&) { return T(1); }
  static T inverse(const T& x) { return T(1) / x; }
  static bool is_zero(const T& x) { return x == T(0); }
};

template <>
struct RingOps<Polynomial> {
  static Polynomial zero_like(const Polynomial& p) { return Polynomial(p.nvars()); }
  static Polynomial one_like(const Polynomial& p) {
    return Polynomial::constant(p.nvars(), 1);
  }
  // Only constants are invertible inside the polynomial ring. The tower
  // generators arrange for every reciprocal to hit constant term 1.
  static Polynomial inverse(const Polynomial& p) {
    Rational c = p.constant_value();
    if (c == 0) throw std::domain_error("inverting zero polynomial");
    return Polynomial::constant(p.nvars(), Rational(1) / c);
  }
  static bool is_zero(const Polynomial& p) { return p.is_zero(); }
};

// Truncated power series c[0] + c[1] x + ... + c[order] x^order over a
// commutative ring T. All binary operations require equal truncation orders.
template <class T>
class Series {
public:
  Series() = default;
  Series(int order, const T& zero) : c_(static_cast<std::size_t>(order) + 1, zero) {}

  int order() const { return static_cast<int>(c_.size()) - 1; }
  const T& operator[](int k) const { return c_[static_cast<std::size_t>(k)]; }
  T& operator[](int k) { return c_[static_cast<std::size_t>(k)]; }

private:
  std::vector<T> c_;
};

namespace detail {
template <class T>
void check_orders(const Series<T>& a, const Series<T>& b) {
  if (a.order() != b.order()) throw std::invalid_argument("series order mismatch");
}
}  // namespace detail

template <class T>
Series<T> operator+(const Series<T>& a, const Series<T>& b) {
  detail::check_orders(a, b);
  Series<T> s = a;
  for (int k = 0; k <= a.order(); ++k) s[k] = s[k] + b[k];
  return s;
}

template <class T>
Series<T> operator-(const Series<T>& a, const Series<T>& b) {
  detail::check_orders(a, b);
  Series<T> s = a;
  for (int k = 0; k <= a.order(); ++k) s[k] = s[k] - b[k];
  return s;
}

template <class T>
Series<T> scale(const Series<T>& a, const T& s) {
  Series<T> r = a;
  for (int k = 0; k <= a.order(); ++k) r[k] = r[k] * s;
  return r;
}

template <class T>
Series<T> mul(const Series<T>& a, const Series<T>& b) {
  detail::check_orders(a, b);
  const int n = a.order();
  const T zero = RingOps<T>::zero_like(a[0]);
  Series<T> s(n, zero);
  for (int i = 0; i <= n; ++i) {
    if (RingOps<T>::is_zero(a[i])) continue;
    for (int j = 0; i + j <= n; ++j) {
      if (RingOps<T>::is_zero(b[j])) continue;
      T p = a[i] * b[j];
      s[i + j] = s[i + j] + p;
    }
  }
  return s;
}

// Multiplication by x: shifts coefficients up one slot, dropping the top one.
template <class T>
Series<T> shift_up(const Series<T>& a) {
  Series<T> s(a.order(), RingOps<T>::zero_like(a[0]));
  for (int k = 1; k <= a.order(); ++k) s[k] = a[k - 1];
  return s;
}

// outer(inner(x)) for inner with zero constant term, by Horner evaluation.
template <class T>
Series<T> compose(const Series<T>& outer, const Series<T>& inner) {
  detail::check_orders(outer, inner);
  if (!RingOps<T>::is_zero(inner[0]))
    throw std::invalid_argument("composition requires zero inner constant term");
  const int n = outer.order();
  const T zero = RingOps<T>::zero_like(outer[0]);
  Series<T> acc(n, zero);
  acc[0] = outer[n];
  for (int k = n - 1; k >= 0; --k) {
    acc = mul(acc, inner);
    acc[0] = acc[0] + outer[k];
  }
  return acc;
}

// Multiplicative inverse; requires an invertible constant term.
template <class T>
Series<T> reciprocal(const Series<T>& a) {
  const int n = a.order();
  const T zero = RingOps<T>::zero_like(a[0]);
  Series<T> b(n, zero);
  b[0] = RingOps<T>::inverse(a[0]);
  for (int k = 1; k <= n; ++k) {
    T acc = zero;
    for (int i = 1; i <= k; ++i) {
      T p = a[i] * b[k - i];
      acc = acc + p;
    }
    T prod = b[0] * acc;
    b[k] = zero - prod;
  }
  return b;
}

}  // namespace eigeninfer
