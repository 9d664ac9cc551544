#pragma once

#include <gmpxx.h>

#include <functional>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace eigeninfer {

// Exact rational scalar used by the symbolic relation generator.
using Rational = mpq_class;

inline Rational frac(long num, long den) {
  Rational q(num, den);
  q.canonicalize();
  return q;
}

inline std::string to_string(const Rational& q) { return q.get_str(); }

// Sparse multivariate polynomial with exact rational coefficients.
// Every exponent vector has length nvars(); only nonzero terms are stored.
class Polynomial {
public:
  using Exponents = std::vector<int>;
  using TermMap = std::map<Exponents, Rational>;

  explicit Polynomial(int nvars = 0) : nvars_(nvars) {}

  static Polynomial constant(int nvars, const Rational& c) {
    Polynomial p(nvars);
    if (c != 0) p.terms_.emplace(Exponents(nvars, 0), c);
    return p;
  }

  static Polynomial variable(int nvars, int index, int exponent = 1) {
    if (index < 0 || index >= nvars) throw std::out_of_range("variable index");
    Polynomial p(nvars);
    Exponents e(nvars, 0);
    e[index] = exponent;
    p.terms_.emplace(std::move(e), Rational(1));
    return p;
  }

  int nvars() const { return nvars_; }
  bool is_zero() const { return terms_.empty(); }
  const TermMap& terms() const { return terms_; }
  std::size_t term_count() const { return terms_.size(); }

  bool is_constant() const {
    if (terms_.empty()) return true;
    if (terms_.size() > 1) return false;
    for (int e : terms_.begin()->first)
      if (e != 0) return false;
    return true;
  }

  Rational constant_value() const {
    if (terms_.empty()) return Rational(0);
    if (!is_constant()) throw std::domain_error("polynomial is not constant");
    return terms_.begin()->second;
  }

  int total_degree() const {
    int deg = 0;
    for (const auto& [e, c] : terms_) {
      int d = 0;
      for (int x : e) d += x;
      if (d > deg) deg = d;
    }
    return deg;
  }

  void add_term(const Exponents& e, const Rational& c) {
    if (c == 0) return;
    auto it = terms_.find(e);
    if (it == terms_.end()) {
      terms_.emplace(e, c);
      return;
    }
    it->second += c;
    if (it->second == 0) terms_.erase(it);
  }

  Polynomial& operator+=(const Polynomial& o) {
    check_ring(o);
    for (const auto& [e, c] : o.terms_) add_term(e, c);
    return *this;
  }

  Polynomial& operator-=(const Polynomial& o) {
    check_ring(o);
    for (const auto& [e, c] : o.terms_) {
      Rational neg = -c;
      add_term(e, neg);
    }
    return *this;
  }

  Polynomial& operator*=(const Rational& s) {
    if (s == 0) {
      terms_.clear();
      return *this;
    }
    for (auto& [e, c] : terms_) c *= s;
    return *this;
  }

  Polynomial& operator*=(const Polynomial& o) {
    *this = *this * o;
    return *this;
  }

  friend Polynomial operator+(Polynomial a, const Polynomial& b) { return a += b; }
  friend Polynomial operator-(Polynomial a, const Polynomial& b) { return a -= b; }
  friend Polynomial operator-(const Polynomial& a) {
    Polynomial p(a.nvars_);
    for (const auto& [e, c] : a.terms_) p.terms_.emplace(e, -c);
    return p;
  }

  friend Polynomial operator*(const Polynomial& a, const Polynomial& b) {
    a.check_ring(b);
    Polynomial p(a.nvars_);
    Exponents e(a.nvars_);
    for (const auto& [ea, ca] : a.terms_) {
      for (const auto& [eb, cb] : b.terms_) {
        for (int i = 0; i < a.nvars_; ++i) e[i] = ea[i] + eb[i];
        Rational c = ca * cb;
        p.add_term(e, c);
      }
    }
    return p;
  }

  friend Polynomial operator*(Polynomial a, const Rational& s) { return a *= s; }
  friend Polynomial operator*(const Rational& s, Polynomial a) { return a *= s; }

  friend bool operator==(const Polynomial& a, const Polynomial& b) {
    return a.nvars_ == b.nvars_ && a.terms_ == b.terms_;
  }

  // Rebuilds the polynomial in a ring with new_nvars variables, sending each
  // monomial through fn. Used for substitutions that stay monomial-to-monomial.
  Polynomial remap_monomials(int new_nvars,
                             const std::function<Exponents(const Exponents&)>& fn) const {
    Polynomial p(new_nvars);
    for (const auto& [e, c] : terms_) {
      Exponents ne = fn(e);
      if (static_cast<int>(ne.size()) != new_nvars)
        throw std::invalid_argument("remapped monomial has wrong arity");
      p.add_term(ne, c);
    }
    return p;
  }

  template <class F>
  F evaluate(std::span<const F> values) const {
    if (static_cast<int>(values.size()) != nvars_)
      throw std::invalid_argument("evaluation point has wrong arity");
    F acc{0};
    for (const auto& [e, c] : terms_) {
      F term = scalar_cast<F>(c);
      for (int i = 0; i < nvars_; ++i)
        for (int k = 0; k < e[i]; ++k) term = term * values[i];
      acc = acc + term;
    }
    return acc;
  }

private:
  template <class F>
  static F scalar_cast(const Rational& q) {
    if constexpr (std::is_same_v<F, Rational>)
      return q;
    else
      return static_cast<F>(q.get_d());
  }

  void check_ring(const Polynomial& o) const {
    if (nvars_ != o.nvars_) throw std::invalid_argument("polynomial arity mismatch");
  }

  int nvars_;
  TermMap terms_;
};

inline Polynomial pow(const Polynomial& base, int n) {
  if (n < 0) throw std::domain_error("negative polynomial power");
  Polynomial acc = Polynomial::constant(base.nvars(), 1);
  for (int i = 0; i < n; ++i) acc *= base;
  return acc;
}

}  // namespace eigeninfer
