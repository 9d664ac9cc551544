#include <catch2/catch_amalgamated.hpp>

#include "eigeninfer/polynomial.hpp"

using namespace eigeninfer;

namespace {
Polynomial var(int nvars, int i) { return Polynomial::variable(nvars, i); }
}  // namespace

TEST_CASE("constants and variables") {
  Polynomial zero(3);
  CHECK(zero.is_zero());
  CHECK(zero.is_constant());
  CHECK(zero.constant_value() == 0);

  Polynomial c = Polynomial::constant(3, frac(2, 4));
  CHECK(c.is_constant());
  CHECK(c.constant_value() == frac(1, 2));

  Polynomial x = var(3, 0);
  CHECK_FALSE(x.is_constant());
  CHECK(x.term_count() == 1);
  CHECK(x.total_degree() == 1);
}

TEST_CASE("ring identities hold exactly") {
  const int n = 2;
  Polynomial a = var(n, 0);
  Polynomial b = var(n, 1);

  CHECK(pow(a + b, 2) == pow(a, 2) + Rational(2) * a * b + pow(b, 2));
  CHECK((a + b) * (a - b) == pow(a, 2) - pow(b, 2));
  CHECK((a - a).is_zero());
  CHECK(pow(a, 0) == Polynomial::constant(n, 1));

  Polynomial p = Rational(3) * pow(a, 2) * b - frac(1, 2) * b;
  CHECK(p * Polynomial::constant(n, 0) == Polynomial(n));
}

TEST_CASE("rational coefficients stay exact") {
  Polynomial x = var(1, 0);
  Polynomial p = frac(1, 3) * x + frac(1, 6) * x;
  Polynomial q = frac(1, 2) * x;
  CHECK(p == q);

  // 10 repeated additions of 1/10 give exactly 1.
  Polynomial acc(1);
  for (int i = 0; i < 10; ++i) acc += frac(1, 10) * x;
  CHECK(acc == x);
}

TEST_CASE("evaluation at rational and double points") {
  const int n = 2;
  Polynomial a = var(n, 0), b = var(n, 1);
  Polynomial p = pow(a, 3) - Rational(2) * a * b + Polynomial::constant(n, frac(5, 4));

  std::vector<Rational> rq{frac(1, 2), frac(3, 1)};
  Rational exact = p.evaluate<Rational>(rq);
  CHECK(exact == frac(1, 8) - Rational(3) + frac(5, 4));

  std::vector<double> rd{0.5, 3.0};
  CHECK(p.evaluate<double>(rd) == Catch::Approx(exact.get_d()).epsilon(1e-15));
}

TEST_CASE("monomial remap substitutes variables") {
  // p(v1, v2) = v2 - v1^2, remapped by v_K -> b * w_K  (b at index 0).
  Polynomial p = var(2, 1) - pow(var(2, 0), 2);
  Polynomial mapped = p.remap_monomials(3, [](const Polynomial::Exponents& e) {
    Polynomial::Exponents ne(3, 0);
    ne[0] = e[0] + e[1];
    ne[1] = e[0];
    ne[2] = e[1];
    return ne;
  });
  Polynomial expected = var(3, 0) * var(3, 2) - pow(var(3, 0), 2) * pow(var(3, 1), 2);
  CHECK(mapped == expected);
}

TEST_CASE("arity mismatches are rejected") {
  CHECK_THROWS_AS(var(2, 0) + var(3, 0), std::invalid_argument);
  CHECK_THROWS_AS(var(2, 0).evaluate<double>(std::vector<double>{1.0}),
                  std::invalid_argument);
  CHECK_THROWS_AS(Polynomial::variable(2, 5), std::out_of_range);
}
