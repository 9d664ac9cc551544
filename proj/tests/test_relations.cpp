#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "eigeninfer/double_moments.hpp"
#include "eigeninfer/relations.hpp"
#include "published_tables.hpp"

using namespace eigeninfer;

namespace {

Rational R(long n) { return Rational(n); }

const Polynomial& entry(const RelationTable& t, int i, int j) {
  for (const Relation& rln : t.relations)
    if (rln.i == i && rln.j == j) return rln.value;
  throw std::out_of_range("no such relation");
}

int denom(const RelationTable& t, int i, int j) {
  for (const Relation& rln : t.relations)
    if (rln.i == i && rln.j == j) return rln.denominator_power;
  throw std::out_of_range("no such relation");
}

}  // namespace

TEST_CASE("trace covariances match the published table") {
  const RelationTable t = generate_relations(RelationKind::DoubleMoment, 5);
  REQUIRE(t.relations.size() == 15);
  REQUIRE(t.variables.size() == 10);

  for (const published::Entry& e : published::trace_covariances()) {
    INFO("entry (" << e.i << "," << e.j << ")");
    CHECK(entry(t, e.i, e.j) == e.value);
    CHECK(denom(t, e.i, e.j) == e.denominator_power);
  }

  // The (5,5) expansion is known to carry 42 distinct monomials.
  CHECK(entry(t, 5, 5).term_count() == 42);
}

TEST_CASE("dual trace covariances match the published table") {
  const RelationTable t = generate_relations(RelationKind::DualDoubleMoment, 5);
  REQUIRE(t.relations.size() == 15);
  REQUIRE(t.variables.size() == 11);
  REQUIRE(t.variables.front() == "a2");
  REQUIRE(t.variables.back() == "a12");

  for (const published::Entry& e : published::dual_trace_covariances()) {
    INFO("entry (" << e.i << "," << e.j << ")");
    CHECK(entry(t, e.i, e.j) == e.value);
    CHECK(denom(t, e.i, e.j) == e.i + e.j);
    CHECK(e.denominator_power == e.i + e.j);
  }
}

TEST_CASE("tower tables match the published low orders") {
  SECTION("forward") {
    const RelationTable t = generate_relations(RelationKind::ForwardTower, 3);
    REQUIRE(t.variables == std::vector<std::string>{"r", "a1", "a2", "a3"});
    const int n = 4;
    const Polynomial r = Polynomial::variable(n, 0), a1 = Polynomial::variable(n, 1),
                     a2 = Polynomial::variable(n, 2), a3 = Polynomial::variable(n, 3);
    CHECK(entry(t, 1, 0) == a1);
    CHECK(entry(t, 2, 0) == a2 + r * pow(a1, 2));
    CHECK(entry(t, 3, 0) == a3 + R(3) * r * a1 * a2 + pow(r, 2) * pow(a1, 3));
  }
  SECTION("backward") {
    const RelationTable t = generate_relations(RelationKind::BackwardTower, 3);
    const int n = 4;
    const Polynomial r = Polynomial::variable(n, 0), a1 = Polynomial::variable(n, 1),
                     a2 = Polynomial::variable(n, 2), a3 = Polynomial::variable(n, 3);
    CHECK(entry(t, 1, 0) == a1);
    CHECK(entry(t, 2, 0) == a2 - r * pow(a1, 2));
    CHECK(entry(t, 3, 0) == a3 - R(3) * r * a1 * a2 + R(2) * pow(r, 2) * pow(a1, 3));
  }
  SECTION("dual forward, in t = 1/(1-r)") {
    const RelationTable t = generate_relations(RelationKind::DualForwardTower, 3);
    REQUIRE(t.variables == std::vector<std::string>{"t", "a1", "a2", "a3"});
    const int n = 4;
    const Polynomial tt = Polynomial::variable(n, 0), a1 = Polynomial::variable(n, 1),
                     a2 = Polynomial::variable(n, 2), a3 = Polynomial::variable(n, 3);
    const Polynomial one = Polynomial::constant(n, 1);
    CHECK(entry(t, 1, 0) == tt * a1);
    CHECK(entry(t, 2, 0) == pow(tt, 2) * a2 + (tt - one) * pow(tt, 2) * pow(a1, 2));
    CHECK(entry(t, 3, 0) == pow(tt, 3) * a3 + R(3) * (tt - one) * pow(tt, 3) * a1 * a2 +
                                R(2) * pow(tt - one, 2) * pow(tt, 3) * pow(a1, 3));
  }
  SECTION("dual backward") {
    const RelationTable t = generate_relations(RelationKind::DualBackwardTower, 3);
    const int n = 4;
    const Polynomial r = Polynomial::variable(n, 0), a1 = Polynomial::variable(n, 1),
                     a2 = Polynomial::variable(n, 2), a3 = Polynomial::variable(n, 3);
    const Polynomial one = Polynomial::constant(n, 1);
    CHECK(entry(t, 1, 0) == (one - r) * a1);
    CHECK(entry(t, 2, 0) == pow(one - r, 2) * a2 - r * (one - r) * pow(a1, 2));
    CHECK(entry(t, 3, 0) == pow(one - r, 3) * a3 - R(3) * r * pow(one - r, 2) * a1 * a2 +
                                pow(r, 2) * (one - r) * pow(a1, 3));
  }
}

TEST_CASE("serialization is stable and exact") {
  CHECK(serialize(generate_relations(RelationKind::DoubleMoment, 1)) ==
        "# relation-table kind=double order=1\n"
        "# vars a1 a2\n"
        "C[1,1] = 1 [0,1] - 1 [2,0]\n");

  CHECK(serialize(generate_relations(RelationKind::DualDoubleMoment, 1)) ==
        "# relation-table kind=dual-double order=1\n"
        "# vars a2 a3 a4\n"
        "C[1,1] = -1 [0,2,0] + 1 [1,0,1] / a2^2\n");

  CHECK(serialize(generate_relations(RelationKind::ForwardTower, 2)) ==
        "# relation-table kind=forward-tower order=2\n"
        "# vars r a1 a2\n"
        "M[1] = 1 [0,1,0]\n"
        "M[2] = 1 [0,0,1] + 1 [1,2,0]\n");

  // Serialization must be byte-stable across repeated generation.
  CHECK(serialize(generate_relations(RelationKind::DualDoubleMoment, 3)) ==
        serialize(generate_relations(RelationKind::DualDoubleMoment, 3)));
}

TEST_CASE("symbolic towers agree with their numeric instantiation") {
  const int K = 6;
  const RelationTable fwd = generate_relations(RelationKind::ForwardTower, K);
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> unif(0.2, 2.0);
  for (int rep = 0; rep < 20; ++rep) {
    std::vector<double> point;  // r, a1..aK
    point.push_back(unif(rng));
    for (int k = 1; k <= K; ++k) point.push_back(unif(rng));
    std::vector<double> numeric =
        forward_tower(std::span<const double>(point).subspan(1), point[0], K);
    for (const Relation& rln : fwd.relations) {
      double symbolic = rln.value.evaluate<double>(point);
      CHECK(symbolic == Catch::Approx(numeric[static_cast<std::size_t>(rln.i - 1)])
                            .epsilon(1e-10));
    }
  }
}

TEST_CASE("compiled polynomials evaluate like their exact source") {
  const RelationTable t = generate_relations(RelationKind::DoubleMoment, 4);
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> unif(-1.5, 1.5);
  for (const Relation& rln : t.relations) {
    CompiledPolynomial cp = CompiledPolynomial::from(rln.value);
    for (int rep = 0; rep < 5; ++rep) {
      std::vector<double> point(static_cast<std::size_t>(rln.value.nvars()));
      for (double& x : point) x = unif(rng);
      CHECK(cp.evaluate(point) ==
            Catch::Approx(rln.value.evaluate<double>(point)).margin(1e-9));
    }
  }
}

TEST_CASE("double moment matrices evaluate and scale correctly") {
  // Null covariance: S moments of Sigma = 1 at r = 1/4 (Catalan-weighted).
  MomentVector mp;
  mp.subject = MatrixSubject::S;
  mp.family = MomentFamily::Normal;
  mp.rectangularity = 0.25;
  mp.values = forward_tower(std::vector<double>(10, 1.0), 0.25, 10);

  DoubleMomentMatrix q1 = double_moments_from_single(mp, 3);
  CHECK(q1.q.rows() == 3);
  // cov(tr S, tr S) = a2 - a1^2 = r exactly at the null model.
  CHECK(q1.q(0, 0) == Catch::Approx(0.25).epsilon(1e-12));
  CHECK(q1.q(1, 2) == Catch::Approx(q1.q(2, 1)).epsilon(1e-15));

  DoubleMomentMatrix q2 = double_moments_from_single(mp, 3, 2.0);
  CHECK(q2.q(1, 1) == Catch::Approx(2.0 * q1.q(1, 1)).epsilon(1e-14));

  MomentVector shallow = mp;
  shallow.values.resize(5);
  CHECK_THROWS_AS(double_moments_from_single(shallow, 3), InsufficientOrderError);
}
