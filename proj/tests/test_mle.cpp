#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Dense>
#include <cmath>
#include <optional>
#include <sstream>
#include <vector>

#include "eigeninfer/mle.hpp"
#include "eigeninfer/pade.hpp"
#include "eigeninfer/spectrum_model.hpp"
#include "eigeninfer/wishart.hpp"

using namespace eigeninfer;

namespace {

// Objective whose traces equal the exact expectations N * alpha_j^S(theta),
// so the fluctuation vector vanishes identically at theta.
Objective exact_trace_objective(const SpectrumModel& theta, double r, int n, int k,
                                MomentFamily family, double beta_scale = 1.0) {
  Objective obj;
  obj.r = r;
  obj.n = n;
  obj.k = k;
  obj.family = family;
  obj.beta_scale = beta_scale;
  const std::vector<double> alpha = predicted_s_moments(theta, r, k, family);
  obj.traces.resize(static_cast<std::size_t>(k));
  for (int j = 0; j < k; ++j)
    obj.traces[static_cast<std::size_t>(j)] = n * alpha[static_cast<std::size_t>(j)];
  return obj;
}

// both models store atoms sorted descending, so index pairing is stable
double max_atom_error(const SpectrumModel& estimate, const SpectrumModel& truth) {
  double worst = 0.0;
  for (std::size_t i = 0; i < truth.atoms().size(); ++i)
    worst = std::max(worst, std::abs(estimate.atoms()[i].value - truth.atoms()[i].value));
  return worst;
}

}  // namespace

TEST_CASE("fluctuation vector vanishes on exactly matched traces", "[mle]") {
  const SpectrumModel theta({0.5, 1.0, 2.0}, {0.2, 0.5, 0.3});
  for (MomentFamily family : {MomentFamily::Normal, MomentFamily::Dual}) {
    const Objective obj = exact_trace_objective(theta, 0.25, 64, 4, family);
    const Eigen::VectorXd v = fluctuation_vector(obj.traces, theta, obj.r, obj.n, obj.k, family);
    CHECK(v.lpNorm<Eigen::Infinity>() < 1e-12);
  }
}

TEST_CASE("fluctuation vector responds linearly to the first atom", "[mle]") {
  // alpha_1 of S equals alpha_1 of Sigma, so moving the first atom by delta
  // moves v_1 by exactly -N p_1 delta regardless of r.
  const SpectrumModel theta({2.0, 1.0}, {0.25, 0.75});
  const double delta = 1e-3;
  const SpectrumModel shifted({2.0 + delta, 1.0}, {0.25, 0.75});
  const Objective obj = exact_trace_objective(theta, 0.5, 100, 3, MomentFamily::Normal);
  const Eigen::VectorXd v0 = fluctuation_vector(obj.traces, theta, 0.5, 100, 3, obj.family);
  const Eigen::VectorXd v1 = fluctuation_vector(obj.traces, shifted, 0.5, 100, 3, obj.family);
  CHECK(v1[0] - v0[0] == Catch::Approx(-100 * 0.25 * delta).epsilon(1e-9));
}

TEST_CASE("first fluctuation has the predicted ensemble variance", "[mle]") {
  // For Sigma = I the double-moment table gives Var(tr S) = r * beta_scale
  // exactly at finite N; the sampling test checks both fields.
  const SpectrumModel truth = SpectrumModel::single_atom(1.0);
  const int n = 100, t = 400, draws = 2000;
  for (FieldKind field : {FieldKind::Complex, FieldKind::Real}) {
    double sum = 0.0, sumsq = 0.0;
    for (int i = 0; i < draws; ++i) {
      const auto s = sample(truth, n, t, field, 42000u + static_cast<std::uint64_t>(i));
      const Objective obj = make_objective(s, 3, MomentFamily::Normal);
      const Eigen::VectorXd v =
          fluctuation_vector(obj.traces, truth, obj.r, obj.n, obj.k, obj.family);
      sum += v[0];
      sumsq += v[0] * v[0];
    }
    const double mean = sum / draws;
    const double var = sumsq / draws - mean * mean;
    const double expected = 0.25 * (field == FieldKind::Real ? 2.0 : 1.0);
    CAPTURE(field == FieldKind::Real, mean, var);
    CHECK(std::abs(mean) < 0.05);
    CHECK(var == Catch::Approx(expected).epsilon(0.12));
  }
}

TEST_CASE("gaussian objective handles the synthetic identity case", "[mle]") {
  const int k = 4;
  const Eigen::MatrixXd q = Eigen::MatrixXd::Identity(k, k);
  const Eigen::VectorXd ones = Eigen::VectorXd::Ones(k);
  const auto value = detail::gaussian_objective(q, ones);
  REQUIRE(value.positive_definite);
  CHECK(value.g == Catch::Approx(static_cast<double>(k)).epsilon(1e-14));
  CHECK(value.det_q == Catch::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("objective reduces to log det Q when traces match exactly", "[mle]") {
  const SpectrumModel theta({2.0, 1.0}, {0.5, 0.5});
  const Objective obj = exact_trace_objective(theta, 0.5, 320, 3, MomentFamily::Normal);
  const auto value = objective_eval(obj, theta);
  REQUIRE(value.positive_definite);
  CHECK(value.g == Catch::Approx(std::log(value.det_q)).margin(1e-10));
}

TEST_CASE("objective reports the indefinite dispersion region", "[mle]") {
  // At r = 0.01 the asymptotic dispersion matrix of ((0.5,1),(1/3,2/3)) has a
  // negative determinant, so the objective must flag the point rather than
  // take a log of a negative number.
  const SpectrumModel theta({0.5, 1.0}, {1.0 / 3.0, 2.0 / 3.0});
  const Objective obj = exact_trace_objective(theta, 0.01, 90, 3, MomentFamily::Normal);
  const auto value = objective_eval(obj, theta);
  CHECK_FALSE(value.positive_definite);
  CHECK(std::isinf(value.g));
  CHECK(value.det_q < 0.0);
  CHECK(value.det_q == Catch::Approx(-3.699261e-07).epsilon(1e-5));
}

TEST_CASE("truth beats nearby wrong candidates on exact traces", "[mle]") {
  const SpectrumModel truth({2.0, 1.0}, {0.5, 0.5});
  const Objective obj = exact_trace_objective(truth, 0.5, 320, 3, MomentFamily::Normal);
  const double g_truth = objective_eval(obj, truth).g;
  const double g_atom = objective_eval(obj, SpectrumModel({3.0, 1.0}, {0.5, 0.5})).g;
  const double g_weight = objective_eval(obj, SpectrumModel({2.0, 1.0}, {0.9, 0.1})).g;
  CHECK(g_truth < g_atom);
  CHECK(g_truth < g_weight);
}

TEST_CASE("doubling the dispersion shifts the objective by k log 2", "[mle]") {
  // On the v = 0 slice the quadratic term vanishes, so the real-data scaling
  // beta_scale = 2 moves g by exactly k log 2 relative to complex data.
  const double r = 0.5;
  const int n = 320, k = 3;
  for (double ls : {0.4, 1.0, 2.5}) {
    for (double p : {0.2, 0.7}) {
      const SpectrumModel theta({ls, 1.0}, {p, 1.0 - p});
      const Objective complex_obj =
          exact_trace_objective(theta, r, n, k, MomentFamily::Normal, 1.0);
      Objective real_obj = complex_obj;
      real_obj.beta_scale = 2.0;
      const double g1 = objective_eval(complex_obj, theta).g;
      const double g2 = objective_eval(real_obj, theta).g;
      CHECK(g2 - g1 == Catch::Approx(k * std::log(2.0)).margin(1e-10));
    }
  }
}

TEST_CASE("dispersion scaling leaves the minimizer essentially fixed", "[mle]") {
  // The argmin is invariant under a theta-independent rescale of Q; with
  // finite simplex tolerances the two fits agree to well below the
  // statistical error of the estimates themselves.
  const SpectrumModel truth({2.0, 1.0}, {0.5, 0.5});
  const auto s = sample(truth, 320, 640, FieldKind::Complex, 99u);
  Objective obj = make_objective(s, 3, MomentFamily::Normal);
  obj.beta_scale = 1.0;
  const auto fit1 = infer_statistical(obj, 2);
  obj.beta_scale = 2.0;
  const auto fit2 = infer_statistical(obj, 2);
  REQUIRE(fit1.model.has_value());
  REQUIRE(fit2.model.has_value());
  CHECK(max_atom_error(*fit2.model, *fit1.model) < 5e-3);
  CHECK(std::abs(fit2.model->atoms()[0].weight - fit1.model->atoms()[0].weight) < 5e-3);
}

TEST_CASE("warm start at the truth is stationary on exact traces", "[mle]") {
  const SpectrumModel truth({2.0, 1.0}, {0.5, 0.5});
  const Objective obj = exact_trace_objective(truth, 0.5, 320, 3, MomentFamily::Normal);

  StatisticalOptions options;
  options.starts = 1;
  options.simplex.diameter_tol = 1e-12;
  options.simplex.initial_step = 0.05;
  const auto fit = infer_statistical(obj, 2, truth, options);
  REQUIRE(fit.model.has_value());
  CHECK(max_atom_error(*fit.model, truth) < 2e-3);
  CHECK(std::abs(fit.model->atoms()[0].weight - 0.5) < 2e-3);

  // central finite differences of g in the transformed coordinates stay small
  // at the returned point
  const Eigen::VectorXd x0 = atoms_to_coordinates(*fit.model, 2);
  const double h = 1e-5;
  for (int i = 0; i < x0.size(); ++i) {
    Eigen::VectorXd lo = x0, hi = x0;
    lo[i] -= h;
    hi[i] += h;
    const double d =
        (objective_at_coordinates(obj, 2, hi).g - objective_at_coordinates(obj, 2, lo).g) /
        (2 * h);
    CAPTURE(i, d);
    CHECK(std::abs(d) <= 1e-4);
  }
}

TEST_CASE("cold multistart recovers a two atom spectrum at 320x640", "[mle]") {
  const SpectrumModel truth({2.0, 1.0}, {0.5, 0.5});
  const auto s = sample(truth, 320, 640, FieldKind::Complex, 31u);
  const auto fit = infer_statistical(s, 3, MomentFamily::Normal, std::nullopt, 2);
  REQUIRE(fit.accepted());
  CHECK(fit.model->atom_count() == 2);
  CHECK(max_atom_error(*fit.model, truth) < 0.1);
  CHECK(std::abs(fit.model->atoms()[0].weight - 0.5) < 0.1);
  CHECK(fit.feasible_starts > 0);
  CHECK(fit.det_q > 0.0);
}

TEST_CASE("statistical fits are deterministic", "[mle]") {
  const SpectrumModel truth({2.0, 1.0}, {0.5, 0.5});
  const auto s = sample(truth, 160, 320, FieldKind::Complex, 7u);
  const auto a = infer_statistical(s, 3, MomentFamily::Normal, std::nullopt, 2);
  const auto b = infer_statistical(s, 3, MomentFamily::Normal, std::nullopt, 2);
  REQUIRE(a.model.has_value());
  REQUIRE(b.model.has_value());
  CHECK(a.g == b.g);
  CHECK(a.evaluations == b.evaluations);
  for (std::size_t i = 0; i < a.model->atoms().size(); ++i) {
    CHECK(a.model->atoms()[i].value == b.model->atoms()[i].value);
    CHECK(a.model->atoms()[i].weight == b.model->atoms()[i].weight);
  }
}

TEST_CASE("dual statistical inference works where its dispersion is definite", "[mle]") {
  // The dual dispersion at this truth is positive definite for r around 0.5,
  // which makes the inverse-moment objective well posed end to end.
  const SpectrumModel truth({0.5, 1.0}, {1.0 / 3.0, 2.0 / 3.0});
  const Objective obj = exact_trace_objective(truth, 0.5, 320, 3, MomentFamily::Dual);
  REQUIRE(objective_eval(obj, truth).positive_definite);

  StatisticalOptions options;
  options.starts = 1;
  options.simplex.diameter_tol = 1e-12;
  options.simplex.initial_step = 0.05;
  const auto warm = infer_statistical(obj, 2, truth, options);
  REQUIRE(warm.model.has_value());
  // the log det term shifts the dual argmin a little off the truth even on
  // exact traces; the fit must land at that stationary point, not wander
  CHECK(warm.g <= objective_eval(obj, truth).g);
  CHECK(max_atom_error(*warm.model, truth) < 2e-2);

  const auto cold = infer_statistical(obj, 2);
  REQUIRE(cold.model.has_value());
  CHECK(max_atom_error(*cold.model, truth) < 0.05);
}

TEST_CASE("infeasible dual region is reported, not papered over", "[mle]") {
  // At r = 0.01 the dual dispersion determinant is negative at the truth, so
  // a warm-only run has nowhere feasible to go and must say so.
  const SpectrumModel truth({0.5, 1.0}, {1.0 / 3.0, 2.0 / 3.0});
  const Objective obj = exact_trace_objective(truth, 0.01, 90, 3, MomentFamily::Dual);
  REQUIRE_FALSE(objective_eval(obj, truth).positive_definite);

  StatisticalOptions warm_only;
  warm_only.starts = 1;
  CHECK_THROWS_AS(infer_statistical(obj, 2, truth, warm_only), NoFeasibleMinimumError);

  // with the full spread the run either fails the same way or drags the
  // estimate toward the det Q = 0 surface; the excursion is always recorded
  try {
    const auto fit = infer_statistical(obj, 2, truth);
    CHECK(fit.hit_nonpositive);
  } catch (const NoFeasibleMinimumError&) {
    SUCCEED("every start ended in the indefinite region");
  }
}

TEST_CASE("statistical refinement improves with more moments", "[mle]") {
  // 126x180 ensemble: the k = 4 objective uses strictly more information than
  // k = 3, and the estimate cloud scatter shrinks accordingly.
  const SpectrumModel truth({0.5, 1.0}, {1.0 / 3.0, 2.0 / 3.0});
  const int n = 126, t = 180, runs = 100;
  Eigen::MatrixXd err3(runs, 3), err4(runs, 3);
  int accepted3 = 0, accepted4 = 0;
  Eigen::Vector3d mean3 = Eigen::Vector3d::Zero();
  for (int i = 0; i < runs; ++i) {
    const auto s = sample(truth, n, t, FieldKind::Complex, 777000u + static_cast<std::uint64_t>(i));
    const auto warm = infer_analytic(s, 2, MomentFamily::Normal);
    std::optional<SpectrumModel> start = warm.model;
    for (int k : {3, 4}) {
      const auto fit = infer_statistical(s, k, MomentFamily::Normal, start, 2);
      REQUIRE(fit.model.has_value());
      // atoms are sorted descending: index 1 is the 0.5 atom carrying p = 1/3
      Eigen::Vector3d est(fit.model->atoms()[1].value, fit.model->atoms()[0].value,
                          fit.model->atoms()[1].weight);
      Eigen::Vector3d e = est - Eigen::Vector3d(0.5, 1.0, 1.0 / 3.0);
      if (k == 3) {
        err3.row(accepted3++) = e;
        mean3 += est;
      } else {
        err4.row(accepted4++) = e;
      }
    }
  }
  REQUIRE(accepted3 == runs);
  REQUIRE(accepted4 == runs);
  mean3 /= runs;

  auto eta = [&](const Eigen::MatrixXd& err, int count) {
    const Eigen::MatrixXd e = err.topRows(count);
    const Eigen::MatrixXd cov = e.transpose() * e / (count - 1);
    return std::sqrt(Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(cov).eigenvalues().maxCoeff());
  };
  const double eta3 = eta(err3, accepted3);
  const double eta4 = eta(err4, accepted4);
  CAPTURE(eta3, eta4, mean3[0], mean3[1], mean3[2]);
  CHECK(eta4 <= eta3);
  CHECK(eta3 > 0.08);
  CHECK(eta3 < 0.20);
  CHECK(std::abs(mean3[0] - 0.5) < 0.05);
  CHECK(std::abs(mean3[1] - 1.0) < 0.05);
  CHECK(std::abs(mean3[2] - 1.0 / 3.0) < 0.05);
}

TEST_CASE("sign map is constant along the single atom line", "[mle]") {
  // at lambda_s = 1 the two atoms coincide and the weight stops mattering
  const double base = theta_detq(SpectrumModel::single_atom(1.0), 0.1, 3, MomentFamily::Normal);
  for (double p : {0.1, 0.37, 0.62, 0.9}) {
    const SpectrumModel theta({1.0, 1.0}, {p, 1.0 - p});
    CHECK(theta_detq(theta, 0.1, 3, MomentFamily::Normal) ==
          Catch::Approx(base).epsilon(1e-12));
  }
  const auto grid =
      detq_sign_map(0.1, 3, MomentFamily::Normal, cell_centers(0.0, 2.0, 1), cell_centers(0.0, 1.0, 7));
  for (int row = 0; row < grid.height(); ++row) CHECK(grid.sign_at(row, 0) == grid.sign_at(0, 0));
}

TEST_CASE("small r floods the sign map with indefinite cells", "[mle]") {
  const auto grid = detq_sign_map(0.001, 3, MomentFamily::Normal, cell_centers(0.0, 3.0, 60),
                                  cell_centers(0.0, 1.0, 60));
  CAPTURE(grid.negative_fraction());
  CHECK(grid.negative_fraction() > 0.5);
}

TEST_CASE("sign map serializers emit exact bytes", "[mle]") {
  SignMapGrid grid;
  grid.r = 0.25;
  grid.k = 3;
  grid.family = MomentFamily::Normal;
  grid.lambda_s = {0.5, 1.5};
  grid.p = {0.25, 0.75};
  grid.signs = {-1, 0, 1, -1};  // rows by p ascending

  std::ostringstream csv;
  write_sign_map_csv(grid, csv);
  CHECK(csv.str() ==
        "lambda_s,p,sign\n"
        "0.5,0.25,-1\n"
        "1.5,0.25,0\n"
        "0.5,0.75,1\n"
        "1.5,0.75,-1\n");

  // top image row is the largest weight
  std::ostringstream pgm;
  write_sign_map_pgm(grid, pgm);
  CHECK(pgm.str() ==
        "P2\n"
        "2 2\n"
        "255\n"
        "255 0\n"
        "0 128\n");
}

TEST_CASE("near zero determinants classify as boundary cells", "[mle]") {
  // 0.5/0.5 at r = 0.1: the k = 5 determinant is ~ -5e-14, inside the default
  // zero band, while k = 3 is comfortably positive.
  const auto centers = std::vector<double>{0.5};
  const auto p = std::vector<double>{0.5};
  const auto k3 = detq_sign_map(0.1, 3, MomentFamily::Normal, centers, p);
  const auto k5 = detq_sign_map(0.1, 5, MomentFamily::Normal, centers, p);
  CHECK(k3.sign_at(0, 0) == 1);
  CHECK(k5.sign_at(0, 0) == 0);
  const auto strict = detq_sign_map(0.1, 5, MomentFamily::Normal, centers, p, 0.0);
  CHECK(strict.sign_at(0, 0) == -1);
}
