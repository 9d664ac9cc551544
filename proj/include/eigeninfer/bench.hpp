#pragma once

#include <Eigen/Dense>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "eigeninfer/mle.hpp"
#include "eigeninfer/moments.hpp"
#include "eigeninfer/pade.hpp"
#include "eigeninfer/parallel.hpp"
#include "eigeninfer/spectrum_model.hpp"
#include "eigeninfer/wishart.hpp"

// Ensemble benchmark harness: run a list of inference methods over L
// independently drawn sample matrices of one configured ensemble, aggregate
// per-parameter statistics plus the eta cloud-width score, and emit the
// results as flat files. Everything is deterministic for a fixed base seed
// except the wall-clock timing column.

namespace eigeninfer {

enum class MethodKind { Analytic, AnalyticDual, Statistical, StatisticalDual };

inline const char* method_kind_name(MethodKind kind) {
  switch (kind) {
    case MethodKind::Analytic: return "analytic";
    case MethodKind::AnalyticDual: return "analytic-dual";
    case MethodKind::Statistical: return "statistical";
    default: return "statistical-dual";
  }
}

struct MethodSpec {
  MethodKind kind = MethodKind::Analytic;
  int m = 2;        // atoms to fit
  int k = 3;        // Q dimension, statistical kinds only
  bool warm = false;  // start the minimizer from the analytic estimate
  int starts = 0;     // simplex starts, 0 = library default, statistical only

  bool is_statistical() const {
    return kind == MethodKind::Statistical || kind == MethodKind::StatisticalDual;
  }
  MomentFamily family() const {
    return kind == MethodKind::AnalyticDual || kind == MethodKind::StatisticalDual
               ? MomentFamily::Dual
               : MomentFamily::Normal;
  }

  // stable identifier used as the CSV method column and in file names
  std::string name() const {
    std::string out = method_kind_name(kind);
    if (is_statistical()) out += "-k" + std::to_string(k);
    out += "-m" + std::to_string(m);
    if (is_statistical()) {
      out += warm ? "-warm" : "-cold";
      if (starts > 0) out += "-s" + std::to_string(starts);
    }
    return out;
  }
};

inline MethodSpec parse_method_spec(const std::string& text) {
  std::istringstream in(text);
  std::string token;
  if (!(in >> token)) throw std::invalid_argument("empty method entry");
  MethodSpec spec;
  if (token == "analytic")
    spec.kind = MethodKind::Analytic;
  else if (token == "analytic-dual")
    spec.kind = MethodKind::AnalyticDual;
  else if (token == "statistical")
    spec.kind = MethodKind::Statistical;
  else if (token == "statistical-dual")
    spec.kind = MethodKind::StatisticalDual;
  else
    throw std::invalid_argument("unknown method '" + token + "'");
  while (in >> token) {
    if (token == "warm" || token == "cold") {
      if (!spec.is_statistical())
        throw std::invalid_argument("start temperature applies to statistical methods only");
      spec.warm = token == "warm";
      continue;
    }
    const auto eq = token.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("malformed method option '" + token + "'");
    const std::string key = token.substr(0, eq);
    const int value = std::stoi(token.substr(eq + 1));
    if (key == "m")
      spec.m = value;
    else if (key == "k" && spec.is_statistical())
      spec.k = value;
    else if (key == "starts" && spec.is_statistical())
      spec.starts = value;
    else
      throw std::invalid_argument("unknown method option '" + key + "'");
  }
  if (spec.m < 1) throw std::invalid_argument("method needs m >= 1");
  if (spec.is_statistical()) {
    if (spec.m < 2 || spec.m > 3) throw std::invalid_argument("statistical methods fit m = 2 or 3");
    if (spec.k < 3 || spec.k > 5) throw std::invalid_argument("statistical methods use k = 3..5");
    if (2 * spec.m - 1 > spec.k)
      throw std::invalid_argument("statistical method needs k >= 2m-1");
    if (spec.starts < 0) throw std::invalid_argument("starts must be positive");
  }
  return spec;
}

inline std::string format_method_spec(const MethodSpec& spec) {
  std::string out = method_kind_name(spec.kind);
  if (spec.is_statistical()) out += " k=" + std::to_string(spec.k);
  out += " m=" + std::to_string(spec.m);
  if (spec.is_statistical()) {
    out += spec.warm ? " warm" : " cold";
    if (spec.starts > 0) out += " starts=" + std::to_string(spec.starts);
  }
  return out;
}

struct ExperimentConfig {
  SpectrumModel model = SpectrumModel({2.0, 1.0}, {0.5, 0.5});
  int n = 320;
  int t = 640;
  int ensemble = 100;  // L in the tables
  FieldKind field = FieldKind::Complex;
  std::vector<MethodSpec> methods = {MethodSpec{}};
  std::uint64_t seed = 1;
  std::string out = ".";
  InferenceOptions filter;  // atom acceptance thresholds shared by all methods
  int workers = 0;

  double r() const { return static_cast<double>(n) / static_cast<double>(t); }
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r\n");
  if (begin == std::string::npos) return {};
  const auto end = s.find_last_not_of(" \t\r\n");
  return s.substr(begin, end - begin + 1);
}

inline std::vector<double> parse_double_list(const std::string& text) {
  std::vector<double> out;
  std::string item;
  std::istringstream in(text);
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (item.empty()) throw std::invalid_argument("empty entry in list '" + text + "'");
    std::size_t used = 0;
    out.push_back(std::stod(item, &used));
    if (used != item.size()) throw std::invalid_argument("bad number '" + item + "'");
  }
  if (out.empty()) throw std::invalid_argument("empty list");
  return out;
}

}  // namespace detail

inline void validate_experiment_config(const ExperimentConfig& config) {
  if (config.ensemble < 1) throw std::invalid_argument("ensemble must be >= 1");
  if (config.n < 2 || config.t < 2) throw std::invalid_argument("n and t must be >= 2");
  if (config.methods.empty()) throw std::invalid_argument("no methods configured");
  std::vector<std::string> names;
  for (const MethodSpec& spec : config.methods) {
    if (spec.family() == MomentFamily::Dual && config.n >= config.t)
      throw std::invalid_argument("method '" + spec.name() +
                                  "' needs inverse moments, which require n < t");
    names.push_back(spec.name());
  }
  std::sort(names.begin(), names.end());
  if (std::adjacent_find(names.begin(), names.end()) != names.end())
    throw std::invalid_argument("duplicate method entry '" +
                                *std::adjacent_find(names.begin(), names.end()) + "'");
}

inline ExperimentConfig parse_experiment_config(std::istream& in) {
  ExperimentConfig config;
  std::optional<std::vector<double>> atoms, weights;
  bool saw_methods = false;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("line " + std::to_string(line_no) + ": expected key = value");
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string value = detail::trim(line.substr(eq + 1));
    try {
      if (key == "atoms")
        atoms = detail::parse_double_list(value);
      else if (key == "weights")
        weights = detail::parse_double_list(value);
      else if (key == "n")
        config.n = std::stoi(value);
      else if (key == "t")
        config.t = std::stoi(value);
      else if (key == "ensemble")
        config.ensemble = std::stoi(value);
      else if (key == "field") {
        if (value == "complex")
          config.field = FieldKind::Complex;
        else if (value == "real")
          config.field = FieldKind::Real;
        else
          throw std::invalid_argument("field must be complex or real");
      } else if (key == "seed")
        config.seed = std::stoull(value);
      else if (key == "out")
        config.out = value;
      else if (key == "workers")
        config.workers = std::stoi(value);
      else if (key == "imag_ratio_tol")
        config.filter.imag_ratio_tol = std::stod(value);
      else if (key == "tiny_weight")
        config.filter.tiny_weight = std::stod(value);
      else if (key == "atom_min")
        config.filter.atom_min = std::stod(value);
      else if (key == "atom_max")
        config.filter.atom_max = std::stod(value);
      else if (key == "methods") {
        config.methods.clear();
        saw_methods = true;
        std::string entry;
        std::istringstream entries(value);
        while (std::getline(entries, entry, ';')) {
          entry = detail::trim(entry);
          if (!entry.empty()) config.methods.push_back(parse_method_spec(entry));
        }
      } else
        throw std::invalid_argument("unknown key '" + key + "'");
    } catch (const std::invalid_argument&) {
      throw;
    } catch (const std::exception& e) {
      throw std::invalid_argument("line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  if (atoms.has_value() != weights.has_value())
    throw std::invalid_argument("atoms and weights must be given together");
  if (atoms) config.model = SpectrumModel(*atoms, *weights);
  if (saw_methods && config.methods.empty())
    throw std::invalid_argument("methods key given but empty");
  validate_experiment_config(config);
  return config;
}

inline ExperimentConfig parse_experiment_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config '" + path + "'");
  return parse_experiment_config(in);
}

// Canonical full-form listing; parse(print(config)) reproduces the config.
inline void print_experiment_config(const ExperimentConfig& config, std::ostream& out) {
  out.precision(17);
  out << "atoms = ";
  for (std::size_t i = 0; i < config.model.atoms().size(); ++i)
    out << (i ? "," : "") << config.model.atoms()[i].value;
  out << "\nweights = ";
  for (std::size_t i = 0; i < config.model.atoms().size(); ++i)
    out << (i ? "," : "") << config.model.atoms()[i].weight;
  out << "\nn = " << config.n << "\nt = " << config.t << "\nensemble = " << config.ensemble
      << "\nfield = " << (config.field == FieldKind::Complex ? "complex" : "real")
      << "\nseed = " << config.seed << "\nout = " << config.out
      << "\nworkers = " << config.workers
      << "\nimag_ratio_tol = " << config.filter.imag_ratio_tol
      << "\ntiny_weight = " << config.filter.tiny_weight
      << "\natom_min = " << config.filter.atom_min << "\natom_max = " << config.filter.atom_max
      << "\nmethods = ";
  for (std::size_t i = 0; i < config.methods.size(); ++i)
    out << (i ? "; " : "") << format_method_spec(config.methods[i]);
  out << "\n";
}

// ---------------------------------------------------------------------------
// Reports.

struct MethodReport {
  MethodSpec spec;
  int accepted = 0;
  int rejected = 0;
  // (2m-1) x accepted: rows are the atoms descending then the leading m-1
  // weights; columns keep ensemble order
  Eigen::MatrixXd estimates;
  std::vector<double> mean;  // per row of estimates; empty when accepted = 0
  std::vector<double> sd;    // sample standard deviation; NaN when accepted < 2
  std::optional<double> eta;  // unavailable when accepted < 2
  double time_s = 0.0;
};

struct ExperimentReport {
  ExperimentConfig config;
  std::vector<MethodReport> methods;
};

// Width of the estimate cloud: sqrt of the largest eigenvalue of the sample
// covariance (divisor L-1) across columns.
inline double eta(const Eigen::MatrixXd& estimates) {
  if (estimates.cols() < 2)
    throw InsufficientAcceptedError("eta needs at least two accepted estimates");
  const Eigen::MatrixXd centered = estimates.colwise() - estimates.rowwise().mean();
  const Eigen::MatrixXd cov =
      centered * centered.transpose() / static_cast<double>(estimates.cols() - 1);
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
  return std::sqrt(std::max(0.0, solver.eigenvalues().maxCoeff()));
}

namespace detail {

// (lambda_1..lambda_m, p_1..p_{m-1}) with atoms descending, matching how the
// tables pair estimates with the true spectrum
inline Eigen::VectorXd estimate_vector(const SpectrumModel& model, int m) {
  Eigen::VectorXd est(2 * m - 1);
  for (int i = 0; i < m; ++i) est[i] = model.atoms()[static_cast<std::size_t>(i)].value;
  for (int i = 0; i + 1 < m; ++i)
    est[m + i] = model.atoms()[static_cast<std::size_t>(i)].weight;
  return est;
}

inline std::optional<Eigen::VectorXd> run_method(const MethodSpec& spec,
                                                 const ExperimentConfig& config,
                                                 const SampleSet& sample) {
  std::optional<SpectrumModel> model;
  try {
    if (spec.is_statistical()) {
      std::optional<SpectrumModel> warm_start;
      if (spec.warm) {
        const InferenceResult analytic =
            infer_analytic(sample, spec.m, spec.family(), config.filter);
        // a rejected analytic estimate leaves the statistical run cold
        warm_start = analytic.model;
      }
      StatisticalOptions options;
      options.filter = config.filter;
      options.workers = 1;  // ensemble members are already parallel
      if (spec.starts > 0) options.starts = spec.starts;
      const StatisticalResult fit = infer_statistical(sample, spec.k, spec.family(),
                                                      std::move(warm_start), spec.m, options);
      model = fit.model;
    } else {
      model = infer_analytic(sample, spec.m, spec.family(), config.filter).model;
    }
  } catch (const SingularSampleError&) {
    return std::nullopt;  // counted as a rejection, the ensemble keeps going
  } catch (const DegenerateDenominatorError&) {
    return std::nullopt;
  } catch (const NoFeasibleMinimumError&) {
    return std::nullopt;
  } catch (const MultiplicityRoundingError&) {
    return std::nullopt;
  }
  if (!model || model->atom_count() != spec.m) return std::nullopt;
  return estimate_vector(*model, spec.m);
}

}  // namespace detail

inline ExperimentReport run_experiment(const ExperimentConfig& config) {
  validate_experiment_config(config);
  const int methods = static_cast<int>(config.methods.size());
  const int runs = config.ensemble;
  std::vector<std::vector<std::optional<Eigen::VectorXd>>> outcomes(
      static_cast<std::size_t>(methods));
  std::vector<std::vector<double>> seconds(static_cast<std::size_t>(methods));
  for (auto& v : outcomes) v.resize(static_cast<std::size_t>(runs));
  for (auto& v : seconds) v.assign(static_cast<std::size_t>(runs), 0.0);

  parallel_for(runs, config.workers, [&](int i) {
    const SampleSet s =
        sample(config.model, config.n, config.t, config.field,
               config.seed ^ static_cast<std::uint64_t>(i));
    for (int j = 0; j < methods; ++j) {
      const auto t0 = std::chrono::steady_clock::now();
      outcomes[static_cast<std::size_t>(j)][static_cast<std::size_t>(i)] =
          detail::run_method(config.methods[static_cast<std::size_t>(j)], config, s);
      const auto t1 = std::chrono::steady_clock::now();
      seconds[static_cast<std::size_t>(j)][static_cast<std::size_t>(i)] =
          std::chrono::duration<double>(t1 - t0).count();
    }
  });

  ExperimentReport report;
  report.config = config;
  for (int j = 0; j < methods; ++j) {
    MethodReport mr;
    mr.spec = config.methods[static_cast<std::size_t>(j)];
    const int d = 2 * mr.spec.m - 1;
    std::vector<const Eigen::VectorXd*> kept;
    for (int i = 0; i < runs; ++i) {
      const auto& outcome = outcomes[static_cast<std::size_t>(j)][static_cast<std::size_t>(i)];
      if (outcome)
        kept.push_back(&*outcome);
      else
        ++mr.rejected;
      mr.time_s += seconds[static_cast<std::size_t>(j)][static_cast<std::size_t>(i)];
    }
    mr.accepted = static_cast<int>(kept.size());
    mr.estimates.resize(d, mr.accepted);
    for (int c = 0; c < mr.accepted; ++c) mr.estimates.col(c) = *kept[static_cast<std::size_t>(c)];
    if (mr.accepted > 0) {
      mr.mean.resize(static_cast<std::size_t>(d));
      mr.sd.assign(static_cast<std::size_t>(d), std::numeric_limits<double>::quiet_NaN());
      for (int row = 0; row < d; ++row) {
        const double mean = mr.estimates.row(row).mean();
        mr.mean[static_cast<std::size_t>(row)] = mean;
        if (mr.accepted > 1) {
          const double ss = (mr.estimates.row(row).array() - mean).square().sum();
          mr.sd[static_cast<std::size_t>(row)] = std::sqrt(ss / (mr.accepted - 1));
        }
      }
      if (mr.accepted > 1) mr.eta = eta(mr.estimates);
    }
    report.methods.push_back(std::move(mr));
  }
  return report;
}

// ---------------------------------------------------------------------------
// Emission. One CSV row per method in the fixed table schema: the leading two
// atoms and the leading weight, whatever m is; the full estimate matrix goes
// to the per-method estimates file.

inline void write_report_csv(const ExperimentReport& report, std::ostream& out) {
  out.precision(17);
  out << "method,n,mean_l1,sd_l1,mean_l2,sd_l2,mean_p1,sd_p1,eta,time_s\n";
  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (const MethodReport& mr : report.methods) {
    auto stat = [&](const std::vector<double>& v, std::size_t i) {
      return i < v.size() ? v[i] : nan;
    };
    const std::size_t m = static_cast<std::size_t>(mr.spec.m);
    out << mr.spec.name() << ',' << mr.accepted << ',' << stat(mr.mean, 0) << ','
        << stat(mr.sd, 0) << ',' << stat(mr.mean, 1) << ',' << stat(mr.sd, 1) << ','
        << stat(mr.mean, m) << ',' << stat(mr.sd, m) << ','
        << (mr.eta ? *mr.eta : nan) << ',' << mr.time_s << "\n";
  }
}

inline void write_estimates_csv(const MethodReport& mr, std::ostream& out) {
  out.precision(17);
  const int m = mr.spec.m;
  out << "sample";
  for (int i = 1; i <= m; ++i) out << ",l" << i;
  for (int i = 1; i < m; ++i) out << ",p" << i;
  out << "\n";
  for (int c = 0; c < mr.estimates.cols(); ++c) {
    out << c;
    for (int row = 0; row < mr.estimates.rows(); ++row) out << ',' << mr.estimates(row, c);
    out << "\n";
  }
}

// histogram feed: one accepted estimate per line for one atom coordinate
inline void write_histogram(const MethodReport& mr, int atom_index, std::ostream& out) {
  out.precision(17);
  for (int c = 0; c < mr.estimates.cols(); ++c) out << mr.estimates(atom_index, c) << "\n";
}

// Writes report.csv plus estimates-<method>.csv and hist-<method>-l<i>.txt
// for every method into dir, creating it if needed. Returns the file list.
inline std::vector<std::string> emit_report(const ExperimentReport& report,
                                            const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  std::vector<std::string> written;
  auto open = [&](const std::string& name) {
    const std::string path = (fs::path(dir) / name).string();
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write '" + path + "'");
    written.push_back(path);
    return out;
  };
  {
    auto out = open("report.csv");
    write_report_csv(report, out);
  }
  for (const MethodReport& mr : report.methods) {
    {
      auto out = open("estimates-" + mr.spec.name() + ".csv");
      write_estimates_csv(mr, out);
    }
    for (int i = 0; i < mr.spec.m; ++i) {
      auto out = open("hist-" + mr.spec.name() + "-l" + std::to_string(i + 1) + ".txt");
      write_histogram(mr, i, out);
    }
  }
  return written;
}

}  // namespace eigeninfer
