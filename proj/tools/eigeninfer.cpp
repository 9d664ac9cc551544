// Command line front end: configured ensemble runs, det Q sign maps and
// moment-relation table dumps, all emitting the flat-file formats described
// in the library headers.

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>

#include "eigeninfer/bench.hpp"
#include "eigeninfer/mle.hpp"
#include "eigeninfer/relations.hpp"

namespace {

struct SignmapArgs {
  double r = 0.0;
  int k = 3;
  std::string family = "normal";
  std::string grid = "200x200";
  double lambda_max = 3.0;
  double zero_tol = 1e-12;
  int workers = 0;
  std::string out = "signmap";
};

std::pair<int, int> parse_grid(const std::string& text) {
  const auto x = text.find('x');
  if (x == std::string::npos || x == 0 || x + 1 == text.size())
    throw CLI::ValidationError("--grid", "expected WIDTHxHEIGHT, e.g. 200x200");
  const int w = std::stoi(text.substr(0, x));
  const int h = std::stoi(text.substr(x + 1));
  if (w < 1 || h < 1) throw CLI::ValidationError("--grid", "grid must be at least 1x1");
  return {w, h};
}

int run_command(const std::string& config_path) {
  const eigeninfer::ExperimentConfig config = eigeninfer::parse_experiment_config(config_path);
  const eigeninfer::ExperimentReport report = eigeninfer::run_experiment(config);
  for (const std::string& path : eigeninfer::emit_report(report, config.out))
    std::cerr << "wrote " << path << "\n";
  eigeninfer::write_report_csv(report, std::cout);
  return 0;
}

int signmap_command(const SignmapArgs& args) {
  const auto [width, height] = parse_grid(args.grid);
  const eigeninfer::MomentFamily family = args.family == "dual"
                                              ? eigeninfer::MomentFamily::Dual
                                              : eigeninfer::MomentFamily::Normal;
  const eigeninfer::SignMapGrid grid = eigeninfer::detq_sign_map(
      args.r, args.k, family, eigeninfer::cell_centers(0.0, args.lambda_max, width),
      eigeninfer::cell_centers(0.0, 1.0, height), args.zero_tol, args.workers);
  eigeninfer::write_sign_map_csv(grid, args.out + ".csv");
  eigeninfer::write_sign_map_pgm(grid, args.out + ".pgm");
  std::cerr << "wrote " << args.out << ".csv\nwrote " << args.out << ".pgm\n";
  std::cout.precision(17);
  std::cout << "negative_fraction " << grid.negative_fraction() << "\n";
  return 0;
}

int relations_command(const std::string& kind_name, int order, const std::string& out_path) {
  eigeninfer::RelationKind kind;
  if (!eigeninfer::parse_relation_kind(kind_name, kind))
    throw CLI::ValidationError("--kind", "unknown relation kind '" + kind_name + "'");
  const std::string text = eigeninfer::serialize(eigeninfer::generate_relations(kind, order));
  if (out_path.empty()) {
    std::cout << text;
  } else {
    std::ofstream out(out_path);
    if (!out) throw std::runtime_error("cannot write '" + out_path + "'");
    out << text;
    std::cerr << "wrote " << out_path << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"eigen-inference of a discrete covariance spectrum from one sample covariance"};
  app.require_subcommand(1);

  std::string config_path;
  CLI::App* run = app.add_subcommand("run", "run a configured ensemble and emit report files");
  run->add_option("config", config_path, "experiment config file, key = value lines")
      ->required()
      ->check(CLI::ExistingFile);

  SignmapArgs sm;
  CLI::App* signmap =
      app.add_subcommand("signmap", "scan sign(det Q) over the two-atom (lambda_s, p) plane");
  signmap->add_option("--r", sm.r, "rectangularity N/T")->required();
  signmap->add_option("--k", sm.k, "Q dimension")->check(CLI::Range(3, 5));
  signmap->add_option("--family", sm.family, "moment family")
      ->check(CLI::IsMember({"normal", "dual"}));
  signmap->add_option("--grid", sm.grid, "cells as WIDTHxHEIGHT (default 200x200)");
  signmap->add_option("--lambda-max", sm.lambda_max, "upper edge of the lambda_s window");
  signmap->add_option("--zero-tol", sm.zero_tol, "|det| at or below this maps to sign 0");
  signmap->add_option("--workers", sm.workers, "worker threads, 0 = hardware");
  signmap->add_option("--out", sm.out, "output base name for .csv and .pgm");

  std::string rel_kind = "double";
  int rel_order = 3;
  std::string rel_out;
  CLI::App* relations =
      app.add_subcommand("relations", "emit a generated moment-relation table");
  relations->add_option("--kind", rel_kind,
                        "forward-tower | backward-tower | dual-forward-tower | "
                        "dual-backward-tower | double | dual-double");
  relations->add_option("--order", rel_order, "tower order K or Q dimension k")
      ->check(CLI::PositiveNumber);
  relations->add_option("--out", rel_out, "output file (default stdout)");

  CLI::App* print_config =
      app.add_subcommand("print-config", "print the default experiment config");

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) return run_command(config_path);
    if (signmap->parsed()) return signmap_command(sm);
    if (relations->parsed()) return relations_command(rel_kind, rel_order, rel_out);
    if (print_config->parsed()) {
      eigeninfer::print_experiment_config(eigeninfer::ExperimentConfig{}, std::cout);
      return 0;
    }
  } catch (const CLI::Error& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
