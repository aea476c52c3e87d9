#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "fieldlab/mechanics.hpp"
#include "fieldlab/report.hpp"

using namespace fieldlab;

namespace {

int finish(const Report& rep, const std::string& out) {
  std::string text = rep.text();
  std::cout << text;
  if (!out.empty()) {
    std::ofstream f(out);
    if (!f) {
      std::cerr << "cannot write report to '" << out << "'\n";
      return 2;
    }
    f << text;
  }
  return rep.pass ? 0 : 1;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::BadInput, "cannot read '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"field-theory workbench: structure verdicts, constraint "
               "chains, and constrained flows"};
  app.require_subcommand(1);
  std::string report_path;
  app.add_option("--report", report_path, "also write the report here")
      ->capture_default_str();

  std::string an_theory;
  AnalyzeOptions aopt;
  auto* an = app.add_subcommand(
      "analyze", "regularity profile and nondegeneracy verdicts");
  an->add_option("theory", an_theory, "builtin name or theory file")
      ->required();
  an->add_option("--seed", aopt.seed, "sampling seed");
  an->add_option("--samples", aopt.samples, "points per layer")
      ->check(CLI::PositiveNumber);

  std::string co_theory;
  ConstraintsOptions copt;
  auto* co = app.add_subcommand(
      "constraints", "run the constraint chains and report every step");
  co->add_option("theory", co_theory, "builtin name or theory file")
      ->required();
  co->add_option("--formalism", copt.formalism, "which chain to run")
      ->check(CLI::IsMember(
          {"lagrangian", "hamiltonian", "unified", "restricted", "all"}));
  co->add_option("--max-steps", copt.chain.max_steps, "chain step cap")
      ->check(CLI::PositiveNumber);
  co->add_option("--samples", copt.chain.samples_per_step,
                 "sample points per step")
      ->check(CLI::PositiveNumber);
  co->add_option("--tol", copt.chain.solve_tol, "solvability tolerance");
  co->add_option("--seed", copt.chain.seed, "sampling seed");

  std::string in_theory, ic_path;
  IntegrateOptions iopt;
  auto* in = app.add_subcommand(
      "integrate", "flow on the final constraint set (mechanics, n = 1)");
  in->add_option("theory", in_theory, "builtin name or theory file")
      ->required();
  in->add_option("--ic", ic_path,
                 "initial state JSON (velocity coordinates); defaults to "
                 "the theory's own");
  in->add_option("--horizon", iopt.horizon, "integration time")
      ->capture_default_str();
  in->add_option("--step", iopt.step, "integrator step")
      ->capture_default_str();

  ExteriorOptions eopt;
  auto* ex = app.add_subcommand("check-exterior",
                                "property suite for the exterior algebra");
  ex->add_option("--trials", eopt.trials, "instances per property")
      ->capture_default_str();
  ex->add_option("--seed", eopt.seed, "generator seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (an->parsed()) return finish(cmd_analyze(load_theory(an_theory), aopt), report_path);
    if (co->parsed())
      return finish(cmd_constraints(load_theory(co_theory), copt),
                    report_path);
    if (in->parsed()) {
      TheoryBundle b = load_theory(in_theory);
      if (!ic_path.empty())
        iopt.state = initial_conditions_from_json(
            slurp(ic_path), b.theory.chart->layer_velocity());
      return finish(cmd_integrate(b, iopt), report_path);
    }
    return finish(cmd_check_exterior(eopt), report_path);
  } catch (const Error& e) {
    std::cerr << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
