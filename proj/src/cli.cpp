#include "rot/cli.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <random>
#include <sstream>

#include "CLI11.hpp"
#include "rot/io.hpp"
#include "rot/reference.hpp"
#include "rot/solvers.hpp"
#include "rot/synthetic.hpp"

namespace rot::cli {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct NotConverged {
  std::string message;
};

struct RegFlags {
  std::string kind;
  std::optional<double> beta;
  std::optional<double> power;
  std::string weights;

  void add(CLI::App* app, bool required) {
    auto* o = app->add_option("--reg", kind,
                              "Regularizer: bskl, bis, fdlog, beta, lpqn, lpn, euc, hell, weuc");
    if (required) o->required();
    app->add_option("--beta", beta, "Beta divergence parameter in (0, 1)");
    app->add_option("--power", power, "Power of lpqn (0, 1) or lpn (1, inf); also --p");
    app->add_option("--weights", weights, "Weight matrix CSV for weuc");
  }

  Regularizer build() const {
    RegParams params;
    params.beta = beta;
    params.power = power;
    if (!weights.empty()) params.weights = io::read_matrix(weights);
    return make_regularizer(parse_reg_kind(kind), params);
  }
};

struct SolveFlags {
  std::optional<double> lambda;
  bool lambda_inf = false;
  double tol = 1e-8;
  std::optional<double> aux_tol;
  int max_iter = 10000;
  int aux_max_iter = 50;
  int check_every = 1;
  std::string term = "marginal";
  bool symmetrize = false;
  bool parallel = false;
  bool generic = false;

  void add(CLI::App* app, bool with_lambda) {
    if (with_lambda) {
      auto* l = app->add_option("--lambda", lambda, "Penalty lambda > 0");
      auto* i = app->add_flag("--lambda-inf", lambda_inf, "Infinite penalty (gamma/lambda = 0)");
      l->excludes(i);
    }
    app->add_option("--tol", tol, "Marginal tolerance")->capture_default_str();
    app->add_option("--aux-tol", aux_tol, "Newton tolerance (default tol^2)");
    app->add_option("--max-iter", max_iter, "Main iteration cap")->capture_default_str();
    app->add_option("--aux-max-iter", aux_max_iter, "Newton iteration cap")->capture_default_str();
    app->add_option("--check-every", check_every, "Iterations between convergence checks");
    app->add_option("--term", term, "Termination: marginal, plan, distance")
        ->check(CLI::IsMember({"marginal", "plan", "distance"}))
        ->capture_default_str();
    app->add_flag("--symmetrize", symmetrize, "Average with the swapped problem");
    app->add_flag("--parallel", parallel, "Data-parallel row and column projections");
    app->add_flag("--generic", generic, "Skip the closed-form fast paths");
  }

  SolverOptions build(bool need_lambda) const {
    SolverOptions o;
    if (need_lambda && !lambda && !lambda_inf)
      throw Error(ErrorCode::InvalidOption, "one of --lambda or --lambda-inf is required");
    if (lambda) o.lambda = *lambda;
    o.lambda_infinite = lambda_inf;
    o.main_tol = tol;
    o.aux_tol = aux_tol;
    o.max_main_iters = max_iter;
    o.max_aux_iters = aux_max_iter;
    o.check_every = check_every;
    o.termination = term == "plan"       ? Termination::PlanVariation
                    : term == "distance" ? Termination::DistanceVariation
                                         : Termination::MarginalLinf;
    o.symmetrize = symmetrize;
    o.exec = parallel ? ExecPolicy::Parallel : ExecPolicy::Serial;
    o.force_generic = generic;
    o.validate();
    return o;
  }
};

struct Inputs {
  std::string p, q, cost;
  bool normalize = false;

  void add(CLI::App* app, bool required) {
    auto* a = app->add_option("-p,--source", p, "Source histogram CSV");
    auto* b = app->add_option("-q,--target", q, "Target histogram CSV");
    auto* c = app->add_option("-c,--cost", cost, "Cost matrix CSV");
    if (required) {
      a->required();
      b->required();
      c->required();
    }
    app->add_flag("--normalize", normalize, "Rescale histograms to unit mass");
  }

  bool given() const { return !p.empty() || !q.empty() || !cost.empty(); }

  std::tuple<Histogram, Histogram, CostMatrix> load() const {
    if (p.empty() || q.empty() || cost.empty())
      throw Error(ErrorCode::InvalidOption, "-p, -q and -c must be given together");
    auto hist = [&](const std::string& path) {
      auto v = io::read_vector(path);
      return normalize ? rot::normalize(std::move(v)) : validate_histogram(std::move(v));
    };
    return {hist(p), hist(q), CostMatrix(io::read_matrix(cost))};
  }
};

std::string report_line(double distance, int iters, double error, bool converged) {
  std::ostringstream s;
  s << "distance=" << io::format_double(distance) << " iters=" << iters
    << " marginal_error=" << io::format_double(error) << " converged=" << (converged ? "true" : "false");
  return s.str();
}

void write_plan(const std::string& path, const std::string& format, const Matrix& plan) {
  if (path.empty()) return;
  if (format == "pgm")
    io::write_pgm(path, plan);
  else
    io::write_matrix(path, plan);
}

double parse_prime(const std::string& tok) {
  if (tok == "inf" || tok == "+inf" || tok == "Inf") return kInf;
  const auto v = io::parse_list(tok);
  return v.at(0);
}

std::vector<double> parse_primes(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string tok;
  while (std::getline(ss, tok, ',')) out.push_back(parse_prime(tok));
  if (out.empty()) throw Error(ErrorCode::InvalidOption, "empty lambda' list");
  return out;
}

std::string prime_text(double v) {
  if (std::isinf(v)) return "inf";
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

// Solve at λ̄·λ′; λ′ = +∞ switches to the γ/λ = 0 convention.
Solution solve_at(const Histogram& p, const Histogram& q, const CostMatrix& g,
                  const Regularizer& reg, SolverOptions o, double lambda_bar, double prime) {
  o.lambda_infinite = std::isinf(prime);
  o.lambda = o.lambda_infinite ? 1.0 : lambda_bar * prime;
  return solve_dual(p, q, g, reg, o);
}

int cmd_solve(const RegFlags& rf, const SolveFlags& sf, const Inputs& in, bool transpose,
              const std::string& out_path, const std::string& format, std::ostream& out) {
  const Regularizer reg = rf.build();
  const SolverOptions o = sf.build(true);
  auto [p, q, g] = in.load();
  Solution s;
  if (transpose) {
    s = solve_dual(q, p, g.transposed(), reg.transposed(), o);
    s.plan.entries = s.plan.entries.transposed();
    std::swap(s.plan.row_marginal_error, s.plan.col_marginal_error);
  } else {
    s = solve_dual(p, q, g, reg, o);
  }
  double distance = s.report.distance;
  if (o.symmetrize) distance = rmd(p, q, g, reg, o.lambda_infinite ? kInf : o.lambda, o);
  write_plan(out_path, format, s.plan.entries);
  out << report_line(distance, s.report.main_iterations, s.report.final_marginal_error,
                     s.report.converged)
      << '\n';
  if (!s.report.converged) throw NotConverged{"main iteration cap reached"};
  return 0;
}

int cmd_emd(const Inputs& in, const std::string& out_path, const std::string& format,
            std::ostream& out) {
  auto [p, q, g] = in.load();
  const EmdSolution e = emd_exact(p, q, g);
  write_plan(out_path, format, e.plan.entries);
  out << report_line(e.distance, e.pivots, marginal_error(e.plan, p, q), e.certified) << '\n';
  return 0;
}

int cmd_primal(const RegFlags& rf, const SolveFlags& sf, const Inputs& in, double alpha,
               std::optional<double> lo, std::optional<double> hi, double bracket_tol, int steps,
               const std::string& out_path, const std::string& format, std::ostream& out) {
  const Regularizer reg = rf.build();
  const SolverOptions o = sf.build(false);
  auto [p, q, g] = in.load();
  PrimalSpec spec;
  spec.alpha = alpha;
  spec.bracket_tol = bracket_tol;
  spec.max_steps = steps;
  if (lo || hi) {
    if (!lo || !hi)
      throw Error(ErrorCode::InvalidOption, "--lambda-lo and --lambda-hi must be given together");
    spec.lambda_bracket = {{*lo, *hi}};
  }
  const PrimalSolution s = solve_primal(p, q, g, reg, spec, o);
  write_plan(out_path, format, s.plan.entries);
  out << report_line(s.report.distance, s.report.main_iterations, s.report.final_marginal_error,
                     s.report.converged && s.matched)
      << '\n';
  out << "lambda=" << io::format_double(s.lambda) << " excess=" << io::format_double(s.excess)
      << " steps=" << s.steps << '\n';
  if (!s.matched) throw NotConverged{"bisection ended before matching alpha"};
  if (!s.report.converged) throw NotConverged{"main iteration cap reached"};
  return 0;
}

int cmd_sweep(const RegFlags& rf, const SolveFlags& sf, const Inputs& in, std::size_t d,
              double lambda_bar, const std::string& primes_text, const std::string& out_path,
              std::ostream& out, std::ostream& err) {
  const Regularizer reg = rf.build();
  const SolverOptions o = sf.build(false);
  const std::vector<double> primes = parse_primes(primes_text);
  if (!(lambda_bar > 0.0)) throw Error(ErrorCode::InvalidOption, "--lambda-bar must be positive");
  std::optional<SyntheticInstance> syn;
  std::optional<std::tuple<Histogram, Histogram, CostMatrix>> files;
  if (in.given())
    files = in.load();
  else
    syn = generate_synthetic(d);
  const Histogram& p = files ? std::get<0>(*files) : syn->p;
  const Histogram& q = files ? std::get<1>(*files) : syn->q;
  const CostMatrix& g = files ? std::get<2>(*files) : syn->gamma;

  const long n = static_cast<long>(primes.size());
  std::vector<std::optional<Solution>> sols(primes.size());
  std::vector<std::string> errors(primes.size());
#pragma omp parallel for schedule(dynamic)
  for (long k = 0; k < n; ++k) {
    try {
      sols[k] = solve_at(p, q, g, reg, o, lambda_bar, primes[k]);
    } catch (const Error& e) {
      errors[k] = e.what();
    }
  }
  std::ostringstream csv;
  csv << "lambda_prime,distance,iterations\n";
  bool all = true;
  for (std::size_t k = 0; k < primes.size(); ++k) {
    if (!sols[k]) throw Error(ErrorCode::InvalidOption, "lambda'=" + prime_text(primes[k]) + ": " + errors[k]);
    const SolverReport& r = sols[k]->report;
    csv << prime_text(primes[k]) << ',' << io::format_double(r.distance) << ','
        << r.main_iterations << '\n';
    if (!r.converged) {
      all = false;
      err << "lambda'=" << prime_text(primes[k]) << " did not converge (marginal error "
          << r.final_marginal_error << ")\n";
    }
  }
  if (out_path.empty()) {
    out << csv.str();
  } else {
    std::ofstream f(out_path);
    if (!f) throw Error(ErrorCode::Io, "cannot write " + out_path);
    f << csv.str();
  }
  if (!all) throw NotConverged{"some penalties did not converge"};
  return 0;
}

int cmd_synthetic(std::size_t d, const std::string& dir, std::ostream& out) {
  const SyntheticInstance s = generate_synthetic(d);
  std::filesystem::create_directories(dir);
  const std::filesystem::path base(dir);
  io::write_vector((base / "p.csv").string(), {s.p.values().begin(), s.p.values().end()});
  io::write_vector((base / "q.csv").string(), {s.q.values().begin(), s.q.values().end()});
  io::write_matrix((base / "cost.csv").string(), s.gamma.entries());
  out << "wrote " << (base / "p.csv").string() << ", " << (base / "q.csv").string() << ", "
      << (base / "cost.csv").string() << '\n';
  return 0;
}

int cmd_bench(const SolveFlags& sf, const std::string& dims, const std::string& primes_text,
              const std::vector<std::string>& only, const std::string& out_path,
              std::ostream& out) {
  const SolverOptions o = sf.build(false);
  const std::vector<double> primes = parse_primes(primes_text);
  std::vector<std::size_t> ds;
  for (double v : io::parse_list(dims)) {
    if (!(v >= 2.0) || v != std::floor(v)) throw Error(ErrorCode::InvalidOption, "bad dimension");
    ds.push_back(static_cast<std::size_t>(v));
  }
  std::ofstream file;
  if (!out_path.empty()) {
    file.open(out_path);
    if (!file) throw Error(ErrorCode::Io, "cannot write " + out_path);
  }
  std::ostream& dst = out_path.empty() ? out : file;
  dst << "regularizer,lambda_bar,lambda_prime,d,seconds,iterations,marginal_error,converged,"
         "distance\n";
  for (std::size_t d : ds) {
    const SyntheticInstance s = generate_synthetic(d);
    for (const ExperimentConfig& e : default_experiments()) {
      if (!only.empty() && std::find(only.begin(), only.end(), e.label) == only.end()) continue;
      const Regularizer reg = make_regularizer(e.kind, e.params);
      for (double prime : primes) {
        const auto t0 = std::chrono::steady_clock::now();
        std::optional<Solution> sol;
        std::string failure;
        try {
          sol = solve_at(s.p, s.q, s.gamma, reg, o, e.lambda_bar, prime);
        } catch (const Error& ex) {
          failure = std::string(to_string(ex.code()));
        }
        const double secs =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        dst << e.label << ',' << prime_text(e.lambda_bar) << ',' << prime_text(prime) << ','
            << d << ',' << secs << ',';
        if (sol)
          dst << sol->report.main_iterations << ',' << io::format_double(sol->report.final_marginal_error)
              << ',' << (sol->report.converged ? "true" : "false") << ','
              << io::format_double(sol->report.distance) << '\n';
        else
          dst << ",," << failure << ",\n";
        dst.flush();
      }
    }
  }
  return 0;
}

// Oracle agreement on small random instances, one line per regularizer.
int cmd_selftest(int instances, std::uint64_t seed, std::ostream& out) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto histogram = [&](std::size_t n) {
    std::vector<double> v(n);
    for (double& x : v) x = 0.1 + unit(rng);
    return normalize(std::move(v));
  };
  struct Case {
    std::string name;
    RegKind kind;
    RegParams params;
  };
  const std::vector<Case> cases{
      {"bskl", RegKind::BSKL, {}},          {"bis", RegKind::BIS, {}},
      {"fdlog", RegKind::FDLOG, {}},        {"beta(0.5)", RegKind::BETA, {.beta = 0.5}},
      {"lpqn(0.5)", RegKind::LPQN, {.power = 0.5}}, {"lpn(1.5)", RegKind::LPN, {.power = 1.5}},
      {"euc", RegKind::EUC, {}},            {"hell", RegKind::HELL, {}},
  };
  bool all = true;
  for (const Case& c : cases) {
    const Regularizer reg = make_regularizer(c.kind, c.params);
    SolverOptions o;
    o.lambda = reg.assumption_class() == AssumptionClass::A ? 1.0 : 10.0;
    o.main_tol = 1e-11;
    o.max_main_iters = 1000000;
    double plan_gap = 0.0, dist_gap = 0.0;
    bool ok = true;
    for (int k = 0; k < instances; ++k) {
      const Histogram p = histogram(6), q = histogram(6);
      Matrix gm(6, 6);
      for (double& x : gm.data()) x = unit(rng);
      const CostMatrix g(gm);
      try {
        const Solution s = solve_dual(p, q, g, reg, o);
        const OracleResult f = projection_oracle(p, q, g, reg, o.lambda, 1e-12);
        ok = ok && s.report.converged;
        plan_gap = std::max(plan_gap, max_abs_diff(s.plan.entries, f.plan.entries));
        dist_gap = std::max(dist_gap, std::fabs(s.report.distance -
                                                frobenius_dot(f.plan.entries, g.entries())) /
                                          s.report.distance);
      } catch (const Error&) {
        ok = false;
      }
    }
    ok = ok && plan_gap <= 1e-4 && dist_gap <= 1e-6;
    all = all && ok;
    out << (ok ? "PASS " : "FAIL ") << c.name << " plan_gap=" << plan_gap
        << " distance_gap=" << dist_gap << '\n';
  }
  for (int k = 0; k < instances; ++k) {
    const std::size_t m = 3 + static_cast<std::size_t>(unit(rng) * 20.0);
    const std::size_t n = 3 + static_cast<std::size_t>(unit(rng) * 20.0);
    Matrix gm(m, n);
    for (double& x : gm.data()) x = std::floor(4.0 * unit(rng));
    const EmdSolution e = emd_exact(histogram(m), histogram(n), CostMatrix(gm));
    all = all && e.certified;
  }
  out << (all ? "PASS" : "FAIL") << " emd certificates\n";
  return all ? 0 : kExitInvalid;
}

}  // namespace

int run_command(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Regularized optimal transport: rot mover's plans and distances", "rotmd"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Help for every subcommand");

  RegFlags rf;
  SolveFlags sf;
  Inputs in;
  std::string out_path, format = "csv", primes = "1e-2,1e-1,1,10,inf", dims = "256", dir;
  bool transpose = false;
  double alpha = 0.0, lambda_bar = 1.0, bracket_tol = 1e-3;
  std::optional<double> lo, hi;
  int steps = 60, instances = 3;
  std::size_t d = 256;
  std::uint64_t seed = 1;
  std::vector<std::string> only;

  auto add_output = [&](CLI::App* a) {
    a->add_option("-o,--out", out_path, "Plan output file");
    a->add_option("--format", format, "Plan format")
        ->check(CLI::IsMember({"csv", "pgm"}))
        ->capture_default_str();
  };

  auto* solve = app.add_subcommand("solve", "One regularized solve; writes the plan");
  rf.add(solve, true);
  sf.add(solve, true);
  in.add(solve, true);
  add_output(solve);
  solve->add_flag("--transpose", transpose, "Solve the swapped problem (columns first)");

  auto* emd = app.add_subcommand("emd", "Exact earth mover's plan");
  in.add(emd, true);
  add_output(emd);

  auto* primal = app.add_subcommand("primal", "Solve for a Bregman-information budget alpha");
  rf.add(primal, true);
  sf.add(primal, false);
  in.add(primal, true);
  add_output(primal);
  primal->add_option("--alpha", alpha, "Information budget above the minimum")->required();
  primal->add_option("--lambda-lo", lo, "Lower end of the penalty bracket");
  primal->add_option("--lambda-hi", hi, "Upper end of the penalty bracket");
  primal->add_option("--bracket-tol", bracket_tol, "Relative tolerance on alpha")
      ->capture_default_str();
  primal->add_option("--max-steps", steps, "Bisection steps")->capture_default_str();

  auto* sweep = app.add_subcommand("sweep", "Distance over a lambda' grid (CSV)");
  rf.add(sweep, true);
  sf.add(sweep, false);
  in.add(sweep, false);
  sweep->add_option("--d", d, "Synthetic dimension when no files are given")->capture_default_str();
  sweep->add_option("--lambda-bar", lambda_bar, "Base penalty")->capture_default_str();
  sweep->add_option("--lambda-primes", primes, "Comma-separated multipliers, 'inf' allowed")
      ->required();
  sweep->add_option("-o,--out", out_path, "CSV output file (default stdout)");

  auto* synthetic = app.add_subcommand("synthetic", "Write the synthetic p, q and cost");
  synthetic->add_option("--d", d, "Dimension")->capture_default_str();
  synthetic->add_option("--out-dir", dir, "Output directory")->required();

  auto* bench = app.add_subcommand("bench", "Timing grid over regularizers, lambda' and d");
  sf.add(bench, false);
  bench->add_option("--d", dims, "Comma-separated dimensions")->capture_default_str();
  bench->add_option("--lambda-primes", primes, "Comma-separated multipliers")->capture_default_str();
  bench->add_option("--only", only, "Restrict to these labels, e.g. bskl beta(0.5)");
  bench->add_option("-o,--out", out_path, "CSV output file (default stdout)");

  auto* selftest = app.add_subcommand("selftest", "Oracle agreement checks");
  selftest->add_option("--instances", instances, "Instances per regularizer")->capture_default_str();
  selftest->add_option("--seed", seed, "Random seed")->capture_default_str();

  // "--p" is the power flag, "-p" the source histogram.
  std::vector<std::string> argv_store{"rotmd"};
  for (const std::string& a : args) {
    if (a == "--p")
      argv_store.push_back("--power");
    else if (a.rfind("--p=", 0) == 0)
      argv_store.push_back("--power=" + a.substr(4));
    else
      argv_store.push_back(a);
  }
  std::vector<const char*> argv;
  for (const auto& a : argv_store) argv.push_back(a.c_str());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : kExitInvalid;
  }

  try {
    if (*solve) return cmd_solve(rf, sf, in, transpose, out_path, format, out);
    if (*emd) return cmd_emd(in, out_path, format, out);
    if (*primal)
      return cmd_primal(rf, sf, in, alpha, lo, hi, bracket_tol, steps, out_path, format, out);
    if (*sweep) return cmd_sweep(rf, sf, in, d, lambda_bar, primes, out_path, out, err);
    if (*synthetic) return cmd_synthetic(d, dir, out);
    if (*bench) return cmd_bench(sf, dims, primes, only, out_path, out);
    if (*selftest) return cmd_selftest(instances, seed, out);
  } catch (const NotConverged& e) {
    err << "rotmd: not converged: " << e.message << '\n';
    return kExitNotConverged;
  } catch (const Error& e) {
    err << "rotmd: " << e.what() << '\n';
    return e.code() == ErrorCode::AuxDidNotConverge || e.code() == ErrorCode::OracleDidNotConverge
               ? kExitNotConverged
               : kExitInvalid;
  } catch (const std::exception& e) {
    err << "rotmd: " << e.what() << '\n';
    return kExitInvalid;
  }
  return kExitInvalid;
}

}  // namespace rot::cli
