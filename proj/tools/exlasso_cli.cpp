// exlasso command-line front end: gen, solve, bench, path.
//
// Exit codes: 0 converged, 1 not converged, 2 usage or input error.

#include "exlasso/exlasso.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <atomic>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

using namespace exlasso;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitConverged = 0;
constexpr int kExitNotConverged = 1;
constexpr int kExitUsage = 2;
constexpr int kResultSchemaVersion = 1;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string fmt_g(double v, int digits = 6) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", digits, v);
  return buf;
}

/// At most one of the lambda sources may be set.
void require_one_lambda_source(std::initializer_list<bool> given) {
  int n = 0;
  for (bool g : given) n += g;
  if (n > 1) throw UsageError("give exactly one of --lambda, --lambda-b, --grid");
}

// ---------------------------------------------------------------------------
// Solver dispatch

struct SolverOptions {
  std::string solver = "ppdna";
  double tol = 1e-6;
  std::optional<Index> max_iters;
  double max_seconds = std::numeric_limits<double>::infinity();
  std::string strategy = "auto";
};

const std::vector<std::string> kSolverNames = {"ppdna", "admm", "apg", "ilsa"};

PpaParams ppa_params(const SolverOptions& o) {
  PpaParams p;
  p.tol = o.tol;
  p.max_seconds = o.max_seconds;
  if (o.max_iters) p.max_outer = *o.max_iters;
  const auto s = parse_strategy(o.strategy);
  if (!s) throw UsageError("unknown strategy '" + o.strategy + "'");
  p.ssn.newton.strategy = *s;
  return p;
}

SolveReport run_solver(const ProblemInstance& inst, const SolverOptions& o) {
  if (o.solver == "ppdna") return ppdna_solve(inst, ppa_params(o));
  BaselineParams p;
  p.tol = o.tol;
  p.max_seconds = o.max_seconds;
  if (o.max_iters) {
    p.admm.max_iters = *o.max_iters;
    p.apg.max_iters = *o.max_iters;
    p.ilsa.max_iters = *o.max_iters;
  }
  if (o.solver == "admm") return admm_solve(inst, p);
  if (o.solver == "apg") return apg_solve(inst, p);
  if (o.solver == "ilsa") return ilsa_solve(inst, p);
  throw UsageError("unknown solver '" + o.solver + "'");
}

json result_json(const ProblemInstance& inst, const SolveReport& r, double tol,
                 const std::optional<std::string>& x_path) {
  json j;
  j["schema_version"] = kResultSchemaVersion;
  j["solver"] = r.solver;
  j["loss"] = std::string(to_string(inst.loss));
  j["m"] = inst.m();
  j["n"] = inst.n();
  j["lambda"] = inst.lambda;
  j["tol"] = tol;
  j["converged"] = r.converged;
  j["eta_kkt"] = r.eta_kkt;
  j["objective"] = r.objective;
  j["outer_iters"] = r.outer_iters;
  j["inner_iters"] = r.inner_iters;
  j["cg_iters"] = r.cg_iters;
  j["matvecs"] = r.matvecs;
  j["iterations"] = r.iteration_summary();
  j["nnz_per_group"] = r.nnz_per_group;
  j["message"] = r.message;
  j["solution_path"] = x_path ? json(*x_path) : json(nullptr);
  json hist = json::array();
  for (const auto& h : r.history) {
    hist.push_back({{"iteration", h.iteration}, {"eta_kkt", h.eta_kkt}, {"objective", h.objective}});
  }
  j["history"] = std::move(hist);
  j["times"] = {{"total", r.times.total},
                {"prox", r.times.prox},
                {"linear_solve", r.times.linear_solve},
                {"kkt_check", r.times.kkt_check}};
  return j;
}

// ---------------------------------------------------------------------------
// gen

struct GenOptions {
  SyntheticSpec spec;
  std::string loss = "ls";
  std::string weights = "ones";
  std::string format = "csv";
  std::optional<double> lambda;
  std::optional<double> lambda_b;
  std::string out;
};

SyntheticInstance make_synthetic(const GenOptions& g) {
  SyntheticSpec spec = g.spec;
  const auto loss = parse_loss_kind(g.loss);
  if (!loss) throw UsageError("unknown loss '" + g.loss + "'");
  spec.loss = *loss;
  if (g.weights == "ones") {
    spec.weights = WeightKind::Ones;
  } else if (g.weights == "uniform") {
    spec.weights = WeightKind::Uniform01;
  } else {
    throw UsageError("unknown weights '" + g.weights + "'");
  }
  require_one_lambda_source({g.lambda.has_value(), g.lambda_b.has_value()});
  if (g.lambda) spec.lambda = *g.lambda;
  SyntheticInstance s = gen_synthetic(spec);
  if (g.lambda_b) s.instance.lambda = lambda_from_fraction(s.instance.A, s.instance.b, *g.lambda_b);
  return s;
}

int cmd_gen(const GenOptions& g) {
  const SyntheticInstance s = make_synthetic(g);
  const auto& inst = s.instance;
  MatrixFormat fmt = MatrixFormat::Csv;
  if (g.format == "libsvm") {
    fmt = MatrixFormat::LibSvm;
  } else if (g.format != "csv") {
    throw UsageError("unknown format '" + g.format + "'");
  }
  const fs::path manifest = save_instance(inst, g.out, fmt);
  write_vector(fs::path(g.out) / "x_star.csv", s.x_star);
  const double atb = (inst.A.transpose() * inst.b).cwiseAbs().maxCoeff();
  std::cout << "m " << inst.m() << "\n"
            << "n " << inst.n() << "\n"
            << "l " << inst.partition.num_groups() << "\n"
            << "norm_inf_At_b " << fmt_g(atb, 17) << "\n"
            << "lambda " << fmt_g(inst.lambda, 17) << "\n"
            << "manifest " << manifest.string() << "\n";
  return kExitConverged;
}

// ---------------------------------------------------------------------------
// solve

struct SolveCmd {
  std::string manifest;
  SolverOptions solver;
  std::optional<double> lambda;
  std::optional<double> lambda_b;
  std::optional<std::string> out_json;
  std::optional<std::string> out_x;
};

int cmd_solve(const SolveCmd& c) {
  require_one_lambda_source({c.lambda.has_value(), c.lambda_b.has_value()});
  ProblemInstance inst = load_instance(c.manifest);
  if (c.lambda) inst.lambda = *c.lambda;
  if (c.lambda_b) inst.lambda = lambda_from_fraction(inst.A, inst.b, *c.lambda_b);
  inst.validate();

  const SolveReport r = run_solver(inst, c.solver);
  if (c.out_x) write_vector(*c.out_x, r.x);
  const json j = result_json(inst, r, c.solver.tol, c.out_x);
  if (c.out_json) {
    std::ofstream out(*c.out_json);
    if (!out) throw InvalidArgument(*c.out_json + ": cannot open for writing");
    out << j.dump(2) << '\n';
    if (!out) throw InvalidArgument(*c.out_json + ": write failed");
  }
  std::cout << r.solver << " lambda " << fmt_g(inst.lambda) << " eta_kkt " << fmt_g(r.eta_kkt, 3)
            << " iterations " << r.iteration_summary() << " seconds " << fmt_g(r.times.total, 3)
            << (r.converged ? "" : "  [" + r.message + "]") << '\n';
  return r.converged ? kExitConverged : kExitNotConverged;
}

// ---------------------------------------------------------------------------
// bench

struct BenchCmd {
  Index m = 200;
  Index l = 20;
  std::vector<Index> p = {50, 100};
  std::uint64_t seed = 0;
  std::string loss = "ls";
  std::vector<double> lambda_b;
  std::vector<double> lambda;
  std::vector<std::string> solvers = {"ppdna"};
  double tol = 1e-6;
  double time_cap = 3600.0;
  std::optional<std::string> out;
};

/// Rows are produced by worker threads in any order and written in cell
/// order as soon as every earlier row is available.
class OrderedSink {
 public:
  explicit OrderedSink(std::ostream& out) : out_(out) {}

  void put(std::size_t index, std::string row) {
    std::lock_guard<std::mutex> lock(mu_);
    pending_[index] = std::move(row);
    while (!pending_.empty() && pending_.begin()->first == next_) {
      out_ << pending_.begin()->second << '\n';
      out_.flush();
      pending_.erase(pending_.begin());
      ++next_;
    }
  }

 private:
  std::ostream& out_;
  std::mutex mu_;
  std::map<std::size_t, std::string> pending_;
  std::size_t next_ = 0;
};

unsigned worker_count(std::size_t cells) {
  unsigned n = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("EXLASSO_NUM_THREADS")) {
    const int cap = std::atoi(env);
    if (cap < 1) throw UsageError("EXLASSO_NUM_THREADS must be a positive integer");
    n = std::min(n, static_cast<unsigned>(cap));
  }
  return static_cast<unsigned>(std::min<std::size_t>(n, cells));
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string q = "\"";
  for (char ch : s) {
    if (ch == '"') q += '"';
    q += ch;
  }
  return q + "\"";
}

int cmd_bench(const BenchCmd& b) {
  require_one_lambda_source({!b.lambda.empty(), !b.lambda_b.empty()});
  const auto loss = parse_loss_kind(b.loss);
  if (!loss) throw UsageError("unknown loss '" + b.loss + "'");
  for (const auto& s : b.solvers) {
    if (std::find(kSolverNames.begin(), kSolverNames.end(), s) == kSolverNames.end()) {
      throw UsageError("unknown solver '" + s + "'");
    }
  }
  const bool fractions = b.lambda.empty();
  const std::vector<double> lambdas = fractions ? (b.lambda_b.empty() ? std::vector<double>{1e-3} : b.lambda_b)
                                                : b.lambda;

  // Instances are generated up front and shared read-only by the workers.
  struct Inst {
    std::string name;
    ProblemInstance inst;
  };
  std::vector<Inst> instances;
  for (Index p : b.p) {
    SyntheticSpec spec;
    spec.m = b.m;
    spec.l = b.l;
    spec.p = p;
    spec.nnz_per_group = std::min(spec.nnz_per_group, p);
    spec.seed = b.seed;
    spec.loss = *loss;
    instances.push_back({"m" + std::to_string(b.m) + "_l" + std::to_string(b.l) + "_p" +
                             std::to_string(p) + "_s" + std::to_string(b.seed),
                         gen_synthetic(spec).instance});
  }
  struct CellSpec {
    std::size_t inst;
    double lam;
    std::string solver;
  };
  std::vector<CellSpec> cells;
  for (std::size_t i = 0; i < instances.size(); ++i) {
    for (double lam : lambdas) {
      for (const auto& s : b.solvers) cells.push_back({i, lam, s});
    }
  }

  std::ofstream file;
  if (b.out) {
    file.open(*b.out);
    if (!file) throw InvalidArgument(*b.out + ": cannot open for writing");
  }
  std::ostream& out = b.out ? static_cast<std::ostream&>(file) : std::cout;
  out << "instance,lambda_b,lambda,solver,iters,eta_kkt,seconds,status\n";
  OrderedSink sink(out);

  std::atomic<std::size_t> next{0};
  std::atomic<bool> all_converged{true};
  auto worker = [&] {
    for (std::size_t k = next++; k < cells.size(); k = next++) {
      const CellSpec& c = cells[k];
      ProblemInstance inst = instances[c.inst].inst;
      std::ostringstream row;
      row << instances[c.inst].name << ',';
      try {
        inst.lambda = fractions ? lambda_from_fraction(inst.A, inst.b, c.lam) : c.lam;
        SolverOptions o;
        o.solver = c.solver;
        o.tol = b.tol;
        o.max_seconds = b.time_cap;
        const SolveReport r = run_solver(inst, o);
        if (!r.converged) all_converged = false;
        row << (fractions ? fmt_g(c.lam, 17) : "") << ',' << fmt_g(inst.lambda, 17) << ',' << c.solver << ','
            << r.iteration_summary() << ',' << fmt_g(r.eta_kkt, 6) << ',' << fmt_g(r.times.total, 6) << ','
            << csv_field(r.converged ? "converged" : r.message);
      } catch (const std::exception& e) {
        all_converged = false;
        row << (fractions ? fmt_g(c.lam, 17) : "") << ',' << fmt_g(inst.lambda, 17) << ',' << c.solver
            << ",,,," << csv_field(std::string("failed: ") + e.what());
      }
      sink.put(k, row.str());
    }
  };
  const unsigned nthreads = worker_count(cells.size());
  std::vector<std::thread> pool;
  for (unsigned t = 1; t < nthreads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  return all_converged ? kExitConverged : kExitNotConverged;
}

// ---------------------------------------------------------------------------
// path

struct PathCmd {
  std::string manifest;
  std::vector<double> grid;  // hi lo n
  bool absolute = false;
  bool compare_warmstart = false;
  double tol = 1e-6;
  std::optional<std::string> out;
};

int cmd_path(const PathCmd& c) {
  if (c.grid.size() != 3) throw UsageError("--grid takes HI LO N");
  const double n_real = c.grid[2];
  if (!(n_real >= 1.0) || n_real != std::floor(n_real)) throw UsageError("--grid N must be a positive integer");
  const ProblemInstance inst = load_instance(c.manifest);
  const std::vector<double> fracs = log_grid(c.grid[0], c.grid[1], static_cast<Index>(n_real));
  const double scale = c.absolute ? 1.0 : lambda_from_fraction(inst.A, inst.b, 1.0);
  std::vector<double> lambdas;
  for (double f : fracs) lambdas.push_back(f * scale);

  PpaParams params;
  params.tol = c.tol;
  std::ofstream file;
  if (c.out) {
    file.open(*c.out);
    if (!file) throw InvalidArgument(*c.out + ": cannot open for writing");
  }
  std::ostream& out = c.out ? static_cast<std::ostream&>(file) : std::cout;
  out << "index,lambda_b,lambda,mode,iters,eta_kkt,seconds,nnz,converged\n";

  bool ok = true;
  auto run = [&](bool warm) {
    const auto reports = solve_path(inst, lambdas, params, warm);
    double total = 0.0;
    for (std::size_t i = 0; i < reports.size(); ++i) {
      const SolveReport& r = reports[i];
      Index nnz = 0;
      for (Index v : r.nnz_per_group) nnz += v;
      ok = ok && r.converged;
      total += r.times.total;
      out << i << ',' << (c.absolute ? "" : fmt_g(fracs[i], 17)) << ',' << fmt_g(lambdas[i], 17) << ','
          << (warm ? "warm" : "cold") << ',' << r.iteration_summary() << ',' << fmt_g(r.eta_kkt, 6) << ','
          << fmt_g(r.times.total, 6) << ',' << nnz << ',' << (r.converged ? "true" : "false") << '\n';
    }
    return total;
  };
  const double warm = run(true);
  std::ostream& summary = c.out ? std::cout : std::cerr;
  if (c.compare_warmstart) {
    const double cold = run(false);
    summary << "warm total " << fmt_g(warm, 4) << " s, cold total " << fmt_g(cold, 4) << " s, speedup "
            << fmt_g(cold / warm, 3) << "x\n";
  } else {
    summary << "total " << fmt_g(warm, 4) << " s\n";
  }
  return ok ? kExitConverged : kExitNotConverged;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Weighted exclusive lasso solvers"};
  app.require_subcommand(1);

  GenOptions gen;
  auto* g = app.add_subcommand("gen", "Generate a synthetic instance");
  g->add_option("--m", gen.spec.m, "Rows")->capture_default_str();
  g->add_option("--l", gen.spec.l, "Groups")->capture_default_str();
  g->add_option("--p", gen.spec.p, "Features per group")->capture_default_str();
  g->add_option("--seed", gen.spec.seed, "Random seed")->capture_default_str();
  auto* nnz_opt = g->add_option("--nnz", gen.spec.nnz_per_group, "Nonzeros per group in x_star (default min(10, p))");
  g->add_option("--rho-in", gen.spec.rho_in, "Within-group correlation base")->capture_default_str();
  g->add_option("--rho-out", gen.spec.rho_out, "Cross-group correlation base")->capture_default_str();
  g->add_option("--noise", gen.spec.noise_std, "Noise standard deviation")->capture_default_str();
  g->add_option("--loss", gen.loss, "ls | logistic")->capture_default_str();
  g->add_option("--weights", gen.weights, "ones | uniform")->capture_default_str();
  g->add_option("--format", gen.format, "csv | libsvm")->capture_default_str();
  g->add_option("--lambda", gen.lambda, "Regularization weight stored in the manifest");
  g->add_option("--lambda-b", gen.lambda_b, "Store lambda = lambda_b * |A^T b|_inf");
  g->add_option("--out", gen.out, "Output directory")->required();

  SolveCmd solve;
  auto* s = app.add_subcommand("solve", "Solve an instance");
  s->add_option("--manifest", solve.manifest, "Instance manifest")->required();
  s->add_option("--solver", solve.solver.solver, "ppdna | admm | apg | ilsa")->capture_default_str();
  s->add_option("--lambda", solve.lambda, "Override lambda");
  s->add_option("--lambda-b", solve.lambda_b, "lambda = lambda_b * |A^T b|_inf");
  s->add_option("--tol", solve.solver.tol, "Tolerance on eta_KKT")->capture_default_str();
  s->add_option("--max-iters", solve.solver.max_iters, "Iteration cap (outer for ppdna)");
  s->add_option("--max-seconds", solve.solver.max_seconds, "Wall-clock cap");
  s->add_option("--strategy", solve.solver.strategy, "auto | cholesky | woodbury | cg")->capture_default_str();
  s->add_option("--out-json", solve.out_json, "Result JSON file");
  s->add_option("--out-x", solve.out_x, "Solution vector file");

  BenchCmd bench;
  auto* b = app.add_subcommand("bench", "Benchmark solvers on synthetic instances (CSV)");
  b->add_option("--m", bench.m, "Rows")->capture_default_str();
  b->add_option("--l", bench.l, "Groups")->capture_default_str();
  b->add_option("--p", bench.p, "Features per group (list)")->capture_default_str();
  b->add_option("--seed", bench.seed, "Random seed")->capture_default_str();
  b->add_option("--loss", bench.loss, "ls | logistic")->capture_default_str();
  b->add_option("--lambda-b", bench.lambda_b, "lambda_b values (default 1e-3)");
  b->add_option("--lambda", bench.lambda, "Absolute lambda values");
  b->add_option("--solvers", bench.solvers, "Solvers to run")->capture_default_str();
  b->add_option("--tol", bench.tol, "Tolerance on eta_KKT")->capture_default_str();
  b->add_option("--time-cap", bench.time_cap, "Seconds per cell")->capture_default_str();
  b->add_option("--out", bench.out, "CSV output file (default stdout)");

  PathCmd path;
  auto* p = app.add_subcommand("path", "Solve along a log-spaced lambda grid");
  p->add_option("--manifest", path.manifest, "Instance manifest")->required();
  p->add_option("--grid", path.grid, "HI LO N (lambda_b values unless --absolute)")->expected(3)->required();
  p->add_flag("--absolute", path.absolute, "Grid values are lambda, not lambda_b");
  p->add_flag("--compare-warmstart", path.compare_warmstart, "Also run cold starts and report the speedup");
  p->add_option("--tol", path.tol, "Tolerance on eta_KKT")->capture_default_str();
  p->add_option("--out", path.out, "CSV output file (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (g->parsed()) {
      if (nnz_opt->count() == 0) gen.spec.nnz_per_group = std::min(gen.spec.nnz_per_group, gen.spec.p);
      return cmd_gen(gen);
    }
    if (s->parsed()) return cmd_solve(solve);
    if (b->parsed()) return cmd_bench(bench);
    if (p->parsed()) return cmd_path(path);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const InvalidArgument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitNotConverged;
  }
  return kExitUsage;
}
