// Acceptance checks 1-9. Prints one PASS/FAIL line per criterion and exits
// non-zero if any fails.

#include <Eigen/Dense>
#include <json.hpp>

#include <chrono>
#include <cstdio>
#include <functional>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "altruist/admm.hpp"
#include "altruist/io.hpp"
#include "altruist/metrics.hpp"
#include "altruist/operators.hpp"
#include "altruist/phantom.hpp"
#include "altruist/seed.hpp"
#include "cli.hpp"
#include "temp_dir.hpp"

using namespace altruist;
using json = nlohmann::json;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* format, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, format, args...);
  return buf;
}

Eigen::VectorXd randn(Index size, std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  Eigen::VectorXd v(size);
  for (auto& x : v) x = g(rng);
  return v;
}

RegParams random_weights(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.01, 2.0);
  RegParams p;
  for (double* w : {&p.alpha1, &p.alpha2, &p.beta1, &p.beta2, &p.theta1, &p.theta2, &p.lambda1,
                    &p.lambda2, &p.gamma})
    *w = u(rng);
  p.zeta = u(rng) * 10.0;
  return p;
}

DisplacementField field_from(Index m, Index n, const std::function<double(double, double)>& a,
                             const std::function<double(double, double)>& l) {
  DisplacementField d(m, n);
  for (Index i = 0; i < m; ++i)
    for (Index j = 0; j < n; ++j) {
      d.axial(i, j) = a(static_cast<double>(i + 1), static_cast<double>(j + 1));
      d.lateral(i, j) = l(static_cast<double>(i + 1), static_cast<double>(j + 1));
    }
  return d;
}

Outcome operators_check() {
  std::mt19937_64 rng(101);
  std::uniform_int_distribution<int> dim(4, 16);
  double worst_adjoint = 0.0, worst_const = 0.0, worst_affine = 0.0;
  for (int t = 0; t < 100; ++t) {
    const Index m = dim(rng), n = dim(rng);
    const SparseMatrix dr = build_regularization(m, n, random_weights(rng));
    const Eigen::VectorXd x = randn(dr.cols(), rng), y = randn(dr.rows(), rng);
    const double lhs = (dr * x).dot(y), rhs = x.dot(dr.transpose() * y);
    const double scale = (dr * x).norm() * y.norm();
    worst_adjoint = std::max(worst_adjoint, std::abs(lhs - rhs) / scale);

    const auto off = block_offsets(m, n);
    const double ca = randn(1, rng)[0], cl = randn(1, rng)[0];
    const auto constant = field_from(m, n, [&](double, double) { return ca; },
                                     [&](double, double) { return cl; });
    const Eigen::VectorXd rc = dr * constant.values();
    worst_const = std::max(worst_const, rc.segment(off[1], 8 * m * n).cwiseAbs().maxCoeff());

    const Eigen::VectorXd coef = randn(4, rng);
    const auto affine = field_from(m, n, [&](double i, double j) { return ca + coef[0] * i + coef[1] * j; },
                                   [&](double i, double j) { return cl + coef[2] * i + coef[3] * j; });
    const Eigen::VectorXd ra = dr * affine.values();
    worst_affine = std::max(worst_affine, ra.segment(off[3], 4 * m * n).cwiseAbs().maxCoeff());
  }
  return {worst_adjoint <= 1e-12 && worst_const <= 1e-12 && worst_affine <= 1e-9,
          fmt("adjoint rel err %.2e, constant residual %.2e, affine residual %.2e", worst_adjoint,
              worst_const, worst_affine)};
}

Outcome quadratic_check() {
  std::mt19937_64 rng(202);
  std::uniform_int_distribution<int> dim(2, 8);
  double worst = 0.0;
  for (int t = 0; t < 50; ++t) {
    const Index m = dim(rng), n = dim(rng);
    const Eigen::MatrixXd f1 = Eigen::MatrixXd::NullaryExpr(m, n, [&] { return randn(1, rng)[0]; });
    const Eigen::MatrixXd f2 = Eigen::MatrixXd::NullaryExpr(m, n, [&] { return randn(1, rng)[0]; });
    const RegParams p = random_weights(rng);
    const DisplacementField d(m, n, 0.3 * randn(2 * m * n, rng));
    const OperatorSet ops = assemble(f1, f2, d, p);
    const Eigen::VectorXd nu = randn(ops.d_r.rows(), rng), u = randn(ops.d_r.rows(), rng);
    const Eigen::MatrixXd dp = ops.d_prime, dr = ops.d_r;
    const Eigen::MatrixXd a = dp.transpose() * dp + p.zeta * dr.transpose() * dr;
    const Eigen::VectorXd rhs =
        dp.transpose() * ops.xi - p.zeta * dr.transpose() * (dr * d.values() + ops.bias - nu + u);
    // Minimum-norm solution, which the solver returns for singular systems.
    const Eigen::VectorXd expect =
        a.jacobiSvd(Eigen::ComputeThinU | Eigen::ComputeThinV).solve(rhs);
    const Eigen::VectorXd got = solve_quadratic(ops, d, nu, u, p.zeta);
    worst = std::max(worst, (got - expect).norm() / expect.norm());
  }
  return {worst <= 1e-6, fmt("max relative deviation %.2e over 50 instances", worst)};
}

Outcome shrink_check() {
  std::mt19937_64 rng(303);
  std::normal_distribution<double> g;
  std::uniform_real_distribution<double> thr(1e-6, 3.0);
  Eigen::VectorXd x(100000), t(100000);
  for (Index k = 0; k < x.size(); ++k) {
    x[k] = 2.0 * g(rng);
    t[k] = thr(rng);
  }
  Index mismatches = 0;
  for (Index k = 0; k < x.size(); ++k) {
    const double got = shrink(x.segment(k, 1), t[k])[0];
    const double s = x[k] > 0 ? 1.0 : (x[k] < 0 ? -1.0 : 0.0);
    const double expect = s * std::max(std::abs(x[k]) - t[k], 0.0);
    if (got != expect) ++mismatches;
  }
  double worst_ratio = 0.0;
  for (int k = 0; k < 1000; ++k) {
    const Eigen::VectorXd a = randn(50, rng), b = randn(50, rng);
    const double th = thr(rng);
    worst_ratio = std::max(worst_ratio, (shrink(a, th) - shrink(b, th)).norm() / (a - b).norm());
  }
  return {mismatches == 0 && worst_ratio <= 1.0,
          fmt("%lld mismatches in 1e5 scalars, max Lipschitz ratio %.4f",
              static_cast<long long>(mismatches), worst_ratio)};
}

Outcome feasibility_check() {
  const Phantom ph = generate(phantom_preset("layer-high"));
  const DisplacementField seed = dp_seed(ph.pre, ph.post, SeedParams{});
  SolverConfig cfg;
  cfg.params = preset_params("layer");
  cfg.params.iterations = 10;
  const RunResult r = run(ph.pre, ph.post, seed, cfg);
  const auto& rec = r.trace.records;
  if (rec.size() != 10) return {false, "trace does not hold 10 records"};
  bool monotone = true;
  for (const auto& x : rec) monotone = monotone && x.sub_after <= x.sub_before * (1 + 1e-12) + 1e-12;
  const double ratio = rec.back().primal_res / rec.front().primal_res;
  return {ratio < 0.1 && monotone,
          fmt("primal residual ratio it10/it1 = %.4f, sub-problem non-increasing: %s", ratio,
              monotone ? "yes" : "no")};
}

Outcome shift_check() {
  // Noise-free speckle; the post frame is the pre frame moved down 2 rows.
  PhantomSpec spec = phantom_preset("layer-high");
  spec.m = 130;
  spec.n = 32;
  spec.layers = {{1, 130, 0.0}};
  spec.noise_psnr_db = std::numeric_limits<double>::infinity();
  const Phantom big = generate(spec);
  const Index m = 128, n = 32;
  const Eigen::MatrixXd f1 = big.pre.samples.bottomRows(m);
  const Eigen::MatrixXd f2 = big.pre.samples.topRows(m);
  const SeedParams sp{5, 0.1, 5};
  const DisplacementField seed = dp_seed(f1, f2, sp);
  Index seed_wrong = 0, interior = 0, close = 0;
  SolverConfig cfg;
  cfg.params = preset_params("layer");
  cfg.params.iterations = 5;
  const RunResult r = run(f1, f2, seed, cfg);
  const Index margin = 4;
  for (Index i = margin; i < m - margin; ++i)
    for (Index j = margin; j < n - margin; ++j) {
      ++interior;
      if (seed.axial(i, j) != 2.0 || seed.lateral(i, j) != 0.0) ++seed_wrong;
      if (std::abs(r.total.axial(i, j) - 2.0) <= 0.05 && std::abs(r.total.lateral(i, j)) <= 0.05) ++close;
    }
  const double frac = static_cast<double>(close) / static_cast<double>(interior);
  return {seed_wrong == 0 && frac >= 0.99,
          fmt("seed errors %lld, total within 0.05 at %.2f%% of interior samples",
              static_cast<long long>(seed_wrong), 100.0 * frac)};
}

Outcome layer_accuracy_check() {
  const PhantomSpec spec = phantom_preset("layer-high");
  const Phantom ph = generate(spec);
  const SeedParams sp{16, 0.3, 5};
  const DisplacementField seed = dp_seed(ph.pre, ph.post, sp);
  SolverConfig cfg;
  cfg.params = preset_params("layer");
  cfg.relinearizations = 2;
  const RunResult alt = run(ph.pre, ph.post, seed, cfg);
  cfg.mode = SolverMode::kL2Baseline;
  const RunResult base = run(ph.pre, ph.post, seed, cfg);
  const Eigen::MatrixXd s_alt = strain_from_displacement(alt.total, 3).values;
  const Eigen::MatrixXd s_base = strain_from_displacement(base.total, 3).values;
  const Eigen::MatrixXd& truth = ph.truth.strain.values;

  bool pass = true;
  std::string detail;
  const int exclude = 8;
  for (std::size_t k = 0; k < spec.layers.size(); ++k) {
    const Layer& l = spec.layers[k];
    const int top = k == 0 ? l.start_row : l.start_row + exclude;
    const int bottom = k + 1 == spec.layers.size() ? l.end_row : l.end_row - exclude;
    const Eigen::MatrixXd block = s_alt.middleRows(top - 1, bottom - top + 1);
    const double mean = block.mean();
    const double rel = std::abs(mean - l.strain) / std::abs(l.strain);
    pass = pass && rel <= 0.10;
    detail += fmt("layer %zu mean %.5f vs %.5f (%.1f%%); ", k + 1, mean, l.strain, 100.0 * rel);
  }
  const double ra = rmse(s_alt, truth), rb = rmse(s_base, truth);
  pass = pass && ra < rb;
  detail += fmt("RMSE %.5f vs baseline %.5f", ra, rb);
  return {pass, detail};
}

int cli_call(std::vector<std::string> args) {
  args.insert(args.begin(), "altruist");
  return cli::run(args, {});
}

Outcome contrast_check() {
  TempDir dir("accept");
  bool pass = true;
  std::string detail;
  struct Case {
    const char* phantom;
    const char* preset;
  };
  for (const Case c : {Case{"layer-high", "preset:layer"}, Case{"inclusion", "preset:inclusion"}}) {
    const auto sim = dir / (std::string("sim_") + c.phantom);
    const auto cmp = dir / (std::string("cmp_") + c.phantom);
    if (cli_call({"simulate", "--phantom", c.phantom, "--out", sim.string()}) != 0)
      return {false, std::string("simulate failed for ") + c.phantom};
    const int code = cli_call({"compare", (sim / "pre.raw").string(), (sim / "post.raw").string(),
                               (sim / "truth_strain.raw").string(), "--params", c.preset,
                               "--relinearizations", "2", "--seed-max-lag", "16",
                               "--seed-smoothness", "0.3", "--kernels", "3", "--out", cmp.string()});
    if (code != 0) return {false, std::string("compare failed for ") + c.phantom};
    const json ratios = json::parse(read_file(cmp / "manifest.json"))["results"]["ratios"];
    const double cnr = ratios.value("cnr", 0.0);
    const double hist = ratios.value("cnr_histogram_mean", 0.0);
    const double width = ratios.value("esf_width", std::numeric_limits<double>::infinity());
    pass = pass && cnr >= 1.3 && hist >= 1.3 && width <= 0.8;
    detail += fmt("%s: CNR x%.2f, histogram mean x%.2f, ESF width x%.2f; ", c.phantom, cnr, hist, width);
  }
  return {pass, detail};
}

Outcome metrics_check() {
  bool pass = true;
  Eigen::MatrixXd zero = Eigen::MatrixXd::Zero(2, 1), est(2, 1);
  est << 0.003, 0.004;
  pass = pass && std::abs(rmse(est, zero) - std::sqrt(1.25e-5)) <= 1e-12;
  pass = pass && std::abs(rmse(Eigen::MatrixXd::Constant(4, 4, 0.001), Eigen::MatrixXd::Zero(4, 4)) - 0.001) <= 1e-12;
  pass = pass && rmse(est, est) == 0.0;

  std::mt19937_64 rng(909);
  const Eigen::MatrixXd x = Eigen::MatrixXd::NullaryExpr(40, 40, [&] { return randn(1, rng)[0]; });
  const double self = mssim(x, x);
  pass = pass && self == 1.0;

  std::vector<WindowSpec> targets, backgrounds;
  for (Index k = 0; k < 6; ++k) targets.push_back({k * 5, 0, 5, 5});
  for (Index k = 0; k < 20; ++k) backgrounds.push_back({k * 2, 20, 2, 6});
  const std::size_t count = cnr_histogram(x, targets, backgrounds).size();
  pass = pass && count == 120;

  struct Case {
    std::vector<double> a, b;
    double t, p;
  };
  const std::vector<Case> cases = {
      {{1, 2, 3, 4}, {0, 0, 0, 0}, 3.872983346207417, 0.030466291662170977},
      {{2.1, 3.4, 1.9, 5.0, 4.2, 3.3}, {1.8, 3.0, 2.2, 4.1, 3.9, 2.7}, 2.254780169649666,
       0.07383310558583016},
      {{10, 12, 9, 11, 14, 13, 8, 10}, {11, 13, 10, 10, 15, 15, 9, 12}, -3.0550504633038935,
       0.018451528513015857},
  };
  double dt = 0.0, dp = 0.0;
  for (const auto& c : cases) {
    const auto r = paired_ttest(c.a, c.b);
    dt = std::max(dt, std::abs(r.t - c.t));
    dp = std::max(dp, std::abs(r.p - c.p));
  }
  pass = pass && dt <= 1e-6 && dp <= 1e-4;
  return {pass, fmt("mssim(x,x) = %.15g, histogram size %zu, t-test max |dt| %.1e |dp| %.1e", self,
                    count, dt, dp)};
}

Outcome determinism_check() {
  TempDir dir("accept");
  const auto sim = dir / "sim";
  if (cli_call({"simulate", "--phantom", "layer-high", "--out", sim.string()}) != 0)
    return {false, "simulate failed"};
  std::string first;
  for (const char* run_dir : {"a", "b"}) {
    const auto out = dir / run_dir;
    if (cli_call({"estimate", (sim / "pre.raw").string(), (sim / "post.raw").string(),
                  "--linear-solver", "direct", "--out", out.string()}) != 0)
      return {false, "estimate failed"};
    if (first.empty()) first = read_file(out / "strain.raw");
    else if (read_file(out / "strain.raw") != first) return {false, "strain rasters differ"};
  }
  return {true, fmt("two runs wrote identical %zu-byte strain rasters", first.size())};
}

}  // namespace

int main() {
  struct Criterion {
    int id;
    const char* name;
    double budget_s;
    Outcome (*check)();
  };
  const Criterion criteria[] = {
      {1, "operator correctness", 5, operators_check},
      {2, "quadratic-solve oracle", 10, quadratic_check},
      {3, "shrinkage law", 2, shrink_check},
      {4, "ADMM feasibility trend", 60, feasibility_check},
      {5, "pure-shift recovery", 30, shift_check},
      {6, "layer ground-truth accuracy", 90, layer_accuracy_check},
      {7, "contrast and sharpness", 120, contrast_check},
      {8, "metric definitions", 5, metrics_check},
      {9, "determinism", 60, determinism_check},
  };
  int failures = 0;
  for (const auto& c : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.check();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool pass = o.pass && secs <= c.budget_s;
    if (!pass) ++failures;
    std::printf("%s %d %s [%.1fs / %.0fs] %s\n", pass ? "PASS" : "FAIL", c.id, c.name, secs,
                c.budget_s, o.detail.c_str());
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
