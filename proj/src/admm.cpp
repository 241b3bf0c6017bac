#include "altruist/admm.hpp"

#include <Eigen/IterativeLinearSolvers>
#include <Eigen/QR>
#include <Eigen/SparseCholesky>

#include <algorithm>
#include <ostream>
#include <string>

namespace altruist {
namespace {

// Dense minimum-norm fallback is used up to this many unknowns.
constexpr Index kDenseFallbackMax = 4096;
constexpr double kPivotTolerance = 1e-12;
constexpr double kConsistencyTolerance = 1e-8;

void check_sizes(const OperatorSet& ops, const DisplacementField& d) {
  const Index cols = 2 * d.samples();
  if (ops.d_prime.cols() != cols || ops.d_r.cols() != cols ||
      ops.d_prime.rows() != ops.xi.size() || ops.d_r.rows() != ops.bias.size()) {
    throw InvalidArgument("operator set does not match the displacement grid");
  }
}

}  // namespace

SolverMode parse_solver_mode(std::string_view name) {
  if (name == "altruist") return SolverMode::kAltruist;
  if (name == "l2-baseline") return SolverMode::kL2Baseline;
  throw InvalidArgument("unknown solver mode '" + std::string(name) + "'");
}

std::string_view to_string(SolverMode mode) {
  return mode == SolverMode::kAltruist ? "altruist" : "l2-baseline";
}

LinearSolver parse_linear_solver(std::string_view name) {
  if (name == "auto") return LinearSolver::kAuto;
  if (name == "direct") return LinearSolver::kDirect;
  if (name == "conjugate-gradient" || name == "cg") return LinearSolver::kConjugateGradient;
  throw InvalidArgument("unknown linear solver '" + std::string(name) + "'");
}

std::string_view to_string(LinearSolver solver) {
  switch (solver) {
    case LinearSolver::kAuto: return "auto";
    case LinearSolver::kDirect: return "direct";
    case LinearSolver::kConjugateGradient: return "conjugate-gradient";
  }
  return "auto";
}

void SolverConfig::validate() const {
  params.validate();
  if (!(cg_tolerance > 0.0 && cg_tolerance < 1.0)) {
    throw InvalidArgument("cg_tolerance must lie in (0, 1)");
  }
  if (cg_max_iters < 0) throw InvalidArgument("cg_max_iters must be >= 0");
  if (relinearizations < 1) throw InvalidArgument("relinearizations must be >= 1");
}

struct SpdSolver::Impl {
  SparseMatrix system;
  LinearSolver method = LinearSolver::kDirect;
  double cg_tolerance = 1e-8;
  int cg_max_iters = 0;
  bool singular = false;
  Eigen::SimplicialLDLT<SparseMatrix> ldlt;
  Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> dense;
  bool use_dense = false;

  Eigen::VectorXd cg_solve(const Eigen::VectorXd& rhs) const {
    Eigen::ConjugateGradient<SparseMatrix, Eigen::Lower | Eigen::Upper> cg;
    cg.setTolerance(cg_tolerance);
    cg.setMaxIterations(cg_max_iters > 0 ? cg_max_iters : static_cast<int>(10 * system.rows()));
    cg.compute(system);
    Eigen::VectorXd x = cg.solve(rhs);
    if (cg.info() != Eigen::Success) {
      throw ConvergenceError("conjugate gradient stopped after " +
                                 std::to_string(cg.iterations()) +
                                 " iterations with relative residual " +
                                 std::to_string(cg.error()),
                             cg.error());
    }
    return x;
  }
};

SpdSolver::SpdSolver(const SparseMatrix& system, LinearSolver method,
                     double cg_tolerance, int cg_max_iters)
    : impl_(std::make_unique<Impl>()) {
  if (system.rows() != system.cols()) {
    throw InvalidArgument("SpdSolver: system matrix must be square");
  }
  impl_->system = system;
  impl_->cg_tolerance = cg_tolerance;
  impl_->cg_max_iters = cg_max_iters;
  if (method == LinearSolver::kAuto) {
    method = system.rows() / 2 <= kDirectSolverMaxSamples ? LinearSolver::kDirect
                                                         : LinearSolver::kConjugateGradient;
  }
  impl_->method = method;
  if (method == LinearSolver::kConjugateGradient) return;

  impl_->ldlt.compute(impl_->system);
  if (impl_->ldlt.info() == Eigen::Success) {
    const Eigen::VectorXd diag = impl_->ldlt.vectorD();
    const double scale = diag.size() > 0 ? diag.cwiseAbs().maxCoeff() : 0.0;
    impl_->singular = scale == 0.0 || (diag.array() <= kPivotTolerance * scale).any();
  } else {
    impl_->singular = true;
  }
  if (impl_->singular && system.rows() <= kDenseFallbackMax) {
    impl_->use_dense = true;
    impl_->dense.setThreshold(kPivotTolerance);
    impl_->dense.compute(Eigen::MatrixXd(impl_->system));
  }
}

SpdSolver::~SpdSolver() = default;
SpdSolver::SpdSolver(SpdSolver&&) noexcept = default;
SpdSolver& SpdSolver::operator=(SpdSolver&&) noexcept = default;

bool SpdSolver::singular() const { return impl_->singular; }
LinearSolver SpdSolver::method() const { return impl_->method; }
const SparseMatrix& SpdSolver::system() const { return impl_->system; }

Eigen::VectorXd SpdSolver::solve(const Eigen::VectorXd& rhs) const {
  if (rhs.size() != impl_->system.rows()) {
    throw InvalidArgument("SpdSolver: right-hand side has the wrong length");
  }
  if (impl_->method == LinearSolver::kConjugateGradient) return impl_->cg_solve(rhs);
  if (!impl_->singular) return impl_->ldlt.solve(rhs);

  // Minimum-norm solution of a consistent singular system: complete
  // orthogonal decomposition when small, CG from a zero start otherwise.
  Eigen::VectorXd x;
  if (impl_->use_dense) {
    x = impl_->dense.solve(rhs);
  } else {
    try {
      x = impl_->cg_solve(rhs);
    } catch (const ConvergenceError&) {
      throw SingularSystemError("singular normal equations with inconsistent right-hand side");
    }
  }
  const double res = (impl_->system * x - rhs).norm();
  if (!x.allFinite() || res > kConsistencyTolerance * std::max(rhs.norm(), 1e-300)) {
    throw SingularSystemError("singular normal equations with inconsistent right-hand side");
  }
  return x;
}

SparseMatrix normal_matrix(const OperatorSet& ops, double zeta) {
  if (!(zeta > 0.0)) throw InvalidArgument("zeta must be > 0");
  SparseMatrix data = SparseMatrix(ops.d_prime.transpose()) * ops.d_prime;
  SparseMatrix reg = SparseMatrix(ops.d_r.transpose()) * ops.d_r;
  SparseMatrix a = data + zeta * reg;
  a.makeCompressed();
  return a;
}

Eigen::VectorXd normal_rhs(const OperatorSet& ops, const DisplacementField& d,
                           const Eigen::VectorXd& nu, const Eigen::VectorXd& u,
                           double zeta) {
  check_sizes(ops, d);
  if (nu.size() != ops.d_r.rows() || u.size() != ops.d_r.rows()) {
    throw InvalidArgument("nu and u must match the regularization row count");
  }
  const Eigen::VectorXd shift = ops.d_r * d.values() + ops.bias - nu + u;
  return ops.d_prime.transpose() * ops.xi - zeta * (ops.d_r.transpose() * shift);
}

Eigen::VectorXd solve_quadratic(const OperatorSet& ops, const DisplacementField& d,
                                const Eigen::VectorXd& nu, const Eigen::VectorXd& u,
                                double zeta, LinearSolver method, double cg_tolerance,
                                int cg_max_iters) {
  const Eigen::VectorXd rhs = normal_rhs(ops, d, nu, u, zeta);
  const SpdSolver solver(normal_matrix(ops, zeta), method, cg_tolerance, cg_max_iters);
  return solver.solve(rhs);
}

double quadratic_objective(const OperatorSet& ops, const DisplacementField& d,
                           const Eigen::VectorXd& delta_d, const Eigen::VectorXd& nu,
                           const Eigen::VectorXd& u, double zeta) {
  check_sizes(ops, d);
  const double data = (ops.xi - ops.d_prime * delta_d).squaredNorm();
  const double reg =
      (ops.d_r * (delta_d + d.values()) + ops.bias - nu + u).squaredNorm();
  return 0.5 * data + 0.5 * zeta * reg;
}

double total_objective(const OperatorSet& ops, const DisplacementField& d,
                       const Eigen::VectorXd& delta_d) {
  check_sizes(ops, d);
  const double data = (ops.xi - ops.d_prime * delta_d).squaredNorm();
  const double reg = (ops.d_r * (delta_d + d.values()) + ops.bias).lpNorm<1>();
  return 0.5 * data + reg;
}

Eigen::VectorXd update_nu(const OperatorSet& ops, const DisplacementField& d,
                          const Eigen::VectorXd& delta_d, const Eigen::VectorXd& u,
                          double zeta) {
  check_sizes(ops, d);
  if (!(zeta > 0.0)) throw InvalidArgument("zeta must be > 0");
  return shrink(ops.d_r * (delta_d + d.values()) + ops.bias + u, 1.0 / zeta);
}

Eigen::VectorXd update_dual(const Eigen::VectorXd& u, const OperatorSet& ops,
                            const DisplacementField& d, const Eigen::VectorXd& delta_d,
                            const Eigen::VectorXd& nu) {
  check_sizes(ops, d);
  if (u.size() != ops.d_r.rows() || nu.size() != ops.d_r.rows()) {
    throw InvalidArgument("nu and u must match the regularization row count");
  }
  return u + ops.d_r * (delta_d + d.values()) + ops.bias - nu;
}

void ConvergenceTrace::write_csv(std::ostream& out) const {
  const auto precision = out.precision();
  out.precision(17);
  out << "iter,objective,primal_res,dual_res,data_res\n";
  for (const auto& r : records) {
    out << r.iter << ',' << r.objective << ',' << r.primal_res << ',' << r.dual_res
        << ',' << r.data_res << '\n';
  }
  out.precision(precision);
}

RunResult run(const Eigen::MatrixXd& frame1, const Eigen::MatrixXd& frame2,
              const DisplacementField& seed, const SolverConfig& config) {
  config.validate();
  if (frame1.rows() != frame2.rows() || frame1.cols() != frame2.cols() ||
      frame1.rows() != seed.rows() || frame1.cols() != seed.cols()) {
    throw InvalidArgument("run: frames and seed must share dimensions");
  }
  const RegParams& p = config.params;
  const double zeta = p.zeta;
  const int cg_max = config.cg_max_iters > 0 ? config.cg_max_iters
                                             : static_cast<int>(10 * 2 * seed.samples());

  DisplacementField d = seed;
  ConvergenceTrace trace;
  AdmmState state;
  int counter = 0;
  for (int outer = 0; outer < config.relinearizations; ++outer) {
    const OperatorSet ops = assemble(frame1, frame2, d, p);
    const SpdSolver solver(normal_matrix(ops, zeta), config.linear_solver,
                           config.cg_tolerance, cg_max);
    const Eigen::VectorXd data_rhs = ops.d_prime.transpose() * ops.xi;
    const Eigen::VectorXd c = ops.d_r * d.values() + ops.bias;
    const Index rows = ops.d_r.rows();

    state.delta_d = Eigen::VectorXd::Zero(2 * d.samples());
    state.nu = Eigen::VectorXd::Zero(rows);
    state.u = Eigen::VectorXd::Zero(rows);
    state.iteration = 0;

    const int iterations = config.mode == SolverMode::kL2Baseline ? 1 : p.iterations;
    for (int k = 0; k < iterations; ++k) {
      IterationRecord rec;
      rec.iter = ++counter;
      const Eigen::VectorXd shift = c - state.nu + state.u;
      const Eigen::VectorXd rhs = data_rhs - zeta * (ops.d_r.transpose() * shift);
      auto sub = [&](const Eigen::VectorXd& dd) {
        return 0.5 * (ops.xi - ops.d_prime * dd).squaredNorm() +
               0.5 * zeta * (ops.d_r * dd + shift).squaredNorm();
      };
      rec.sub_before = sub(state.delta_d);
      state.delta_d = solver.solve(rhs);
      rec.sub_after = sub(state.delta_d);
      rec.normal_res = (solver.system() * state.delta_d - rhs).norm();
      rec.normal_rhs_norm = rhs.norm();

      const Eigen::VectorXd r = ops.d_r * state.delta_d + c;
      if (config.mode == SolverMode::kAltruist) {
        const Eigen::VectorXd nu_next = shrink(r + state.u, 1.0 / zeta);
        state.u += r - nu_next;
        rec.dual_res = zeta * (ops.d_r.transpose() * (nu_next - state.nu)).norm();
        state.nu = nu_next;
      }
      rec.primal_res = (r - state.nu).norm();
      rec.data_res = (ops.xi - ops.d_prime * state.delta_d).norm();
      rec.objective = 0.5 * rec.data_res * rec.data_res + r.lpNorm<1>();
      state.iteration = k + 1;
      if (!state.delta_d.allFinite() || !state.u.allFinite()) {
        throw SingularSystemError("ADMM state became non-finite");
      }
      trace.records.push_back(rec);
    }
    d = DisplacementField(d.rows(), d.cols(), d.values() + state.delta_d);
  }
  return RunResult{std::move(d), std::move(trace), std::move(state)};
}

}  // namespace altruist
