#pragma once

// ADMM refinement of a seed displacement field.
//
// With c = D_R d + bias, each iteration performs
//
//   dd <- argmin 0.5 ||xi - D' dd||^2 + zeta/2 ||D_R dd + c - nu + u||^2
//   nu <- shrink(D_R dd + c + u, 1 / zeta)
//   u  <- u + D_R dd + c - nu
//
// The quadratic step solves (D'^T D' + zeta D_R^T D_R) dd = rhs; the system
// matrix is fixed for a linearization point, so it is factorized once.

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include <cmath>
#include <iosfwd>
#include <memory>
#include <string_view>
#include <vector>

#include "altruist/field.hpp"
#include "altruist/operators.hpp"

namespace altruist {

enum class SolverMode { kAltruist, kL2Baseline };
enum class LinearSolver { kAuto, kDirect, kConjugateGradient };

SolverMode parse_solver_mode(std::string_view name);
std::string_view to_string(SolverMode mode);
LinearSolver parse_linear_solver(std::string_view name);
std::string_view to_string(LinearSolver solver);

struct SolverConfig {
  RegParams params;
  LinearSolver linear_solver = LinearSolver::kAuto;
  double cg_tolerance = 1e-8;
  int cg_max_iters = 0;  // 0 means 10 * unknowns
  SolverMode mode = SolverMode::kAltruist;
  // Outer loops that re-linearize around the running total; 1 keeps a single
  // linearization at the seed.
  int relinearizations = 1;

  void validate() const;
};

/// Grid size up to which kAuto picks the direct factorization.
inline constexpr Index kDirectSolverMaxSamples = 65536;

/// Soft threshold sign(x) * max(|x| - t, 0), element-wise.
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, 1> shrink(
    const Eigen::MatrixBase<Derived>& v, typename Derived::Scalar threshold) {
  using Scalar = typename Derived::Scalar;
  if (!(threshold > Scalar(0))) {
    throw InvalidArgument("shrink: threshold must be > 0");
  }
  return v.unaryExpr([threshold](Scalar x) {
    const Scalar mag = std::abs(x) - threshold;
    const Scalar sign = x > Scalar(0) ? Scalar(1) : (x < Scalar(0) ? Scalar(-1) : Scalar(0));
    return sign * (mag > Scalar(0) ? mag : Scalar(0));
  });
}

/// Factorized (or CG-backed) solver for a symmetric positive semidefinite
/// sparse system. Singular systems fall back to a minimum-norm solve and
/// throw SingularSystemError when the right-hand side is inconsistent.
class SpdSolver {
 public:
  SpdSolver(const SparseMatrix& system, LinearSolver method,
            double cg_tolerance = 1e-8, int cg_max_iters = 0);
  ~SpdSolver();
  SpdSolver(SpdSolver&&) noexcept;
  SpdSolver& operator=(SpdSolver&&) noexcept;

  Eigen::VectorXd solve(const Eigen::VectorXd& rhs) const;

  bool singular() const;
  LinearSolver method() const;
  const SparseMatrix& system() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// D'^T D' + zeta D_R^T D_R.
SparseMatrix normal_matrix(const OperatorSet& ops, double zeta);

/// D'^T xi - zeta D_R^T (D_R d + bias - nu + u).
Eigen::VectorXd normal_rhs(const OperatorSet& ops, const DisplacementField& d,
                           const Eigen::VectorXd& nu, const Eigen::VectorXd& u,
                           double zeta);

/// One-shot minimizer of the quadratic sub-problem.
Eigen::VectorXd solve_quadratic(const OperatorSet& ops, const DisplacementField& d,
                                const Eigen::VectorXd& nu, const Eigen::VectorXd& u,
                                double zeta,
                                LinearSolver method = LinearSolver::kDirect,
                                double cg_tolerance = 1e-8, int cg_max_iters = 0);

/// 0.5 ||xi - D' dd||^2 + zeta/2 ||D_R dd + D_R d + bias - nu + u||^2.
double quadratic_objective(const OperatorSet& ops, const DisplacementField& d,
                           const Eigen::VectorXd& delta_d, const Eigen::VectorXd& nu,
                           const Eigen::VectorXd& u, double zeta);

/// 0.5 ||xi - D' dd||^2 + ||D_R dd + D_R d + bias||_1.
double total_objective(const OperatorSet& ops, const DisplacementField& d,
                       const Eigen::VectorXd& delta_d);

Eigen::VectorXd update_nu(const OperatorSet& ops, const DisplacementField& d,
                          const Eigen::VectorXd& delta_d, const Eigen::VectorXd& u,
                          double zeta);

Eigen::VectorXd update_dual(const Eigen::VectorXd& u, const OperatorSet& ops,
                            const DisplacementField& d, const Eigen::VectorXd& delta_d,
                            const Eigen::VectorXd& nu);

struct AdmmState {
  Eigen::VectorXd delta_d;
  Eigen::VectorXd nu;
  Eigen::VectorXd u;
  int iteration = 0;
};

struct IterationRecord {
  int iter = 0;
  double objective = 0.0;       // L2 data + L1 regularization
  double primal_res = 0.0;      // ||D_R dd + c - nu||
  double dual_res = 0.0;        // zeta ||D_R^T (nu_k - nu_{k-1})||
  double data_res = 0.0;        // ||xi - D' dd||
  double sub_before = 0.0;      // quadratic sub-problem at the previous dd
  double sub_after = 0.0;       // quadratic sub-problem at the new dd
  double normal_res = 0.0;      // ||A dd - rhs||
  double normal_rhs_norm = 0.0; // ||rhs||
};

struct ConvergenceTrace {
  std::vector<IterationRecord> records;

  /// `iter,objective,primal_res,dual_res,data_res` with a header line.
  void write_csv(std::ostream& out) const;
};

struct RunResult {
  DisplacementField total;
  ConvergenceTrace trace;
  AdmmState state;
};

/// Seed -> refined total displacement.
RunResult run(const Eigen::MatrixXd& frame1, const Eigen::MatrixXd& frame2,
              const DisplacementField& seed, const SolverConfig& config);
inline RunResult run(const RfFrame& frame1, const RfFrame& frame2,
                     const DisplacementField& seed, const SolverConfig& config) {
  return run(frame1.samples, frame2.samples, seed, config);
}

}  // namespace altruist
