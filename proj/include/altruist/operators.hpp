#pragma once

// Sparse operators of the linearized displacement problem:
//
//   0.5 * ||xi - D' dd||^2 + ||D_R (dd + d) + bias||_1
//
// D_R stacks, in this order, the first-row prior (2n rows) and the axial
// first-order, lateral first-order, axial second-order and lateral
// second-order difference blocks (2mn rows each).

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include <array>
#include <iosfwd>

#include "altruist/field.hpp"

namespace altruist {

using SparseMatrix = Eigen::SparseMatrix<double>;

struct OperatorSet {
  SparseMatrix d_prime;  // mn x 2mn
  Eigen::VectorXd xi;    // mn
  SparseMatrix d_r;      // (8mn + 2n) x 2mn
  Eigen::VectorXd bias;  // 8mn + 2n
};

/// Row count of the stacked regularization operator.
inline Index regularization_rows(Index m, Index n) { return 8 * m * n + 2 * n; }

/// First row of each D_R block: first-row prior, D1a, D1l, D2a, D2l.
std::array<Index, 5> block_offsets(Index m, Index n);

/// Residual I1(i, j) - I2(i + a, j + l); zero where the warped point leaves
/// the frame.
Eigen::VectorXd build_xi(const Eigen::MatrixXd& frame1,
                         const Eigen::MatrixXd& frame2,
                         const DisplacementField& d);

/// Block-diagonal gradient matrix: row p holds the axial and lateral
/// derivatives of frame2 at the warped position of sample p. Rows whose
/// half-sample stencil leaves the frame are empty.
SparseMatrix build_d_prime(const Eigen::MatrixXd& frame2,
                           const DisplacementField& d);

SparseMatrix build_first_order_axial(Index m, Index n, double alpha1, double beta1);
SparseMatrix build_first_order_lateral(Index m, Index n, double alpha2, double beta2);
SparseMatrix build_second_order_axial(Index m, Index n, double theta1, double lambda1);
SparseMatrix build_second_order_lateral(Index m, Index n, double theta2, double lambda2);
SparseMatrix build_first_row_prior(Index m, Index n, double gamma);

/// All five blocks stacked into D_R.
SparseMatrix build_regularization(Index m, Index n, const RegParams& params);

/// Offset vector added inside the L1 term. In mean-strain mode the axial
/// entries of the axial first-order block (rows i >= 2) hold
/// -alpha1 * median axial increment of the seed.
Eigen::VectorXd build_bias(Index m, Index n, BiasMode mode, double alpha1,
                           const DisplacementField& seed);

OperatorSet assemble(const Eigen::MatrixXd& frame1, const Eigen::MatrixXd& frame2,
                     const DisplacementField& d, const RegParams& params);
inline OperatorSet assemble(const RfFrame& frame1, const RfFrame& frame2,
                            const DisplacementField& d, const RegParams& params) {
  return assemble(frame1.samples, frame2.samples, d, params);
}

/// `row col value` per line, 0-based.
void write_coordinate_list(const SparseMatrix& matrix, std::ostream& out);

}  // namespace altruist
