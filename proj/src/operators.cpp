#include "altruist/operators.hpp"

#include <algorithm>
#include <iomanip>
#include <ostream>
#include <string>
#include <vector>

namespace altruist {
namespace {

using Triplets = std::vector<Eigen::Triplet<double>>;

void push(Triplets& t, Index row, Index col, double value) {
  if (value != 0.0) t.emplace_back(static_cast<int>(row), static_cast<int>(col), value);
}

void require(bool ok, const char* what) {
  if (!ok) throw InvalidArgument(what);
}

void check_weights(std::initializer_list<double> ws) {
  for (double w : ws) {
    require(std::isfinite(w) && w >= 0.0, "operator weights must be finite and >= 0");
  }
}

// Component c (0 axial, 1 lateral) of sample (i, j).
Index col_of(Index i, Index j, int c, Index n) { return 2 * flat_index(i, j, n) + c; }

void emit_first_row_prior(Triplets& t, Index offset, Index n, double gamma) {
  for (Index j = 0; j < n; ++j) push(t, offset + 2 * j, col_of(0, j, 0, n), gamma);
}

void emit_first_order_axial(Triplets& t, Index offset, Index m, Index n,
                            double alpha1, double beta1) {
  const double w[2] = {alpha1, beta1};
  for (Index i = 1; i < m; ++i) {
    for (Index j = 0; j < n; ++j) {
      for (int c = 0; c < 2; ++c) {
        const Index row = offset + col_of(i, j, c, n);
        push(t, row, col_of(i - 1, j, c, n), -w[c]);
        push(t, row, col_of(i, j, c, n), w[c]);
      }
    }
  }
}

void emit_first_order_lateral(Triplets& t, Index offset, Index m, Index n,
                              double alpha2, double beta2) {
  const double w[2] = {alpha2, beta2};
  for (Index i = 0; i < m; ++i) {
    for (Index j = 1; j < n; ++j) {
      for (int c = 0; c < 2; ++c) {
        const Index row = offset + col_of(i, j, c, n);
        push(t, row, col_of(i, j - 1, c, n), -w[c]);
        push(t, row, col_of(i, j, c, n), w[c]);
      }
    }
  }
}

void emit_second_order_axial(Triplets& t, Index offset, Index m, Index n,
                             double theta1, double lambda1) {
  const double w[2] = {theta1, lambda1};
  for (Index i = 1; i + 1 < m; ++i) {
    for (Index j = 0; j < n; ++j) {
      for (int c = 0; c < 2; ++c) {
        const Index row = offset + col_of(i, j, c, n);
        push(t, row, col_of(i - 1, j, c, n), w[c]);
        push(t, row, col_of(i, j, c, n), -2.0 * w[c]);
        push(t, row, col_of(i + 1, j, c, n), w[c]);
      }
    }
  }
}

void emit_second_order_lateral(Triplets& t, Index offset, Index m, Index n,
                               double theta2, double lambda2) {
  const double w[2] = {theta2, lambda2};
  for (Index i = 0; i < m; ++i) {
    for (Index j = 1; j + 1 < n; ++j) {
      for (int c = 0; c < 2; ++c) {
        const Index row = offset + col_of(i, j, c, n);
        push(t, row, col_of(i, j - 1, c, n), w[c]);
        push(t, row, col_of(i, j, c, n), -2.0 * w[c]);
        push(t, row, col_of(i, j + 1, c, n), w[c]);
      }
    }
  }
}

SparseMatrix from_triplets(Index rows, Index cols, const Triplets& t) {
  SparseMatrix s(rows, cols);
  s.setFromTriplets(t.begin(), t.end());
  s.makeCompressed();
  return s;
}

void check_frames(const Eigen::MatrixXd& f, const DisplacementField& d,
                  const char* who) {
  if (f.rows() != d.rows() || f.cols() != d.cols()) {
    throw InvalidArgument(std::string(who) + ": frame is " +
                          std::to_string(f.rows()) + " x " +
                          std::to_string(f.cols()) + ", displacement is " +
                          std::to_string(d.rows()) + " x " +
                          std::to_string(d.cols()));
  }
}

}  // namespace

std::array<Index, 5> block_offsets(Index m, Index n) {
  const Index mn2 = 2 * m * n;
  return {0, 2 * n, 2 * n + mn2, 2 * n + 2 * mn2, 2 * n + 3 * mn2};
}

Eigen::VectorXd build_xi(const Eigen::MatrixXd& frame1,
                         const Eigen::MatrixXd& frame2,
                         const DisplacementField& d) {
  check_frames(frame1, d, "build_xi");
  check_frames(frame2, d, "build_xi");
  const Index m = d.rows();
  const Index n = d.cols();
  Eigen::VectorXd xi(m * n);
  for (Index i = 0; i < m; ++i) {
    for (Index j = 0; j < n; ++j) {
      const auto warped = interp_bilinear(frame2, static_cast<double>(i + 1) + d.axial(i, j),
                                          static_cast<double>(j + 1) + d.lateral(i, j));
      xi[flat_index(i, j, n)] = warped.in_bounds ? frame1(i, j) - warped.value : 0.0;
    }
  }
  return xi;
}

SparseMatrix build_d_prime(const Eigen::MatrixXd& frame2,
                           const DisplacementField& d) {
  check_frames(frame2, d, "build_d_prime");
  const Index m = d.rows();
  const Index n = d.cols();
  const Gradients g = spatial_gradients(frame2, d);
  Triplets t;
  t.reserve(static_cast<std::size_t>(2 * m * n));
  for (Index i = 0; i < m; ++i) {
    for (Index j = 0; j < n; ++j) {
      if (!g.in_bounds(i, j)) continue;
      const Index p = flat_index(i, j, n);
      push(t, p, 2 * p, g.axial(i, j));
      push(t, p, 2 * p + 1, g.lateral(i, j));
    }
  }
  return from_triplets(m * n, 2 * m * n, t);
}

SparseMatrix build_first_order_axial(Index m, Index n, double alpha1, double beta1) {
  require(m >= 2 && n >= 1, "build_first_order_axial: need m >= 2");
  check_weights({alpha1, beta1});
  Triplets t;
  emit_first_order_axial(t, 0, m, n, alpha1, beta1);
  return from_triplets(2 * m * n, 2 * m * n, t);
}

SparseMatrix build_first_order_lateral(Index m, Index n, double alpha2, double beta2) {
  require(m >= 1 && n >= 2, "build_first_order_lateral: need m >= 1, n >= 2");
  check_weights({alpha2, beta2});
  Triplets t;
  emit_first_order_lateral(t, 0, m, n, alpha2, beta2);
  return from_triplets(2 * m * n, 2 * m * n, t);
}

SparseMatrix build_second_order_axial(Index m, Index n, double theta1, double lambda1) {
  require(m >= 3 && n >= 1, "build_second_order_axial: need m >= 3");
  check_weights({theta1, lambda1});
  Triplets t;
  emit_second_order_axial(t, 0, m, n, theta1, lambda1);
  return from_triplets(2 * m * n, 2 * m * n, t);
}

SparseMatrix build_second_order_lateral(Index m, Index n, double theta2, double lambda2) {
  require(m >= 1 && n >= 3, "build_second_order_lateral: need n >= 3");
  check_weights({theta2, lambda2});
  Triplets t;
  emit_second_order_lateral(t, 0, m, n, theta2, lambda2);
  return from_triplets(2 * m * n, 2 * m * n, t);
}

SparseMatrix build_first_row_prior(Index m, Index n, double gamma) {
  require(m >= 1 && n >= 1, "build_first_row_prior: need m, n >= 1");
  check_weights({gamma});
  Triplets t;
  emit_first_row_prior(t, 0, n, gamma);
  return from_triplets(2 * n, 2 * m * n, t);
}

SparseMatrix build_regularization(Index m, Index n, const RegParams& p) {
  // Second-order blocks stay empty on a 2-sample axis.
  require(m >= 2 && n >= 2, "build_regularization: need m, n >= 2");
  p.validate();
  const auto off = block_offsets(m, n);
  Triplets t;
  t.reserve(static_cast<std::size_t>(2 * n + 20 * m * n));
  emit_first_row_prior(t, off[0], n, p.gamma);
  emit_first_order_axial(t, off[1], m, n, p.alpha1, p.beta1);
  emit_first_order_lateral(t, off[2], m, n, p.alpha2, p.beta2);
  emit_second_order_axial(t, off[3], m, n, p.theta1, p.lambda1);
  emit_second_order_lateral(t, off[4], m, n, p.theta2, p.lambda2);
  return from_triplets(regularization_rows(m, n), 2 * m * n, t);
}

Eigen::VectorXd build_bias(Index m, Index n, BiasMode mode, double alpha1,
                           const DisplacementField& seed) {
  Eigen::VectorXd bias = Eigen::VectorXd::Zero(regularization_rows(m, n));
  if (mode == BiasMode::kZero) return bias;
  if (seed.rows() != m || seed.cols() != n) {
    throw InvalidArgument("build_bias: seed dimensions do not match the grid");
  }
  if (m < 2) return bias;
  std::vector<double> increments;
  increments.reserve(static_cast<std::size_t>((m - 1) * n));
  for (Index i = 1; i < m; ++i)
    for (Index j = 0; j < n; ++j)
      increments.push_back(seed.axial(i, j) - seed.axial(i - 1, j));
  // Lower median keeps the value an actual increment of the seed.
  const auto mid = increments.begin() + static_cast<std::ptrdiff_t>((increments.size() - 1) / 2);
  std::nth_element(increments.begin(), mid, increments.end());
  const double value = -alpha1 * *mid;
  const Index offset = block_offsets(m, n)[1];
  for (Index i = 1; i < m; ++i)
    for (Index j = 0; j < n; ++j) bias[offset + col_of(i, j, 0, n)] = value;
  return bias;
}

OperatorSet assemble(const Eigen::MatrixXd& frame1, const Eigen::MatrixXd& frame2,
                     const DisplacementField& d, const RegParams& params) {
  const Index m = d.rows();
  const Index n = d.cols();
  OperatorSet ops;
  ops.xi = build_xi(frame1, frame2, d);
  ops.d_prime = build_d_prime(frame2, d);
  ops.d_r = build_regularization(m, n, params);
  ops.bias = build_bias(m, n, params.bias_mode, params.alpha1, d);
  return ops;
}

void write_coordinate_list(const SparseMatrix& matrix, std::ostream& out) {
  const auto flags = out.flags();
  const auto precision = out.precision();
  out << std::setprecision(17);
  std::vector<std::array<double, 3>> entries;
  entries.reserve(static_cast<std::size_t>(matrix.nonZeros()));
  for (Index k = 0; k < matrix.outerSize(); ++k)
    for (SparseMatrix::InnerIterator it(matrix, k); it; ++it)
      entries.push_back({static_cast<double>(it.row()), static_cast<double>(it.col()), it.value()});
  std::sort(entries.begin(), entries.end());
  for (const auto& e : entries) {
    out << static_cast<Index>(e[0]) << ' ' << static_cast<Index>(e[1]) << ' ' << e[2] << '\n';
  }
  out.flags(flags);
  out.precision(precision);
}

}  // namespace altruist
