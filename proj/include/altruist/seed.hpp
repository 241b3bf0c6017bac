#pragma once

#include <Eigen/Core>

#include "altruist/field.hpp"

namespace altruist {

struct SeedParams {
  int max_lag = 10;               // samples
  double smoothness_weight = 0.2; // cost per unit lag change between rows
  int median_window = 5;          // columns, odd

  /// Throws InvalidArgument for a frame with `rows` samples per A-line.
  void validate(Index rows) const;
};

/// Integer axial lag path of one A-line by dynamic programming: stage cost
/// |I1(i) - I2(i + k)| plus w * |k - k_prev|. Ties prefer the smaller |k|,
/// then the smaller k. Samples of I2 outside the line read as 0.
Eigen::VectorXi dp_column_lags(const Eigen::Ref<const Eigen::VectorXd>& pre,
                               const Eigen::Ref<const Eigen::VectorXd>& post,
                               int max_lag, double smoothness_weight);

/// Per-row median of an integer lag map across columns, window truncated
/// symmetrically at the left and right edges.
Eigen::MatrixXi median_filter_columns(const Eigen::MatrixXi& lags, int window);

/// Coarse integer displacement: per-column DP lags, median-smoothed across
/// columns; lateral components are zero.
DisplacementField dp_seed(const Eigen::MatrixXd& frame1,
                          const Eigen::MatrixXd& frame2,
                          const SeedParams& params);
inline DisplacementField dp_seed(const RfFrame& frame1, const RfFrame& frame2,
                                 const SeedParams& params) {
  return dp_seed(frame1.samples, frame2.samples, params);
}

}  // namespace altruist
