#include "altruist/seed.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

namespace altruist {

void SeedParams::validate(Index rows) const {
  if (max_lag < 1) throw InvalidArgument("seed max_lag must be >= 1");
  if (2 * static_cast<Index>(max_lag) >= rows) {
    throw InvalidArgument("seed max_lag " + std::to_string(max_lag) +
                          " must be below half the row count " +
                          std::to_string(rows));
  }
  if (!(smoothness_weight >= 0.0) || !std::isfinite(smoothness_weight)) {
    throw InvalidArgument("seed smoothness weight must be finite and >= 0");
  }
  if (median_window < 1 || median_window % 2 == 0) {
    throw InvalidArgument("seed median window must be odd and >= 1");
  }
}

Eigen::VectorXi dp_column_lags(const Eigen::Ref<const Eigen::VectorXd>& pre,
                               const Eigen::Ref<const Eigen::VectorXd>& post,
                               int max_lag, double w) {
  const Index m = pre.size();
  const int span = 2 * max_lag + 1;
  // Lags visited in preference order 0, -1, 1, -2, 2, ...; strict comparisons
  // then resolve ties toward the earlier (preferred) lag.
  std::vector<int> order(static_cast<std::size_t>(span));
  order[0] = 0;
  for (int r = 1; r <= max_lag; ++r) {
    order[static_cast<std::size_t>(2 * r - 1)] = -r;
    order[static_cast<std::size_t>(2 * r)] = r;
  }
  auto stage = [&](Index i, int k) {
    const Index src = i + k;
    const double v = (src >= 0 && src < m) ? post[src] : 0.0;
    return std::abs(pre[i] - v);
  };

  std::vector<double> cost(static_cast<std::size_t>(span));
  std::vector<double> next(static_cast<std::size_t>(span));
  // back[i * span + (k + max_lag)] = predecessor lag at row i - 1.
  std::vector<int> back(static_cast<std::size_t>(m * span), 0);
  for (int k = -max_lag; k <= max_lag; ++k) cost[static_cast<std::size_t>(k + max_lag)] = stage(0, k);

  for (Index i = 1; i < m; ++i) {
    for (int k = -max_lag; k <= max_lag; ++k) {
      double best = std::numeric_limits<double>::infinity();
      int arg = 0;
      for (int kp : order) {
        const double c = cost[static_cast<std::size_t>(kp + max_lag)] + w * std::abs(k - kp);
        if (c < best) {
          best = c;
          arg = kp;
        }
      }
      next[static_cast<std::size_t>(k + max_lag)] = best + stage(i, k);
      back[static_cast<std::size_t>(i * span + k + max_lag)] = arg;
    }
    std::swap(cost, next);
  }

  int k = 0;
  double best = std::numeric_limits<double>::infinity();
  for (int kp : order) {
    if (cost[static_cast<std::size_t>(kp + max_lag)] < best) {
      best = cost[static_cast<std::size_t>(kp + max_lag)];
      k = kp;
    }
  }
  Eigen::VectorXi lags(m);
  for (Index i = m - 1; i >= 0; --i) {
    lags[i] = k;
    if (i > 0) k = back[static_cast<std::size_t>(i * span + k + max_lag)];
  }
  return lags;
}

Eigen::MatrixXi median_filter_columns(const Eigen::MatrixXi& lags, int window) {
  if (window < 1 || window % 2 == 0) {
    throw InvalidArgument("median window must be odd and >= 1");
  }
  const Index n = lags.cols();
  const Index half = window / 2;
  Eigen::MatrixXi out(lags.rows(), n);
  std::vector<int> buf;
  for (Index i = 0; i < lags.rows(); ++i) {
    for (Index j = 0; j < n; ++j) {
      const Index h = std::min({half, j, n - 1 - j});
      buf.clear();
      for (Index c = j - h; c <= j + h; ++c) buf.push_back(lags(i, c));
      auto mid = buf.begin() + static_cast<std::ptrdiff_t>(h);
      std::nth_element(buf.begin(), mid, buf.end());
      out(i, j) = *mid;
    }
  }
  return out;
}

DisplacementField dp_seed(const Eigen::MatrixXd& frame1,
                          const Eigen::MatrixXd& frame2,
                          const SeedParams& params) {
  if (frame1.rows() != frame2.rows() || frame1.cols() != frame2.cols()) {
    throw InvalidArgument("dp_seed: frames differ in size");
  }
  params.validate(frame1.rows());
  const Index m = frame1.rows();
  const Index n = frame1.cols();
  Eigen::MatrixXi lags(m, n);
  for (Index j = 0; j < n; ++j) {
    lags.col(j) = dp_column_lags(frame1.col(j), frame2.col(j), params.max_lag,
                                 params.smoothness_weight);
  }
  const Eigen::MatrixXi smoothed = median_filter_columns(lags, params.median_window);
  return DisplacementField::from_components(smoothed.cast<double>(),
                                            Eigen::MatrixXd::Zero(m, n));
}

}  // namespace altruist
