#include "altruist/field.hpp"

#include <algorithm>
#include <string>

namespace altruist {

void RfFrame::validate() const {
  if (samples.rows() < 4 || samples.cols() < 4) {
    throw InvalidArgument("RfFrame: need at least 4 x 4 samples, got " +
                          std::to_string(samples.rows()) + " x " +
                          std::to_string(samples.cols()));
  }
  if (!samples.allFinite()) {
    throw InvalidArgument("RfFrame: non-finite amplitude");
  }
}

DisplacementField::DisplacementField(Index m, Index n)
    : m_(m), n_(n), values_(Eigen::VectorXd::Zero(2 * m * n)) {
  if (m < 1 || n < 1) throw InvalidArgument("DisplacementField: empty grid");
}

DisplacementField::DisplacementField(Index m, Index n, Eigen::VectorXd values)
    : m_(m), n_(n), values_(std::move(values)) {
  if (m < 1 || n < 1) throw InvalidArgument("DisplacementField: empty grid");
  if (values_.size() != 2 * m * n) {
    throw InvalidArgument("DisplacementField: expected " +
                          std::to_string(2 * m * n) + " values, got " +
                          std::to_string(values_.size()));
  }
  if (!values_.allFinite()) {
    throw InvalidArgument("DisplacementField: non-finite value");
  }
}

DisplacementField DisplacementField::from_components(
    const Eigen::MatrixXd& axial, const Eigen::MatrixXd& lateral) {
  if (axial.rows() != lateral.rows() || axial.cols() != lateral.cols()) {
    throw InvalidArgument("DisplacementField: component shapes differ");
  }
  DisplacementField d(axial.rows(), axial.cols());
  for (Index i = 0; i < axial.rows(); ++i) {
    for (Index j = 0; j < axial.cols(); ++j) {
      d.axial(i, j) = axial(i, j);
      d.lateral(i, j) = lateral(i, j);
    }
  }
  if (!d.values_.allFinite()) {
    throw InvalidArgument("DisplacementField: non-finite value");
  }
  return d;
}

Eigen::MatrixXd DisplacementField::axial_matrix() const {
  Eigen::MatrixXd out(m_, n_);
  for (Index i = 0; i < m_; ++i)
    for (Index j = 0; j < n_; ++j) out(i, j) = axial(i, j);
  return out;
}

Eigen::MatrixXd DisplacementField::lateral_matrix() const {
  Eigen::MatrixXd out(m_, n_);
  for (Index i = 0; i < m_; ++i)
    for (Index j = 0; j < n_; ++j) out(i, j) = lateral(i, j);
  return out;
}

DisplacementField DisplacementField::operator+(
    const DisplacementField& other) const {
  if (other.m_ != m_ || other.n_ != n_) {
    throw InvalidArgument("DisplacementField: dimension mismatch in sum");
  }
  return DisplacementField(m_, n_, values_ + other.values_);
}

BiasMode parse_bias_mode(std::string_view name) {
  if (name == "zero") return BiasMode::kZero;
  if (name == "mean-strain") return BiasMode::kMeanStrain;
  throw InvalidArgument("unknown bias mode '" + std::string(name) + "'");
}

std::string_view to_string(BiasMode mode) {
  return mode == BiasMode::kZero ? "zero" : "mean-strain";
}

RegParams RegParams::from_multiplier(double alpha1, double alpha2, double beta1,
                                     double beta2, double mf, double gamma,
                                     double zeta, int iterations) {
  RegParams p;
  p.alpha1 = alpha1;
  p.alpha2 = alpha2;
  p.beta1 = beta1;
  p.beta2 = beta2;
  p.theta1 = mf * alpha1;
  p.theta2 = mf * alpha2;
  p.lambda1 = mf * beta1;
  p.lambda2 = mf * beta2;
  p.gamma = gamma;
  p.zeta = zeta;
  p.mf = mf;
  p.iterations = iterations;
  return p;
}

void RegParams::validate() const {
  const double weights[] = {alpha1, alpha2, beta1,   beta2,  theta1,
                            theta2, lambda1, lambda2, gamma};
  for (double w : weights) {
    if (!(w >= 0.0) || !std::isfinite(w)) {
      throw InvalidArgument("RegParams: weights must be finite and >= 0");
    }
  }
  if (!(zeta > 0.0) || !std::isfinite(zeta)) {
    throw InvalidArgument("RegParams: zeta must be > 0");
  }
  if (iterations < 1) {
    throw InvalidArgument("RegParams: iterations must be >= 1");
  }
}

RegParams preset_params(std::string_view name) {
  // {alpha1, alpha2, beta1, beta2, mf, gamma, zeta}
  if (name == "layer")
    return RegParams::from_multiplier(0.015, 0.0012, 0.015, 0.0012, 100, 0.0001, 3000);
  if (name == "inclusion")
    return RegParams::from_multiplier(0.05, 0.00015, 0.025, 0.000075, 25, 0.0001, 8000);
  if (name == "breast")
    return RegParams::from_multiplier(0.09, 0.0006, 0.045, 0.0003, 25, 0.00001, 3000);
  if (name == "liver1")
    return RegParams::from_multiplier(0.03, 0.0005, 0.015, 0.00025, 45, 0, 20000);
  if (name == "liver2")
    return RegParams::from_multiplier(0.00018, 0.0000006, 0.00018, 0.0000002, 100, 0, 2200000);
  if (name == "liver3")
    return RegParams::from_multiplier(0.0075, 0.00005, 0.00375, 0.000025, 45, 0, 20000);
  throw InvalidArgument("unknown parameter preset '" + std::string(name) + "'");
}

Gradients spatial_gradients(const Eigen::MatrixXd& samples,
                            const DisplacementField& warp) {
  const Index m = samples.rows();
  const Index n = samples.cols();
  if (warp.rows() != m || warp.cols() != n) {
    throw InvalidArgument("spatial_gradients: warp is " +
                          std::to_string(warp.rows()) + " x " +
                          std::to_string(warp.cols()) + ", frame is " +
                          std::to_string(m) + " x " + std::to_string(n));
  }
  Gradients g{Eigen::MatrixXd(m, n), Eigen::MatrixXd(m, n),
              decltype(Gradients::in_bounds)(m, n)};
  for (Index i = 0; i < m; ++i) {
    for (Index j = 0; j < n; ++j) {
      const double y = static_cast<double>(i + 1) + warp.axial(i, j);
      const double x = static_cast<double>(j + 1) + warp.lateral(i, j);
      const auto down = interp_bilinear(samples, y + 0.5, x);
      const auto up = interp_bilinear(samples, y - 0.5, x);
      const auto right = interp_bilinear(samples, y, x + 0.5);
      const auto left = interp_bilinear(samples, y, x - 0.5);
      g.axial(i, j) = down.value - up.value;
      g.lateral(i, j) = right.value - left.value;
      g.in_bounds(i, j) =
          down.in_bounds && up.in_bounds && right.in_bounds && left.in_bounds;
    }
  }
  return g;
}

StrainImage strain_from_displacement(const Eigen::MatrixXd& axial,
                                     int kernel_length) {
  const Index m = axial.rows();
  const Index n = axial.cols();
  if (kernel_length < 3 || kernel_length % 2 == 0) {
    throw InvalidArgument("strain kernel length must be odd and >= 3, got " +
                          std::to_string(kernel_length));
  }
  if (kernel_length > m) {
    throw InvalidArgument("strain kernel length " +
                          std::to_string(kernel_length) +
                          " exceeds the number of rows " + std::to_string(m));
  }
  const Index half = kernel_length / 2;
  StrainImage out{Eigen::MatrixXd::Zero(m, n), kernel_length};
  for (Index i = 0; i < m; ++i) {
    const Index h = std::min({half, i, m - 1 - i});
    for (Index j = 0; j < n; ++j) {
      if (h == 0) {
        out.values(i, j) = i == 0 ? axial(1, j) - axial(0, j)
                                  : axial(i, j) - axial(i - 1, j);
        continue;
      }
      // Centred window, so the abscissa mean is i itself.
      double num = 0.0;
      double den = 0.0;
      for (Index k = -h; k <= h; ++k) {
        num += static_cast<double>(k) * axial(i + k, j);
        den += static_cast<double>(k * k);
      }
      out.values(i, j) = num / den;
    }
  }
  return out;
}

StrainImage strain_from_displacement(const DisplacementField& disp,
                                     int kernel_length) {
  return strain_from_displacement(disp.axial_matrix(), kernel_length);
}

}  // namespace altruist
