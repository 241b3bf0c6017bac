#pragma once

// Core raster types and the sampling primitives shared by every stage of the
// estimator.
//
// Index convention: rows are axial (fast-time) samples, columns are lateral
// A-lines. Code indexes rows/columns from 0; interpolation coordinates are
// 1-based so that the warped position of sample (i, j) reads (i + a, j + l).
// A displacement field is flattened axial-major with interleaved components:
// sample p = i * n + j stores its axial value at 2p and its lateral value at
// 2p + 1.

#include <Eigen/Core>

#include <cmath>
#include <cstddef>
#include <string>
#include <string_view>

#include "altruist/errors.hpp"

namespace altruist {

using Index = Eigen::Index;

/// One RF echo frame with acquisition metadata.
struct RfFrame {
  Eigen::MatrixXd samples;
  double sampling_rate = 0.0;     // Hz
  double center_frequency = 0.0;  // Hz
  double axial_spacing = 0.0;     // m / sample, 0 when unknown
  double lateral_spacing = 0.0;   // m / line, 0 when unknown

  RfFrame() = default;
  explicit RfFrame(Eigen::MatrixXd s) : samples(std::move(s)) { validate(); }

  Index rows() const { return samples.rows(); }
  Index cols() const { return samples.cols(); }

  /// Throws InvalidArgument unless m, n >= 4 and every amplitude is finite.
  void validate() const;
};

/// Interleaved axial/lateral displacement, in samples (axial) and lines
/// (lateral).
class DisplacementField {
 public:
  DisplacementField() = default;
  DisplacementField(Index m, Index n);
  DisplacementField(Index m, Index n, Eigen::VectorXd values);

  static DisplacementField from_components(const Eigen::MatrixXd& axial,
                                           const Eigen::MatrixXd& lateral);

  Index rows() const { return m_; }
  Index cols() const { return n_; }
  Index samples() const { return m_ * n_; }

  const Eigen::VectorXd& values() const { return values_; }
  Eigen::VectorXd& values() { return values_; }

  double axial(Index i, Index j) const { return values_[2 * (i * n_ + j)]; }
  double lateral(Index i, Index j) const { return values_[2 * (i * n_ + j) + 1]; }
  double& axial(Index i, Index j) { return values_[2 * (i * n_ + j)]; }
  double& lateral(Index i, Index j) { return values_[2 * (i * n_ + j) + 1]; }

  Eigen::MatrixXd axial_matrix() const;
  Eigen::MatrixXd lateral_matrix() const;

  DisplacementField operator+(const DisplacementField& other) const;

 private:
  Index m_ = 0;
  Index n_ = 0;
  Eigen::VectorXd values_;
};

/// Flattened position of sample (i, j), both 0-based.
inline Index flat_index(Index i, Index j, Index n) { return i * n + j; }

struct StrainImage {
  Eigen::MatrixXd values;
  int kernel_length = 3;

  Index rows() const { return values.rows(); }
  Index cols() const { return values.cols(); }
};

enum class BiasMode { kZero, kMeanStrain };

BiasMode parse_bias_mode(std::string_view name);
std::string_view to_string(BiasMode mode);

/// Regularization weights and ADMM settings.
struct RegParams {
  double alpha1 = 0.0;  // axial first-order, axial component
  double alpha2 = 0.0;  // lateral first-order, axial component
  double beta1 = 0.0;   // axial first-order, lateral component
  double beta2 = 0.0;   // lateral first-order, lateral component
  double theta1 = 0.0;  // axial second-order, axial component
  double theta2 = 0.0;  // lateral second-order, axial component
  double lambda1 = 0.0; // axial second-order, lateral component
  double lambda2 = 0.0; // lateral second-order, lateral component
  double gamma = 0.0;   // first-row prior
  double zeta = 1.0;    // augmented Lagrangian weight
  double mf = 0.0;      // second-order multiplier, informational once expanded
  int iterations = 10;
  BiasMode bias_mode = BiasMode::kZero;

  /// Builds the weight set with the second-order weights as mf multiples of
  /// the first-order ones.
  static RegParams from_multiplier(double alpha1, double alpha2, double beta1,
                                   double beta2, double mf, double gamma,
                                   double zeta, int iterations = 10);

  void validate() const;
};

/// Named weight sets: layer, inclusion, breast, liver1, liver2, liver3.
RegParams preset_params(std::string_view name);

/// Result of a bilinear lookup; `in_bounds` is false when the coordinate fell
/// outside [1, m] x [1, n], in which case `value` is 0.
template <typename Scalar>
struct Sample {
  Scalar value;
  bool in_bounds;
};

/// Bilinear interpolation at 1-based coordinates (y, x).
template <typename Derived>
Sample<typename Derived::Scalar> interp_bilinear(
    const Eigen::DenseBase<Derived>& samples, double y, double x) {
  using Scalar = typename Derived::Scalar;
  if (!std::isfinite(y) || !std::isfinite(x)) {
    throw InvalidArgument("interp_bilinear: non-finite coordinate");
  }
  const Index m = samples.rows();
  const Index n = samples.cols();
  if (y < 1.0 || x < 1.0 || y > static_cast<double>(m) ||
      x > static_cast<double>(n)) {
    return {Scalar(0), false};
  }
  // 0-based cell origin, clamped so the far edge stays addressable.
  const double fy = y - 1.0;
  const double fx = x - 1.0;
  Index i0 = static_cast<Index>(std::floor(fy));
  Index j0 = static_cast<Index>(std::floor(fx));
  if (i0 > m - 2) i0 = m - 2 < 0 ? 0 : m - 2;
  if (j0 > n - 2) j0 = n - 2 < 0 ? 0 : n - 2;
  const Scalar wy = static_cast<Scalar>(fy - static_cast<double>(i0));
  const Scalar wx = static_cast<Scalar>(fx - static_cast<double>(j0));
  const Index i1 = m > 1 ? i0 + 1 : i0;
  const Index j1 = n > 1 ? j0 + 1 : j0;
  const Scalar top = (Scalar(1) - wx) * samples(i0, j0) + wx * samples(i0, j1);
  const Scalar bottom = (Scalar(1) - wx) * samples(i1, j0) + wx * samples(i1, j1);
  return {(Scalar(1) - wy) * top + wy * bottom, true};
}

inline Sample<double> interp_bilinear(const RfFrame& frame, double y, double x) {
  return interp_bilinear(frame.samples, y, x);
}

/// Central-difference derivatives of the frame at the warped positions.
struct Gradients {
  Eigen::MatrixXd axial;
  Eigen::MatrixXd lateral;
  // True where all four half-sample stencil points were inside the frame.
  Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> in_bounds;
};

Gradients spatial_gradients(const Eigen::MatrixXd& samples,
                            const DisplacementField& warp);
inline Gradients spatial_gradients(const RfFrame& frame,
                                   const DisplacementField& warp) {
  return spatial_gradients(frame.samples, warp);
}

/// Axial strain as the least-squares slope of the axial displacement over a
/// centred window of `kernel_length` rows, truncated symmetrically at the
/// top and bottom (never fewer than two points).
StrainImage strain_from_displacement(const Eigen::MatrixXd& axial,
                                     int kernel_length);
StrainImage strain_from_displacement(const DisplacementField& disp,
                                     int kernel_length);

}  // namespace altruist
