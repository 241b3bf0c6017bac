#pragma once

// Strain-image quality metrics. Window statistics use sample (n - 1)
// variances. A metric whose denominator vanishes is returned with
// `degenerate` set instead of throwing.

#include <Eigen/Core>

#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "altruist/field.hpp"

namespace altruist {

/// Rectangular window, 0-based top-left corner, in samples.
struct WindowSpec {
  Index top_row = 0;
  Index left_col = 0;
  Index height = 0;
  Index width = 0;

  /// Throws InvalidArgument unless the window lies inside a rows x cols image
  /// and is at least 2 x 2.
  void validate(Index rows, Index cols) const;
  bool operator==(const WindowSpec&) const = default;
};

struct Measurement {
  double value = 0.0;
  bool degenerate = false;
};

struct WindowStats {
  double mean = 0.0;
  double abs_mean = 0.0;
  double variance = 0.0;  // sample variance
};

WindowStats window_stats(const Eigen::MatrixXd& image, const WindowSpec& w);

/// mean(|x|) / std(x) over the window; +inf and degenerate when std is 0.
Measurement snr(const Eigen::MatrixXd& strain, const WindowSpec& background);

/// sqrt(2 (mu_b - mu_t)^2 / (var_b + var_t)); degenerate when both variances
/// vanish.
Measurement cnr(const Eigen::MatrixXd& strain, const WindowSpec& target,
                const WindowSpec& background);

/// mu_target / mu_background; throws InvalidArgument on a zero background mean.
double strain_ratio(const Eigen::MatrixXd& strain, const WindowSpec& target,
                    const WindowSpec& background);

double rmse(const Eigen::MatrixXd& estimated, const Eigen::MatrixXd& truth);

/// Mean SSIM with an 11 x 11 Gaussian window (sigma 1.5), K1 = 0.01,
/// K2 = 0.03, L = max(truth) - min(truth), over the valid region.
double mssim(const Eigen::MatrixXd& estimated, const Eigen::MatrixXd& truth);

/// CNR for every (target, background) pair, target-major. Requires exactly
/// 6 targets and 20 backgrounds.
std::vector<Measurement> cnr_histogram(const Eigen::MatrixXd& strain,
                                       std::span<const WindowSpec> targets,
                                       std::span<const WindowSpec> backgrounds);

struct TTestResult {
  double t = 0.0;
  double p = 1.0;
  bool degenerate = false;
};

/// Two-tailed paired t-test with len - 1 degrees of freedom.
TTestResult paired_ttest(std::span<const double> a, std::span<const double> b);

struct Point {
  double y = 0.0;  // 1-based row coordinate
  double x = 0.0;  // 1-based column coordinate
};

struct EsfResult {
  std::vector<double> profile;  // raw bilinear samples
  std::vector<double> fitted;   // monotone least-squares fit
  double width = 0.0;           // 10-90 distance, in samples along the line
  bool degenerate = false;
};

/// Edge spread along a segment: bilinear samples, isotonic fit in the better
/// of the two directions, then the distance between the 10% and 90% crossings
/// of the normalized fit.
EsfResult esf(const Eigen::MatrixXd& strain, Point start, Point end, int num_samples);

/// Least-squares non-decreasing fit (pool adjacent violators).
std::vector<double> isotonic_fit(std::span<const double> values);

/// Window size (height, width) for 3 mm x 3 mm given the sample spacing in
/// meters; falls back to 32 x 8 when a spacing is unknown.
std::pair<Index, Index> default_window_size(double axial_spacing, double lateral_spacing);

struct WindowSet {
  std::vector<WindowSpec> targets;
  std::vector<WindowSpec> backgrounds;
};

/// Places windows on a two-level ground-truth strain image: targets on the
/// level with the smaller magnitude, backgrounds on the other, each window
/// at least `margin` samples from any level change. targets[0] is the most
/// central target and backgrounds[0] the background nearest to it; the rest
/// are spread evenly over the candidates.
WindowSet auto_windows(const Eigen::MatrixXd& truth, Index height, Index width,
                       std::size_t n_targets, std::size_t n_backgrounds, Index margin = 4);

struct MetricsReport {
  Measurement snr;
  Measurement cnr;
  std::optional<double> sr;
  std::optional<double> rmse;
  std::optional<double> mssim;
  std::vector<Measurement> cnr_histogram;
  std::optional<double> esf_width;
  Index window_height = 0;
  Index window_width = 0;

  /// One header line plus one value line; absent fields are omitted.
  void write_csv(std::ostream& out) const;
  std::string to_text() const;
};

/// One value per line.
void write_histogram_csv(const std::vector<Measurement>& values, std::ostream& out);

}  // namespace altruist
