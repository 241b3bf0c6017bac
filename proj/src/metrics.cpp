#include "altruist/metrics.hpp"

#include <boost/math/distributions/students_t.hpp>

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <map>
#include <numeric>
#include <ostream>
#include <sstream>

namespace altruist {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Separable valid-region filtering with a symmetric kernel.
Eigen::MatrixXd filter_valid(const Eigen::MatrixXd& img, const Eigen::VectorXd& k) {
  const Index r = k.size();
  const Index rows = img.rows() - r + 1;
  const Index cols = img.cols() - r + 1;
  Eigen::MatrixXd tmp(rows, img.cols());
  for (Index j = 0; j < img.cols(); ++j)
    for (Index i = 0; i < rows; ++i) tmp(i, j) = k.dot(img.col(j).segment(i, r));
  Eigen::MatrixXd out(rows, cols);
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j) out(i, j) = k.dot(tmp.row(i).segment(j, r).transpose());
  return out;
}

void check_same_shape(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, const char* who) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw InvalidArgument(std::string(who) + ": image shapes differ (" +
                          std::to_string(a.rows()) + " x " + std::to_string(a.cols()) +
                          " vs " + std::to_string(b.rows()) + " x " +
                          std::to_string(b.cols()) + ")");
  }
}

}  // namespace

void WindowSpec::validate(Index rows, Index cols) const {
  if (height < 2 || width < 2) {
    throw InvalidArgument("window must be at least 2 x 2");
  }
  if (top_row < 0 || left_col < 0 || top_row + height > rows || left_col + width > cols) {
    throw InvalidArgument("window (" + std::to_string(top_row) + ", " +
                          std::to_string(left_col) + ", " + std::to_string(height) +
                          ", " + std::to_string(width) + ") exceeds the " +
                          std::to_string(rows) + " x " + std::to_string(cols) + " image");
  }
}

WindowStats window_stats(const Eigen::MatrixXd& image, const WindowSpec& w) {
  w.validate(image.rows(), image.cols());
  const auto block = image.block(w.top_row, w.left_col, w.height, w.width);
  const double count = static_cast<double>(block.size());
  WindowStats s;
  s.mean = block.mean();
  s.abs_mean = block.cwiseAbs().mean();
  // A constant window has exactly zero spread, free of rounding in the mean.
  s.variance = block.maxCoeff() == block.minCoeff()
                   ? 0.0
                   : (block.array() - s.mean).square().sum() / (count - 1.0);
  return s;
}

Measurement snr(const Eigen::MatrixXd& strain, const WindowSpec& background) {
  const WindowStats s = window_stats(strain, background);
  if (s.variance == 0.0) return {kInf, true};
  return {s.abs_mean / std::sqrt(s.variance), false};
}

Measurement cnr(const Eigen::MatrixXd& strain, const WindowSpec& target,
                const WindowSpec& background) {
  const WindowStats t = window_stats(strain, target);
  const WindowStats b = window_stats(strain, background);
  const double contrast = b.mean - t.mean;
  const double noise = b.variance + t.variance;
  if (noise == 0.0) return {contrast == 0.0 ? 0.0 : kInf, true};
  return {std::sqrt(2.0 * contrast * contrast / noise), false};
}

double strain_ratio(const Eigen::MatrixXd& strain, const WindowSpec& target,
                    const WindowSpec& background) {
  const WindowStats t = window_stats(strain, target);
  const WindowStats b = window_stats(strain, background);
  if (b.mean == 0.0) throw InvalidArgument("strain_ratio: background mean is zero");
  return t.mean / b.mean;
}

double rmse(const Eigen::MatrixXd& estimated, const Eigen::MatrixXd& truth) {
  check_same_shape(estimated, truth, "rmse");
  if (truth.size() == 0) throw InvalidArgument("rmse: empty images");
  return std::sqrt((estimated - truth).squaredNorm() / static_cast<double>(truth.size()));
}

double mssim(const Eigen::MatrixXd& estimated, const Eigen::MatrixXd& truth) {
  check_same_shape(estimated, truth, "mssim");
  constexpr Index kSize = 11;
  constexpr double kSigma = 1.5;
  if (truth.rows() < kSize || truth.cols() < kSize) {
    throw InvalidArgument("mssim: images must be at least 11 x 11");
  }
  const double range = truth.maxCoeff() - truth.minCoeff();
  if (!(range > 0.0)) throw InvalidArgument("mssim: ground truth has zero dynamic range");
  const double c1 = (0.01 * range) * (0.01 * range);
  const double c2 = (0.03 * range) * (0.03 * range);

  Eigen::VectorXd k(kSize);
  for (Index i = 0; i < kSize; ++i) {
    const double d = static_cast<double>(i - kSize / 2);
    k[i] = std::exp(-d * d / (2.0 * kSigma * kSigma));
  }
  k /= k.sum();

  const Eigen::MatrixXd& x = estimated;
  const Eigen::MatrixXd& y = truth;
  const Eigen::MatrixXd mu_x = filter_valid(x, k);
  const Eigen::MatrixXd mu_y = filter_valid(y, k);
  const Eigen::MatrixXd xx = filter_valid(x.cwiseProduct(x), k);
  const Eigen::MatrixXd yy = filter_valid(y.cwiseProduct(y), k);
  const Eigen::MatrixXd xy = filter_valid(x.cwiseProduct(y), k);

  double sum = 0.0;
  for (Index j = 0; j < mu_x.cols(); ++j) {
    for (Index i = 0; i < mu_x.rows(); ++i) {
      const double mx = mu_x(i, j);
      const double my = mu_y(i, j);
      const double sxx = xx(i, j) - mx * mx;
      const double syy = yy(i, j) - my * my;
      const double sxy = xy(i, j) - mx * my;
      const double num = (2.0 * (mx * my) + c1) * (2.0 * sxy + c2);
      const double den = (mx * mx + my * my + c1) * (sxx + syy + c2);
      sum += num / den;
    }
  }
  return sum / static_cast<double>(mu_x.size());
}

std::vector<Measurement> cnr_histogram(const Eigen::MatrixXd& strain,
                                       std::span<const WindowSpec> targets,
                                       std::span<const WindowSpec> backgrounds) {
  if (targets.size() != 6 || backgrounds.size() != 20) {
    throw InvalidArgument("cnr_histogram: need 6 target and 20 background windows, got " +
                          std::to_string(targets.size()) + " and " +
                          std::to_string(backgrounds.size()));
  }
  std::vector<Measurement> out;
  out.reserve(targets.size() * backgrounds.size());
  for (const WindowSpec& t : targets)
    for (const WindowSpec& b : backgrounds) out.push_back(cnr(strain, t, b));
  return out;
}

TTestResult paired_ttest(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.size() < 2) {
    throw InvalidArgument("paired_ttest: need equal lengths >= 2");
  }
  const auto n = static_cast<double>(a.size());
  std::vector<double> diff(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) diff[i] = a[i] - b[i];
  const double mean = std::accumulate(diff.begin(), diff.end(), 0.0) / n;
  double ss = 0.0;
  for (double d : diff) ss += (d - mean) * (d - mean);
  const double sd = std::sqrt(ss / (n - 1.0));
  if (sd == 0.0) {
    if (mean == 0.0) return {0.0, 1.0, true};
    return {std::copysign(kInf, mean), 0.0, true};
  }
  const double t = mean / (sd / std::sqrt(n));
  const boost::math::students_t dist(n - 1.0);
  const double p = 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t)));
  return {t, p, false};
}

std::vector<double> isotonic_fit(std::span<const double> values) {
  struct Block {
    double sum;
    double count;
  };
  std::vector<Block> blocks;
  blocks.reserve(values.size());
  for (double v : values) {
    blocks.push_back({v, 1.0});
    while (blocks.size() > 1) {
      const Block& hi = blocks[blocks.size() - 1];
      const Block& lo = blocks[blocks.size() - 2];
      if (lo.sum / lo.count <= hi.sum / hi.count) break;
      const Block merged{lo.sum + hi.sum, lo.count + hi.count};
      blocks.pop_back();
      blocks.back() = merged;
    }
  }
  std::vector<double> out;
  out.reserve(values.size());
  for (const Block& b : blocks) {
    out.insert(out.end(), static_cast<std::size_t>(b.count), b.sum / b.count);
  }
  return out;
}

EsfResult esf(const Eigen::MatrixXd& strain, Point start, Point end, int num_samples) {
  if (num_samples < 2) throw InvalidArgument("esf: need at least 2 samples");
  const double m = static_cast<double>(strain.rows());
  const double n = static_cast<double>(strain.cols());
  for (const Point& p : {start, end}) {
    if (!(p.y >= 1.0 && p.y <= m && p.x >= 1.0 && p.x <= n)) {
      throw InvalidArgument("esf: line endpoint outside the image");
    }
  }
  EsfResult r;
  r.profile.resize(static_cast<std::size_t>(num_samples));
  for (int k = 0; k < num_samples; ++k) {
    const double f = static_cast<double>(k) / (num_samples - 1);
    r.profile[static_cast<std::size_t>(k)] =
        interp_bilinear(strain, start.y + f * (end.y - start.y), start.x + f * (end.x - start.x))
            .value;
  }
  const double length = std::hypot(end.y - start.y, end.x - start.x);
  const double step = length / (num_samples - 1);

  // Fit both directions and keep the closer one.
  const std::vector<double> up = isotonic_fit(r.profile);
  std::vector<double> negated(r.profile.size());
  std::transform(r.profile.begin(), r.profile.end(), negated.begin(), [](double v) { return -v; });
  std::vector<double> down = isotonic_fit(negated);
  for (double& v : down) v = -v;
  auto sse = [&](const std::vector<double>& fit) {
    double s = 0.0;
    for (std::size_t i = 0; i < fit.size(); ++i) s += (fit[i] - r.profile[i]) * (fit[i] - r.profile[i]);
    return s;
  };
  const bool rising = sse(up) <= sse(down);
  r.fitted = rising ? up : down;

  const double lo = *std::min_element(r.fitted.begin(), r.fitted.end());
  const double hi = *std::max_element(r.fitted.begin(), r.fitted.end());
  if (!(hi > lo)) {
    r.degenerate = true;
    return r;
  }
  std::vector<double> norm(r.fitted.size());
  for (std::size_t i = 0; i < norm.size(); ++i) {
    const double v = (r.fitted[i] - lo) / (hi - lo);
    norm[i] = rising ? v : 1.0 - v;
  }
  // First crossing of a level by the non-decreasing normalized fit.
  auto crossing = [&](double level) {
    if (norm[0] >= level) return 0.0;
    for (std::size_t i = 1; i < norm.size(); ++i) {
      if (norm[i] >= level) {
        const double frac = (level - norm[i - 1]) / (norm[i] - norm[i - 1]);
        return (static_cast<double>(i - 1) + frac) * step;
      }
    }
    return static_cast<double>(norm.size() - 1) * step;
  };
  r.width = crossing(0.9) - crossing(0.1);
  return r;
}

std::pair<Index, Index> default_window_size(double axial_spacing, double lateral_spacing) {
  if (axial_spacing > 0.0 && lateral_spacing > 0.0) {
    const auto h = static_cast<Index>(std::lround(3e-3 / axial_spacing));
    const auto w = static_cast<Index>(std::lround(3e-3 / lateral_spacing));
    return {std::max<Index>(h, 2), std::max<Index>(w, 2)};
  }
  return {32, 8};
}

WindowSet auto_windows(const Eigen::MatrixXd& truth, Index height, Index width,
                       std::size_t n_targets, std::size_t n_backgrounds, Index margin) {
  const Index rows = truth.rows();
  const Index cols = truth.cols();
  std::map<double, Index> counts;
  for (Index j = 0; j < cols; ++j)
    for (Index i = 0; i < rows; ++i) ++counts[truth(i, j)];
  if (counts.size() < 2) throw InvalidArgument("auto_windows: truth needs two strain levels");
  double target_level = counts.begin()->first;
  for (const auto& [v, c] : counts)
    if (std::abs(v) < std::abs(target_level)) target_level = v;
  double background_level = 0.0;
  Index best = -1;
  for (const auto& [v, c] : counts) {
    if (v != target_level && c > best) {
      best = c;
      background_level = v;
    }
  }

  // Integral images of each level indicator.
  auto integral = [&](double level) {
    Eigen::MatrixXd s = Eigen::MatrixXd::Zero(rows + 1, cols + 1);
    for (Index i = 0; i < rows; ++i)
      for (Index j = 0; j < cols; ++j)
        s(i + 1, j + 1) = (truth(i, j) == level ? 1.0 : 0.0) + s(i, j + 1) + s(i + 1, j) - s(i, j);
    return s;
  };
  const Eigen::MatrixXd s_target = integral(target_level);
  const Eigen::MatrixXd s_background = integral(background_level);
  auto uniform = [&](const Eigen::MatrixXd& s, Index top, Index left) {
    const Index r0 = std::max<Index>(0, top - margin);
    const Index c0 = std::max<Index>(0, left - margin);
    const Index r1 = std::min(rows, top + height + margin);
    const Index c1 = std::min(cols, left + width + margin);
    const double area = static_cast<double>((r1 - r0) * (c1 - c0));
    return s(r1, c1) - s(r0, c1) - s(r1, c0) + s(r0, c0) == area;
  };

  std::vector<WindowSpec> t_cand;
  std::vector<WindowSpec> b_cand;
  for (Index top = margin; top + height + margin <= rows; top += 2) {
    for (Index left = std::min<Index>(margin, 2); left + width + std::min<Index>(margin, 2) <= cols;
         left += 2) {
      if (uniform(s_target, top, left)) t_cand.push_back({top, left, height, width});
      if (uniform(s_background, top, left)) b_cand.push_back({top, left, height, width});
    }
  }
  if (t_cand.size() < n_targets || b_cand.size() < n_backgrounds) {
    throw InvalidArgument("auto_windows: not enough uniform regions for " +
                          std::to_string(n_targets) + " target and " +
                          std::to_string(n_backgrounds) + " background windows");
  }
  if (n_targets == 0 || n_backgrounds == 0) return {};

  double cy = 0.0;
  double cx = 0.0;
  double count = 0.0;
  for (Index j = 0; j < cols; ++j)
    for (Index i = 0; i < rows; ++i)
      if (truth(i, j) == target_level) {
        cy += static_cast<double>(i);
        cx += static_cast<double>(j);
        count += 1.0;
      }
  cy /= count;
  cx /= count;
  auto dist2 = [](const WindowSpec& w, double y, double x) {
    const double dy = static_cast<double>(w.top_row) + static_cast<double>(w.height - 1) / 2.0 - y;
    const double dx = static_cast<double>(w.left_col) + static_cast<double>(w.width - 1) / 2.0 - x;
    return dy * dy + dx * dx;
  };
  auto nearest = [&](const std::vector<WindowSpec>& c, double y, double x) {
    std::size_t arg = 0;
    for (std::size_t k = 1; k < c.size(); ++k)
      if (dist2(c[k], y, x) < dist2(c[arg], y, x)) arg = k;
    return arg;
  };
  auto pick = [](std::vector<WindowSpec> cand, std::size_t first, std::size_t total) {
    std::vector<WindowSpec> out{cand[first]};
    cand.erase(cand.begin() + static_cast<std::ptrdiff_t>(first));
    const std::size_t rest = total - 1;
    for (std::size_t k = 0; k < rest; ++k) {
      const auto idx = static_cast<std::size_t>(
          (static_cast<double>(k) + 0.5) * static_cast<double>(cand.size()) / static_cast<double>(rest));
      out.push_back(cand[std::min(idx, cand.size() - 1)]);
    }
    return out;
  };

  WindowSet set;
  const std::size_t t0 = nearest(t_cand, cy, cx);
  const WindowSpec& tw = t_cand[t0];
  const double ty = static_cast<double>(tw.top_row) + static_cast<double>(tw.height - 1) / 2.0;
  const double tx = static_cast<double>(tw.left_col) + static_cast<double>(tw.width - 1) / 2.0;
  const std::size_t b0 = nearest(b_cand, ty, tx);
  set.targets = pick(t_cand, t0, n_targets);
  set.backgrounds = pick(b_cand, b0, n_backgrounds);
  return set;
}

void MetricsReport::write_csv(std::ostream& out) const {
  std::vector<std::pair<std::string, double>> fields{{"snr", snr.value}, {"cnr", cnr.value}};
  if (sr) fields.emplace_back("sr", *sr);
  if (rmse) fields.emplace_back("rmse", *rmse);
  if (mssim) fields.emplace_back("mssim", *mssim);
  if (esf_width) fields.emplace_back("esf_width", *esf_width);
  if (!cnr_histogram.empty()) {
    double sum = 0.0;
    for (const auto& c : cnr_histogram) sum += c.value;
    fields.emplace_back("cnr_histogram_mean", sum / static_cast<double>(cnr_histogram.size()));
  }
  fields.emplace_back("window_height", static_cast<double>(window_height));
  fields.emplace_back("window_width", static_cast<double>(window_width));
  std::ostringstream head;
  std::ostringstream vals;
  vals << std::setprecision(12);
  for (std::size_t i = 0; i < fields.size(); ++i) {
    head << (i ? "," : "") << fields[i].first;
    vals << (i ? "," : "") << fields[i].second;
  }
  out << head.str() << '\n' << vals.str() << '\n';
}

std::string MetricsReport::to_text() const {
  std::ostringstream os;
  os << std::setprecision(6);
  auto line = [&](const char* name, double v, bool degenerate = false) {
    os << std::left << std::setw(20) << name << v << (degenerate ? "  (degenerate)" : "") << '\n';
  };
  line("SNR", snr.value, snr.degenerate);
  line("CNR", cnr.value, cnr.degenerate);
  if (sr) line("SR", *sr);
  if (rmse) line("RMSE", *rmse);
  if (mssim) line("MSSIM", *mssim);
  if (esf_width) line("ESF 10-90 width", *esf_width);
  if (!cnr_histogram.empty()) {
    double sum = 0.0;
    for (const auto& c : cnr_histogram) sum += c.value;
    line("CNR histogram mean", sum / static_cast<double>(cnr_histogram.size()));
  }
  os << std::left << std::setw(20) << "windows" << window_height << " x " << window_width << '\n';
  return os.str();
}

void write_histogram_csv(const std::vector<Measurement>& values, std::ostream& out) {
  const auto precision = out.precision();
  out.precision(12);
  for (const auto& v : values) out << v.value << '\n';
  out.precision(precision);
}

}  // namespace altruist
