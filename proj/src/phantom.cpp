#include "altruist/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <string>

namespace altruist {
namespace {

struct Scatterer {
  double y;
  double x;
  double amplitude;
};

// Length of [lo, hi] intersected with [a, b].
double overlap(double lo, double hi, double a, double b) {
  return std::max(0.0, std::min(hi, b) - std::max(lo, a));
}

Eigen::MatrixXd render(const std::vector<Scatterer>& scatterers, Index m, Index n,
                       const PhantomSpec& spec, bool displaced) {
  Eigen::MatrixXd frame = Eigen::MatrixXd::Zero(m, n);
  const double sa = spec.psf_axial_sigma;
  const double sl = spec.psf_lateral_sigma;
  const double omega = 2.0 * std::numbers::pi * spec.psf_center_frequency;
  const Index reach_a = static_cast<Index>(std::ceil(4.0 * sa));
  const Index reach_l = static_cast<Index>(std::ceil(4.0 * sl));
  for (const Scatterer& s : scatterers) {
    const double y = displaced ? s.y + axial_displacement_at(spec, s.y, s.x) : s.y;
    const double x = s.x;
    // Grid row i (0-based) sits at coordinate i + 1.
    const Index ic = static_cast<Index>(std::lround(y)) - 1;
    const Index jc = static_cast<Index>(std::lround(x)) - 1;
    const Index i0 = std::max<Index>(0, ic - reach_a);
    const Index i1 = std::min<Index>(m - 1, ic + reach_a);
    const Index j0 = std::max<Index>(0, jc - reach_l);
    const Index j1 = std::min<Index>(n - 1, jc + reach_l);
    if (i0 > i1 || j0 > j1) continue;
    for (Index j = j0; j <= j1; ++j) {
      const double dx = static_cast<double>(j + 1) - x;
      const double lat = s.amplitude * std::exp(-0.5 * dx * dx / (sl * sl));
      for (Index i = i0; i <= i1; ++i) {
        const double dy = static_cast<double>(i + 1) - y;
        frame(i, j) += lat * std::exp(-0.5 * dy * dy / (sa * sa)) * std::cos(omega * dy);
      }
    }
  }
  return frame;
}

RfFrame make_frame(Eigen::MatrixXd samples, const PhantomSpec& spec) {
  RfFrame f(std::move(samples));
  f.sampling_rate = spec.sampling_rate;
  f.center_frequency = spec.psf_center_frequency * spec.sampling_rate;
  return f;
}

}  // namespace

void PhantomSpec::validate() const {
  auto fail = [](const std::string& what) { throw InvalidArgument("PhantomSpec: " + what); };
  if (m < 4 || n < 4) fail("grid must be at least 4 x 4");
  if (!(scatterer_density > 0.0)) fail("scatterer density must be > 0");
  if (!(psf_center_frequency >= 0.0 && psf_center_frequency < 0.5)) {
    fail("psf centre frequency must lie in [0, 0.5) cycles/sample");
  }
  if (!(psf_axial_sigma > 0.0) || !(psf_lateral_sigma > 0.0)) fail("psf widths must be > 0");
  if (std::isnan(noise_psnr_db)) fail("noise PSNR is NaN");
  auto check_strain = [&](double s) {
    if (!(s > -0.1 && s < 0.1)) fail("strain values must lie in (-0.1, 0.1)");
  };
  if (inclusion) {
    const Inclusion& inc = *inclusion;
    if (!(inc.radius > 0.0) ||
        !(inc.radius < static_cast<double>(std::min(m, n)) / 2.0)) {
      fail("inclusion radius must lie in (0, min(m, n) / 2)");
    }
    if (inc.center_row < 1 || inc.center_row > static_cast<double>(m) ||
        inc.center_col < 1 || inc.center_col > static_cast<double>(n)) {
      fail("inclusion centre outside the grid");
    }
    check_strain(inc.inclusion_strain);
    check_strain(inc.background_strain);
    return;
  }
  if (layers.empty()) fail("need layers or an inclusion");
  int expected = 1;
  for (const Layer& l : layers) {
    if (l.start_row != expected || l.end_row < l.start_row) {
      fail("layers must partition rows 1..m in order");
    }
    check_strain(l.strain);
    expected = l.end_row + 1;
  }
  if (expected != m + 1) fail("layers must partition rows 1..m in order");
}

double axial_displacement_at(const PhantomSpec& spec, double y, double x) {
  if (spec.inclusion) {
    const Inclusion& inc = *spec.inclusion;
    double a = inc.background_strain * (y - 1.0);
    const double dx = x - inc.center_col;
    if (std::abs(dx) < inc.radius) {
      const double h = std::sqrt(inc.radius * inc.radius - dx * dx);
      const double lo = std::min(1.0, y);
      const double hi = std::max(1.0, y);
      const double inside = overlap(lo, hi, inc.center_row - h, inc.center_row + h);
      a += (inc.inclusion_strain - inc.background_strain) * (y >= 1.0 ? inside : -inside);
    }
    return a;
  }
  // Layer k spans [end_{k-1}, end_k] with end_0 = 1; the outer layers extend
  // beyond the grid.
  const auto& ls = spec.layers;
  if (y <= 1.0) return ls.front().strain * (y - 1.0);
  double a = 0.0;
  double lower = 1.0;
  for (std::size_t k = 0; k < ls.size(); ++k) {
    const bool last = k + 1 == ls.size();
    const double upper = last ? std::max(y, static_cast<double>(ls[k].end_row))
                              : static_cast<double>(ls[k].end_row);
    if (y <= upper) return a + ls[k].strain * (y - lower);
    a += ls[k].strain * (upper - lower);
    lower = upper;
  }
  return a;
}

double axial_strain_at(const PhantomSpec& spec, double y, double x) {
  if (spec.inclusion) {
    const Inclusion& inc = *spec.inclusion;
    const double dy = y - inc.center_row;
    const double dx = x - inc.center_col;
    return dy * dy + dx * dx <= inc.radius * inc.radius ? inc.inclusion_strain
                                                        : inc.background_strain;
  }
  for (const Layer& l : spec.layers) {
    if (y <= static_cast<double>(l.end_row)) return l.strain;
  }
  return spec.layers.back().strain;
}

std::pair<double, double> analytic_displacement(const PhantomSpec& spec, Index row,
                                                Index col) {
  if (row < 1 || row > spec.m || col < 1 || col > spec.n) {
    throw InvalidArgument("analytic_displacement: (" + std::to_string(row) + ", " +
                          std::to_string(col) + ") outside the grid");
  }
  return {axial_displacement_at(spec, static_cast<double>(row), static_cast<double>(col)),
          0.0};
}

GroundTruth ground_truth(const PhantomSpec& spec) {
  spec.validate();
  Eigen::MatrixXd axial(spec.m, spec.n);
  Eigen::MatrixXd strain(spec.m, spec.n);
  for (Index i = 0; i < spec.m; ++i) {
    for (Index j = 0; j < spec.n; ++j) {
      const double y = static_cast<double>(i + 1);
      const double x = static_cast<double>(j + 1);
      axial(i, j) = axial_displacement_at(spec, y, x);
      strain(i, j) = axial_strain_at(spec, y, x);
    }
  }
  return {DisplacementField::from_components(axial, Eigen::MatrixXd::Zero(spec.m, spec.n)),
          StrainImage{strain, 3}};
}

Phantom generate(const PhantomSpec& spec) {
  spec.validate();
  const Index m = spec.m;
  const Index n = spec.n;
  std::mt19937_64 rng(spec.rng_seed);

  const double pad_a = std::ceil(4.0 * spec.psf_axial_sigma) + 1.0;
  const double pad_l = std::ceil(4.0 * spec.psf_lateral_sigma) + 1.0;
  const double y_lo = 1.0 - pad_a;
  const double y_hi = static_cast<double>(m) + pad_a;
  const double x_lo = 1.0 - pad_l;
  const double x_hi = static_cast<double>(n) + pad_l;
  const auto count = static_cast<std::size_t>(
      std::llround(spec.scatterer_density * (y_hi - y_lo) * (x_hi - x_lo)));

  std::uniform_real_distribution<double> uy(y_lo, y_hi);
  std::uniform_real_distribution<double> ux(x_lo, x_hi);
  std::normal_distribution<double> amp(0.0, 1.0);
  std::vector<Scatterer> scatterers(count);
  for (Scatterer& s : scatterers) {
    s.y = uy(rng);
    s.x = ux(rng);
    s.amplitude = amp(rng);
  }

  Eigen::MatrixXd pre = render(scatterers, m, n, spec, false);
  Eigen::MatrixXd post = render(scatterers, m, n, spec, true);
  // Unit peak on the clean pre frame.
  const double peak = pre.cwiseAbs().maxCoeff();
  if (peak > 0.0) {
    pre /= peak;
    post /= peak;
  }

  if (std::isfinite(spec.noise_psnr_db)) {
    std::mt19937_64 noise_rng(spec.rng_seed ^ 0x9e3779b97f4a7c15ULL);
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (Eigen::MatrixXd* frame : {&pre, &post}) {
      const double frame_peak = frame->cwiseAbs().maxCoeff();
      const double sigma = frame_peak / std::pow(10.0, spec.noise_psnr_db / 20.0);
      for (Index j = 0; j < n; ++j)
        for (Index i = 0; i < m; ++i) (*frame)(i, j) += sigma * gauss(noise_rng);
    }
  }

  return {make_frame(std::move(pre), spec), make_frame(std::move(post), spec),
          ground_truth(spec)};
}

double measured_psnr_db(const Eigen::MatrixXd& clean, const Eigen::MatrixXd& noisy) {
  if (clean.rows() != noisy.rows() || clean.cols() != noisy.cols()) {
    throw InvalidArgument("measured_psnr_db: shape mismatch");
  }
  const double peak = clean.cwiseAbs().maxCoeff();
  const double rms = std::sqrt((noisy - clean).squaredNorm() / static_cast<double>(clean.size()));
  return 20.0 * std::log10(peak / rms);
}

PhantomSpec layer_phantom(Index m, Index n, double modulus_ratio, double noise_psnr_db,
                          std::uint64_t seed) {
  PhantomSpec spec;
  spec.m = m;
  spec.n = n;
  spec.noise_psnr_db = noise_psnr_db;
  spec.rng_seed = seed;
  const int third = static_cast<int>(m / 3);
  const int first_end = third;
  const int second_end = 2 * third;
  // Uniform stress: strain scales with the inverse modulus. Integration
  // lengths follow the layer spans [1, e1], [e1, e2], [e2, m].
  const double len_bg = (first_end - 1.0) + (static_cast<double>(m) - second_end);
  const double len_target = second_end - first_end;
  const double total = 0.04 * (static_cast<double>(m) - 1.0);
  const double background = total / (len_bg + len_target / modulus_ratio);
  const double target = background / modulus_ratio;
  spec.layers = {{1, first_end, background},
                 {first_end + 1, second_end, target},
                 {second_end + 1, static_cast<int>(m), background}};
  return spec;
}

PhantomSpec inclusion_phantom(Index m, Index n, double radius, double strain_ratio,
                              double noise_psnr_db, std::uint64_t seed) {
  PhantomSpec spec;
  spec.m = m;
  spec.n = n;
  spec.noise_psnr_db = noise_psnr_db;
  spec.rng_seed = seed;
  spec.inclusion = Inclusion{(static_cast<double>(m) + 1.0) / 2.0,
                             (static_cast<double>(n) + 1.0) / 2.0, radius,
                             0.01 * strain_ratio, 0.01};
  return spec;
}

PhantomSpec phantom_preset(std::string_view name) {
  if (name == "layer-high") return layer_phantom(256, 64, 2.0, 20.0, 1);
  if (name == "layer-low") return layer_phantom(256, 64, 22.86 / 20.0, 20.0, 1);
  if (name == "inclusion") return inclusion_phantom(256, 128, 40.0, 0.1, 24.0, 1);
  throw InvalidArgument("unknown phantom preset '" + std::string(name) + "'");
}

}  // namespace altruist
