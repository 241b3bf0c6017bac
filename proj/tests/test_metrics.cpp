#include <doctest.h>

#include <Eigen/Core>

#include <random>
#include <sstream>

#include "altruist/metrics.hpp"

using namespace altruist;

namespace {

Eigen::MatrixXd randn(Index m, Index n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  Eigen::MatrixXd s(m, n);
  for (auto& v : s.reshaped()) v = g(rng);
  return s;
}

}  // namespace

TEST_CASE("snr examples") {
  Eigen::MatrixXd s(2, 2);
  s << 1, 1, 1, 3;
  WindowSpec w{0, 0, 2, 2};
  CHECK(snr(s, w).value == doctest::Approx(1.5));
  CHECK_FALSE(snr(s, w).degenerate);
  CHECK(snr(Eigen::MatrixXd(4.0 * s), w).value == doctest::Approx(1.5));
  CHECK(snr(Eigen::MatrixXd::Constant(3, 3, 0.02), WindowSpec{0, 0, 3, 3}).degenerate);
}

TEST_CASE("cnr examples") {
  // Two 2x2 windows with means 0.01 / 0.02 and variance 1e-6 each.
  const double e = std::sqrt(3.0) / 2.0 * 1e-3;  // sample variance of {+-e, +-e} is 4e^2/3
  Eigen::MatrixXd s(2, 4);
  s << 0.01 + e, 0.01 - e, 0.02 + e, 0.02 - e,
       0.01 - e, 0.01 + e, 0.02 - e, 0.02 + e;
  WindowSpec t{0, 0, 2, 2}, b{0, 2, 2, 2};
  CHECK(window_stats(s, t).variance == doctest::Approx(1e-6));
  CHECK(cnr(s, t, b).value == doctest::Approx(10.0));
  CHECK(cnr(s, b, t).value == doctest::Approx(10.0));
  CHECK(cnr(s, t, t).value == 0.0);
  CHECK(cnr(Eigen::MatrixXd(-s), t, b).value == doctest::Approx(10.0));
  CHECK(cnr(Eigen::MatrixXd::Constant(4, 4, 1.0), WindowSpec{0, 0, 2, 2}, WindowSpec{2, 2, 2, 2}).degenerate);
}

TEST_CASE("strain ratio") {
  Eigen::MatrixXd s(2, 4);
  s << 0.005, 0.005, 0.02, 0.02, 0.005, 0.005, 0.02, 0.02;
  WindowSpec t{0, 0, 2, 2}, b{0, 2, 2, 2};
  CHECK(strain_ratio(s, t, b) == doctest::Approx(0.25));
  CHECK(strain_ratio(s, b, b) == doctest::Approx(1.0));
  CHECK(strain_ratio(Eigen::MatrixXd(3.0 * s), t, b) == doctest::Approx(0.25));
  Eigen::MatrixXd z = s;
  z.rightCols(2).setZero();
  CHECK_THROWS_AS(strain_ratio(z, t, b), InvalidArgument);
}

TEST_CASE("rmse examples and properties") {
  Eigen::MatrixXd zero = Eigen::MatrixXd::Zero(2, 1), est(2, 1);
  est << 0.003, 0.004;
  CHECK(std::abs(rmse(est, zero) - std::sqrt(1.25e-5)) < 1e-12);
  CHECK(std::abs(rmse(Eigen::MatrixXd::Constant(5, 5, 0.001), Eigen::MatrixXd::Zero(5, 5)) - 0.001) < 1e-12);
  CHECK(rmse(est, est) == 0.0);
  CHECK_THROWS_AS(rmse(est, Eigen::MatrixXd::Zero(1, 2)), InvalidArgument);
  Eigen::MatrixXd x = randn(6, 7, 1), y = randn(6, 7, 2), z = randn(6, 7, 3);
  CHECK(rmse(x, y) == rmse(y, x));
  CHECK(rmse(Eigen::MatrixXd(-x), Eigen::MatrixXd(-y)) == doctest::Approx(rmse(x, y)));
  CHECK(rmse(x, z) <= rmse(x, y) + rmse(y, z) + 1e-15);
}

TEST_CASE("mssim") {
  Eigen::MatrixXd x = randn(32, 32, 5);
  CHECK(mssim(x, x) == 1.0);
  // Symmetric when both images share the dynamic range.
  Eigen::MatrixXd y = x.colwise().reverse();
  CHECK(mssim(x, y) == doctest::Approx(mssim(y, x)).epsilon(1e-12));
  CHECK(mssim(x, y) < 1.0);
  // Strain-like image: positive level with small fluctuations.
  Eigen::MatrixXd level = (0.02 + 0.002 * x.array()).matrix();
  Eigen::MatrixXd neg = (2.0 * level.mean() - level.array()).matrix();
  CHECK(mssim(neg, level) < 0.1);
  const double range = level.maxCoeff() - level.minCoeff();
  CHECK(std::abs(mssim(Eigen::MatrixXd(level.array() + 0.01 * range), level) - 1.0) < 0.05);
  CHECK_THROWS_AS(mssim(Eigen::MatrixXd::Zero(12, 12), Eigen::MatrixXd::Zero(12, 12)), InvalidArgument);
  CHECK_THROWS_AS(mssim(Eigen::MatrixXd::Zero(10, 12), Eigen::MatrixXd::Zero(10, 12)), InvalidArgument);
}

TEST_CASE("cnr histogram") {
  Eigen::MatrixXd s = randn(64, 64, 8);
  std::vector<WindowSpec> targets, backgrounds;
  for (Index k = 0; k < 6; ++k) targets.push_back({k * 4, 0, 4, 4});
  for (Index k = 0; k < 20; ++k) backgrounds.push_back({k * 3, 40, 3, 5});
  auto h = cnr_histogram(s, targets, backgrounds);
  REQUIRE(h.size() == 120);
  for (std::size_t t = 0; t < 6; ++t)
    for (std::size_t b = 0; b < 20; ++b)
      CHECK(h[t * 20 + b].value == cnr(s, targets[t], backgrounds[b]).value);

  std::vector<WindowSpec> same_t(6, WindowSpec{0, 0, 4, 4}), same_b(20, WindowSpec{0, 0, 4, 4});
  for (const auto& v : cnr_histogram(s, same_t, same_b)) CHECK(v.value == 0.0);

  Eigen::MatrixXd two = Eigen::MatrixXd::Constant(64, 64, 0.02);
  two.leftCols(32).setConstant(0.01);
  for (const auto& v : cnr_histogram(two, targets, backgrounds)) CHECK(v.degenerate);

  targets.pop_back();
  CHECK_THROWS_AS(cnr_histogram(s, targets, backgrounds), InvalidArgument);
  std::ostringstream out;
  write_histogram_csv(h, out);
  const std::string text = out.str();
  CHECK(std::count(text.begin(), text.end(), '\n') == 120);
}

TEST_CASE("paired t-test against reference values") {
  struct Case {
    std::vector<double> a, b;
    double t, p;
  };
  const std::vector<Case> cases = {
      {{1, 2, 3, 4}, {0, 0, 0, 0}, 3.872983346207417, 0.030466291662170977},
      {{2.1, 3.4, 1.9, 5.0, 4.2, 3.3}, {1.8, 3.0, 2.2, 4.1, 3.9, 2.7}, 2.254780169649666,
       0.07383310558583016},
      {{10, 12, 9, 11, 14, 13, 8, 10}, {11, 13, 10, 10, 15, 15, 9, 12}, -3.0550504633038935,
       0.018451528513015857},
  };
  for (const auto& c : cases) {
    auto r = paired_ttest(c.a, c.b);
    CHECK_FALSE(r.degenerate);
    CHECK(std::abs(r.t - c.t) < 1e-6);
    CHECK(std::abs(r.p - c.p) < 1e-4);
  }
  std::vector<double> a = {1, 2, 3}, b = {0, 1, 2};
  auto d = paired_ttest(a, a);
  CHECK(d.degenerate);
  CHECK(d.p == 1.0);
  CHECK(paired_ttest(a, b).degenerate);
  std::vector<double> one = {1};
  CHECK_THROWS_AS(paired_ttest(one, one), InvalidArgument);
  CHECK_THROWS_AS(paired_ttest(a, one), InvalidArgument);
}

TEST_CASE("edge spread width") {
  const Index m = 60;
  const double start = 20.0, w = 20.0;
  Eigen::MatrixXd ramp(m, 5);
  for (Index i = 0; i < m; ++i)
    ramp.row(i).setConstant(std::clamp((static_cast<double>(i + 1) - start) / w, 0.0, 1.0));
  auto r = esf(ramp, Point{1, 3}, Point{60, 3}, 591);
  CHECK_FALSE(r.degenerate);
  CHECK(r.width == doctest::Approx(0.8 * w).epsilon(1e-9));
  auto down = esf(Eigen::MatrixXd(1.0 - ramp.array()), Point{1, 3}, Point{60, 3}, 591);
  CHECK(down.width == doctest::Approx(0.8 * w).epsilon(1e-9));

  Eigen::MatrixXd step = Eigen::MatrixXd::Zero(m, 5);
  step.bottomRows(30).setConstant(1.0);
  auto s = esf(step, Point{1, 3}, Point{60, 3}, 60);
  CHECK(s.width <= 1.0 + 1e-12);

  auto flat = esf(Eigen::MatrixXd::Ones(m, 5), Point{1, 3}, Point{60, 3}, 30);
  CHECK(flat.degenerate);
  CHECK(flat.profile.size() == 30);
  CHECK_THROWS_AS(esf(step, Point{0.5, 3}, Point{60, 3}, 10), InvalidArgument);
}

TEST_CASE("isotonic fit") {
  std::vector<double> v = {1, 3, 2, 4, 0};
  auto f = isotonic_fit(v);
  std::vector<double> expect = {1, 2.25, 2.25, 2.25, 2.25};
  REQUIRE(f.size() == expect.size());
  for (std::size_t i = 0; i < f.size(); ++i) CHECK(f[i] == doctest::Approx(expect[i]));
}

TEST_CASE("window placement") {
  Eigen::MatrixXd truth = Eigen::MatrixXd::Constant(200, 64, 0.04);
  truth.middleRows(70, 60).setConstant(0.02);
  auto ws = auto_windows(truth, 32, 8, 6, 20);
  REQUIRE(ws.targets.size() == 6);
  REQUIRE(ws.backgrounds.size() == 20);
  for (const auto& t : ws.targets) {
    t.validate(200, 64);
    CHECK(t.top_row >= 74);
    CHECK(t.top_row + t.height <= 126);
  }
  for (const auto& b : ws.backgrounds) {
    b.validate(200, 64);
    CHECK(window_stats(truth, b).mean == doctest::Approx(0.04));
  }
  CHECK(default_window_size(0.0, 0.0) == std::pair<Index, Index>{32, 8});
  CHECK(default_window_size(1e-4, 3e-4) == std::pair<Index, Index>{30, 10});
  CHECK_THROWS_AS((WindowSpec{190, 0, 32, 8}.validate(200, 64)), InvalidArgument);
  CHECK_THROWS_AS((WindowSpec{0, 0, 1, 8}.validate(200, 64)), InvalidArgument);
}

TEST_CASE("report serialization omits absent fields") {
  MetricsReport r;
  r.snr = {2.0, false};
  r.cnr = {3.0, false};
  r.window_height = 32;
  r.window_width = 8;
  std::ostringstream out;
  r.write_csv(out);
  CHECK(out.str().find("rmse") == std::string::npos);
  CHECK(out.str().find("snr") != std::string::npos);
  r.rmse = 0.1;
  std::ostringstream out2;
  r.write_csv(out2);
  CHECK(out2.str().find("rmse") != std::string::npos);
  CHECK(r.to_text().find("RMSE") != std::string::npos);
}
