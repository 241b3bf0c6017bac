#include <doctest.h>

#include <Eigen/Core>

#include "altruist/phantom.hpp"

using namespace altruist;

namespace {

PhantomSpec small_layers(double s1, double s2, int h, Index m = 40, Index n = 12) {
  PhantomSpec spec;
  spec.m = m;
  spec.n = n;
  spec.layers = {{1, h, s1}, {h + 1, static_cast<int>(m), s2}};
  return spec;
}

}  // namespace

TEST_CASE("analytic displacement examples") {
  PhantomSpec uniform;
  uniform.m = 30;
  uniform.n = 8;
  uniform.layers = {{1, 30, 0.02}};
  for (Index i = 1; i <= 30; ++i) {
    auto [a, l] = analytic_displacement(uniform, i, 3);
    CHECK(a == doctest::Approx(0.02 * (i - 1)));
    CHECK(l == 0.0);
  }
  CHECK(analytic_displacement(uniform, 1, 1).first == 0.0);

  PhantomSpec two = small_layers(0.01, 0.03, 15);
  for (Index i = 16; i <= 40; ++i)
    CHECK(analytic_displacement(two, i, 5).first == doctest::Approx(0.01 * 14 + 0.03 * (i - 15)));
  CHECK_THROWS_AS(analytic_displacement(two, 0, 1), InvalidArgument);
  CHECK_THROWS_AS(analytic_displacement(two, 41, 1), InvalidArgument);
  CHECK_THROWS_AS(analytic_displacement(two, 5, 13), InvalidArgument);
}

TEST_CASE("zero strain gives identical frames") {
  PhantomSpec spec = small_layers(0.0, 0.0, 20);
  Phantom p = generate(spec);
  CHECK(p.pre.samples == p.post.samples);
  CHECK(p.truth.displacement.values().cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("layer presets have the expected strain ratios") {
  for (auto [name, ratio] : {std::pair{"layer-high", 0.5}, std::pair{"layer-low", 20.0 / 22.86}}) {
    PhantomSpec spec = phantom_preset(name);
    REQUIRE(spec.layers.size() == 3);
    CHECK(spec.layers[1].strain / spec.layers[0].strain == doctest::Approx(ratio));
    CHECK(spec.layers[2].strain == spec.layers[0].strain);
    // 4% overall compression.
    const double bottom = analytic_displacement(spec, spec.m, 1).first;
    CHECK(bottom == doctest::Approx(0.04 * (spec.m - 1)));
  }
  PhantomSpec inc = phantom_preset("inclusion");
  REQUIRE(inc.inclusion.has_value());
  CHECK(inc.inclusion->inclusion_strain / inc.inclusion->background_strain == doctest::Approx(0.1));
  CHECK(inc.inclusion->background_strain == doctest::Approx(0.01));
  CHECK_THROWS_AS(phantom_preset("cyst"), InvalidArgument);
}

TEST_CASE("generation is deterministic and seed dependent") {
  PhantomSpec spec = phantom_preset("layer-high");
  spec.m = 64;
  spec.n = 16;
  spec.layers = {{1, 20, 0.02}, {21, 40, 0.01}, {41, 64, 0.02}};
  Phantom a = generate(spec), b = generate(spec);
  CHECK(a.pre.samples == b.pre.samples);
  CHECK(a.post.samples == b.post.samples);
  spec.rng_seed += 1;
  CHECK(generate(spec).pre.samples != a.pre.samples);
}

TEST_CASE("noise calibration within half a decibel") {
  for (double db : {10.0, 20.0, 30.0}) {
    PhantomSpec clean = small_layers(0.01, 0.02, 50, 128, 48);
    PhantomSpec noisy = clean;
    noisy.noise_psnr_db = db;
    Phantom c = generate(clean), n = generate(noisy);
    CHECK(std::abs(measured_psnr_db(c.pre.samples, n.pre.samples) - db) <= 0.5);
    CHECK(std::abs(measured_psnr_db(c.post.samples, n.post.samples) - db) <= 0.5);
  }
}

TEST_CASE("ground-truth strain is consistent with displacement") {
  PhantomSpec spec = phantom_preset("layer-high");
  GroundTruth t = ground_truth(spec);
  StrainImage s = strain_from_displacement(t.displacement, 3);
  std::vector<int> interfaces;
  for (std::size_t k = 1; k < spec.layers.size(); ++k) interfaces.push_back(spec.layers[k].start_row);
  for (Index i = 0; i < spec.m; ++i) {
    const int row = static_cast<int>(i + 1);
    bool near = false;
    for (int b : interfaces) near = near || std::abs(row - b) <= 2;
    if (near) continue;
    for (Index j = 0; j < spec.n; ++j) CHECK(std::abs(s.values(i, j) - t.strain.values(i, j)) < 1e-9);
  }
}

TEST_CASE("inclusion ground truth is binary") {
  PhantomSpec spec = phantom_preset("inclusion");
  GroundTruth t = ground_truth(spec);
  const auto& inc = *spec.inclusion;
  CHECK(axial_strain_at(spec, inc.center_row, inc.center_col) == doctest::Approx(inc.inclusion_strain));
  CHECK(axial_strain_at(spec, 2.0, 2.0) == doctest::Approx(inc.background_strain));
  for (double v : t.strain.values.reshaped())
    CHECK((v == doctest::Approx(inc.inclusion_strain) || v == doctest::Approx(inc.background_strain)));
  CHECK(t.displacement.lateral_matrix().cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("spec validation") {
  PhantomSpec spec = small_layers(0.01, 0.02, 20);
  spec.layers[1].start_row = 22;
  CHECK_THROWS_AS(spec.validate(), InvalidArgument);
  spec = small_layers(0.2, 0.02, 20);
  CHECK_THROWS_AS(spec.validate(), InvalidArgument);
  spec = small_layers(0.01, 0.02, 20);
  spec.inclusion = Inclusion{20, 6, 7, 0.001, 0.01};
  CHECK_THROWS_AS(spec.validate(), InvalidArgument);
  CHECK_THROWS_AS(generate(spec), InvalidArgument);
}
