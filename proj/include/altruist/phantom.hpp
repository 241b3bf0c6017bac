#pragma once

// Convolutional speckle phantoms with closed-form axial deformation.
//
// Scatterers with standard-normal amplitudes are placed uniformly over a
// padded region and rendered through a separable point-spread function
// (Gaussian-modulated cosine axially, Gaussian laterally). The post frame
// re-renders the same scatterers after moving each by the analytic axial
// displacement, obtained by integrating a piecewise-constant strain profile
// downward from a fixed top row.

#include <Eigen/Core>

#include <cstdint>
#include <limits>
#include <optional>
#include <string_view>
#include <vector>

#include "altruist/field.hpp"

namespace altruist {

struct Layer {
  int start_row = 1;  // 1-based, inclusive
  int end_row = 1;
  double strain = 0.0;
};

struct Inclusion {
  double center_row = 0.0;  // 1-based coordinates
  double center_col = 0.0;
  double radius = 0.0;      // samples
  double inclusion_strain = 0.0;
  double background_strain = 0.0;
};

struct PhantomSpec {
  Index m = 256;
  Index n = 64;
  double scatterer_density = 0.5;     // per sample
  double psf_center_frequency = 0.25; // cycles / sample
  double psf_axial_sigma = 2.0;       // samples
  double psf_lateral_sigma = 1.0;     // lines
  std::vector<Layer> layers;          // used when `inclusion` is empty
  std::optional<Inclusion> inclusion;
  double noise_psnr_db = std::numeric_limits<double>::infinity();  // inf: no noise
  std::uint64_t rng_seed = 1;
  double sampling_rate = 40e6;        // metadata only

  void validate() const;
};

struct GroundTruth {
  DisplacementField displacement;
  StrainImage strain;
};

struct Phantom {
  RfFrame pre;
  RfFrame post;
  GroundTruth truth;
};

/// Axial displacement at continuous 1-based position (y, x).
double axial_displacement_at(const PhantomSpec& spec, double y, double x);

/// Analytic strain at continuous 1-based position (y, x).
double axial_strain_at(const PhantomSpec& spec, double y, double x);

/// Ground-truth (axial, lateral) displacement of sample (row, col), 1-based.
std::pair<double, double> analytic_displacement(const PhantomSpec& spec, Index row,
                                                Index col);

GroundTruth ground_truth(const PhantomSpec& spec);

Phantom generate(const PhantomSpec& spec);

/// Peak-signal-to-noise of `noisy` against `clean`, in dB.
double measured_psnr_db(const Eigen::MatrixXd& clean, const Eigen::MatrixXd& noisy);

/// Three equal layers, the middle one stiffer by `modulus_ratio`, under a 4%
/// overall compression.
PhantomSpec layer_phantom(Index m, Index n, double modulus_ratio,
                          double noise_psnr_db, std::uint64_t seed);

/// Centred stiff disc under 1% background compression.
PhantomSpec inclusion_phantom(Index m, Index n, double radius, double strain_ratio,
                              double noise_psnr_db, std::uint64_t seed);

/// `layer-high`, `layer-low` or `inclusion`.
PhantomSpec phantom_preset(std::string_view name);

}  // namespace altruist
