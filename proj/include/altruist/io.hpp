#pragma once

// Raster persistence. A raster is a raw little-endian float32 file in
// row-major order plus a sidecar text header `<path>.hdr` of `key = value`
// lines. Multi-channel rasters interleave channels per sample, so a
// displacement raster stores the field's flattened vector as is.
//
// Every write goes to a temporary sibling first and is renamed into place.

#include <Eigen/Core>

#include <filesystem>
#include <string>
#include <string_view>

#include "altruist/field.hpp"

namespace altruist {

struct RasterHeader {
  Index rows = 0;
  Index cols = 0;
  int channels = 1;
  double sampling_rate_hz = 0.0;
  double center_frequency_hz = 0.0;
  double axial_spacing_m = 0.0;
  double lateral_spacing_m = 0.0;
  int kernel_length = 0;  // strain rasters only; 0 when absent
};

std::filesystem::path sidecar_path(const std::filesystem::path& raster);

/// Writes `data` (rows * cols * channels values, already in file order).
void write_raster(const std::filesystem::path& path, const RasterHeader& header,
                  const Eigen::Ref<const Eigen::VectorXd>& data);

struct Raster {
  RasterHeader header;
  Eigen::VectorXd data;
};

Raster read_raster(const std::filesystem::path& path);
RasterHeader read_header(const std::filesystem::path& path);

void write_frame(const std::filesystem::path& path, const RfFrame& frame);
RfFrame read_frame(const std::filesystem::path& path);

void write_displacement(const std::filesystem::path& path, const DisplacementField& d,
                        const RasterHeader& meta = {});
DisplacementField read_displacement(const std::filesystem::path& path);

void write_strain(const std::filesystem::path& path, const StrainImage& s,
                  const RasterHeader& meta = {});
StrainImage read_strain(const std::filesystem::path& path);

/// Writes `contents` to `path` through a temporary file and a rename.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);
std::string read_file(const std::filesystem::path& path);

/// 8-bit binary PGM, values mapped linearly from [lo, hi] to [0, 255] and
/// clamped.
void write_pgm(const std::filesystem::path& path, const Eigen::MatrixXd& image, double lo,
               double hi);

}  // namespace altruist
