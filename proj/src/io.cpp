#include "altruist/io.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>
#include <system_error>
#include <vector>

namespace altruist {
namespace fs = std::filesystem;
namespace {

std::string format_double(double v) {
  std::array<char, 64> buf{};
  auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return ec == std::errc() ? std::string(buf.data(), end) : std::string("nan");
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

template <typename T>
T parse_number(const std::string& text, const std::string& key, const fs::path& path) {
  T value{};
  const char* first = text.data();
  const char* last = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last) {
    throw IoError("bad value '" + text + "' for header key '" + key + "'", path.string());
  }
  return value;
}

std::string header_text(const RasterHeader& h) {
  std::ostringstream out;
  out << "rows = " << h.rows << "\n"
      << "cols = " << h.cols << "\n";
  if (h.channels != 1) out << "channels = " << h.channels << "\n";
  out << "sampling_rate_hz = " << format_double(h.sampling_rate_hz) << "\n"
      << "center_frequency_hz = " << format_double(h.center_frequency_hz) << "\n"
      << "axial_spacing_m = " << format_double(h.axial_spacing_m) << "\n"
      << "lateral_spacing_m = " << format_double(h.lateral_spacing_m) << "\n";
  if (h.kernel_length != 0) out << "kernel_length = " << h.kernel_length << "\n";
  return out.str();
}

std::uint32_t to_little(std::uint32_t v) {
  if constexpr (std::endian::native == std::endian::big) {
    return (v >> 24) | ((v >> 8) & 0xff00u) | ((v << 8) & 0xff0000u) | (v << 24);
  }
  return v;
}

RasterHeader header_from(const RfFrame& f) {
  RasterHeader h;
  h.rows = f.rows();
  h.cols = f.cols();
  h.sampling_rate_hz = f.sampling_rate;
  h.center_frequency_hz = f.center_frequency;
  h.axial_spacing_m = f.axial_spacing;
  h.lateral_spacing_m = f.lateral_spacing;
  return h;
}

}  // namespace

fs::path sidecar_path(const fs::path& raster) {
  fs::path p = raster;
  p += ".hdr";
  return p;
}

void write_file_atomic(const fs::path& path, std::string_view contents) {
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open for writing", tmp.string());
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    out.flush();
    if (!out) throw IoError("write failed", tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp, ec);
    throw IoError("cannot rename into place", path.string());
  }
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open for reading", path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw IoError("read failed", path.string());
  return ss.str();
}

void write_raster(const fs::path& path, const RasterHeader& header,
                  const Eigen::Ref<const Eigen::VectorXd>& data) {
  if (header.rows <= 0 || header.cols <= 0 || header.channels <= 0) {
    throw InvalidArgument("write_raster: empty raster");
  }
  const Index count = header.rows * header.cols * header.channels;
  if (data.size() != count) {
    throw InvalidArgument("write_raster: data length " + std::to_string(data.size()) +
                          " does not match header (" + std::to_string(count) + ")");
  }
  std::string bytes(static_cast<std::size_t>(count) * 4, '\0');
  for (Index k = 0; k < count; ++k) {
    const auto word = to_little(std::bit_cast<std::uint32_t>(static_cast<float>(data[k])));
    std::memcpy(bytes.data() + 4 * k, &word, 4);
  }
  write_file_atomic(path, bytes);
  write_file_atomic(sidecar_path(path), header_text(header));
}

RasterHeader read_header(const fs::path& path) {
  const fs::path hdr = sidecar_path(path);
  std::istringstream in(read_file(hdr));
  std::map<std::string, std::string> kv;
  std::string line;
  while (std::getline(in, line)) {
    const std::string t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) throw IoError("malformed header line '" + t + "'", hdr.string());
    kv[trim(std::string_view(t).substr(0, eq))] = trim(std::string_view(t).substr(eq + 1));
  }
  RasterHeader h;
  for (const auto& [key, value] : kv) {
    if (key == "rows") h.rows = parse_number<Index>(value, key, hdr);
    else if (key == "cols") h.cols = parse_number<Index>(value, key, hdr);
    else if (key == "channels") h.channels = parse_number<int>(value, key, hdr);
    else if (key == "sampling_rate_hz") h.sampling_rate_hz = parse_number<double>(value, key, hdr);
    else if (key == "center_frequency_hz") h.center_frequency_hz = parse_number<double>(value, key, hdr);
    else if (key == "axial_spacing_m") h.axial_spacing_m = parse_number<double>(value, key, hdr);
    else if (key == "lateral_spacing_m") h.lateral_spacing_m = parse_number<double>(value, key, hdr);
    else if (key == "kernel_length") h.kernel_length = parse_number<int>(value, key, hdr);
    else throw IoError("unknown header key '" + key + "'", hdr.string());
  }
  if (!kv.contains("rows") || !kv.contains("cols")) {
    throw IoError("header needs rows and cols", hdr.string());
  }
  if (h.rows <= 0 || h.cols <= 0 || h.channels <= 0) {
    throw IoError("header dimensions must be positive", hdr.string());
  }
  return h;
}

Raster read_raster(const fs::path& path) {
  Raster r;
  r.header = read_header(path);
  const std::string bytes = read_file(path);
  const Index count = r.header.rows * r.header.cols * r.header.channels;
  if (static_cast<Index>(bytes.size()) != 4 * count) {
    throw IoError("file holds " + std::to_string(bytes.size()) + " bytes, header implies " +
                      std::to_string(4 * count),
                  path.string());
  }
  r.data.resize(count);
  for (Index k = 0; k < count; ++k) {
    std::uint32_t word;
    std::memcpy(&word, bytes.data() + 4 * k, 4);
    r.data[k] = static_cast<double>(std::bit_cast<float>(to_little(word)));
  }
  return r;
}

namespace {

Eigen::MatrixXd to_matrix(const Raster& r) {
  // File order is row-major.
  Eigen::MatrixXd m(r.header.rows, r.header.cols);
  for (Index i = 0; i < r.header.rows; ++i)
    for (Index j = 0; j < r.header.cols; ++j) m(i, j) = r.data[i * r.header.cols + j];
  return m;
}

Eigen::VectorXd row_major(const Eigen::MatrixXd& m) {
  Eigen::VectorXd v(m.size());
  for (Index i = 0; i < m.rows(); ++i)
    for (Index j = 0; j < m.cols(); ++j) v[i * m.cols() + j] = m(i, j);
  return v;
}

void expect_channels(const Raster& r, int channels, const fs::path& path) {
  if (r.header.channels != channels) {
    throw IoError("expected " + std::to_string(channels) + " channel(s), header has " +
                      std::to_string(r.header.channels),
                  path.string());
  }
}

}  // namespace

void write_frame(const fs::path& path, const RfFrame& frame) {
  write_raster(path, header_from(frame), row_major(frame.samples));
}

RfFrame read_frame(const fs::path& path) {
  const Raster r = read_raster(path);
  expect_channels(r, 1, path);
  RfFrame f;
  f.samples = to_matrix(r);
  f.sampling_rate = r.header.sampling_rate_hz;
  f.center_frequency = r.header.center_frequency_hz;
  f.axial_spacing = r.header.axial_spacing_m;
  f.lateral_spacing = r.header.lateral_spacing_m;
  try {
    f.validate();
  } catch (const InvalidArgument& e) {
    throw IoError(e.what(), path.string());
  }
  return f;
}

void write_displacement(const fs::path& path, const DisplacementField& d,
                        const RasterHeader& meta) {
  RasterHeader h = meta;
  h.rows = d.rows();
  h.cols = d.cols();
  h.channels = 2;
  h.kernel_length = 0;
  write_raster(path, h, d.values());
}

DisplacementField read_displacement(const fs::path& path) {
  Raster r = read_raster(path);
  expect_channels(r, 2, path);
  return DisplacementField(r.header.rows, r.header.cols, std::move(r.data));
}

void write_strain(const fs::path& path, const StrainImage& s, const RasterHeader& meta) {
  RasterHeader h = meta;
  h.rows = s.rows();
  h.cols = s.cols();
  h.channels = 1;
  h.kernel_length = s.kernel_length;
  write_raster(path, h, row_major(s.values));
}

StrainImage read_strain(const fs::path& path) {
  const Raster r = read_raster(path);
  expect_channels(r, 1, path);
  return StrainImage{to_matrix(r), r.header.kernel_length > 0 ? r.header.kernel_length : 3};
}

void write_pgm(const fs::path& path, const Eigen::MatrixXd& image, double lo, double hi) {
  if (!(hi > lo)) throw InvalidArgument("write_pgm: display range must satisfy hi > lo");
  std::string out = "P5\n" + std::to_string(image.cols()) + " " + std::to_string(image.rows()) +
                    "\n255\n";
  const std::size_t head = out.size();
  out.resize(head + static_cast<std::size_t>(image.size()));
  for (Index i = 0; i < image.rows(); ++i) {
    for (Index j = 0; j < image.cols(); ++j) {
      const double v = image(i, j);
      double t = std::isfinite(v) ? (v - lo) / (hi - lo) : 0.0;
      t = std::clamp(t, 0.0, 1.0);
      out[head + static_cast<std::size_t>(i * image.cols() + j)] =
          static_cast<char>(static_cast<unsigned char>(std::lround(255.0 * t)));
    }
  }
  write_file_atomic(path, out);
}

}  // namespace altruist
