#include "cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>
#include <openssl/evp.h>

#include <algorithm>
#include <cctype>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <future>
#include <iomanip>
#include <iostream>
#include <limits>
#include <memory>
#include <sstream>

#include "altruist/io.hpp"

extern char** environ;

namespace altruist::cli {
namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

constexpr KeySpec kKeys[] = {
    // regularization
    {"params", "preset:layer", "weight set: preset:<name> or custom"},
    {"alpha1", "", "axial first-order weight, axial component"},
    {"alpha2", "", "lateral first-order weight, axial component"},
    {"beta1", "", "axial first-order weight, lateral component"},
    {"beta2", "", "lateral first-order weight, lateral component"},
    {"theta1", "", "axial second-order weight, axial component"},
    {"theta2", "", "lateral second-order weight, axial component"},
    {"lambda1", "", "axial second-order weight, lateral component"},
    {"lambda2", "", "lateral second-order weight, lateral component"},
    {"gamma", "", "first-row weight"},
    {"zeta", "", "augmented Lagrangian weight"},
    {"mf", "", "second-order multiplier"},
    {"iterations", "", "ADMM iterations K"},
    {"bias_mode", "zero", "zero or mean-strain"},
    // solver
    {"mode", "altruist", "altruist or l2-baseline"},
    {"linear_solver", "auto", "auto, direct or conjugate-gradient"},
    {"cg_tolerance", "1e-8", "relative residual for conjugate gradient"},
    {"cg_max_iters", "0", "conjugate gradient cap, 0 for 10 x unknowns"},
    {"relinearizations", "1", "linearization passes"},
    // seed
    {"seed_max_lag", "10", "DP lag range in samples"},
    {"seed_smoothness", "0.2", "DP transition weight"},
    {"seed_median_window", "5", "cross-column median window"},
    {"seed_input", "", "displacement raster used instead of the DP seed"},
    // strain
    {"kernel", "3", "differentiation kernel length"},
    {"kernels", "3,43,63", "kernel sweep for compare"},
    // phantom
    {"phantom", "layer-high", "layer-high, layer-low or inclusion"},
    {"rows", "", "phantom rows"},
    {"cols", "", "phantom columns"},
    {"scatterer_density", "", "scatterers per sample"},
    {"psf_center_frequency", "", "cycles per sample"},
    {"psf_axial_sigma", "", "samples"},
    {"psf_lateral_sigma", "", "lines"},
    {"noise_psnr_db", "", "noise PSNR in dB, inf for none"},
    {"rng_seed", "", "phantom RNG seed"},
    {"layers", "", "start:end:strain;... (1-based rows)"},
    {"inclusion", "", "row:col:radius:inclusion_strain:background_strain"},
    // metrics
    {"truth", "", "ground-truth strain raster for metrics"},
    {"windows", "", "windows CSV (top,left,height,width,role)"},
    {"window_height", "", "auto window height in samples"},
    {"window_width", "", "auto window width in lines"},
    {"histogram", "", "RxC target x background windows for the CNR histogram"},
    {"esf_line", "", "y0:x0:y1:x1, 1-based"},
    {"esf_samples", "101", "samples along the ESF line"},
    {"display_min", "", "preview range low"},
    {"display_max", "", "preview range high"},
    // output
    {"out", ".", "output directory"},
};

const KeySpec* find_key(std::string_view name) {
  for (const KeySpec& k : kKeys)
    if (k.name == name) return &k;
  return nullptr;
}

std::string dashed(std::string_view key) {
  std::string s(key);
  std::replace(s.begin(), s.end(), '_', '-');
  return s;
}

// ---- value parsing ----

const std::string& value_of(const Config& cfg, const std::string& key) {
  auto it = cfg.find(key);
  if (it == cfg.end()) throw InvalidArgument("config key '" + key + "' is not set");
  return it->second;
}

bool has(const Config& cfg, const std::string& key) {
  auto it = cfg.find(key);
  return it != cfg.end() && !it->second.empty();
}

double parse_double(std::string_view text, std::string_view what) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size() || std::isnan(v)) {
    throw InvalidArgument(std::string(what) + ": '" + std::string(text) + "' is not a number");
  }
  return v;
}

long long parse_int(std::string_view text, std::string_view what) {
  long long v = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    throw InvalidArgument(std::string(what) + ": '" + std::string(text) + "' is not an integer");
  }
  return v;
}

double get_double(const Config& cfg, const std::string& key) {
  return parse_double(value_of(cfg, key), "config key '" + key + "'");
}

int get_int(const Config& cfg, const std::string& key) {
  const long long v = parse_int(value_of(cfg, key), "config key '" + key + "'");
  if (v < std::numeric_limits<int>::min() || v > std::numeric_limits<int>::max()) {
    throw InvalidArgument("config key '" + key + "' is out of range");
  }
  return static_cast<int>(v);
}

std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    out.emplace_back(s.substr(start, pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

std::vector<double> parse_tuple(std::string_view text, std::size_t count, std::string_view key) {
  const auto parts = split(text, ':');
  if (parts.size() != count) {
    throw InvalidArgument("config key '" + std::string(key) + "': expected " +
                          std::to_string(count) + " ':'-separated values");
  }
  std::vector<double> v;
  for (const auto& p : parts) v.push_back(parse_double(p, "config key '" + std::string(key) + "'"));
  return v;
}

std::pair<std::size_t, std::size_t> parse_histogram(std::string_view text) {
  const auto x = text.find_first_of("xX");
  if (x == std::string_view::npos) throw InvalidArgument("histogram: expected RxC, got '" + std::string(text) + "'");
  const long long r = parse_int(text.substr(0, x), "histogram rows");
  const long long c = parse_int(text.substr(x + 1), "histogram columns");
  if (r < 1 || c < 1) throw InvalidArgument("histogram: counts must be >= 1");
  return {static_cast<std::size_t>(r), static_cast<std::size_t>(c)};
}

std::vector<int> parse_kernels(std::string_view text) {
  std::vector<int> out;
  for (const auto& part : split(text, ',')) {
    const long long k = parse_int(part, "kernels");
    if (k < 3 || k % 2 == 0) throw InvalidArgument("kernels: each length must be odd and >= 3");
    out.push_back(static_cast<int>(k));
  }
  return out;
}

std::string json_scalar_to_string(const json& v, const std::string& key) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
  if (v.is_number()) return v.dump();
  throw InvalidArgument("config file: key '" + key + "' must be a string or number");
}

// ---- timing / manifest ----

class Stopwatch {
 public:
  double lap() {
    const auto now = std::chrono::steady_clock::now();
    const double s = std::chrono::duration<double>(now - last_).count();
    last_ = now;
    return s;
  }

 private:
  std::chrono::steady_clock::time_point last_ = std::chrono::steady_clock::now();
};

struct Manifest {
  Manifest(std::string cmd, Config cfg) : command(std::move(cmd)), config(std::move(cfg)) {}

  std::string command;
  Config config;
  std::vector<std::pair<std::string, std::string>> inputs;
  std::vector<std::string> outputs;
  json timings = json::object();
  json results = json::object();
  std::string status = "ok";
  std::string error_class;
  std::string error_message;

  void input(const fs::path& p) { inputs.emplace_back(p.string(), sha256_hex(p)); }

  void write(const fs::path& dir) const {
    json j;
    j["tool"] = "altruist";
    j["version"] = std::string(kVersion);
    j["command"] = command;
    j["status"] = status;
    if (!error_class.empty()) j["error"] = {{"class", error_class}, {"message", error_message}};
    json c = json::object();
    for (const auto& [k, v] : config) c[k] = v;
    j["config"] = c;
    json in = json::array();
    for (const auto& [p, h] : inputs) in.push_back({{"path", p}, {"sha256", h}});
    j["inputs"] = in;
    j["outputs"] = outputs;
    j["timings_s"] = timings;
    if (!results.empty()) j["results"] = results;
    write_file_atomic(dir / "manifest.json", j.dump(2) + "\n");
  }
};

fs::path prepare_out(const Config& cfg) {
  const fs::path dir = value_of(cfg, "out");
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw IoError("cannot create output directory", dir.string());
  return dir;
}

void emit(Manifest& m, const fs::path& dir, const fs::path& name,
          const std::function<void(const fs::path&)>& writer) {
  writer(dir / name);
  m.outputs.push_back(name.string());
}

void emit_raster(Manifest& m, const fs::path& dir, const std::string& name,
                 const std::function<void(const fs::path&)>& writer) {
  writer(dir / name);
  m.outputs.push_back(name);
  m.outputs.push_back(name + ".hdr");
}

std::string csv_number(double v) {
  std::ostringstream os;
  os << std::setprecision(12) << v;
  return os.str();
}

// ---- shared pipeline pieces ----

std::pair<Index, Index> window_size(const Config& cfg, double axial_spacing, double lateral_spacing) {
  auto [h, w] = default_window_size(axial_spacing, lateral_spacing);
  if (has(cfg, "window_height")) h = get_int(cfg, "window_height");
  if (has(cfg, "window_width")) w = get_int(cfg, "window_width");
  return {h, w};
}

struct EsfLine {
  Point start;
  Point end;
};

std::optional<EsfLine> esf_line(const Config& cfg, const Eigen::MatrixXd* truth) {
  if (has(cfg, "esf_line")) {
    const auto v = parse_tuple(value_of(cfg, "esf_line"), 4, "esf_line");
    return EsfLine{{v[0], v[1]}, {v[2], v[3]}};
  }
  if (truth == nullptr) return std::nullopt;
  // First level change down the centre column, +-25 rows.
  const Index m = truth->rows();
  const Index jc = (truth->cols() - 1) / 2;
  for (Index i = 1; i < m; ++i) {
    if ((*truth)(i, jc) != (*truth)(i - 1, jc)) {
      const double edge = static_cast<double>(i) + 0.5;  // 1-based midpoint
      const double y0 = std::max(1.0, edge - 25.0);
      const double y1 = std::min(static_cast<double>(m), edge + 25.0);
      const double x = static_cast<double>(jc + 1);
      return EsfLine{{y0, x}, {y1, x}};
    }
  }
  return std::nullopt;
}

void check_windows(const WindowSet& ws, Index rows, Index cols) {
  std::size_t k = 0;
  for (const auto* set : {&ws.targets, &ws.backgrounds}) {
    for (const WindowSpec& w : *set) {
      try {
        w.validate(rows, cols);
      } catch (const InvalidArgument& e) {
        throw InvalidArgument("window " + std::to_string(k) + ": " + e.what());
      }
      ++k;
    }
  }
}

MetricsReport evaluate(const Eigen::MatrixXd& strain, const Eigen::MatrixXd* truth,
                       const WindowSet& ws, bool histogram, const std::optional<EsfLine>& line,
                       int esf_samples) {
  if (ws.targets.empty() || ws.backgrounds.empty()) {
    throw InvalidArgument("metrics need at least one target and one background window");
  }
  MetricsReport r;
  const WindowSpec& t = ws.targets.front();
  const WindowSpec& b = ws.backgrounds.front();
  r.snr = snr(strain, b);
  r.cnr = cnr(strain, t, b);
  if (window_stats(strain, b).mean != 0.0) r.sr = strain_ratio(strain, t, b);
  r.window_height = t.height;
  r.window_width = t.width;
  if (truth != nullptr) {
    r.rmse = rmse(strain, *truth);
    if (truth->maxCoeff() > truth->minCoeff()) r.mssim = mssim(strain, *truth);
  }
  if (histogram) r.cnr_histogram = cnr_histogram(strain, ws.targets, ws.backgrounds);
  if (line) {
    const EsfResult e = esf(strain, line->start, line->end, esf_samples);
    if (!e.degenerate) r.esf_width = e.width;
  }
  return r;
}

double histogram_mean(const std::vector<Measurement>& h) {
  double s = 0.0;
  for (const auto& v : h) s += v.value;
  return h.empty() ? 0.0 : s / static_cast<double>(h.size());
}

std::pair<double, double> display_range(const Config& cfg, const Eigen::MatrixXd* truth,
                                        const Eigen::MatrixXd& fallback) {
  double lo = truth ? truth->minCoeff() : fallback.minCoeff();
  double hi = truth ? truth->maxCoeff() : fallback.maxCoeff();
  if (!(hi > lo)) {
    lo = fallback.minCoeff();
    hi = fallback.maxCoeff();
  }
  if (has(cfg, "display_min")) lo = get_double(cfg, "display_min");
  if (has(cfg, "display_max")) hi = get_double(cfg, "display_max");
  if (!(hi > lo)) hi = lo + 1.0;
  return {lo, hi};
}

void check_same_grid(const RfFrame& a, const RfFrame& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw InvalidArgument("pre and post frames differ in size (" + std::to_string(a.rows()) + "x" +
                          std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                          std::to_string(b.cols()) + ")");
  }
}

DisplacementField make_seed(const Config& cfg, const RfFrame& pre, const RfFrame& post,
                            Manifest& m) {
  if (has(cfg, "seed_input")) {
    const fs::path p = value_of(cfg, "seed_input");
    m.input(p);
    DisplacementField d = read_displacement(p);
    if (d.rows() != pre.rows() || d.cols() != pre.cols()) {
      throw InvalidArgument("seed_input does not match the frame size");
    }
    return d;
  }
  return dp_seed(pre, post, seed_params(cfg));
}

RasterHeader meta_of(const RfFrame& f) {
  RasterHeader h;
  h.sampling_rate_hz = f.sampling_rate;
  h.center_frequency_hz = f.center_frequency;
  h.axial_spacing_m = f.axial_spacing;
  h.lateral_spacing_m = f.lateral_spacing;
  return h;
}

// ---- commands ----

int cmd_simulate(const Config& cfg) {
  Manifest m("simulate", cfg);
  Stopwatch sw;
  const PhantomSpec spec = phantom_spec(cfg);
  const fs::path dir = prepare_out(cfg);
  const Phantom ph = generate(spec);
  m.timings["generate"] = sw.lap();
  RasterHeader meta = meta_of(ph.pre);
  emit_raster(m, dir, "pre.raw", [&](const fs::path& p) { write_frame(p, ph.pre); });
  emit_raster(m, dir, "post.raw", [&](const fs::path& p) { write_frame(p, ph.post); });
  emit_raster(m, dir, "truth_displacement.raw",
              [&](const fs::path& p) { write_displacement(p, ph.truth.displacement, meta); });
  emit_raster(m, dir, "truth_strain.raw",
              [&](const fs::path& p) { write_strain(p, ph.truth.strain, meta); });
  const auto [lo, hi] = display_range(cfg, &ph.truth.strain.values, ph.truth.strain.values);
  emit(m, dir, "truth_strain.pgm",
       [&](const fs::path& p) { write_pgm(p, ph.truth.strain.values, lo, hi); });
  m.timings["write"] = sw.lap();
  json layers = json::array();
  for (const Layer& l : spec.layers) layers.push_back({l.start_row, l.end_row, l.strain});
  m.results["layers"] = layers;
  if (spec.inclusion) {
    const Inclusion& inc = *spec.inclusion;
    m.results["inclusion"] = {inc.center_row, inc.center_col, inc.radius, inc.inclusion_strain,
                              inc.background_strain};
  }
  m.write(dir);
  return kExitOk;
}

// Runs `body`; on a solver failure the manifest records the error class and
// the exception propagates.
template <typename F>
auto guarded(Manifest& m, const fs::path& dir, F&& body) {
  try {
    return body();
  } catch (const SingularSystemError& e) {
    m.status = "error";
    m.error_class = "SingularSystemError";
    m.error_message = e.what();
    m.write(dir);
    throw;
  } catch (const ConvergenceError& e) {
    m.status = "error";
    m.error_class = "ConvergenceError";
    m.error_message = e.what();
    m.write(dir);
    throw;
  }
}

int cmd_estimate(const Config& cfg, const fs::path& pre_path, const fs::path& post_path) {
  Manifest m("estimate", cfg);
  Stopwatch sw;
  const SolverConfig solver = solver_config(cfg);
  const int kernel = get_int(cfg, "kernel");
  const fs::path dir = prepare_out(cfg);
  const RfFrame pre = read_frame(pre_path);
  const RfFrame post = read_frame(post_path);
  m.input(pre_path);
  m.input(post_path);
  check_same_grid(pre, post);
  m.timings["read"] = sw.lap();
  const DisplacementField seed = make_seed(cfg, pre, post, m);
  m.timings["seed"] = sw.lap();
  const RunResult res = guarded(m, dir, [&] { return run(pre, post, seed, solver); });
  m.timings["admm"] = sw.lap();
  const StrainImage strain = strain_from_displacement(res.total, kernel);
  m.timings["strain"] = sw.lap();

  const RasterHeader meta = meta_of(pre);
  emit_raster(m, dir, "seed.raw", [&](const fs::path& p) { write_displacement(p, seed, meta); });
  emit_raster(m, dir, "displacement.raw",
              [&](const fs::path& p) { write_displacement(p, res.total, meta); });
  emit_raster(m, dir, "strain.raw", [&](const fs::path& p) { write_strain(p, strain, meta); });
  emit(m, dir, "convergence.csv", [&](const fs::path& p) {
    std::ostringstream os;
    res.trace.write_csv(os);
    write_file_atomic(p, os.str());
  });
  m.timings["write"] = sw.lap();
  if (!res.trace.records.empty()) {
    m.results["final_objective"] = res.trace.records.back().objective;
    m.results["final_primal_residual"] = res.trace.records.back().primal_res;
  }
  m.write(dir);
  return kExitOk;
}

int cmd_metrics(const Config& cfg, const fs::path& strain_path) {
  Manifest m("metrics", cfg);
  Stopwatch sw;
  const fs::path dir = prepare_out(cfg);
  const StrainImage strain = read_strain(strain_path);
  m.input(strain_path);
  std::optional<StrainImage> truth;
  if (has(cfg, "truth")) {
    truth = read_strain(value_of(cfg, "truth"));
    m.input(value_of(cfg, "truth"));
    if (truth->rows() != strain.rows() || truth->cols() != strain.cols()) {
      throw InvalidArgument("truth and strain rasters differ in size");
    }
  }
  if (!has(cfg, "windows")) throw InvalidArgument("metrics needs --windows");
  const WindowSet ws = read_windows(value_of(cfg, "windows"));
  m.input(value_of(cfg, "windows"));
  check_windows(ws, strain.rows(), strain.cols());
  bool histogram = false;
  if (has(cfg, "histogram")) {
    const auto [r, c] = parse_histogram(value_of(cfg, "histogram"));
    if (ws.targets.size() != r || ws.backgrounds.size() != c) {
      throw InvalidArgument("histogram " + value_of(cfg, "histogram") + " needs " +
                            std::to_string(r) + " target and " + std::to_string(c) +
                            " background windows, file has " + std::to_string(ws.targets.size()) +
                            " and " + std::to_string(ws.backgrounds.size()));
    }
    histogram = true;
  }
  const Eigen::MatrixXd* tp = truth ? &truth->values : nullptr;
  const MetricsReport report = evaluate(strain.values, tp, ws, histogram,
                                        has(cfg, "esf_line") ? esf_line(cfg, nullptr) : std::nullopt,
                                        get_int(cfg, "esf_samples"));
  m.timings["metrics"] = sw.lap();
  emit(m, dir, "metrics.csv", [&](const fs::path& p) {
    std::ostringstream os;
    report.write_csv(os);
    write_file_atomic(p, os.str());
  });
  emit(m, dir, "metrics.txt", [&](const fs::path& p) { write_file_atomic(p, report.to_text()); });
  if (histogram) {
    emit(m, dir, "cnr_histogram.csv", [&](const fs::path& p) {
      std::ostringstream os;
      write_histogram_csv(report.cnr_histogram, os);
      write_file_atomic(p, os.str());
    });
  }
  m.results["snr"] = report.snr.value;
  m.results["cnr"] = report.cnr.value;
  if (report.sr) m.results["sr"] = *report.sr;
  if (report.rmse) m.results["rmse"] = *report.rmse;
  if (report.mssim) m.results["mssim"] = *report.mssim;
  if (report.esf_width) m.results["esf_width"] = *report.esf_width;
  m.write(dir);
  std::cout << report.to_text();
  return kExitOk;
}

int cmd_compare(const Config& cfg, const fs::path& pre_path, const fs::path& post_path,
                const fs::path& truth_path) {
  Manifest m("compare", cfg);
  Stopwatch sw;
  const SolverConfig base = solver_config(cfg);
  const std::vector<int> kernels = parse_kernels(value_of(cfg, "kernels"));
  const auto [n_targets, n_backgrounds] =
      parse_histogram(has(cfg, "histogram") ? value_of(cfg, "histogram") : "6x20");
  const fs::path dir = prepare_out(cfg);
  const RfFrame pre = read_frame(pre_path);
  const RfFrame post = read_frame(post_path);
  const StrainImage truth = read_strain(truth_path);
  m.input(pre_path);
  m.input(post_path);
  m.input(truth_path);
  check_same_grid(pre, post);
  if (truth.rows() != pre.rows() || truth.cols() != pre.cols()) {
    throw InvalidArgument("truth raster does not match the frame size");
  }
  for (int k : kernels) {
    if (k > pre.rows()) throw InvalidArgument("kernel " + std::to_string(k) + " exceeds the rows");
  }
  m.timings["read"] = sw.lap();

  WindowSet ws;
  if (has(cfg, "windows")) {
    ws = read_windows(value_of(cfg, "windows"));
    m.input(value_of(cfg, "windows"));
  } else {
    const auto [h, w] = window_size(cfg, pre.axial_spacing, pre.lateral_spacing);
    ws = auto_windows(truth.values, h, w, n_targets, n_backgrounds);
  }
  check_windows(ws, pre.rows(), pre.cols());
  const bool histogram = ws.targets.size() == 6 && ws.backgrounds.size() == 20;
  const auto line = esf_line(cfg, &truth.values);
  const int esf_samples = get_int(cfg, "esf_samples");

  const DisplacementField seed = make_seed(cfg, pre, post, m);
  m.timings["seed"] = sw.lap();

  const SolverMode modes[] = {SolverMode::kL2Baseline, SolverMode::kAltruist};
  std::vector<std::future<RunResult>> jobs;
  for (SolverMode mode : modes) {
    SolverConfig c = base;
    c.mode = mode;
    jobs.push_back(std::async(std::launch::async, [&pre, &post, &seed, c] {
      return run(pre, post, seed, c);
    }));
  }
  std::vector<RunResult> results;
  guarded(m, dir, [&] {
    for (auto& j : jobs) results.push_back(j.get());
    return 0;
  });
  m.timings["admm"] = sw.lap();

  const RasterHeader meta = meta_of(pre);
  emit(m, dir, "windows.csv", [&](const fs::path& p) { write_windows(p, ws); });
  const auto [lo, hi] = display_range(cfg, &truth.values, truth.values);
  emit(m, dir, "truth_strain.pgm", [&](const fs::path& p) { write_pgm(p, truth.values, lo, hi); });

  // reports[mode][kernel]
  std::vector<std::vector<MetricsReport>> reports(2);
  for (std::size_t k = 0; k < 2; ++k) {
    const std::string name(to_string(modes[k]));
    emit_raster(m, dir, "displacement_" + name + ".raw",
                [&](const fs::path& p) { write_displacement(p, results[k].total, meta); });
    emit(m, dir, "convergence_" + name + ".csv", [&](const fs::path& p) {
      std::ostringstream os;
      results[k].trace.write_csv(os);
      write_file_atomic(p, os.str());
    });
    for (int kernel : kernels) {
      const StrainImage s = strain_from_displacement(results[k].total, kernel);
      reports[k].push_back(evaluate(s.values, &truth.values, ws, histogram, line, esf_samples));
      const std::string stem = "strain_" + name + "_k" + std::to_string(kernel);
      emit_raster(m, dir, stem + ".raw", [&](const fs::path& p) { write_strain(p, s, meta); });
      emit(m, dir, stem + ".pgm", [&](const fs::path& p) { write_pgm(p, s.values, lo, hi); });
    }
  }

  std::ostringstream csv;
  csv << "mode,kernel,snr,cnr,sr,rmse,mssim,cnr_histogram_mean,esf_width,ttest_t,ttest_p\n";
  auto opt = [](const std::optional<double>& v) { return v ? csv_number(*v) : std::string(); };
  for (std::size_t ki = 0; ki < kernels.size(); ++ki) {
    std::optional<TTestResult> tt;
    if (histogram) {
      std::vector<double> a;
      std::vector<double> b;
      for (const auto& v : reports[1][ki].cnr_histogram) a.push_back(v.value);
      for (const auto& v : reports[0][ki].cnr_histogram) b.push_back(v.value);
      tt = paired_ttest(a, b);
    }
    for (std::size_t k = 0; k < 2; ++k) {
      const MetricsReport& r = reports[k][ki];
      csv << to_string(modes[k]) << ',' << kernels[ki] << ',' << csv_number(r.snr.value) << ','
          << csv_number(r.cnr.value) << ',' << opt(r.sr) << ',' << opt(r.rmse) << ','
          << opt(r.mssim) << ','
          << (histogram ? csv_number(histogram_mean(r.cnr_histogram)) : std::string()) << ','
          << opt(r.esf_width) << ',' << (tt ? csv_number(tt->t) : std::string()) << ','
          << (tt ? csv_number(tt->p) : std::string()) << '\n';
    }
  }
  emit(m, dir, "compare.csv", [&](const fs::path& p) { write_file_atomic(p, csv.str()); });
  m.timings["metrics"] = sw.lap();

  // ALTRUIST over baseline at the first kernel of the sweep.
  const MetricsReport& base_r = reports[0].front();
  const MetricsReport& alt_r = reports[1].front();
  json ratios = json::object();
  ratios["kernel"] = kernels.front();
  ratios["cnr"] = alt_r.cnr.value / base_r.cnr.value;
  if (histogram) {
    ratios["cnr_histogram_mean"] =
        histogram_mean(alt_r.cnr_histogram) / histogram_mean(base_r.cnr_histogram);
  }
  if (alt_r.esf_width && base_r.esf_width) ratios["esf_width"] = *alt_r.esf_width / *base_r.esf_width;
  if (alt_r.rmse && base_r.rmse) ratios["rmse"] = *alt_r.rmse / *base_r.rmse;
  m.results["ratios"] = ratios;
  if (line) {
    m.results["esf_line"] = {line->start.y, line->start.x, line->end.y, line->end.x};
  }
  m.write(dir);
  std::cout << csv.str();
  return kExitOk;
}

std::vector<std::string> current_environment() {
  std::vector<std::string> env;
  for (char** e = environ; e != nullptr && *e != nullptr; ++e) env.emplace_back(*e);
  return env;
}

}  // namespace

std::span<const KeySpec> known_keys() { return kKeys; }

std::string env_name(std::string_view key) {
  std::string s = "ALTRUIST_";
  for (char c : key) s.push_back(static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
  return s;
}

Config environment_overrides(std::span<const std::string> environment) {
  Config out;
  for (const std::string& entry : environment) {
    if (!entry.starts_with("ALTRUIST_")) continue;
    const auto eq = entry.find('=');
    if (eq == std::string::npos) continue;
    std::string key = entry.substr(9, eq - 9);
    std::transform(key.begin(), key.end(), key.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    out[key] = entry.substr(eq + 1);
  }
  return out;
}

Config resolve_config(const Config& flags, const Config& env,
                      const std::optional<fs::path>& config_file) {
  auto check = [](const Config& c, const std::string& source) {
    for (const auto& [k, v] : c) {
      if (k != "config" && find_key(k) == nullptr) {
        throw InvalidArgument("unknown config key '" + k + "' in " + source);
      }
    }
  };
  check(flags, "flags");
  check(env, "environment");

  Config file;
  if (config_file) {
    json j;
    try {
      j = json::parse(read_file(*config_file));
    } catch (const json::parse_error& e) {
      throw InvalidArgument("config file " + config_file->string() + ": " + e.what());
    }
    // A manifest carries its settings under "config".
    if (j.is_object() && j.contains("config") && j["config"].is_object()) j = j["config"];
    if (!j.is_object()) throw InvalidArgument("config file must hold a JSON object");
    for (const auto& [k, v] : j.items()) file[k] = json_scalar_to_string(v, k);
    check(file, "config file " + config_file->string());
  }

  Config out;
  for (const KeySpec& k : kKeys) {
    const std::string key(k.name);
    if (auto it = flags.find(key); it != flags.end()) out[key] = it->second;
    else if (auto e = env.find(key); e != env.end()) out[key] = e->second;
    else if (auto f = file.find(key); f != file.end()) out[key] = f->second;
    else out[key] = std::string(k.fallback);
  }
  return out;
}

RegParams reg_params(const Config& cfg) {
  const std::string& spec = value_of(cfg, "params");
  RegParams p;
  if (spec.starts_with("preset:")) {
    p = preset_params(std::string_view(spec).substr(7));
  } else if (spec != "custom") {
    throw InvalidArgument("params: expected preset:<name> or custom, got '" + spec + "'");
  }
  auto set = [&](const char* key, double& field) {
    if (has(cfg, key)) field = get_double(cfg, key);
  };
  set("alpha1", p.alpha1);
  set("alpha2", p.alpha2);
  set("beta1", p.beta1);
  set("beta2", p.beta2);
  set("mf", p.mf);
  // Second-order weights follow mf unless given explicitly.
  p.theta1 = has(cfg, "theta1") ? get_double(cfg, "theta1") : p.mf * p.alpha1;
  p.theta2 = has(cfg, "theta2") ? get_double(cfg, "theta2") : p.mf * p.alpha2;
  p.lambda1 = has(cfg, "lambda1") ? get_double(cfg, "lambda1") : p.mf * p.beta1;
  p.lambda2 = has(cfg, "lambda2") ? get_double(cfg, "lambda2") : p.mf * p.beta2;
  set("gamma", p.gamma);
  set("zeta", p.zeta);
  if (has(cfg, "iterations")) p.iterations = get_int(cfg, "iterations");
  p.bias_mode = parse_bias_mode(value_of(cfg, "bias_mode"));
  p.validate();
  return p;
}

SeedParams seed_params(const Config& cfg) {
  SeedParams s;
  s.max_lag = get_int(cfg, "seed_max_lag");
  s.smoothness_weight = get_double(cfg, "seed_smoothness");
  s.median_window = get_int(cfg, "seed_median_window");
  if (s.max_lag < 1) throw InvalidArgument("seed_max_lag must be >= 1");
  if (!(s.smoothness_weight >= 0.0) || !std::isfinite(s.smoothness_weight)) {
    throw InvalidArgument("seed_smoothness must be finite and >= 0");
  }
  if (s.median_window < 1 || s.median_window % 2 == 0) {
    throw InvalidArgument("seed_median_window must be odd and >= 1");
  }
  return s;
}

SolverConfig solver_config(const Config& cfg) {
  SolverConfig c;
  c.params = reg_params(cfg);
  c.mode = parse_solver_mode(value_of(cfg, "mode"));
  c.linear_solver = parse_linear_solver(value_of(cfg, "linear_solver"));
  c.cg_tolerance = get_double(cfg, "cg_tolerance");
  c.cg_max_iters = get_int(cfg, "cg_max_iters");
  c.relinearizations = get_int(cfg, "relinearizations");
  c.validate();
  const int kernel = get_int(cfg, "kernel");
  if (kernel < 3 || kernel % 2 == 0) throw InvalidArgument("kernel must be odd and >= 3");
  return c;
}

PhantomSpec phantom_spec(const Config& cfg) {
  const std::string& name = value_of(cfg, "phantom");
  PhantomSpec base = phantom_preset(name);
  const Index m = has(cfg, "rows") ? get_int(cfg, "rows") : base.m;
  const Index n = has(cfg, "cols") ? get_int(cfg, "cols") : base.n;
  const double psnr = has(cfg, "noise_psnr_db") ? get_double(cfg, "noise_psnr_db") : base.noise_psnr_db;
  if (m < 4 || n < 4) throw InvalidArgument("rows and cols must be >= 4");
  std::uint64_t rng = base.rng_seed;
  if (has(cfg, "rng_seed")) {
    const long long v = parse_int(value_of(cfg, "rng_seed"), "config key 'rng_seed'");
    if (v < 0) throw InvalidArgument("rng_seed must be >= 0");
    rng = static_cast<std::uint64_t>(v);
  }
  // Rebuild the preset geometry on the requested grid.
  PhantomSpec spec;
  if (name == "inclusion") {
    const Inclusion& inc = *base.inclusion;
    const double radius = std::min(inc.radius, static_cast<double>(std::min(m, n)) / 2.0 - 1.0);
    spec = inclusion_phantom(m, n, radius, inc.inclusion_strain / inc.background_strain, psnr, rng);
  } else {
    const double ratio = base.layers[0].strain / base.layers[1].strain;
    spec = layer_phantom(m, n, ratio, psnr, rng);
  }
  if (has(cfg, "scatterer_density")) spec.scatterer_density = get_double(cfg, "scatterer_density");
  if (has(cfg, "psf_center_frequency")) spec.psf_center_frequency = get_double(cfg, "psf_center_frequency");
  if (has(cfg, "psf_axial_sigma")) spec.psf_axial_sigma = get_double(cfg, "psf_axial_sigma");
  if (has(cfg, "psf_lateral_sigma")) spec.psf_lateral_sigma = get_double(cfg, "psf_lateral_sigma");
  if (has(cfg, "layers")) {
    spec.inclusion.reset();
    spec.layers.clear();
    for (const auto& part : split(value_of(cfg, "layers"), ';')) {
      const auto v = parse_tuple(part, 3, "layers");
      spec.layers.push_back({static_cast<int>(v[0]), static_cast<int>(v[1]), v[2]});
    }
  }
  if (has(cfg, "inclusion")) {
    const auto v = parse_tuple(value_of(cfg, "inclusion"), 5, "inclusion");
    spec.layers.clear();
    spec.inclusion = Inclusion{v[0], v[1], v[2], v[3], v[4]};
  }
  spec.validate();
  return spec;
}

WindowSet read_windows(const fs::path& path) {
  std::istringstream in(read_file(path));
  WindowSet ws;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.starts_with("top")) continue;
    const auto f = split(line, ',');
    const std::string where = path.string() + ":" + std::to_string(line_no);
    if (f.size() != 5) throw InvalidArgument(where + ": expected top,left,height,width,role");
    WindowSpec w{parse_int(f[0], where), parse_int(f[1], where), parse_int(f[2], where),
                 parse_int(f[3], where)};
    if (f[4] == "target") ws.targets.push_back(w);
    else if (f[4] == "background") ws.backgrounds.push_back(w);
    else throw InvalidArgument(where + ": role must be target or background");
  }
  return ws;
}

void write_windows(const fs::path& path, const WindowSet& windows) {
  std::ostringstream os;
  os << "top,left,height,width,role\n";
  for (const auto& w : windows.targets)
    os << w.top_row << ',' << w.left_col << ',' << w.height << ',' << w.width << ",target\n";
  for (const auto& w : windows.backgrounds)
    os << w.top_row << ',' << w.left_col << ',' << w.height << ',' << w.width << ",background\n";
  write_file_atomic(path, os.str());
}

std::string sha256_hex(const fs::path& path) {
  const std::string data = read_file(path);
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw IoError("sha256 failed", path.string());
  }
  std::ostringstream os;
  for (unsigned int i = 0; i < len; ++i) {
    os << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(digest[i]);
  }
  return os.str();
}

int run(const std::vector<std::string>& args, std::span<const std::string> environment) {
  CLI::App app{"Ultrasound displacement and strain estimation with ADMM total variation",
               "altruist"};
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);

  std::map<std::string, std::string> flag_values;
  std::string config_path;
  std::string pre;
  std::string post;
  std::string truth;
  std::string strain;

  auto add_keys = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "JSON config file or manifest");
    for (const KeySpec& k : kKeys) {
      sub->add_option("--" + dashed(k.name), flag_values[std::string(k.name)], std::string(k.help));
    }
  };
  CLI::App* simulate = app.add_subcommand("simulate", "generate a phantom frame pair with ground truth");
  add_keys(simulate);
  CLI::App* estimate = app.add_subcommand("estimate", "estimate displacement and strain");
  add_keys(estimate);
  estimate->add_option("pre", pre, "pre-deformation frame")->required();
  estimate->add_option("post", post, "post-deformation frame")->required();
  CLI::App* metrics = app.add_subcommand("metrics", "quality metrics of a strain raster");
  add_keys(metrics);
  metrics->add_option("strain", strain, "strain raster")->required();
  CLI::App* compare = app.add_subcommand("compare", "run both solver modes and compare");
  add_keys(compare);
  compare->add_option("pre", pre, "pre-deformation frame")->required();
  compare->add_option("post", post, "post-deformation frame")->required();
  compare->add_option("truth_strain", truth, "ground-truth strain raster")->required();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  if (!reversed.empty()) reversed.pop_back();  // program name
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitInvalid;
  }

  try {
    CLI::App* sub = app.get_subcommands().front();
    Config flags;
    for (const KeySpec& k : kKeys) {
      const std::string key(k.name);
      if (sub->count("--" + dashed(k.name)) > 0) flags[key] = flag_values[key];
    }
    Config env = environment_overrides(environment);
    std::optional<fs::path> file;
    if (sub->count("--config") > 0) file = config_path;
    else if (auto it = env.find("config"); it != env.end() && !it->second.empty()) file = it->second;
    env.erase("config");
    const Config cfg = resolve_config(flags, env, file);
    // Every resolved value must be well formed, used by this command or not.
    solver_config(cfg).validate();
    seed_params(cfg);
    phantom_spec(cfg).validate();

    if (sub == simulate) return cmd_simulate(cfg);
    if (sub == estimate) return cmd_estimate(cfg, pre, post);
    if (sub == metrics) return cmd_metrics(cfg, strain);
    return cmd_compare(cfg, pre, post, truth);
  } catch (const InvalidArgument& e) {
    std::cerr << "error: invalid argument: " << e.what() << "\n";
    return kExitInvalid;
  } catch (const SingularSystemError& e) {
    std::cerr << "error: singular system: " << e.what() << "\n";
    return kExitSolver;
  } catch (const ConvergenceError& e) {
    std::cerr << "error: no convergence: " << e.what() << " (residual " << e.residual() << ")\n";
    return kExitSolver;
  } catch (const IoError& e) {
    std::cerr << "error: i/o: " << e.what() << "\n";
    return kExitIo;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: i/o: " << e.what() << "\n";
    return kExitIo;
  }
}

int run(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  const std::vector<std::string> env = current_environment();
  return run(args, env);
}

}  // namespace altruist::cli
