#include <CLI11.hpp>

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <optional>
#include <ostream>
#include <sstream>

#include "perimotion/checkpoint.hpp"
#include "perimotion/cli/cli.hpp"
#include "perimotion/errors.hpp"
#include "perimotion/flow.hpp"
#include "perimotion/mesh.hpp"
#include "perimotion/metrics.hpp"
#include "perimotion/random.hpp"
#include "perimotion/training.hpp"
#include "perimotion/volume.hpp"

namespace fs = std::filesystem;

namespace perimotion::cli {
namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

double parse_double(const std::string& text, const std::string& flag) {
  double v = 0.0;
  const char* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc() || ptr != end) throw ConfigError(flag, flag + ": '" + text + "' is not a number");
  return v;
}

std::vector<double> parse_list(const std::string& text, const std::string& flag) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item.erase(0, item.find_first_not_of(" \t"));
    item.erase(item.find_last_not_of(" \t") + 1);
    out.push_back(parse_double(item, flag));
  }
  if (out.empty()) throw ConfigError(flag, flag + ": empty list");
  return out;
}

GridShape parse_grid(const std::string& text) {
  std::vector<std::size_t> dims;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, 'x')) {
    std::size_t v = 0;
    const auto [ptr, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
    if (ec != std::errc() || ptr != item.data() + item.size() || v < 2) {
      throw ConfigError("--grid", "--grid: expected N or NxNxN with N >= 2, got '" + text + "'");
    }
    dims.push_back(v);
  }
  if (dims.size() == 1) return {dims[0], dims[0], dims[0]};
  if (dims.size() == 3) return {dims[0], dims[1], dims[2]};
  throw ConfigError("--grid", "--grid: expected N or NxNxN, got '" + text + "'");
}

void require_positive(double v, const std::string& flag) {
  if (!(v > 0.0) || !std::isfinite(v)) {
    std::ostringstream msg;
    msg << flag << " must be positive, got " << v;
    throw ConfigError(flag, msg.str());
  }
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
  if (!out) throw DataError("failed writing " + path.string());
}

std::string frame_mesh_name(std::size_t frame) {
  char name[32];
  std::snprintf(name, sizeof(name), "frame_%03zu.obj", frame);
  return name;
}

nlohmann::ordered_json config_json(const FitConfig& c) {
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  for (const auto& [k, v] : config_items(c)) j[k] = v;
  return j;
}

// ---------------------------------------------------------------- gen

struct GenOptions {
  std::string pattern = "periodic";
  std::size_t frames = 25;
  std::string grid = "48";
  double spacing = 1.0;
  double radius = 12.0;
  double amplitude = 4.0;
  double rate = 0.5;
  double edge = 2.0;
  int subdivisions = 4;
  std::string out_dir;
};

int cmd_gen(const GenOptions& o, std::ostream& out) {
  const auto start = Clock::now();
  require_positive(o.radius, "--radius");
  require_positive(o.spacing, "--spacing");
  require_positive(o.edge, "--edge");
  if (o.frames < 2) throw ConfigError("--frames", "--frames must be at least 2");
  if (o.subdivisions < 0 || o.subdivisions > 6) throw ConfigError("--subdivisions", "--subdivisions must be in [0, 6]");

  GrowthPattern pattern;
  pattern.base_radius_mm = o.radius;
  if (o.pattern == "periodic") {
    pattern.kind = GrowthKind::periodic;
    if (o.amplitude < 0.0 || o.amplitude >= o.radius) {
      throw ConfigError("--amplitude", "--amplitude must be in [0, radius)");
    }
    pattern.parameter = o.amplitude;
  } else {
    pattern.kind = o.pattern == "linear" ? GrowthKind::linear : GrowthKind::exponential;
    if (!std::isfinite(o.rate)) throw ConfigError("--rate", "--rate must be finite");
    pattern.parameter = o.rate;
  }
  GridSpec grid;
  grid.shape = parse_grid(o.grid);
  grid.spacing_mm = Vec3::Constant(o.spacing);

  const SphereSeries s = make_sphere_series(pattern, grid, o.frames, o.edge, o.subdivisions);

  const fs::path dir = o.out_dir;
  fs::create_directories(dir / "meshes");
  RunManifest manifest("gen", dir);
  nlohmann::ordered_json cfg;
  cfg["pattern"] = o.pattern;
  cfg["frames"] = o.frames;
  cfg["grid"] = {grid.shape[0], grid.shape[1], grid.shape[2]};
  cfg["spacing_mm"] = o.spacing;
  cfg["radius_mm"] = o.radius;
  if (pattern.kind == GrowthKind::periodic) {
    cfg["amplitude_mm"] = o.amplitude;
  } else {
    cfg["rate"] = o.rate;
  }
  cfg["edge_mm"] = o.edge;
  cfg["subdivisions"] = o.subdivisions;
  manifest.set_config(cfg);

  const fs::path volume_path = dir / "volume.v4d";
  write_v4d(s.volume, volume_path);
  manifest.add_output(volume_path);
  for (std::size_t i = 0; i < s.meshes.size(); ++i) {
    const fs::path p = dir / "meshes" / frame_mesh_name(i);
    write_obj(s.meshes[i], p);
    manifest.add_output(p);
  }
  manifest.set_wall_seconds(seconds_since(start));
  manifest.write();
  out << "wrote " << volume_path.generic_string() << " and " << s.meshes.size() << " meshes\n";
  return exit_ok;
}

// ---------------------------------------------------------------- fit

struct FitOptions {
  std::string volume;
  std::string config;
  std::vector<std::string> overrides;
  std::optional<int> epochs;
  std::optional<std::uint64_t> seed;
  std::optional<double> lambda;
  bool quiet = false;
  std::string out_dir;
};

int cmd_fit(const FitOptions& o, std::ostream& out, std::ostream& err) {
  const auto start = Clock::now();
  FitConfig config;
  if (!o.config.empty()) config = read_fit_config(o.config);
  for (const std::string& kv : o.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set", "--set expects key=value, got '" + kv + "'");
    auto trim = [](std::string s) {
      s.erase(0, s.find_first_not_of(" \t"));
      s.erase(s.find_last_not_of(" \t") + 1);
      return s;
    };
    apply_config_value(config, trim(kv.substr(0, eq)), trim(kv.substr(eq + 1)));
  }
  if (o.epochs) config.epochs = *o.epochs;
  if (o.seed) config.seed = *o.seed;
  if (o.lambda) config.lambda = *o.lambda;
  config.validate();

  out << "# effective config\n";
  write_fit_config(config, out);

  const Volume4D volume = read_v4d(fs::path(o.volume));
  const int every = std::max(1, config.epochs / 10);
  EpochCallback progress;
  if (!o.quiet) {
    progress = [&err, every, total = config.epochs](const EpochRecord& r) {
      if (r.epoch % every == 0 || r.epoch + 1 == total) {
        char line[128];
        std::snprintf(line, sizeof(line), "epoch %d/%d  data %.6g  cycle %.6g  total %.6g\n", r.epoch + 1, total,
                      r.data_loss, r.cycle_loss, r.total);
        err << line << std::flush;
      }
    };
  }
  FitResult result = fit(volume, config, progress);
  for (const std::string& w : result.report.warnings) err << "warning: " << w << '\n';

  const fs::path dir = o.out_dir;
  fs::create_directories(dir);
  RunManifest manifest("fit", dir);
  manifest.set_config(config_json(config));
  manifest.set_seed(config.seed);
  manifest.add_input(o.volume);
  if (!o.config.empty()) manifest.add_input(o.config);

  const fs::path model_path = dir / "model.pmck";
  write_checkpoint(result.model, model_path);
  result.report.checkpoint_path = "model.pmck";
  std::ostringstream cfg_text;
  write_fit_config(config, cfg_text);
  std::ostringstream csv;
  write_loss_csv(result.report, csv);

  write_text(dir / "config.txt", cfg_text.str());
  write_text(dir / "loss.csv", csv.str());
  write_text(dir / "fit_summary.json", fit_summary_json(result.report) + "\n");
  for (const char* name : {"model.pmck", "config.txt", "loss.csv", "fit_summary.json"}) manifest.add_output(dir / name);
  manifest.set_wall_seconds(seconds_since(start));
  manifest.write();
  out << "wrote " << model_path.generic_string() << " after " << result.report.history.size() << " epochs\n";
  return exit_ok;
}

// ---------------------------------------------------------------- deform

struct DeformOptions {
  std::string checkpoint;
  std::string mesh;
  std::string times;
  std::string volume;
  std::string domain;
  int steps_per_unit = 24;
  bool wrap = false;
  std::size_t probes = 0;
  std::uint64_t seed = 0;
  std::string out_dir;
};

DomainNormalizer deform_domain(const DeformOptions& o) {
  if (!o.volume.empty() && !o.domain.empty()) {
    throw ConfigError("--domain", "give either --volume or --domain, not both");
  }
  if (!o.volume.empty()) return DomainNormalizer::for_volume(read_v4d(fs::path(o.volume)));
  if (o.domain.empty()) throw ConfigError("--volume", "deform needs --volume or --domain to map millimetres");
  const std::vector<double> b = parse_list(o.domain, "--domain");
  if (b.size() != 6) throw ConfigError("--domain", "--domain expects xmin,ymin,zmin,xmax,ymax,zmax");
  const Vec3 lo(b[0], b[1], b[2]), hi(b[3], b[4], b[5]);
  if (!(hi.array() > lo.array()).all()) throw ConfigError("--domain", "--domain: max must exceed min on every axis");
  return DomainNormalizer(lo, hi);
}

int cmd_deform(const DeformOptions& o, std::ostream& out) {
  const auto start = Clock::now();
  if (o.steps_per_unit < 1) throw ConfigError("--steps-per-unit", "--steps-per-unit must be >= 1");
  std::vector<double> times = parse_list(o.times, "--times");
  for (double& t : times) {
    if (!std::isfinite(t)) throw ConfigError("--times", "--times: non-finite time");
    if (t < 0.0 || t > 1.0) {
      if (!o.wrap) {
        std::ostringstream msg;
        msg << "--times: " << t << " is outside [0, 1] (use --wrap for periodic motion)";
        throw ConfigError("--times", msg.str());
      }
      t -= std::floor(t);
    }
  }
  const VelocityFieldModel model = read_checkpoint(fs::path(o.checkpoint));
  const TriangleMesh mesh = read_obj(fs::path(o.mesh));
  mesh.validate();
  const DomainNormalizer norm = deform_domain(o);

  const fs::path dir = o.out_dir;
  fs::create_directories(dir);
  RunManifest manifest("deform", dir);
  nlohmann::ordered_json cfg;
  cfg["times"] = times;
  cfg["steps_per_unit"] = o.steps_per_unit;
  cfg["wrap"] = o.wrap;
  cfg["probes"] = o.probes;
  manifest.set_config(cfg);
  manifest.set_seed(o.seed);
  manifest.add_input(o.checkpoint);
  manifest.add_input(o.mesh);
  if (!o.volume.empty()) manifest.add_input(o.volume);

  auto steps_for = [&](double t) {
    return std::max(1, static_cast<int>(std::ceil(t * o.steps_per_unit - 1e-9)));
  };
  for (std::size_t i = 0; i < times.size(); ++i) {
    const TriangleMesh moved = deform_mesh(model, mesh, times[i], steps_for(times[i]), norm);
    char name[32];
    std::snprintf(name, sizeof(name), "deformed_%03zu.obj", i);
    write_obj(moved, dir / name);
    manifest.add_output(dir / name);
    out << name << "  t=" << times[i] << "  volume_mm3=" << mesh_volume(moved) << '\n';
  }
  if (o.probes > 0) {
    Rng rng(o.seed, 0x7a11);
    std::vector<Vec3> seeds(o.probes);
    for (Vec3& p : seeds) {
      const double x = rng.uniform(-1.0, 1.0);
      const double y = rng.uniform(-1.0, 1.0);
      const double z = rng.uniform(-1.0, 1.0);
      p = Vec3(x, y, z);
    }
    const double t_end = *std::max_element(times.begin(), times.end());
    const Trajectory traj = integrate(model, seeds, 0.0, t_end > 0.0 ? t_end : 1.0, steps_for(t_end > 0.0 ? t_end : 1.0));
    std::ostringstream csv;
    write_trajectory_csv(traj, norm, csv);
    write_text(dir / "trajectory.csv", csv.str());
    manifest.add_output(dir / "trajectory.csv");
  }
  manifest.set_wall_seconds(seconds_since(start));
  manifest.write();
  return exit_ok;
}

// ---------------------------------------------------------------- eval

struct EvalOptions {
  std::string checkpoint;
  std::string volume;
  std::string meshes;
  std::string loss;
  EvalConfig config;
  std::string out_dir;
};

int cmd_eval(const EvalOptions& o, std::ostream& out, std::ostream& err) {
  const auto start = Clock::now();
  if (o.config.steps_per_frame < 1) throw ConfigError("--steps-per-frame", "--steps-per-frame must be >= 1");
  if (o.config.psnr_stride < 1) throw ConfigError("--psnr-stride", "--psnr-stride must be >= 1");
  if (o.config.workers < 1) throw ConfigError("--workers", "--workers must be >= 1");

  const VelocityFieldModel model = read_checkpoint(fs::path(o.checkpoint));
  const Volume4D volume = read_v4d(fs::path(o.volume));

  const fs::path dir = o.out_dir;
  fs::create_directories(dir);
  RunManifest manifest("eval", dir);
  nlohmann::ordered_json cfg;
  cfg["steps_per_frame"] = o.config.steps_per_frame;
  cfg["psnr_stride"] = o.config.psnr_stride;
  cfg["periodicity_probes"] = o.config.periodicity_probes;
  cfg["workers"] = o.config.workers;
  manifest.set_config(cfg);
  manifest.set_seed(o.config.seed);
  manifest.add_input(o.checkpoint);
  manifest.add_input(o.volume);

  std::vector<std::optional<TriangleMesh>> refs(volume.frame_count());
  std::vector<std::size_t> missing;
  for (std::size_t i = 0; i < refs.size(); ++i) {
    const fs::path p = fs::path(o.meshes) / frame_mesh_name(i);
    if (fs::exists(p)) {
      refs[i] = read_obj(p);
      manifest.add_input(p);
    } else {
      missing.push_back(i);
    }
  }
  if (!missing.empty()) {
    err << "warning: no reference mesh for " << missing.size() << " of " << refs.size()
        << " frames; their HSD is left empty\n";
  }

  const EvalReport report = evaluate_fit(model, volume, refs, o.config);
  std::ostringstream csv;
  write_eval_csv(report, csv);
  write_text(dir / "eval.csv", csv.str());
  write_text(dir / "eval_summary.json", eval_summary_json(report) + "\n");
  manifest.add_output(dir / "eval.csv");
  manifest.add_output(dir / "eval_summary.json");

  PlotSeries predicted{"predicted", {}, {}, "#d62728"};
  PlotSeries reference{"reference", {}, {}, "#1f77b4"};
  for (const FrameEval& f : report.frames) {
    predicted.x.push_back(f.t);
    predicted.y.push_back(f.volume_mm3);
    if (f.reference_volume_mm3) {
      reference.x.push_back(f.t);
      reference.y.push_back(*f.reference_volume_mm3);
    }
  }
  const PlotSeries volume_series[] = {predicted, reference};
  write_text(dir / "volume.svg",
             line_plot_svg({"Enclosed volume over the cycle", "t", "volume (mm^3)"}, volume_series));
  manifest.add_output(dir / "volume.svg");

  fs::path loss_path = o.loss;
  if (loss_path.empty() && fs::exists(fs::path(o.checkpoint).parent_path() / "loss.csv")) {
    loss_path = fs::path(o.checkpoint).parent_path() / "loss.csv";
  }
  if (!loss_path.empty()) {
    std::ifstream in(loss_path);
    if (!in) throw DataError("cannot open " + loss_path.string());
    const std::vector<EpochRecord> history = read_loss_csv(in);
    PlotSeries total{"total", {}, {}, "#000000"};
    PlotSeries data{"data", {}, {}, "#1f77b4"};
    PlotSeries cycle{"cycle", {}, {}, "#2ca02c"};
    for (const EpochRecord& r : history) {
      const double e = r.epoch;
      total.x.push_back(e);
      total.y.push_back(r.total);
      data.x.push_back(e);
      data.y.push_back(r.data_loss);
      cycle.x.push_back(e);
      cycle.y.push_back(r.cycle_loss);
    }
    const PlotSeries loss_series[] = {total, data, cycle};
    write_text(dir / "loss.svg", line_plot_svg({"Training loss", "epoch", "loss"}, loss_series));
    manifest.add_input(loss_path);
    manifest.add_output(dir / "loss.svg");
  }
  manifest.set_wall_seconds(seconds_since(start));
  manifest.write();

  char line[160];
  std::snprintf(line, sizeof(line), "mean HSD %.4f mm  max HSD %.4f mm  mean PSNR %.2f dB  periodicity %.4f mm\n",
                report.mean_hsd_mm, report.max_hsd_mm, report.mean_psnr_db, report.periodicity_error_mm);
  out << line;
  return exit_ok;
}

}  // namespace

int exit_code_for(const std::exception& e) noexcept {
  if (dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const ContractError*>(&e)) return exit_usage;
  if (dynamic_cast<const DataError*>(&e)) return exit_data;
  if (dynamic_cast<const NumericalError*>(&e)) return exit_numerical;
  if (dynamic_cast<const fs::filesystem_error*>(&e)) return exit_data;
  return exit_internal;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Periodic motion registration with neural velocity fields", "perimotion"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "perimotion 0.3.0");
  const std::string default_dir = default_out_dir().string();

  GenOptions gen;
  gen.out_dir = default_dir;
  auto* g = app.add_subcommand("gen", "Generate a synthetic sphere series (V4D volume plus per-frame OBJ meshes)");
  g->add_option("--pattern", gen.pattern, "Growth pattern")
      ->check(CLI::IsMember({"periodic", "linear", "exponential"}))
      ->capture_default_str();
  g->add_option("--frames", gen.frames, "Number of frames")->capture_default_str();
  g->add_option("--grid", gen.grid, "Grid size, N or NxNxN")->capture_default_str();
  g->add_option("--spacing", gen.spacing, "Voxel spacing in mm")->capture_default_str();
  g->add_option("--radius", gen.radius, "Base radius in mm")->capture_default_str();
  g->add_option("--amplitude", gen.amplitude, "Periodic amplitude in mm")->capture_default_str();
  g->add_option("--rate", gen.rate, "Linear or exponential growth rate")->capture_default_str();
  g->add_option("--edge", gen.edge, "Width of the intensity ramp across the surface in mm")->capture_default_str();
  g->add_option("--subdivisions", gen.subdivisions, "Icosphere subdivisions of the reference meshes")
      ->capture_default_str();
  g->add_option("-o,--out-dir", gen.out_dir, "Output directory")->capture_default_str();

  FitOptions fo;
  fo.out_dir = default_dir;
  auto* f = app.add_subcommand("fit", "Fit a velocity field to a 4D volume");
  f->add_option("--volume", fo.volume, "Input V4D volume")->required()->check(CLI::ExistingFile);
  f->add_option("--config", fo.config, "key = value config file")->check(CLI::ExistingFile);
  f->add_option("--set", fo.overrides, "Config override key=value (repeatable)");
  f->add_option("--epochs", fo.epochs, "Override epochs");
  f->add_option("--seed", fo.seed, "Override seed");
  f->add_option("--lambda", fo.lambda, "Override the cycle weight");
  f->add_flag("-q,--quiet", fo.quiet, "No progress output");
  f->add_option("-o,--out-dir", fo.out_dir, "Output directory")->capture_default_str();

  DeformOptions dop;
  dop.out_dir = default_dir;
  auto* d = app.add_subcommand("deform", "Deform a mesh with a fitted field");
  d->add_option("--checkpoint", dop.checkpoint, "Model checkpoint")->required()->check(CLI::ExistingFile);
  d->add_option("--mesh", dop.mesh, "Input OBJ mesh at t = 0")->required()->check(CLI::ExistingFile);
  d->add_option("--times", dop.times, "Comma-separated times in [0, 1]")->required();
  d->add_option("--volume", dop.volume, "V4D volume whose extent defines the normalized domain")
      ->check(CLI::ExistingFile);
  d->add_option("--domain", dop.domain, "Domain box xmin,ymin,zmin,xmax,ymax,zmax in mm");
  d->add_option("--steps-per-unit", dop.steps_per_unit, "Euler steps per unit time")->capture_default_str();
  d->add_flag("--wrap", dop.wrap, "Wrap times outside [0, 1] into one period");
  d->add_option("--probes", dop.probes, "Random probe points written to trajectory.csv")->capture_default_str();
  d->add_option("--seed", dop.seed, "Probe seed")->capture_default_str();
  d->add_option("-o,--out-dir", dop.out_dir, "Output directory")->capture_default_str();

  EvalOptions eo;
  eo.out_dir = default_dir;
  auto* e = app.add_subcommand("eval", "Evaluate a fitted field against reference meshes");
  e->add_option("--checkpoint", eo.checkpoint, "Model checkpoint")->required()->check(CLI::ExistingFile);
  e->add_option("--volume", eo.volume, "V4D volume")->required()->check(CLI::ExistingFile);
  e->add_option("--meshes", eo.meshes, "Directory with frame_NNN.obj reference meshes")
      ->required()
      ->check(CLI::ExistingDirectory);
  e->add_option("--loss", eo.loss, "Loss CSV to plot (default: loss.csv next to the checkpoint)");
  e->add_option("--steps-per-frame", eo.config.steps_per_frame, "Euler steps per frame interval")
      ->capture_default_str();
  e->add_option("--psnr-stride", eo.config.psnr_stride, "Voxel stride for PSNR")->capture_default_str();
  e->add_option("--probes", eo.config.periodicity_probes, "Periodicity probe count")->capture_default_str();
  e->add_option("--seed", eo.config.seed, "Probe seed")->capture_default_str();
  e->add_option("--workers", eo.config.workers, "Parallel workers (results do not depend on it)")
      ->capture_default_str();
  e->add_option("-o,--out-dir", eo.out_dir, "Output directory")->capture_default_str();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return exit_ok;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return exit_ok;
  } catch (const CLI::CallForVersion& v) {
    out << v.what() << '\n';
    return exit_ok;
  } catch (const CLI::ParseError& pe) {
    err << "error: " << pe.what() << '\n';
    return exit_usage;
  }

  try {
    if (g->parsed()) return cmd_gen(gen, out);
    if (f->parsed()) return cmd_fit(fo, out, err);
    if (d->parsed()) return cmd_deform(dop, out);
    return cmd_eval(eo, out, err);
  } catch (const std::exception& ex) {
    err << "error: " << ex.what() << '\n';
    return exit_code_for(ex);
  }
}

}  // namespace perimotion::cli
