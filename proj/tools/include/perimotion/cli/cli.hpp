#pragma once

// The `perimotion` command line: gen | fit | deform | eval.
//
// Exit codes: 0 success, 2 usage or config error, 3 data or format error,
// 4 numerical failure, 1 anything else.

#include <exception>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace perimotion::cli {

enum ExitCode : int {
  exit_ok = 0,
  exit_internal = 1,
  exit_usage = 2,
  exit_data = 3,
  exit_numerical = 4,
};

// Runs one command. `args` excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

int exit_code_for(const std::exception& e) noexcept;

// $PERIMOTION_OUT_DIR when set and non-empty, "perimotion_out" otherwise.
std::filesystem::path default_out_dir();

std::string sha256_hex(std::string_view bytes);
std::string sha256_file(const std::filesystem::path& path);

// Provenance record written next to every command's outputs. Paths are
// stored relative to the output directory when they live inside it.
class RunManifest {
 public:
  RunManifest(std::string command, std::filesystem::path out_dir);

  void set_config(nlohmann::ordered_json config) { config_ = std::move(config); }
  void set_seed(std::uint64_t seed) { seed_ = seed; has_seed_ = true; }
  void add_input(const std::filesystem::path& path);
  void add_output(const std::filesystem::path& path);
  void set_wall_seconds(double s) { wall_seconds_ = s; }

  nlohmann::ordered_json to_json() const;
  // Writes manifest.json into the output directory and returns its path.
  std::filesystem::path write() const;

 private:
  std::string display_path(const std::filesystem::path& path) const;

  std::string command_;
  std::filesystem::path out_dir_;
  nlohmann::ordered_json config_ = nlohmann::ordered_json::object();
  std::uint64_t seed_ = 0;
  bool has_seed_ = false;
  std::vector<std::pair<std::string, std::string>> inputs_;
  std::vector<std::pair<std::string, std::string>> outputs_;
  double wall_seconds_ = 0.0;
};

// Recomputes every hash in a manifest; returns the paths that are missing or
// no longer match.
std::vector<std::string> verify_manifest(const std::filesystem::path& manifest_path);

struct PlotSeries {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
  std::string color = "#1f77b4";
};

struct PlotSpec {
  std::string title;
  std::string x_label;
  std::string y_label;
  int width = 640;
  int height = 400;
};

// Standalone SVG line chart: axes with tick labels, one polyline per series
// and a legend. Non-finite samples are skipped.
std::string line_plot_svg(const PlotSpec& spec, std::span<const PlotSeries> series);

}  // namespace perimotion::cli
