#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <json.hpp>
#include <ostream>
#include <sstream>
#include <string>

#include "perimotion/errors.hpp"
#include "perimotion/training.hpp"

namespace perimotion {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string shortest(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

template <typename N>
N parse_number(const std::string& key, const std::string& text) {
  N value{};
  const char* first = text.data();
  const char* last = text.data() + text.size();
  const auto res = std::from_chars(first, last, value);
  if (res.ec != std::errc() || res.ptr != last) {
    throw ConfigError(key, "config: invalid value '" + text + "' for key '" + key + "'");
  }
  return value;
}

bool parse_bool(const std::string& key, const std::string& text) {
  std::string t = text;
  std::transform(t.begin(), t.end(), t.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (t == "true" || t == "1" || t == "yes" || t == "on") return true;
  if (t == "false" || t == "0" || t == "no" || t == "off") return false;
  throw ConfigError(key, "config: invalid boolean '" + text + "' for key '" + key + "'");
}

const char* to_string(SamplingStrategy s) { return s == SamplingStrategy::uniform ? "uniform" : "foreground"; }
const char* to_string(Precision p) { return p == Precision::f32 ? "f32" : "f64"; }

}  // namespace

FieldArchitecture FitConfig::architecture() const {
  FieldArchitecture arch;
  arch.hidden_layers = hidden_layers;
  arch.hidden_width = hidden_width;
  arch.omega = omega;
  arch.period = Volume4D::period;
  arch.time_encoding = time_encoding;
  return arch;
}

void FitConfig::validate() const {
  auto require = [](bool ok, const char* key, const std::string& why) {
    if (!ok) throw ConfigError(key, std::string("config: ") + key + " " + why);
  };
  require(std::isfinite(lambda) && lambda >= 0.0, "lambda", "must be finite and >= 0");
  require(epochs >= 1, "epochs", "must be >= 1");
  require(points_per_epoch >= 1, "points_per_epoch", "must be >= 1");
  require(std::isfinite(learning_rate) && learning_rate > 0.0, "learning_rate", "must be > 0");
  require(std::isfinite(omega) && omega > 0.0, "omega", "must be > 0");
  require(steps_per_frame >= 1, "steps_per_frame", "must be >= 1");
  require(hidden_layers >= 1, "hidden_layers", "must be >= 1");
  require(hidden_width >= 1, "hidden_width", "must be >= 1");
}

void apply_config_value(FitConfig& c, const std::string& key, const std::string& raw) {
  const std::string value = trim(raw);
  if (key == "lambda") {
    c.lambda = parse_number<double>(key, value);
  } else if (key == "epochs") {
    c.epochs = parse_number<int>(key, value);
  } else if (key == "points_per_epoch") {
    c.points_per_epoch = parse_number<std::size_t>(key, value);
  } else if (key == "learning_rate") {
    c.learning_rate = parse_number<double>(key, value);
  } else if (key == "seed") {
    c.seed = parse_number<std::uint64_t>(key, value);
  } else if (key == "omega") {
    c.omega = parse_number<double>(key, value);
  } else if (key == "steps_per_frame") {
    c.steps_per_frame = parse_number<int>(key, value);
  } else if (key == "time_encoding") {
    c.time_encoding = parse_bool(key, value);
  } else if (key == "cycle_enabled") {
    c.cycle_enabled = parse_bool(key, value);
  } else if (key == "sampling") {
    if (value == "uniform") {
      c.sampling = SamplingStrategy::uniform;
    } else if (value == "foreground") {
      c.sampling = SamplingStrategy::foreground;
    } else {
      throw ConfigError(key, "config: sampling must be 'uniform' or 'foreground', got '" + value + "'");
    }
  } else if (key == "hidden_layers") {
    c.hidden_layers = parse_number<int>(key, value);
  } else if (key == "hidden_width") {
    c.hidden_width = parse_number<int>(key, value);
  } else if (key == "precision") {
    if (value == "f32") {
      c.precision = Precision::f32;
    } else if (value == "f64") {
      c.precision = Precision::f64;
    } else {
      throw ConfigError(key, "config: precision must be 'f32' or 'f64', got '" + value + "'");
    }
  } else {
    throw ConfigError(key, "config: unknown key '" + key + "'");
  }
}

FitConfig parse_fit_config(std::istream& in, FitConfig base) {
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(line, "config: line " + std::to_string(line_no) + " is not 'key = value'");
    }
    apply_config_value(base, trim(line.substr(0, eq)), line.substr(eq + 1));
  }
  base.validate();
  return base;
}

FitConfig read_fit_config(const std::filesystem::path& path, FitConfig base) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path.string(), "config: cannot open " + path.string());
  return parse_fit_config(in, std::move(base));
}

std::vector<std::pair<std::string, std::string>> config_items(const FitConfig& c) {
  return {
      {"lambda", shortest(c.lambda)},
      {"epochs", std::to_string(c.epochs)},
      {"points_per_epoch", std::to_string(c.points_per_epoch)},
      {"learning_rate", shortest(c.learning_rate)},
      {"seed", std::to_string(c.seed)},
      {"omega", shortest(c.omega)},
      {"steps_per_frame", std::to_string(c.steps_per_frame)},
      {"time_encoding", c.time_encoding ? "true" : "false"},
      {"cycle_enabled", c.cycle_enabled ? "true" : "false"},
      {"sampling", to_string(c.sampling)},
      {"hidden_layers", std::to_string(c.hidden_layers)},
      {"hidden_width", std::to_string(c.hidden_width)},
      {"precision", to_string(c.precision)},
  };
}

void write_fit_config(const FitConfig& config, std::ostream& out) {
  for (const auto& [k, v] : config_items(config)) out << k << " = " << v << '\n';
}

void write_loss_csv(const FitReport& report, std::ostream& out) {
  out << "epoch,data_loss,cycle_loss,total\n";
  char line[128];
  for (const EpochRecord& r : report.history) {
    const int n = std::snprintf(line, sizeof(line), "%d,%.9g,%.9g,%.9g\n", r.epoch, r.data_loss, r.cycle_loss, r.total);
    out.write(line, n);
  }
}

std::vector<EpochRecord> read_loss_csv(std::istream& in) {
  std::vector<EpochRecord> rows;
  std::string line;
  if (!std::getline(in, line) || trim(line) != "epoch,data_loss,cycle_loss,total") {
    throw DataError("loss csv: missing or unexpected header");
  }
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    EpochRecord r;
    char comma[3];
    std::istringstream ss(line);
    if (!(ss >> r.epoch >> comma[0] >> r.data_loss >> comma[1] >> r.cycle_loss >> comma[2] >> r.total) ||
        comma[0] != ',' || comma[1] != ',' || comma[2] != ',') {
      throw DataError("loss csv: malformed row at line " + std::to_string(line_no));
    }
    rows.push_back(r);
  }
  return rows;
}

std::string fit_summary_json(const FitReport& report) {
  nlohmann::ordered_json j;
  nlohmann::ordered_json cfg;
  for (const auto& [k, v] : config_items(report.config)) cfg[k] = v;
  j["config"] = cfg;
  j["epochs_run"] = report.history.size();
  if (!report.history.empty()) {
    const EpochRecord& first = report.history.front();
    const EpochRecord& last = report.history.back();
    j["first_epoch"] = {{"data_loss", first.data_loss}, {"cycle_loss", first.cycle_loss}, {"total", first.total}};
    j["final_epoch"] = {{"data_loss", last.data_loss}, {"cycle_loss", last.cycle_loss}, {"total", last.total}};
  }
  j["wall_seconds"] = report.wall_seconds;
  j["lambda_ignored"] = report.lambda_ignored;
  j["warnings"] = report.warnings;
  if (!report.checkpoint_path.empty()) j["checkpoint"] = report.checkpoint_path;
  return j.dump(2) + "\n";
}

}  // namespace perimotion
