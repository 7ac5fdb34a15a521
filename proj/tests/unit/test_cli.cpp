#include <doctest.h>

#include <unistd.h>

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "perimotion/checkpoint.hpp"
#include "perimotion/cli/cli.hpp"
#include "perimotion/mesh.hpp"
#include "perimotion/training.hpp"
#include "perimotion/volume.hpp"

namespace fs = std::filesystem;
using namespace perimotion;
using perimotion::testing::constant_model;

namespace {

struct Run {
  int code = 0;
  std::string out;
  std::string err;
};

Run run(std::vector<std::string> args) {
  std::ostringstream out, err;
  Run r;
  r.code = cli::run(args, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::size_t count_files(const fs::path& dir, const std::string& ext) {
  std::size_t n = 0;
  for (const auto& e : fs::directory_iterator(dir)) n += e.path().extension() == ext;
  return n;
}

std::vector<std::string> lines(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) out.push_back(line);
  return out;
}

// Fresh scratch directory per test case, removed afterwards.
struct Scratch {
  fs::path dir;
  explicit Scratch(const std::string& name)
      : dir(fs::temp_directory_path() / ("perimotion_cli_" + std::to_string(::getpid()) + "_" + name)) {
    fs::remove_all(dir);
    fs::create_directories(dir);
  }
  ~Scratch() { fs::remove_all(dir); }
  std::string operator/(const std::string& leaf) const { return (dir / leaf).string(); }
};

// Minimal XML well-formedness check: balanced, properly nested element tags.
bool well_formed_xml(const std::string& text) {
  std::vector<std::string> stack;
  std::size_t pos = 0;
  bool root_seen = false;
  while ((pos = text.find('<', pos)) != std::string::npos) {
    const std::size_t end = text.find('>', pos);
    if (end == std::string::npos) return false;
    const std::string tag = text.substr(pos + 1, end - pos - 1);
    pos = end + 1;
    if (tag.empty()) return false;
    if (tag[0] == '?' || tag[0] == '!') continue;
    if (tag[0] == '/') {
      if (stack.empty() || stack.back() != tag.substr(1)) return false;
      stack.pop_back();
      continue;
    }
    const std::string name = tag.substr(0, tag.find_first_of(" \t\n/"));
    if (stack.empty()) {
      if (root_seen) return false;
      root_seen = true;
    }
    if (tag.back() != '/') stack.push_back(name);
  }
  return root_seen && stack.empty();
}

std::size_t count(const std::string& text, const std::string& needle) {
  std::size_t n = 0;
  for (std::size_t p = text.find(needle); p != std::string::npos; p = text.find(needle, p + 1)) ++n;
  return n;
}

FieldArchitecture tiny_arch() {
  FieldArchitecture a;
  a.hidden_layers = 2;
  a.hidden_width = 8;
  return a;
}

}  // namespace

TEST_CASE("gen writes one volume and one mesh per frame") {
  Scratch s("gen");
  const Run r = run({"gen", "--pattern", "periodic", "--frames", "25", "--grid", "64", "--subdivisions", "2", "-o", s / "p"});
  REQUIRE(r.code == 0);
  CHECK(count_files(s.dir / "p", ".v4d") == 1);
  CHECK(count_files(s.dir / "p" / "meshes", ".obj") == 25);
  const Volume4D v = read_v4d(fs::path(s / "p/volume.v4d"));
  CHECK(v.frame_count() == 25);
  CHECK(v.shape == GridShape{64, 64, 64});
  CHECK(cli::verify_manifest(s.dir / "p" / "manifest.json").empty());

  const Run lin = run({"gen", "--pattern", "linear", "--frames", "2", "--grid", "24", "--radius", "5", "-o", s / "l"});
  REQUIRE(lin.code == 0);
  CHECK(count_files(s.dir / "l" / "meshes", ".obj") == 2);
}

TEST_CASE("gen rejects bad parameters with exit code 2 naming the flag") {
  Scratch s("genbad");
  const Run neg = run({"gen", "--radius", "-3", "-o", s / "x"});
  CHECK(neg.code == 2);
  CHECK(neg.err.find("--radius") != std::string::npos);
  CHECK(run({"gen", "--pattern", "spiral", "-o", s / "x"}).code == 2);
  CHECK(run({"gen", "--grid", "4x4", "-o", s / "x"}).code == 2);
  // sphere larger than the grid
  CHECK(run({"gen", "--grid", "16", "--radius", "12", "-o", s / "x"}).code == 2);
  CHECK(run({}).code == 2);
  CHECK(run({"frobnicate"}).code == 2);
  CHECK(run({"--help"}).code == 0);
}

TEST_CASE("fit writes a checkpoint and loss CSV and is deterministic") {
  Scratch s("fit");
  REQUIRE(run({"gen", "--frames", "3", "--grid", "12", "--radius", "3", "--amplitude", "1", "--subdivisions", "1", "-o", s / "g"}).code == 0);
  const std::vector<std::string> base{"fit", "--volume", s / "g/volume.v4d", "--set", "hidden_layers=2", "--set",
                                      "hidden_width=8", "--set", "points_per_epoch=50", "--quiet"};
  auto with = [&](std::vector<std::string> extra) {
    std::vector<std::string> a = base;
    a.insert(a.end(), extra.begin(), extra.end());
    return run(a);
  };

  const Run one = with({"--epochs", "1", "-o", s / "f1"});
  REQUIRE(one.code == 0);
  CHECK(one.out.find("omega = 6") != std::string::npos);
  CHECK(one.out.find("learning_rate = 3e-05") != std::string::npos);
  CHECK(lines(slurp(s.dir / "f1" / "loss.csv")).size() == 2);
  CHECK(fs::exists(s.dir / "f1" / "model.pmck"));
  CHECK(cli::verify_manifest(s.dir / "f1" / "manifest.json").empty());

  REQUIRE(with({"--epochs", "4", "--seed", "9", "-o", s / "a"}).code == 0);
  REQUIRE(with({"--epochs", "4", "--seed", "9", "-o", s / "b"}).code == 0);
  CHECK(slurp(s.dir / "a" / "loss.csv") == slurp(s.dir / "b" / "loss.csv"));
  CHECK(slurp(s.dir / "a" / "model.pmck") == slurp(s.dir / "b" / "model.pmck"));

  const std::string cfg = s / "fit.cfg";
  std::ofstream(cfg) << "# tiny\nepochs = 2\nlambda = 0.5\n";
  const Run from_file = with({"--config", cfg, "-o", s / "c"});
  REQUIRE(from_file.code == 0);
  CHECK(from_file.out.find("lambda = 0.5") != std::string::npos);
  CHECK(lines(slurp(s.dir / "c" / "loss.csv")).size() == 3);
}

TEST_CASE("fit error exit codes") {
  Scratch s("fiterr");
  REQUIRE(run({"gen", "--frames", "3", "--grid", "12", "--radius", "3", "--amplitude", "1", "--subdivisions", "1", "-o", s / "g"}).code == 0);
  const Run bad_key = run({"fit", "--volume", s / "g/volume.v4d", "--set", "learning_rat=1", "-o", s / "x"});
  CHECK(bad_key.code == 2);
  CHECK(bad_key.err.find("learning_rat") != std::string::npos);

  const Run diverge = run({"fit", "--volume", s / "g/volume.v4d", "--set", "hidden_width=8", "--set", "points_per_epoch=20",
                           "--set", "learning_rate=1e300", "--epochs", "5", "--quiet", "-o", s / "x"});
  CHECK(diverge.code == 4);
  CHECK(diverge.err.find("epoch") != std::string::npos);

  const std::string junk = s / "junk.v4d";
  std::ofstream(junk) << "not a volume";
  CHECK(run({"fit", "--volume", junk, "-o", s / "x"}).code == 3);
}

TEST_CASE("deform") {
  Scratch s("deform");
  const std::string mesh = s / "sphere.obj";
  write_obj(make_icosphere(5.0, 2), fs::path(mesh));
  const std::string still = s / "still.pmck";
  write_checkpoint(constant_model(tiny_arch(), Vec3::Zero()), fs::path(still));
  const std::string moving = s / "moving.pmck";
  write_checkpoint(constant_model(tiny_arch(), Vec3(0.1, 0.0, -0.05)), fs::path(moving));
  const std::string domain = "-10,-10,-10,10,10,10";
  const TriangleMesh input = read_obj(fs::path(mesh));

  SUBCASE("time zero returns the input mesh") {
    REQUIRE(run({"deform", "--checkpoint", moving, "--mesh", mesh, "--times", "0", "--domain", domain, "-o", s / "t0"}).code == 0);
    const TriangleMesh out = read_obj(s.dir / "t0" / "deformed_000.obj");
    REQUIRE(out.vertices.size() == input.vertices.size());
    for (std::size_t i = 0; i < out.vertices.size(); ++i) CHECK((out.vertices[i] - input.vertices[i]).norm() <= 1e-6);
  }
  SUBCASE("one OBJ per requested time") {
    REQUIRE(run({"deform", "--checkpoint", moving, "--mesh", mesh, "--times", "0,0.25,0.5,0.75,1", "--domain", domain,
                 "--probes", "4", "-o", s / "five"})
                .code == 0);
    CHECK(count_files(s.dir / "five", ".obj") == 5);
    // constant velocity c over t = 1 shifts by c * half_extent = (1, 0, -0.5) mm
    const TriangleMesh last = read_obj(s.dir / "five" / "deformed_004.obj");
    CHECK((last.vertices[0] - input.vertices[0] - Vec3(1.0, 0.0, -0.5)).norm() < 1e-5);
    CHECK(lines(slurp(s.dir / "five" / "trajectory.csv")).size() == 1 + 4 * 25);
    CHECK(cli::verify_manifest(s.dir / "five" / "manifest.json").empty());
  }
  SUBCASE("zero velocity leaves every output equal to the input") {
    REQUIRE(run({"deform", "--checkpoint", still, "--mesh", mesh, "--times", "0.3,1", "--domain", domain, "-o", s / "z"}).code == 0);
    for (const char* name : {"deformed_000.obj", "deformed_001.obj"}) {
      const TriangleMesh out = read_obj(s.dir / "z" / name);
      for (std::size_t i = 0; i < out.vertices.size(); ++i) CHECK((out.vertices[i] - input.vertices[i]).norm() <= 1e-6);
    }
  }
  SUBCASE("times outside the period need --wrap") {
    const Run r = run({"deform", "--checkpoint", moving, "--mesh", mesh, "--times", "1.25", "--domain", domain, "-o", s / "w"});
    CHECK(r.code == 2);
    CHECK(r.err.find("--wrap") != std::string::npos);
    REQUIRE(run({"deform", "--checkpoint", moving, "--mesh", mesh, "--times", "1.25", "--wrap", "--domain", domain, "-o", s / "w"}).code == 0);
    REQUIRE(run({"deform", "--checkpoint", moving, "--mesh", mesh, "--times", "0.25", "--domain", domain, "-o", s / "q"}).code == 0);
    CHECK(slurp(s.dir / "w" / "deformed_000.obj") == slurp(s.dir / "q" / "deformed_000.obj"));
  }
  SUBCASE("a domain is required") {
    CHECK(run({"deform", "--checkpoint", moving, "--mesh", mesh, "--times", "0.5", "-o", s / "n"}).code == 2);
    CHECK(run({"deform", "--checkpoint", moving, "--mesh", mesh, "--times", "0.5", "--domain", "1,2,3", "-o", s / "n"}).code == 2);
  }
}

TEST_CASE("eval pipeline: CSV rows, plots, gaps and reproducibility") {
  Scratch s("eval");
  REQUIRE(run({"gen", "--frames", "25", "--grid", "32", "--radius", "8", "--amplitude", "3", "--subdivisions", "3", "-o", s / "g"}).code == 0);
  const std::string still = s / "still.pmck";
  write_checkpoint(constant_model(tiny_arch(), Vec3::Zero()), fs::path(still));
  const std::vector<std::string> args{"eval", "--checkpoint", still, "--volume", s / "g/volume.v4d", "--meshes",
                                      s / "g/meshes", "--probes", "20", "--psnr-stride", "2"};
  auto with = [&](std::vector<std::string> extra) {
    std::vector<std::string> a = args;
    a.insert(a.end(), extra.begin(), extra.end());
    return run(a);
  };

  REQUIRE(with({"-o", s / "e"}).code == 0);
  const auto rows = lines(slurp(s.dir / "e" / "eval.csv"));
  REQUIRE(rows.size() == 26);
  CHECK(rows[0] == "frame,t,hsd_mm,psnr_db,volume_mm3");

  const std::string svg = slurp(s.dir / "e" / "volume.svg");
  CHECK(well_formed_xml(svg));
  CHECK(count(svg, "<polyline") == 2);

  // identity flow: HSD at each frame is the radius change |r(t) - r(0)|
  const GrowthPattern p{GrowthKind::periodic, 8.0, 3.0};
  for (std::size_t i = 1; i < 25; ++i) {
    std::istringstream row(rows[i + 1]);
    std::string frame, t, hsd;
    std::getline(row, frame, ',');
    std::getline(row, t, ',');
    std::getline(row, hsd, ',');
    const double expected = std::abs(p.radius_at(std::stod(t)) - 8.0);
    if (expected > 0.5) CHECK(std::abs(std::stod(hsd) - expected) / expected < 0.02);
  }

  SUBCASE("rerun on unchanged inputs reproduces the reports, with any worker count") {
    REQUIRE(with({"--workers", "3", "-o", s / "e2"}).code == 0);
    CHECK(slurp(s.dir / "e" / "eval.csv") == slurp(s.dir / "e2" / "eval.csv"));
    CHECK(slurp(s.dir / "e" / "eval_summary.json") == slurp(s.dir / "e2" / "eval_summary.json"));
    CHECK(cli::verify_manifest(s.dir / "e" / "manifest.json").empty());
  }
  SUBCASE("missing reference meshes leave explicit gaps") {
    fs::remove(s.dir / "g" / "meshes" / "frame_007.obj");
    const Run r = with({"-o", s / "gap"});
    REQUIRE(r.code == 0);
    CHECK(r.err.find("1 of 25") != std::string::npos);
    const auto gap_rows = lines(slurp(s.dir / "gap" / "eval.csv"));
    CHECK(gap_rows[8].rfind("7,0.29166", 0) == 0);
    CHECK(gap_rows[8].find(",,") != std::string::npos);
  }
  SUBCASE("loss history plot when a loss CSV is given") {
    const std::string loss = s / "loss.csv";
    std::ofstream(loss) << "epoch,data_loss,cycle_loss,total\n0,0.5,0.25,0.75\n1,0.25,0.125,0.375\n";
    REQUIRE(with({"--loss", loss, "-o", s / "l"}).code == 0);
    const std::string plot = slurp(s.dir / "l" / "loss.svg");
    CHECK(well_formed_xml(plot));
    CHECK(count(plot, "<polyline") == 3);
  }
}

TEST_CASE("manifest detects modified outputs") {
  Scratch s("manifest");
  REQUIRE(run({"gen", "--frames", "2", "--grid", "12", "--radius", "3", "--amplitude", "1", "--subdivisions", "1", "-o", s / "g"}).code == 0);
  std::ofstream(s.dir / "g" / "meshes" / "frame_001.obj", std::ios::app) << "# edited\n";
  const auto bad = cli::verify_manifest(s.dir / "g" / "manifest.json");
  REQUIRE(bad.size() == 1);
  CHECK(bad[0] == "meshes/frame_001.obj");
}

TEST_CASE("sha256 matches the published test vectors") {
  CHECK(cli::sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  CHECK(cli::sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("default output directory follows the environment") {
  ::setenv("PERIMOTION_OUT_DIR", "/tmp/somewhere", 1);
  CHECK(cli::default_out_dir() == fs::path("/tmp/somewhere"));
  ::setenv("PERIMOTION_OUT_DIR", "", 1);
  CHECK(cli::default_out_dir() == fs::path("perimotion_out"));
  ::unsetenv("PERIMOTION_OUT_DIR");
}

TEST_CASE("line plot escapes text and skips non-finite samples") {
  const cli::PlotSeries series[] = {{"a<b", {0, 1, 2}, {1, std::nan(""), 3}, "#000"}};
  const std::string svg = cli::line_plot_svg({"x & y", "t", "v"}, series);
  CHECK(well_formed_xml(svg));
  CHECK(svg.find("x &amp; y") != std::string::npos);
  CHECK(svg.find("a&lt;b") != std::string::npos);
  CHECK(svg.find("nan") == std::string::npos);
}

TEST_CASE("the installed executable maps errors onto exit codes") {
  Scratch s("exe");
  auto status = [](const std::string& cmd) {
    const int raw = std::system((cmd + " >/dev/null 2>&1").c_str());
    return WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  };
  const std::string exe = PERIMOTION_EXE;
  CHECK(status(exe + " --version") == 0);
  CHECK(status(exe + " gen --radius -1 -o " + (s / "x")) == 2);
  const std::string junk = s / "junk.v4d";
  std::ofstream(junk) << "garbage";
  CHECK(status(exe + " fit --volume " + junk + " -o " + (s / "x")) == 3);
}
