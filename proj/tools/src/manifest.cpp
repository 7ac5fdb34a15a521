#include <openssl/evp.h>

#include <array>
#include <cstdlib>
#include <fstream>
#include <memory>

#include "perimotion/cli/cli.hpp"
#include "perimotion/errors.hpp"

namespace perimotion::cli {
namespace {

constexpr const char* kToolVersion = "0.3.0";

class Sha256 {
 public:
  Sha256() : ctx_(EVP_MD_CTX_new(), &EVP_MD_CTX_free) {
    if (!ctx_ || EVP_DigestInit_ex(ctx_.get(), EVP_sha256(), nullptr) != 1) {
      throw Error("sha256: digest initialization failed");
    }
  }
  void update(const void* data, std::size_t n) {
    if (EVP_DigestUpdate(ctx_.get(), data, n) != 1) throw Error("sha256: digest update failed");
  }
  std::string hex() {
    std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
    unsigned int len = 0;
    if (EVP_DigestFinal_ex(ctx_.get(), md.data(), &len) != 1) throw Error("sha256: digest finalization failed");
    static constexpr char digits[] = "0123456789abcdef";
    std::string out;
    out.reserve(2 * len);
    for (unsigned int i = 0; i < len; ++i) {
      out += digits[md[i] >> 4];
      out += digits[md[i] & 15];
    }
    return out;
  }

 private:
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx_;
};

}  // namespace

std::filesystem::path default_out_dir() {
  const char* env = std::getenv("PERIMOTION_OUT_DIR");
  if (env != nullptr && *env != '\0') return env;
  return "perimotion_out";
}

std::string sha256_hex(std::string_view bytes) {
  Sha256 h;
  h.update(bytes.data(), bytes.size());
  return h.hex();
}

std::string sha256_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  Sha256 h;
  std::array<char, 1 << 16> buf{};
  while (in) {
    in.read(buf.data(), buf.size());
    if (in.gcount() > 0) h.update(buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  return h.hex();
}

RunManifest::RunManifest(std::string command, std::filesystem::path out_dir)
    : command_(std::move(command)), out_dir_(std::move(out_dir)) {}

std::string RunManifest::display_path(const std::filesystem::path& path) const {
  const auto rel = path.lexically_relative(out_dir_);
  if (!rel.empty() && *rel.begin() != "..") return rel.generic_string();
  return path.generic_string();
}

void RunManifest::add_input(const std::filesystem::path& path) {
  inputs_.emplace_back(path.generic_string(), sha256_file(path));
}

void RunManifest::add_output(const std::filesystem::path& path) {
  outputs_.emplace_back(display_path(path), sha256_file(path));
}

nlohmann::ordered_json RunManifest::to_json() const {
  nlohmann::ordered_json j;
  j["tool"] = "perimotion";
  j["version"] = kToolVersion;
  j["command"] = command_;
  j["config"] = config_;
  if (has_seed_) j["seed"] = seed_;
  auto files = [](const auto& list) {
    nlohmann::ordered_json arr = nlohmann::ordered_json::array();
    for (const auto& [path, hash] : list) arr.push_back({{"path", path}, {"sha256", hash}});
    return arr;
  };
  j["inputs"] = files(inputs_);
  j["outputs"] = files(outputs_);
  j["wall_seconds"] = wall_seconds_;
  return j;
}

std::filesystem::path RunManifest::write() const {
  const auto path = out_dir_ / "manifest.json";
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << to_json().dump(2) << '\n';
  if (!out) throw DataError("failed writing " + path.string());
  return path;
}

std::vector<std::string> verify_manifest(const std::filesystem::path& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) throw DataError("cannot open " + manifest_path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(manifest_path.string() + ": " + e.what());
  }
  const auto dir = manifest_path.parent_path();
  std::vector<std::string> bad;
  for (const char* section : {"inputs", "outputs"}) {
    for (const auto& entry : j.at(section)) {
      const std::string p = entry.at("path").get<std::string>();
      std::filesystem::path full(p);
      if (std::string(section) == "outputs" && full.is_relative()) full = dir / full;
      if (!std::filesystem::exists(full) || sha256_file(full) != entry.at("sha256").get<std::string>()) {
        bad.push_back(p);
      }
    }
  }
  return bad;
}

}  // namespace perimotion::cli
