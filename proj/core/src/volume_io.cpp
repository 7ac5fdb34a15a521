#include <fstream>
#include <json.hpp>
#include <string>

#include "binary_io.hpp"
#include "perimotion/errors.hpp"
#include "perimotion/volume.hpp"

namespace perimotion {
namespace {

constexpr char kMagic[8] = {'V', '4', 'D', 'V', 'O', 'L', '0', '1'};
constexpr std::uint32_t kMaxHeader = 64u << 20;

}  // namespace

void write_v4d(const Volume4D& volume, std::ostream& out) {
  volume.validate();
  nlohmann::json header;
  header["shape"] = {volume.shape[0], volume.shape[1], volume.shape[2]};
  header["spacing_mm"] = {volume.spacing_mm.x(), volume.spacing_mm.y(), volume.spacing_mm.z()};
  header["origin_mm"] = {volume.origin_mm.x(), volume.origin_mm.y(), volume.origin_mm.z()};
  header["frame_times"] = volume.frame_times;
  header["dtype"] = "f32le";
  const std::string text = header.dump();

  out.write(kMagic, sizeof(kMagic));
  binary::put<std::uint32_t>(out, static_cast<std::uint32_t>(text.size()));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const Grid3& frame : volume.frames) {
    for (float v : frame.values) binary::put_f32(out, v);
  }
  if (!out) throw DataError("write_v4d: stream write failed");
}

void write_v4d(const Volume4D& volume, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("write_v4d: cannot open " + path.string());
  write_v4d(volume, out);
}

Volume4D read_v4d(std::istream& in) {
  binary::Reader r(in, "v4d");
  r.expect_magic(kMagic, sizeof(kMagic));
  const auto length = r.get<std::uint32_t>();
  if (length == 0 || length > kMaxHeader) throw FormatError(8, "v4d: implausible header length");
  std::string text(length, '\0');
  r.bytes(text.data(), length);

  Volume4D v;
  try {
    const nlohmann::json header = nlohmann::json::parse(text);
    if (header.at("dtype").get<std::string>() != "f32le") {
      throw ValidationError("v4d: unsupported dtype " + header.at("dtype").dump());
    }
    const auto shape = header.at("shape").get<std::vector<std::size_t>>();
    const auto spacing = header.at("spacing_mm").get<std::vector<double>>();
    const auto origin = header.at("origin_mm").get<std::vector<double>>();
    if (shape.size() != 3 || spacing.size() != 3 || origin.size() != 3) {
      throw ValidationError("v4d: shape, spacing_mm and origin_mm must have 3 entries");
    }
    v.shape = {shape[0], shape[1], shape[2]};
    v.spacing_mm = Vec3(spacing[0], spacing[1], spacing[2]);
    v.origin_mm = Vec3(origin[0], origin[1], origin[2]);
    v.frame_times = header.at("frame_times").get<std::vector<double>>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(12, std::string("v4d: malformed JSON header: ") + e.what());
  }

  const std::size_t voxels = v.shape[0] * v.shape[1] * v.shape[2];
  if (voxels == 0 || voxels > (std::size_t{1} << 32)) throw ValidationError("v4d: implausible grid shape");
  if (v.frame_times.size() < 2) throw ValidationError("v4d: at least 2 frame times required");
  for (std::size_t f = 0; f < v.frame_times.size(); ++f) {
    Grid3 frame(v.shape);
    for (float& value : frame.values) value = r.get_f32();
    v.frames.push_back(std::move(frame));
  }
  r.expect_end();
  v.validate();
  return v;
}

Volume4D read_v4d(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("read_v4d: cannot open " + path.string());
  return read_v4d(in);
}

}  // namespace perimotion
