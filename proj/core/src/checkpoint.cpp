#include "perimotion/checkpoint.hpp"

#include <fstream>
#include <string>

#include "binary_io.hpp"
#include "perimotion/errors.hpp"

namespace perimotion {
namespace {

constexpr char kMagic[8] = {'P', 'M', 'V', 'F', 'C', 'K', '0', '1'};
constexpr std::uint32_t kEndianTag = 0x01020304u;

}  // namespace

void write_checkpoint(const VelocityFieldModel& model, std::ostream& out) {
  const FieldArchitecture& arch = model.architecture();
  out.write(kMagic, sizeof(kMagic));
  binary::put<std::uint32_t>(out, kEndianTag);
  binary::put<std::uint32_t>(out, static_cast<std::uint32_t>(arch.input_dim()));
  binary::put<std::uint32_t>(out, static_cast<std::uint32_t>(arch.hidden_layers));
  binary::put<std::uint32_t>(out, static_cast<std::uint32_t>(arch.hidden_width));
  binary::put<std::uint32_t>(out, static_cast<std::uint32_t>(FieldArchitecture::output_dim));
  binary::put_f64(out, arch.omega);
  binary::put_f64(out, arch.period);
  binary::put<std::uint8_t>(out, arch.time_encoding ? 1 : 0);
  for (int i = 0; i < 3; ++i) binary::put<std::uint8_t>(out, 0);
  // Parameters are stored layer by layer, weights then bias, which is also
  // the in-memory order.
  for (float v : model.parameters()) binary::put_f32(out, v);
  if (!out) throw DataError("write_checkpoint: stream write failed");
}

void write_checkpoint(const VelocityFieldModel& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("write_checkpoint: cannot open " + path.string());
  write_checkpoint(model, out);
}

VelocityFieldModel read_checkpoint(std::istream& in) {
  binary::Reader r(in, "checkpoint");
  r.expect_magic(kMagic, sizeof(kMagic));
  const auto tag = r.get<std::uint32_t>();
  if (tag != kEndianTag) throw FormatError(8, "checkpoint: unsupported endianness tag");

  const auto input_dim = r.get<std::uint32_t>();
  const auto hidden_layers = r.get<std::uint32_t>();
  const auto hidden_width = r.get<std::uint32_t>();
  const auto output_dim = r.get<std::uint32_t>();
  FieldArchitecture arch;
  arch.omega = r.get_f64();
  arch.period = r.get_f64();
  const auto encoding = r.get<std::uint8_t>();
  for (int i = 0; i < 3; ++i) {
    if (r.get<std::uint8_t>() != 0) throw ValidationError("checkpoint: non-zero header padding");
  }
  if (encoding > 1) throw ValidationError("checkpoint: time_encoding flag must be 0 or 1");
  arch.time_encoding = encoding == 1;
  if (output_dim != FieldArchitecture::output_dim) throw ValidationError("checkpoint: output_dim must be 3");
  if (input_dim != static_cast<std::uint32_t>(arch.input_dim())) {
    throw ValidationError("checkpoint: input_dim " + std::to_string(input_dim) + " inconsistent with encoding flag");
  }
  if (hidden_layers == 0 || hidden_layers > 64 || hidden_width == 0 || hidden_width > 65536) {
    throw ValidationError("checkpoint: implausible layer sizes");
  }
  arch.hidden_layers = static_cast<int>(hidden_layers);
  arch.hidden_width = static_cast<int>(hidden_width);
  try {
    arch.validate();
  } catch (const ContractError& e) {
    throw ValidationError(std::string("checkpoint: ") + e.what());
  }

  std::vector<float> params(VelocityFieldModel::parameter_count(arch));
  for (float& v : params) v = r.get_f32();
  r.expect_end();
  return VelocityFieldModel(arch, std::move(params));
}

VelocityFieldModel read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("read_checkpoint: cannot open " + path.string());
  return read_checkpoint(in);
}

}  // namespace perimotion
