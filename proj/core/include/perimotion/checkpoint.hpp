#pragma once

// Binary model checkpoint. All multi-byte fields are little-endian.
//
//   offset  size  field
//        0     8  magic "PMVFCK01"
//        8     4  endianness tag, u32 0x01020304 (bytes 04 03 02 01)
//       12     4  u32 input_dim (5 with time encoding, 4 without)
//       16     4  u32 hidden_layers
//       20     4  u32 hidden_width
//       24     4  u32 output_dim (always 3)
//       28     8  f64 omega
//       36     8  f64 period
//       44     1  u8 time_encoding (0 or 1)
//       45     3  zero padding
//       48     .  per layer: f32 weights [fan_in][fan_out], then f32 bias [fan_out]
//
// No trailing bytes are allowed. Round trips are bit-exact.

#include <filesystem>
#include <iosfwd>

#include "perimotion/neural_field.hpp"

namespace perimotion {

void write_checkpoint(const VelocityFieldModel& model, std::ostream& out);
void write_checkpoint(const VelocityFieldModel& model, const std::filesystem::path& path);

VelocityFieldModel read_checkpoint(std::istream& in);
VelocityFieldModel read_checkpoint(const std::filesystem::path& path);

}  // namespace perimotion
