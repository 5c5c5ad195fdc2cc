#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace rashomon::io {

/// Writes via a sibling temp file and rename(), so readers never observe a
/// partially written artifact.
void atomic_write(const std::filesystem::path& path, std::string_view bytes);

std::string read_file(const std::filesystem::path& path);

std::string sha256_hex(std::string_view bytes);

/// Shortest decimal form that parses back to the same double.
std::string format_double(double v);

/// Fixed-precision rendering for human-facing tables.
std::string format_fixed(double v, int digits);

// Flat binary checkpoint, little-endian throughout:
//   "RSHMCKPT" | u32 version | u32 kind | u32 n_widths | u32 widths[n]
//   | u32 n_blobs | { u64 count | f64 values[count] } * n_blobs
// Blobs appear in the owning model's parameter declaration order.
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  std::uint32_t kind = 0;
  std::vector<std::uint32_t> widths;
  std::vector<std::vector<double>> blobs;
};

std::string encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(std::string_view bytes);

}  // namespace rashomon::io
