#include "rashomon/common/io.hpp"

#include <openssl/evp.h>

#include <bit>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "rashomon/common/error.hpp"

namespace rashomon::io {

namespace fs = std::filesystem;

void atomic_write(const fs::path& path, std::string_view bytes) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open " + tmp.string() + " for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error("write failed: " + tmp.string());
  }
  fs::rename(tmp, path);
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string sha256_hex(std::string_view bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1)
    throw Error("sha256 failed");
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(kHex[digest[i] >> 4]);
    out.push_back(kHex[digest[i] & 0xf]);
  }
  return out;
}

std::string format_double(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc()) throw Error("format_double failed");
  return std::string(buf, end);
}

std::string format_fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  return buf;
}

namespace {

constexpr std::string_view kMagic = "RSHMCKPT";

template <typename T>
void put_le(std::string& out, T value) {
  using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
  U bits = std::bit_cast<U>(value);
  for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  template <typename T>
  T get() {
    using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
    if (pos_ + sizeof(U) > bytes_.size()) throw Error("checkpoint truncated");
    U bits = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i)
      bits |= static_cast<U>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += sizeof(U);
    return std::bit_cast<T>(bits);
  }

  std::string_view take(std::size_t n) {
    if (pos_ + n > bytes_.size()) throw Error("checkpoint truncated");
    auto s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string encode_checkpoint(const Checkpoint& ckpt) {
  std::string out(kMagic);
  put_le(out, kCheckpointVersion);
  put_le(out, ckpt.kind);
  put_le(out, static_cast<std::uint32_t>(ckpt.widths.size()));
  for (auto w : ckpt.widths) put_le(out, w);
  put_le(out, static_cast<std::uint32_t>(ckpt.blobs.size()));
  for (const auto& blob : ckpt.blobs) {
    put_le(out, static_cast<std::uint64_t>(blob.size()));
    for (double v : blob) put_le(out, v);
  }
  return out;
}

Checkpoint decode_checkpoint(std::string_view bytes) {
  Reader r(bytes);
  if (r.take(kMagic.size()) != kMagic) throw Error("not a checkpoint (bad magic)");
  auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion) throw Error("unsupported checkpoint version " + std::to_string(version));
  Checkpoint ckpt;
  ckpt.kind = r.get<std::uint32_t>();
  ckpt.widths.resize(r.get<std::uint32_t>());
  for (auto& w : ckpt.widths) w = r.get<std::uint32_t>();
  ckpt.blobs.resize(r.get<std::uint32_t>());
  for (auto& blob : ckpt.blobs) {
    blob.resize(r.get<std::uint64_t>());
    for (auto& v : blob) v = r.get<double>();
  }
  if (!r.done()) throw Error("trailing bytes after checkpoint");
  return ckpt;
}

}  // namespace rashomon::io
