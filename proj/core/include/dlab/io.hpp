#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>

#include "dlab/error.hpp"

namespace dlab::io {

// All binary artifacts (checkpoints, datasets, feature dumps) are written
// little-endian regardless of host order, doubles as their IEEE-754 bit
// patterns, so round trips are bit exact and files are portable.

void write_u8(std::ostream& out, std::uint8_t v);
void write_u16(std::ostream& out, std::uint16_t v);
void write_u32(std::ostream& out, std::uint32_t v);
void write_u64(std::ostream& out, std::uint64_t v);
void write_f64(std::ostream& out, double v);

/// Binary reader that tracks its byte offset so parse errors can point at
/// the exact position that failed.
class Reader {
 public:
  explicit Reader(const std::filesystem::path& path);

  std::uint8_t u8();
  std::uint16_t u16();
  std::uint32_t u32();
  std::uint64_t u64();
  double f64();
  void bytes(void* dst, std::size_t n);

  std::size_t offset() const noexcept { return offset_; }
  bool at_end();
  const std::string& path() const noexcept { return path_; }

  [[noreturn]] void fail(const std::string& what) const;

 private:
  std::ifstream in_;
  std::size_t offset_ = 0;
  std::string path_;
};

/// Locale-independent formatting used by every text artifact, so identical
/// runs produce identical bytes.
std::string format_double(double v);

/// Opens for writing, throws IoError naming the path on failure.
std::ofstream open_output(const std::filesystem::path& path, bool binary);

}  // namespace dlab::io
