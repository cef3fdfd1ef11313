#include "dlab/io.hpp"

#include <bit>
#include <cstdio>
#include <cstring>

namespace dlab::io {

namespace {

void write_le(std::ostream& out, std::uint64_t v, int nbytes) {
  char buf[8];
  for (int i = 0; i < nbytes; ++i) {
    buf[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  }
  out.write(buf, nbytes);
}

}  // namespace

void write_u8(std::ostream& out, std::uint8_t v) { write_le(out, v, 1); }
void write_u16(std::ostream& out, std::uint16_t v) { write_le(out, v, 2); }
void write_u32(std::ostream& out, std::uint32_t v) { write_le(out, v, 4); }
void write_u64(std::ostream& out, std::uint64_t v) { write_le(out, v, 8); }

void write_f64(std::ostream& out, double v) {
  write_u64(out, std::bit_cast<std::uint64_t>(v));
}

Reader::Reader(const std::filesystem::path& path)
    : in_(path, std::ios::binary), path_(path.string()) {
  if (!in_) {
    throw IoError("cannot open " + path_ + " for reading");
  }
}

void Reader::bytes(void* dst, std::size_t n) {
  in_.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(in_.gcount()) != n) {
    throw ParseError(offset_, path_ + ": unexpected end of file at byte " +
                                  std::to_string(offset_));
  }
  offset_ += n;
}

std::uint8_t Reader::u8() {
  std::uint8_t b;
  bytes(&b, 1);
  return b;
}

std::uint16_t Reader::u16() {
  unsigned char b[2];
  bytes(b, 2);
  return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
}

std::uint32_t Reader::u32() {
  unsigned char b[4];
  bytes(b, 4);
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) |
         (static_cast<std::uint32_t>(b[3]) << 24);
}

std::uint64_t Reader::u64() {
  std::uint64_t v = 0;
  unsigned char b[8];
  bytes(b, 8);
  for (int i = 7; i >= 0; --i) {
    v = (v << 8) | b[i];
  }
  return v;
}

double Reader::f64() { return std::bit_cast<double>(u64()); }

bool Reader::at_end() {
  return in_.peek() == std::ifstream::traits_type::eof();
}

void Reader::fail(const std::string& what) const {
  throw ParseError(offset_, path_ + ": " + what + " at byte " +
                                std::to_string(offset_));
}

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return buf;
}

std::ofstream open_output(const std::filesystem::path& path, bool binary) {
  std::ofstream out(path, binary ? std::ios::binary : std::ios::out);
  if (!out) {
    throw IoError("cannot open " + path.string() + " for writing");
  }
  return out;
}

}  // namespace dlab::io
