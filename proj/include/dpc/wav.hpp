#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "dpc/common.hpp"

// Minimal RIFF/WAVE support: 16-bit PCM, mono, 16 kHz. Anything else is a
// hard error by contract (no resampling, no format conversion).

namespace dpc {

inline constexpr int kSampleRate = 16000;

namespace detail {

inline uint32_t read_u32(const uint8_t* p) {
  return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
         (static_cast<uint32_t>(p[2]) << 16) | (static_cast<uint32_t>(p[3]) << 24);
}
inline uint16_t read_u16(const uint8_t* p) {
  return static_cast<uint16_t>(p[0] | (p[1] << 8));
}

}  // namespace detail

inline std::vector<float> read_wav(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open wav file: " + path);
  std::vector<uint8_t> raw((std::istreambuf_iterator<char>(f)),
                           std::istreambuf_iterator<char>());
  if (raw.size() < 12 || std::memcmp(raw.data(), "RIFF", 4) != 0 ||
      std::memcmp(raw.data() + 8, "WAVE", 4) != 0)
    throw IoError("not a RIFF/WAVE file: " + path);

  size_t pos = 12;
  bool have_fmt = false;
  uint16_t format = 0, channels = 0, bits = 0;
  uint32_t rate = 0;
  const uint8_t* data_ptr = nullptr;
  uint32_t data_len = 0;
  while (pos + 8 <= raw.size()) {
    const uint8_t* hdr = raw.data() + pos;
    uint32_t chunk_len = detail::read_u32(hdr + 4);
    pos += 8;
    if (pos + chunk_len > raw.size()) chunk_len = static_cast<uint32_t>(raw.size() - pos);
    if (std::memcmp(hdr, "fmt ", 4) == 0 && chunk_len >= 16) {
      format = detail::read_u16(raw.data() + pos);
      channels = detail::read_u16(raw.data() + pos + 2);
      rate = detail::read_u32(raw.data() + pos + 4);
      bits = detail::read_u16(raw.data() + pos + 14);
      have_fmt = true;
    } else if (std::memcmp(hdr, "data", 4) == 0) {
      data_ptr = raw.data() + pos;
      data_len = chunk_len;
    }
    pos += chunk_len + (chunk_len & 1);  // chunks are word-aligned
  }
  if (!have_fmt || data_ptr == nullptr) throw IoError("wav missing fmt/data chunk: " + path);
  if (format != 1 || bits != 16) throw IoError("wav must be 16-bit PCM: " + path);
  if (channels != 1) throw IoError("wav must be mono: " + path);
  if (rate != kSampleRate)
    throw IoError("wav must be 16 kHz (got " + std::to_string(rate) + " Hz): " + path);

  size_t n = data_len / 2;
  std::vector<float> out(n);
  for (size_t i = 0; i < n; ++i) {
    int16_t s = static_cast<int16_t>(detail::read_u16(data_ptr + 2 * i));
    out[i] = static_cast<float>(s) / 32768.0f;
  }
  return out;
}

inline void write_wav(const std::string& path, const std::vector<float>& samples) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot create wav file: " + path);
  auto put_u32 = [&](uint32_t v) {
    char b[4] = {char(v & 0xff), char((v >> 8) & 0xff), char((v >> 16) & 0xff), char((v >> 24) & 0xff)};
    f.write(b, 4);
  };
  auto put_u16 = [&](uint16_t v) {
    char b[2] = {char(v & 0xff), char((v >> 8) & 0xff)};
    f.write(b, 2);
  };
  uint32_t data_len = static_cast<uint32_t>(samples.size() * 2);
  f.write("RIFF", 4);
  put_u32(36 + data_len);
  f.write("WAVE", 4);
  f.write("fmt ", 4);
  put_u32(16);
  put_u16(1);  // PCM
  put_u16(1);  // mono
  put_u32(kSampleRate);
  put_u32(kSampleRate * 2);  // byte rate
  put_u16(2);                // block align
  put_u16(16);               // bits
  f.write("data", 4);
  put_u32(data_len);
  for (float s : samples) {
    float clipped = std::clamp(s, -1.0f, 32767.0f / 32768.0f);
    int16_t q = static_cast<int16_t>(std::lrintf(clipped * 32768.0f));
    put_u16(static_cast<uint16_t>(q));
  }
  if (!f) throw IoError("failed writing wav file: " + path);
}

}  // namespace dpc
