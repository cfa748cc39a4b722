#pragma once

#include <cctype>
#include <cmath>
#include <fstream>
#include <string>
#include <vector>

#include "dqbc/tensor.hpp"

namespace dqbc {

// 8-bit RGB image I/O over binary PPM (P6). Loading maps byte v to v/255;
// saving maps r to round(clamp(r, 0, 1) * 255) with round-half-up, so an
// 8-bit load-save-load round-trips exactly. Single-channel maps are written
// as binary PGM (P5).

namespace detail {
inline int next_pnm_token(std::istream& in) {
  // skips whitespace and '#' comments
  int c = in.get();
  while (c != EOF) {
    if (c == '#') {
      while (c != EOF && c != '\n') c = in.get();
    } else if (!std::isspace(c)) {
      break;
    }
    c = in.get();
  }
  if (c == EOF) throw FormatError("pnm: unexpected end of header");
  int value = 0;
  bool any = false;
  while (c != EOF && std::isdigit(c)) {
    value = value * 10 + (c - '0');
    any = true;
    c = in.get();
  }
  if (!any) throw FormatError("pnm: malformed header value");
  return value;
}

template <typename T>
uint8_t to_byte(T v) {
  const T clamped = std::clamp(v, T(0), T(1));
  return static_cast<uint8_t>(std::floor(clamped * T(255) + T(0.5)));
}
}  // namespace detail

template <typename T>
Tensor3<T> load_image(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("load_image: cannot open " + path);
  char m0 = 0, m1 = 0;
  f.get(m0);
  f.get(m1);
  if (m0 != 'P' || m1 != '6') {
    throw IoError("load_image: " + path + " is not a binary RGB PPM (P6)");
  }
  const int w = detail::next_pnm_token(f);
  const int h = detail::next_pnm_token(f);
  const int maxval = detail::next_pnm_token(f);
  if (maxval != 255) {
    throw IoError("load_image: unsupported bit depth (maxval " +
                  std::to_string(maxval) + ") in " + path);
  }
  std::vector<uint8_t> bytes(static_cast<size_t>(w) * h * 3);
  f.read(reinterpret_cast<char*>(bytes.data()),
         static_cast<std::streamsize>(bytes.size()));
  if (f.gcount() != static_cast<std::streamsize>(bytes.size())) {
    throw FormatError("load_image: truncated pixel data in " + path);
  }
  Tensor3<T> img(h, w, 3);
  for (size_t i = 0; i < bytes.size(); ++i) {
    img.data()[i] = static_cast<T>(bytes[i]) / T(255);
  }
  return img;
}

template <typename T>
void save_image(const Tensor3<T>& img, const std::string& path) {
  if (img.channels() != 3 && img.channels() != 1) {
    throw ConfigError("save_image: expected 1 or 3 channels, got " +
                      std::to_string(img.channels()));
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("save_image: cannot open " + path);
  f << (img.channels() == 3 ? "P6" : "P5") << "\n"
    << img.width() << " " << img.height() << "\n255\n";
  std::vector<uint8_t> bytes;
  bytes.reserve(img.size());
  for (size_t i = 0; i < img.size(); ++i) {
    bytes.push_back(detail::to_byte(img.data()[i]));
  }
  f.write(reinterpret_cast<const char*>(bytes.data()),
          static_cast<std::streamsize>(bytes.size()));
  if (!f) throw IoError("save_image: write failed for " + path);
}

}  // namespace dqbc
