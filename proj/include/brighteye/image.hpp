// Copyright 2026 The Brighteye Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

// 8-bit interleaved RGB images and binary PPM (P6) I/O.

#include <cctype>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <istream>
#include <stdexcept>
#include <string>
#include <vector>

namespace brighteye {

class ImageIoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Image8 {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;  // row-major, RGB interleaved

  Image8() = default;
  Image8(int w, int h, std::uint8_t fill = 0)
      : width(w), height(h), pixels(static_cast<std::size_t>(w) * h * 3, fill) {}

  bool empty() const { return width <= 0 || height <= 0; }

  std::uint8_t* at(int x, int y) { return pixels.data() + (static_cast<std::size_t>(y) * width + x) * 3; }
  const std::uint8_t* at(int x, int y) const {
    return pixels.data() + (static_cast<std::size_t>(y) * width + x) * 3;
  }

  bool operator==(const Image8&) const = default;
};

namespace detail {

inline std::string read_ppm_token(std::istream& in) {
  std::string token;
  while (in) {
    const int ch = in.peek();
    if (ch == '#') {
      std::string comment;
      std::getline(in, comment);
    } else if (std::isspace(ch)) {
      in.get();
    } else {
      break;
    }
  }
  in >> token;
  return token;
}

}  // namespace detail

inline Image8 read_ppm(std::istream& in, const std::string& name = "<stream>") {
  if (detail::read_ppm_token(in) != "P6") throw ImageIoError(name + ": not a binary PPM (P6)");
  int w = 0, h = 0, maxval = 0;
  try {
    w = std::stoi(detail::read_ppm_token(in));
    h = std::stoi(detail::read_ppm_token(in));
    maxval = std::stoi(detail::read_ppm_token(in));
  } catch (const std::exception&) {
    throw ImageIoError(name + ": malformed PPM header");
  }
  if (w <= 0 || h <= 0 || maxval != 255) throw ImageIoError(name + ": unsupported PPM header");
  in.get();  // single whitespace before the raster
  Image8 img(w, h);
  in.read(reinterpret_cast<char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
  if (in.gcount() != static_cast<std::streamsize>(img.pixels.size())) {
    throw ImageIoError(name + ": truncated PPM raster");
  }
  return img;
}

inline Image8 read_ppm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ImageIoError("cannot open image " + path.string());
  return read_ppm(in, path.string());
}

inline void write_ppm(const std::filesystem::path& path, const Image8& img) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ImageIoError("cannot write image " + path.string());
  out << "P6\n" << img.width << ' ' << img.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(img.pixels.data()),
            static_cast<std::streamsize>(img.pixels.size()));
  if (!out) throw ImageIoError("write failed for " + path.string());
}

}  // namespace brighteye
