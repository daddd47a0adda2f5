// Copyright 2026 The artrecon Authors
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
// Float images plus binary PPM (P6) / PGM (P5) codecs.
#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "art/common.hpp"

namespace art {

struct Image {
  int width = 0;
  int height = 0;
  int channels = 0;
  std::vector<float> data;  // row-major, interleaved channels

  Image() = default;
  Image(int w, int h, int c, float fill = 0.0f)
      : width(w), height(h), channels(c), data(static_cast<std::size_t>(w) * h * c, fill) {}

  float& at(int col, int row, int ch = 0) {
    return data[(static_cast<std::size_t>(row) * width + col) * channels + ch];
  }
  float at(int col, int row, int ch = 0) const {
    return data[(static_cast<std::size_t>(row) * width + col) * channels + ch];
  }
  std::size_t pixel_count() const { return static_cast<std::size_t>(width) * height; }
  bool same_shape(const Image& o) const {
    return width == o.width && height == o.height && channels == o.channels;
  }
};

/// Box-filter downsampling by an integer factor.
inline Image downsample(const Image& img, int factor) {
  require(factor >= 1, "downsample factor must be positive");
  if (factor == 1) return img;
  if (img.width % factor != 0 || img.height % factor != 0)
    throw ContractError("downsample: factor must divide the image size");
  Image out(img.width / factor, img.height / factor, img.channels);
  const float norm = 1.0f / static_cast<float>(factor * factor);
  for (int r = 0; r < out.height; ++r)
    for (int c = 0; c < out.width; ++c)
      for (int ch = 0; ch < img.channels; ++ch) {
        float acc = 0.0f;
        for (int dy = 0; dy < factor; ++dy)
          for (int dx = 0; dx < factor; ++dx) acc += img.at(c * factor + dx, r * factor + dy, ch);
        out.at(c, r, ch) = acc * norm;
      }
  return out;
}

inline double mean_abs_diff(const Image& a, const Image& b) {
  if (!a.same_shape(b)) throw ContractError("mean_abs_diff: shape mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) acc += std::abs(double(a.data[i]) - b.data[i]);
  return a.data.empty() ? 0.0 : acc / a.data.size();
}

inline double max_abs_diff(const Image& a, const Image& b) {
  if (!a.same_shape(b)) throw ContractError("max_abs_diff: shape mismatch");
  double m = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) m = std::max(m, std::abs(double(a.data[i]) - b.data[i]));
  return m;
}

inline std::uint8_t quantize(float v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f));
}

/// Writes RGB images as P6 and single-channel images as P5 (8-bit).
inline void write_pnm(const std::filesystem::path& path, const Image& img) {
  if (img.channels != 1 && img.channels != 3)
    throw ContractError("write_pnm: only 1 or 3 channels are supported");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open " + path.string() + " for writing");
  out << (img.channels == 3 ? "P6" : "P5") << '\n' << img.width << ' ' << img.height << "\n255\n";
  std::vector<char> bytes(img.data.size());
  for (std::size_t i = 0; i < img.data.size(); ++i) bytes[i] = static_cast<char>(quantize(img.data[i]));
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("failed writing " + path.string());
}

namespace detail {
inline std::string pnm_token(std::istream& in) {
  std::string tok;
  while (in) {
    const int c = in.peek();
    if (c == '#') {
      std::string line;
      std::getline(in, line);
    } else if (std::isspace(c)) {
      in.get();
    } else {
      break;
    }
  }
  in >> tok;
  return tok;
}
}  // namespace detail

inline Image read_pnm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  const std::string magic = detail::pnm_token(in);
  int channels = 0;
  if (magic == "P6") channels = 3;
  else if (magic == "P5") channels = 1;
  else throw DataError(path.string() + ": not a binary PPM/PGM");
  int w = 0, h = 0, maxv = 0;
  try {
    w = std::stoi(detail::pnm_token(in));
    h = std::stoi(detail::pnm_token(in));
    maxv = std::stoi(detail::pnm_token(in));
  } catch (const std::exception&) {
    throw DataError(path.string() + ": malformed header");
  }
  if (w <= 0 || h <= 0 || maxv != 255) throw DataError(path.string() + ": unsupported header");
  in.get();  // single whitespace after maxval
  Image img(w, h, channels);
  std::vector<unsigned char> bytes(img.data.size());
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (in.gcount() != static_cast<std::streamsize>(bytes.size()))
    throw DataError(path.string() + ": truncated pixel data");
  for (std::size_t i = 0; i < bytes.size(); ++i) img.data[i] = bytes[i] / 255.0f;
  return img;
}

}  // namespace art
