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
// Checkpoint archive: checkpoint.bin holds every parameter as little-endian
// float32 in registration order; checkpoint.json lists name, shape and byte
// offset of each tensor plus the model configuration.
#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "art/model.hpp"

namespace art {

namespace detail {

inline void put_f32(std::vector<unsigned char>& out, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, sizeof(bits));
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>((bits >> (8 * i)) & 0xffu));
}

inline float get_f32(const unsigned char* p) {
  std::uint32_t bits = 0;
  for (int i = 0; i < 4; ++i) bits |= static_cast<std::uint32_t>(p[i]) << (8 * i);
  float v;
  std::memcpy(&v, &bits, sizeof(v));
  return v;
}

}  // namespace detail

template <typename T>
void save_checkpoint(const ArtModel<T>& model, const std::filesystem::path& dir,
                     const nlohmann::json& extra = nlohmann::json::object()) {
  std::filesystem::create_directories(dir);
  std::vector<unsigned char> blob;
  nlohmann::json tensors = nlohmann::json::array();
  const ParamStore<T>& ps = model.params();
  for (std::size_t i = 0; i < ps.size(); ++i) {
    const Param<T>& p = ps[i];
    tensors.push_back({{"name", p.name},
                       {"shape", {p.value.rows(), p.value.cols()}},
                       {"offset", blob.size()}});
    for (Eigen::Index k = 0; k < p.value.size(); ++k)
      detail::put_f32(blob, static_cast<float>(p.value.data()[k]));
  }
  nlohmann::json manifest{{"format", "artrecon-checkpoint"},
                          {"version", 1},
                          {"dtype", "float32"},
                          {"byte_order", "little"},
                          {"data_file", "checkpoint.bin"},
                          {"bytes", blob.size()},
                          {"model", model.config()},
                          {"tensors", tensors},
                          {"extra", extra}};
  std::ofstream bin(dir / "checkpoint.bin", std::ios::binary);
  bin.write(reinterpret_cast<const char*>(blob.data()), static_cast<std::streamsize>(blob.size()));
  std::ofstream js(dir / "checkpoint.json");
  js << manifest.dump(2) << "\n";
  if (!bin || !js) throw DataError("cannot write checkpoint to " + dir.string());
}

inline nlohmann::json read_checkpoint_manifest(const std::filesystem::path& dir) {
  std::ifstream js(dir / "checkpoint.json");
  if (!js) throw DataError("missing " + (dir / "checkpoint.json").string());
  try {
    nlohmann::json m;
    js >> m;
    if (m.at("format") != "artrecon-checkpoint") throw DataError("checkpoint: wrong format tag");
    if (m.at("dtype") != "float32" || m.at("byte_order") != "little")
      throw DataError("checkpoint: unsupported dtype or byte order");
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("checkpoint manifest: ") + e.what());
  }
}

template <typename T>
ArtModel<T> load_checkpoint(const std::filesystem::path& dir) {
  const nlohmann::json m = read_checkpoint_manifest(dir);
  ModelConfig cfg;
  try {
    cfg = m.at("model").get<ModelConfig>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("checkpoint model config: ") + e.what());
  }
  ArtModel<T> model(cfg, 0);
  std::ifstream bin(dir / m.at("data_file").get<std::string>(), std::ios::binary);
  if (!bin) throw DataError("missing checkpoint data in " + dir.string());
  std::vector<unsigned char> blob((std::istreambuf_iterator<char>(bin)), std::istreambuf_iterator<char>());
  if (blob.size() != m.at("bytes").get<std::size_t>()) throw DataError("checkpoint: truncated data file");
  const auto& tensors = m.at("tensors");
  ParamStore<T>& ps = model.params();
  if (tensors.size() != ps.size()) throw DataError("checkpoint: tensor count differs from the model");
  for (const auto& t : tensors) {
    const std::string name = t.at("name").get<std::string>();
    if (!ps.contains(name)) throw DataError("checkpoint: unexpected tensor " + name);
    Param<T>& p = ps.get(name);
    const auto shape = t.at("shape").get<std::vector<Eigen::Index>>();
    if (shape.size() != 2 || shape[0] != p.value.rows() || shape[1] != p.value.cols())
      throw DataError("checkpoint: shape mismatch for " + name);
    const std::size_t off = t.at("offset").get<std::size_t>();
    if (off + 4 * static_cast<std::size_t>(p.value.size()) > blob.size())
      throw DataError("checkpoint: tensor " + name + " exceeds the data file");
    for (Eigen::Index k = 0; k < p.value.size(); ++k)
      p.value.data()[k] = static_cast<T>(detail::get_f32(blob.data() + off + 4 * k));
  }
  return model;
}

}  // namespace art
