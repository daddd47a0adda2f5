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
// Part-slot transformer. Image patches (pixels + per-pixel Plucker rays, plus
// optional semantic features) become tokens tagged with a learned stage
// embedding; a fixed set of learned slot tokens exchanges information with
// them through interleaved cross- and self-attention blocks; each active slot
// is finally decoded into a hexa-plane and a raw articulation vector.
#pragma once

#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "art/autodiff.hpp"
#include "art/field.hpp"
#include "art/geometry.hpp"
#include "art/image.hpp"
#include "art/kinematics.hpp"

namespace art {

enum class BlockKind { Cross, Self };

struct ModelConfig {
  int embed_dim = 64;
  int n_heads = 4;
  int n_blocks = 4;
  double cross_ratio = 0.75;  // fraction of blocks that are cross-attention
  int patch_size = 8;
  int slot_count = 3;  // P0
  int tokens_per_slot = 0;  // M; 0 derives 6 (R/q)^2
  int plane_res = 16;
  int plane_patch = 8;
  int feat_dim = 8;
  int state_count = 2;
  int head_hidden = 32;
  int mlp_ratio = 4;
  bool semantic_features = false;
  int semantic_dim = 0;
  // true: image tokens query part tokens in cross blocks (image tokens are
  // updated); false: part tokens query image tokens.
  bool cross_image_queries = true;
  double init_std = 0.02;

  int patches_per_side() const { return plane_res / plane_patch; }
  int geometry_tokens() const { return 6 * patches_per_side() * patches_per_side(); }
  int slot_tokens() const { return geometry_tokens() + 1; }
  int patch_input_width() const {
    return patch_size * patch_size * 9 + (semantic_features ? semantic_dim : 0);
  }
  int raw_articulation_width() const { return articulation_width(state_count); }
  int patch_values() const { return plane_patch * plane_patch * feat_dim; }

  /// Repeating (cross x k, self) pattern, k = cross_ratio / (1 - cross_ratio).
  std::vector<BlockKind> block_kinds() const {
    std::vector<BlockKind> kinds(n_blocks, BlockKind::Cross);
    if (cross_ratio >= 1.0) return kinds;
    const int k = static_cast<int>(std::lround(cross_ratio / (1.0 - cross_ratio)));
    for (int i = 0; i < n_blocks; ++i)
      if ((i + 1) % (k + 1) == 0) kinds[i] = BlockKind::Self;
    return kinds;
  }

  void validate() const {
    auto fail = [](const std::string& m) { throw ConfigError("model config: " + m); };
    if (embed_dim <= 0 || n_heads <= 0 || embed_dim % n_heads != 0)
      fail("embed_dim must be a positive multiple of n_heads");
    if (n_blocks < 1) fail("n_blocks must be >= 1");
    if (!(cross_ratio >= 0.0 && cross_ratio <= 1.0)) fail("cross_ratio must lie in [0, 1]");
    if (patch_size < 1) fail("patch_size must be >= 1");
    if (slot_count < 2) fail("slot_count must be >= 2");
    if (plane_patch < 1 || plane_res < 2 || plane_res % plane_patch != 0)
      fail("plane_res must be divisible by plane_patch");
    if (tokens_per_slot != 0 && tokens_per_slot != geometry_tokens())
      fail("tokens_per_slot must equal 6 (plane_res / plane_patch)^2");
    if (feat_dim < 1 || head_hidden < 1 || mlp_ratio < 1) fail("widths must be positive");
    if (state_count < 2) fail("state_count must be >= 2");
    if (semantic_features && semantic_dim < 1) fail("semantic features need semantic_dim >= 1");
  }
};

inline void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = nlohmann::json{{"embed_dim", c.embed_dim},       {"n_heads", c.n_heads},
                     {"n_blocks", c.n_blocks},         {"cross_ratio", c.cross_ratio},
                     {"patch_size", c.patch_size},     {"slot_count", c.slot_count},
                     {"tokens_per_slot", c.geometry_tokens()},
                     {"plane_res", c.plane_res},       {"plane_patch", c.plane_patch},
                     {"feat_dim", c.feat_dim},         {"state_count", c.state_count},
                     {"head_hidden", c.head_hidden},   {"mlp_ratio", c.mlp_ratio},
                     {"semantic_features", c.semantic_features},
                     {"semantic_dim", c.semantic_dim},
                     {"cross_image_queries", c.cross_image_queries},
                     {"init_std", c.init_std}};
}

inline void from_json(const nlohmann::json& j, ModelConfig& c) {
  static const char* known[] = {"embed_dim",   "n_heads",     "n_blocks",    "cross_ratio",
                                "patch_size",  "slot_count",  "tokens_per_slot", "plane_res",
                                "plane_patch", "feat_dim",    "state_count", "head_hidden",
                                "mlp_ratio",   "semantic_features", "semantic_dim",
                                "cross_image_queries", "init_std"};
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* k : known) ok = ok || it.key() == k;
    if (!ok) throw ConfigError("model config: unknown key '" + it.key() + "'");
  }
  auto get = [&](const char* key, auto& field) {
    if (!j.contains(key)) return;
    try {
      j.at(key).get_to(field);
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(std::string("model config: bad value for '") + key + "': " + e.what());
    }
  };
  get("embed_dim", c.embed_dim);
  get("n_heads", c.n_heads);
  get("n_blocks", c.n_blocks);
  get("cross_ratio", c.cross_ratio);
  get("patch_size", c.patch_size);
  get("slot_count", c.slot_count);
  get("tokens_per_slot", c.tokens_per_slot);
  get("plane_res", c.plane_res);
  get("plane_patch", c.plane_patch);
  get("feat_dim", c.feat_dim);
  get("state_count", c.state_count);
  get("head_hidden", c.head_hidden);
  get("mlp_ratio", c.mlp_ratio);
  get("semantic_features", c.semantic_features);
  get("semantic_dim", c.semantic_dim);
  get("cross_image_queries", c.cross_image_queries);
  get("init_std", c.init_std);
}

// ---------------------------------------------------------------------------
// Tokenizer inputs

/// Optional per-patch semantic channels appended to each token input.
class SemanticFeatureProvider {
 public:
  virtual ~SemanticFeatureProvider() = default;
  virtual int channels() const = 0;
  virtual void features(const Image& image, int patch_row, int patch_col, int patch_size,
                        std::span<double> out) const = 0;
};

/// Fixed random projection of patch pixels; a stand-in for a pretrained
/// encoder when exercising the semantic channel.
class RandomProjectionFeatures final : public SemanticFeatureProvider {
 public:
  RandomProjectionFeatures(int channels, int patch_size, std::uint64_t seed)
      : channels_(channels), proj_(channels, patch_size * patch_size * 3) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> dist(0.0, 1.0 / std::sqrt(double(proj_.cols())));
    for (Eigen::Index i = 0; i < proj_.size(); ++i) proj_.data()[i] = dist(rng);
  }
  int channels() const override { return channels_; }
  void features(const Image& image, int patch_row, int patch_col, int patch_size,
                std::span<double> out) const override {
    Eigen::VectorXd px(patch_size * patch_size * 3);
    int k = 0;
    for (int r = 0; r < patch_size; ++r)
      for (int c = 0; c < patch_size; ++c)
        for (int ch = 0; ch < 3; ++ch)
          px[k++] = image.at(patch_col * patch_size + c, patch_row * patch_size + r, ch);
    const Eigen::VectorXd f = proj_ * px;
    for (int i = 0; i < channels_; ++i) out[i] = f[i];
  }

 private:
  int channels_;
  Eigen::MatrixXd proj_;
};

/// Raw per-patch token inputs before the learned projection.
struct PatchInputs {
  Matrix<double> features;  // tokens x patch_input_width
  std::vector<int> stage;   // state index of every token
  int views = 0;
  int states = 0;
  int patches_per_image = 0;
};

/// Token order: view, state, patch row, patch column. Each row holds the patch
/// RGB values, then the Plucker 6-vector of every pixel, then semantic channels.
inline PatchInputs build_patch_inputs(const std::vector<std::vector<Image>>& images,
                                      const std::vector<std::vector<Camera>>& cams,
                                      const ModelConfig& cfg,
                                      const SemanticFeatureProvider* semantic = nullptr) {
  const int views = static_cast<int>(images.size());
  require(views >= 1, "tokenize: no views");
  require(static_cast<int>(cams.size()) == views, "tokenize: camera/view count mismatch");
  const int states = static_cast<int>(images[0].size());
  require(states == cfg.state_count, "tokenize: state count does not match the model");
  const int p = cfg.patch_size;
  const int h = images[0][0].height, w = images[0][0].width;
  if (h % p != 0 || w % p != 0) throw ContractError("tokenize: image size not divisible by patch size");
  const int sem = cfg.semantic_features ? cfg.semantic_dim : 0;
  if (sem > 0 && (!semantic || semantic->channels() != sem))
    throw ContractError("tokenize: semantic provider does not match semantic_dim");
  const int per_image = (h / p) * (w / p);
  PatchInputs in;
  in.views = views;
  in.states = states;
  in.patches_per_image = per_image;
  in.features.resize(static_cast<Eigen::Index>(views) * states * per_image, cfg.patch_input_width());
  in.stage.resize(in.features.rows());
  Eigen::Index row = 0;
  std::vector<double> sem_buf(sem);
  for (int v = 0; v < views; ++v) {
    require(static_cast<int>(images[v].size()) == states && static_cast<int>(cams[v].size()) == states,
            "tokenize: every view needs one image and camera per state");
    for (int t = 0; t < states; ++t) {
      const Image& img = images[v][t];
      const Camera& cam = cams[v][t];
      if (img.width != w || img.height != h || img.channels != 3)
        throw ContractError("tokenize: images must share one RGB size");
      if (cam.width != w || cam.height != h)
        throw ContractError("tokenize: camera size differs from image size");
      for (int pr = 0; pr < h / p; ++pr)
        for (int pc = 0; pc < w / p; ++pc, ++row) {
          auto f = in.features.row(row);
          int k = 0;
          for (int r = 0; r < p; ++r)
            for (int c = 0; c < p; ++c)
              for (int ch = 0; ch < 3; ++ch) f[k++] = img.at(pc * p + c, pr * p + r, ch);
          for (int r = 0; r < p; ++r)
            for (int c = 0; c < p; ++c) {
              const auto pl = plucker(pixel_ray(cam, pc * p + c, pr * p + r));
              for (int i = 0; i < 6; ++i) f[k++] = pl[i];
            }
          if (sem > 0 && semantic) {
            semantic->features(img, pr, pc, p, sem_buf);
            for (int i = 0; i < sem; ++i) f[k++] = sem_buf[i];
          }
          in.stage[row] = t;
        }
    }
  }
  return in;
}

// ---------------------------------------------------------------------------
// Parameters

struct ParamSpec {
  std::string name;
  int rows = 0;
  int cols = 0;
  enum class Init { Normal, Zero, One, AxisBias } init = Init::Normal;
  bool decay = false;
};

/// Every learned tensor of the model in registration (checkpoint) order.
inline std::vector<ParamSpec> parameter_specs(const ModelConfig& cfg) {
  using I = ParamSpec::Init;
  const int d = cfg.embed_dim;
  const int hidden = cfg.mlp_ratio * d;
  std::vector<ParamSpec> s;
  auto weight = [&](std::string n, int r, int c) { s.push_back({std::move(n), r, c, I::Normal, true}); };
  auto bias = [&](std::string n, int c) { s.push_back({std::move(n), 1, c, I::Zero, false}); };
  auto norm = [&](const std::string& n) {
    s.push_back({n + ".g", 1, d, I::One, false});
    s.push_back({n + ".b", 1, d, I::Zero, false});
  };
  weight("tok.w", cfg.patch_input_width(), d);
  bias("tok.b", d);
  s.push_back({"stage_emb", cfg.state_count, d, I::Normal, false});
  s.push_back({"slots", cfg.slot_count * cfg.slot_tokens(), d, I::Normal, false});
  const auto kinds = cfg.block_kinds();
  for (int b = 0; b < cfg.n_blocks; ++b) {
    const std::string p = "block" + std::to_string(b);
    if (kinds[b] == BlockKind::Self) {
      norm(p + ".ln1");
    } else {
      norm(p + ".ln_q");
      norm(p + ".ln_kv");
    }
    for (const char* m : {"q", "k", "v", "o"}) {
      weight(p + ".attn.w" + m, d, d);
      bias(p + ".attn.b" + m, d);
    }
    norm(p + ".ln2");
    weight(p + ".mlp.w1", d, hidden);
    bias(p + ".mlp.b1", hidden);
    weight(p + ".mlp.w2", hidden, d);
    bias(p + ".mlp.b2", d);
  }
  norm("final_ln");
  weight("geo.w", d, cfg.patch_values());
  bias("geo.b", cfg.patch_values());
  weight("art.w1", d, d);
  bias("art.b1", d);
  s.push_back({"art.w2", d, cfg.raw_articulation_width(), I::Zero, true});
  s.push_back({"art.b2", 1, cfg.raw_articulation_width(), I::AxisBias, false});
  const int fw = 3 * cfg.feat_dim, hh = cfg.head_hidden;
  for (const char* head : {"sdf", "color"}) {
    const int out = std::string(head) == "sdf" ? 1 : 3;
    const std::string p = std::string("heads.") + head;
    weight(p + ".0.w", fw, hh);
    bias(p + ".0.b", hh);
    weight(p + ".1.w", hh, hh);
    bias(p + ".1.b", hh);
    weight(p + ".2.w", hh, out);
    bias(p + ".2.b", out);
  }
  return s;
}

inline std::size_t count_parameters(const ModelConfig& cfg) {
  cfg.validate();
  std::size_t n = 0;
  for (const auto& p : parameter_specs(cfg)) n += static_cast<std::size_t>(p.rows) * p.cols;
  return n;
}

/// One decoded part slot.
template <typename T>
struct PartSlotOutput {
  HexaPlane<T> hexaplane;
  FieldHeads<T> heads;
  std::vector<double> raw_articulation;
};

template <typename T>
class ArtModel {
 public:
  using Var = typename Tape<T>::Var;

  struct Forward {
    Tape<T> tape;
    Var planes;        // (P * M) x (q * q * C) decoded patches
    Var articulation;  // P x (14 + T)
    std::vector<PartSlotOutput<T>> parts;
  };

  explicit ArtModel(ModelConfig cfg, std::uint64_t seed = 0) : cfg_(std::move(cfg)) {
    cfg_.validate();
    cfg_.tokens_per_slot = cfg_.geometry_tokens();
    std::mt19937_64 rng(seed);
    for (const ParamSpec& spec : parameter_specs(cfg_)) {
      Matrix<T> v = Matrix<T>::Zero(spec.rows, spec.cols);
      switch (spec.init) {
        case ParamSpec::Init::Normal:
          for (Eigen::Index i = 0; i < v.size(); ++i) v.data()[i] = T(truncated_normal(rng, cfg_.init_std));
          break;
        case ParamSpec::Init::One:
          v.setOnes();
          break;
        case ParamSpec::Init::AxisBias:
          // A non-degenerate starting axis; everything else at the sigmoid midpoint.
          v(0, raw_layout::kAxis + 0) = T(1);
          v(0, raw_layout::kAxis + 1) = T(1);
          v(0, raw_layout::kAxis + 2) = T(1);
          break;
        case ParamSpec::Init::Zero:
          break;
      }
      params_.add(spec.name, std::move(v), spec.decay);
    }
  }

  const ModelConfig& config() const { return cfg_; }
  ParamStore<T>& params() { return params_; }
  const ParamStore<T>& params() const { return params_; }

  FieldHeads<T> heads() const {
    FieldHeads<T> h;
    for (int l = 0; l < 3; ++l) {
      const std::string i = std::to_string(l);
      h.sdf.weights.push_back(params_.get("heads.sdf." + i + ".w").value);
      h.sdf.biases.push_back(params_.get("heads.sdf." + i + ".b").value);
      h.color.weights.push_back(params_.get("heads.color." + i + ".w").value);
      h.color.biases.push_back(params_.get("heads.color." + i + ".b").value);
    }
    return h;
  }

  void accumulate_head_grads(FieldHeads<T>& grad) {
    grad.for_each([&](const std::string& name, Matrix<T>& g) { params_.get(name).grad += g; });
  }

  Var tokenize(Tape<T>& tape, const Matrix<T>& inputs, const std::vector<int>& stage) {
    require(inputs.cols() == cfg_.patch_input_width(), "tokenize: input width mismatch");
    for (int s : stage) require(s >= 0 && s < cfg_.state_count, "tokenize: stage index out of range");
    const Var x = tape.constant(inputs);
    const Var tok = tape.linear(x, p(tape, "tok.w"), p(tape, "tok.b"));
    return tape.add_indexed_rows(tok, p(tape, "stage_emb"), stage);
  }

  Forward forward(const Matrix<T>& inputs, const std::vector<int>& stage, int part_count) {
    if (part_count < 1 || part_count > cfg_.slot_count)
      throw ContractError("forward: part count outside [1, slot_count]");
    Forward f;
    Tape<T>& t = f.tape;
    Var img = tokenize(t, inputs, stage);
    Var part = p(t, "slots");
    const auto kinds = cfg_.block_kinds();
    const Eigen::Index n_img = t.value(img).rows();
    for (int b = 0; b < cfg_.n_blocks; ++b) {
      const std::string pre = "block" + std::to_string(b);
      if (kinds[b] == BlockKind::Self) {
        Var x = t.concat_rows(img, part);
        Var h = norm(t, x, pre + ".ln1");
        x = t.add(x, attend(t, h, h, pre));
        x = t.add(x, mlp(t, norm(t, x, pre + ".ln2"), pre));
        img = t.slice_rows(x, 0, n_img);
        part = t.slice_rows(x, n_img, t.value(x).rows() - n_img);
      } else {
        Var& target = cfg_.cross_image_queries ? img : part;
        const Var source = cfg_.cross_image_queries ? part : img;
        const Var q = norm(t, target, pre + ".ln_q");
        const Var kv = norm(t, source, pre + ".ln_kv");
        target = t.add(target, attend(t, q, kv, pre));
        target = t.add(target, mlp(t, norm(t, target, pre + ".ln2"), pre));
      }
    }
    const Var fin = norm(t, part, "final_ln");
    const int m = cfg_.geometry_tokens();
    std::vector<int> geo_rows, art_rows;
    for (int s = 0; s < part_count; ++s) {
      for (int i = 0; i < m; ++i) geo_rows.push_back(s * cfg_.slot_tokens() + i);
      art_rows.push_back(s * cfg_.slot_tokens() + m);
    }
    f.planes = t.linear(t.gather_rows(fin, geo_rows), p(t, "geo.w"), p(t, "geo.b"));
    const Var a = t.gelu(t.linear(t.gather_rows(fin, art_rows), p(t, "art.w1"), p(t, "art.b1")));
    f.articulation = t.linear(a, p(t, "art.w2"), p(t, "art.b2"));

    const FieldHeads<T> shared = heads();
    for (int s = 0; s < part_count; ++s) {
      PartSlotOutput<T> out;
      out.hexaplane = planes_from_patches(t.value(f.planes), s);
      out.heads = shared;
      const auto row = t.value(f.articulation).row(s);
      out.raw_articulation.assign(row.size(), 0.0);
      for (Eigen::Index i = 0; i < row.size(); ++i) out.raw_articulation[i] = static_cast<double>(row[i]);
      f.parts.push_back(std::move(out));
    }
    return f;
  }

  /// Seeds slot gradients (plane values and raw articulation, one entry per
  /// decoded slot; empty entries are skipped) and back-propagates them into
  /// the parameter gradients.
  void backward(Forward& f, const std::vector<HexaPlane<T>>& d_planes,
                const std::vector<std::vector<double>>& d_raw) {
    Matrix<T>& gp = f.tape.grad(f.planes);
    for (std::size_t s = 0; s < d_planes.size(); ++s)
      if (!d_planes[s].values.empty()) add_patch_grads(d_planes[s], static_cast<int>(s), gp);
    Matrix<T>& ga = f.tape.grad(f.articulation);
    for (std::size_t s = 0; s < d_raw.size(); ++s)
      for (std::size_t i = 0; i < d_raw[s].size(); ++i)
        ga(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(i)) += T(d_raw[s][i]);
    f.tape.backward();
  }

  /// Plane placement: geometry token m of a slot owns patch (a, b) of plane k,
  /// with m = k (R/q)^2 + a (R/q) + b; its values are ordered [row][col][channel].
  HexaPlane<T> planes_from_patches(const Matrix<T>& patches, int slot) const {
    const int q = cfg_.plane_patch, c = cfg_.feat_dim, n = cfg_.patches_per_side();
    HexaPlane<T> hp(cfg_.plane_res, c);
    const int m_count = cfg_.geometry_tokens();
    for (int m = 0; m < m_count; ++m) {
      const int k = m / (n * n), a = (m % (n * n)) / n, b = m % n;
      const auto row = patches.row(static_cast<Eigen::Index>(slot) * m_count + m);
      for (int i = 0; i < q; ++i)
        for (int j = 0; j < q; ++j)
          for (int ch = 0; ch < c; ++ch) hp.at(k, a * q + i, b * q + j, ch) = row[(i * q + j) * c + ch];
    }
    return hp;
  }

 private:
  Var p(Tape<T>& t, const std::string& name) { return t.parameter(params_.get(name)); }

  Var norm(Tape<T>& t, Var x, const std::string& name) {
    return t.layer_norm(x, p(t, name + ".g"), p(t, name + ".b"));
  }

  Var attend(Tape<T>& t, Var q_in, Var kv_in, const std::string& pre) {
    const Var q = t.linear(q_in, p(t, pre + ".attn.wq"), p(t, pre + ".attn.bq"));
    const Var k = t.linear(kv_in, p(t, pre + ".attn.wk"), p(t, pre + ".attn.bk"));
    const Var v = t.linear(kv_in, p(t, pre + ".attn.wv"), p(t, pre + ".attn.bv"));
    const Var o = t.attention(q, k, v, cfg_.n_heads);
    return t.linear(o, p(t, pre + ".attn.wo"), p(t, pre + ".attn.bo"));
  }

  Var mlp(Tape<T>& t, Var x, const std::string& pre) {
    const Var h = t.gelu(t.linear(x, p(t, pre + ".mlp.w1"), p(t, pre + ".mlp.b1")));
    return t.linear(h, p(t, pre + ".mlp.w2"), p(t, pre + ".mlp.b2"));
  }

  void add_patch_grads(const HexaPlane<T>& g, int slot, Matrix<T>& out) const {
    const int q = cfg_.plane_patch, c = cfg_.feat_dim, n = cfg_.patches_per_side();
    const int m_count = cfg_.geometry_tokens();
    for (int m = 0; m < m_count; ++m) {
      const int k = m / (n * n), a = (m % (n * n)) / n, b = m % n;
      auto row = out.row(static_cast<Eigen::Index>(slot) * m_count + m);
      for (int i = 0; i < q; ++i)
        for (int j = 0; j < q; ++j)
          for (int ch = 0; ch < c; ++ch) row[(i * q + j) * c + ch] += g.at(k, a * q + i, b * q + j, ch);
    }
  }

  ModelConfig cfg_;
  ParamStore<T> params_;
};

}  // namespace art
