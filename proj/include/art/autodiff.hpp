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
// Minimal matrix-valued reverse-mode tape. Nodes are recorded in evaluation
// order; backward() walks them in reverse and runs each node's adjoint.
// Output gradients are seeded by the caller (grad(v) += ...) before backward.
#pragma once

#include <cmath>
#include <functional>
#include <memory>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "art/common.hpp"

namespace art {

/// A learned tensor with its gradient and AdamW moments.
template <typename T>
struct Param {
  std::string name;
  Matrix<T> value;
  Matrix<T> grad;
  Matrix<T> m;
  Matrix<T> v;
  bool decay = false;  // AdamW weight decay applies

  std::size_t size() const { return static_cast<std::size_t>(value.size()); }
};

/// Ordered collection of Params; registration order is the checkpoint order.
template <typename T>
class ParamStore {
 public:
  Param<T>& add(const std::string& name, Matrix<T> value, bool decay) {
    if (index_.count(name)) throw ContractError("duplicate parameter " + name);
    auto p = std::make_unique<Param<T>>();
    p->name = name;
    p->grad = Matrix<T>::Zero(value.rows(), value.cols());
    p->m = Matrix<T>::Zero(value.rows(), value.cols());
    p->v = Matrix<T>::Zero(value.rows(), value.cols());
    p->value = std::move(value);
    p->decay = decay;
    index_[name] = params_.size();
    params_.push_back(std::move(p));
    return *params_.back();
  }

  Param<T>& get(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw ContractError("unknown parameter " + name);
    return *params_[it->second];
  }
  const Param<T>& get(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw ContractError("unknown parameter " + name);
    return *params_[it->second];
  }
  bool contains(const std::string& name) const { return index_.count(name) > 0; }

  std::size_t size() const { return params_.size(); }
  Param<T>& operator[](std::size_t i) { return *params_[i]; }
  const Param<T>& operator[](std::size_t i) const { return *params_[i]; }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p->size();
    return n;
  }

  void zero_grad() {
    for (auto& p : params_) p->grad.setZero();
  }

 private:
  std::vector<std::unique_ptr<Param<T>>> params_;
  std::unordered_map<std::string, std::size_t> index_;
};

template <typename T>
class Tape {
 public:
  using Mat = Matrix<T>;

  struct Var {
    int id = -1;
  };

  Var constant(Mat value) { return push(std::move(value), {}); }

  /// Leaf whose gradient is added to `p.grad` by backward().
  Var parameter(Param<T>& p) {
    Var v = push(p.value, {});
    nodes_[v.id].param = &p;
    return v;
  }

  const Mat& value(Var v) const { return nodes_[v.id].value; }

  /// Gradient buffer of a node, allocated on first use.
  Mat& grad(Var v) {
    Node& n = nodes_[v.id];
    if (n.grad.size() == 0) n.grad = Mat::Zero(n.value.rows(), n.value.cols());
    return n.grad;
  }

  std::size_t size() const { return nodes_.size(); }

  void backward() {
    for (std::size_t i = nodes_.size(); i-- > 0;) {
      Node& n = nodes_[i];
      if (n.grad.size() == 0) continue;
      if (n.back) n.back(*this, n);
      if (n.param) n.param->grad += n.grad;
    }
  }

  // -- ops -------------------------------------------------------------------

  Var matmul(Var a, Var b) {
    Mat out = value(a) * value(b);
    return push(std::move(out), [a, b](Tape& t, const Node& n) {
      t.grad(a).noalias() += n.grad * t.value(b).transpose();
      t.grad(b).noalias() += t.value(a).transpose() * n.grad;
    });
  }

  Var add(Var a, Var b) {
    require(value(a).rows() == value(b).rows() && value(a).cols() == value(b).cols(),
            "tape add: shape mismatch");
    Mat out = value(a) + value(b);
    return push(std::move(out), [a, b](Tape& t, const Node& n) {
      t.grad(a) += n.grad;
      t.grad(b) += n.grad;
    });
  }

  /// a + row, broadcasting a 1 x n row over every row of a.
  Var add_row(Var a, Var row) {
    require(value(row).rows() == 1 && value(row).cols() == value(a).cols(),
            "tape add_row: shape mismatch");
    Mat out = value(a);
    out.rowwise() += value(row).row(0);
    return push(std::move(out), [a, row](Tape& t, const Node& n) {
      t.grad(a) += n.grad;
      t.grad(row) += n.grad.colwise().sum();
    });
  }

  Var linear(Var x, Var w, Var b) { return add_row(matmul(x, w), b); }

  /// x + table[index[i]] for each row i.
  Var add_indexed_rows(Var x, Var table, std::vector<int> index) {
    const Mat& tv = value(table);
    require(static_cast<Eigen::Index>(index.size()) == value(x).rows(),
            "tape add_indexed_rows: index size mismatch");
    Mat out = value(x);
    for (std::size_t i = 0; i < index.size(); ++i) out.row(i) += tv.row(index[i]);
    return push(std::move(out), [x, table, index = std::move(index)](Tape& t, const Node& n) {
      t.grad(x) += n.grad;
      Mat& g = t.grad(table);
      for (std::size_t i = 0; i < index.size(); ++i) g.row(index[i]) += n.grad.row(i);
    });
  }

  Var gather_rows(Var x, std::vector<int> index) {
    const Mat& xv = value(x);
    Mat out(static_cast<Eigen::Index>(index.size()), xv.cols());
    for (std::size_t i = 0; i < index.size(); ++i) out.row(i) = xv.row(index[i]);
    return push(std::move(out), [x, index = std::move(index)](Tape& t, const Node& n) {
      Mat& g = t.grad(x);
      for (std::size_t i = 0; i < index.size(); ++i) g.row(index[i]) += n.grad.row(i);
    });
  }

  Var concat_rows(Var a, Var b) {
    const Mat& av = value(a);
    const Mat& bv = value(b);
    require(av.cols() == bv.cols(), "tape concat_rows: width mismatch");
    Mat out(av.rows() + bv.rows(), av.cols());
    out.topRows(av.rows()) = av;
    out.bottomRows(bv.rows()) = bv;
    const Eigen::Index na = av.rows(), nb = bv.rows();
    return push(std::move(out), [a, b, na, nb](Tape& t, const Node& n) {
      t.grad(a) += n.grad.topRows(na);
      t.grad(b) += n.grad.bottomRows(nb);
    });
  }

  Var slice_rows(Var a, Eigen::Index begin, Eigen::Index count) {
    require(begin >= 0 && begin + count <= value(a).rows(), "tape slice_rows: out of range");
    Mat out = value(a).middleRows(begin, count);
    return push(std::move(out), [a, begin, count](Tape& t, const Node& n) {
      t.grad(a).middleRows(begin, count) += n.grad;
    });
  }

  /// Row-wise layer normalization with affine gamma/beta (1 x n rows).
  Var layer_norm(Var x, Var gamma, Var beta, T eps = T(1e-5)) {
    const Mat& xv = value(x);
    const Eigen::Index rows = xv.rows();
    Mat xhat(rows, xv.cols());
    std::vector<T> inv_std(rows);
    for (Eigen::Index r = 0; r < rows; ++r) {
      const T mean = xv.row(r).mean();
      const T var = (xv.row(r).array() - mean).square().mean();
      inv_std[r] = T(1) / std::sqrt(var + eps);
      xhat.row(r) = (xv.row(r).array() - mean) * inv_std[r];
    }
    Mat out = (xhat.array().rowwise() * value(gamma).row(0).array()).matrix();
    out.rowwise() += value(beta).row(0);
    return push(std::move(out), [x, gamma, beta, xhat = std::move(xhat),
                                 inv_std = std::move(inv_std)](Tape& t, const Node& n) {
      const Eigen::Index rows = xhat.rows();
      t.grad(gamma) += n.grad.cwiseProduct(xhat).colwise().sum();
      t.grad(beta) += n.grad.colwise().sum();
      const auto g = t.value(gamma).row(0).array();
      Mat& dx = t.grad(x);
      for (Eigen::Index r = 0; r < rows; ++r) {
        const auto dxhat = (n.grad.row(r).array() * g).eval();
        const T m1 = dxhat.mean();
        const T m2 = (dxhat * xhat.row(r).array()).mean();
        dx.row(r).array() += inv_std[r] * (dxhat - m1 - xhat.row(r).array() * m2);
      }
    });
  }

  /// GELU, tanh approximation.
  Var gelu(Var x) {
    const Mat& xv = value(x);
    Mat out = xv.unaryExpr([](T v) { return gelu_value(v); });
    return push(std::move(out), [x](Tape& t, const Node& n) {
      t.grad(x) += n.grad.cwiseProduct(t.value(x).unaryExpr([](T v) { return gelu_derivative(v); }));
    });
  }

  /// Multi-head scaled dot-product attention; q is Nq x D, k and v are Nk x D,
  /// heads split D into equal column blocks.
  Var attention(Var q, Var k, Var v, int heads) {
    const Mat& qv = value(q);
    const Mat& kv = value(k);
    const Mat& vv = value(v);
    const Eigen::Index d = qv.cols();
    require(d % heads == 0, "attention: width not divisible by head count");
    require(kv.cols() == d && vv.cols() == d && kv.rows() == vv.rows(), "attention: shape mismatch");
    const Eigen::Index dh = d / heads;
    const T scale = T(1) / std::sqrt(static_cast<T>(dh));
    std::vector<Mat> probs(heads);
    Mat out(qv.rows(), d);
    for (int h = 0; h < heads; ++h) {
      Mat s = (qv.middleCols(h * dh, dh) * kv.middleCols(h * dh, dh).transpose()) * scale;
      for (Eigen::Index r = 0; r < s.rows(); ++r) {
        const T mx = s.row(r).maxCoeff();
        s.row(r) = (s.row(r).array() - mx).exp();
        s.row(r) /= s.row(r).sum();
      }
      out.middleCols(h * dh, dh).noalias() = s * vv.middleCols(h * dh, dh);
      probs[h] = std::move(s);
    }
    return push(std::move(out), [q, k, v, heads, dh, scale,
                                 probs = std::move(probs)](Tape& t, const Node& n) {
      const Mat& qv = t.value(q);
      const Mat& kv = t.value(k);
      const Mat& vv = t.value(v);
      Mat& dq = t.grad(q);
      Mat& dk = t.grad(k);
      Mat& dv = t.grad(v);
      for (int h = 0; h < heads; ++h) {
        const Mat& a = probs[h];
        const auto go = n.grad.middleCols(h * dh, dh);
        dv.middleCols(h * dh, dh).noalias() += a.transpose() * go;
        Mat da = go * vv.middleCols(h * dh, dh).transpose();
        const Eigen::Matrix<T, Eigen::Dynamic, 1> rowdot = a.cwiseProduct(da).rowwise().sum();
        Mat ds = a.cwiseProduct(da.colwise() - rowdot) * scale;
        dq.middleCols(h * dh, dh).noalias() += ds * kv.middleCols(h * dh, dh);
        dk.middleCols(h * dh, dh).noalias() += ds.transpose() * qv.middleCols(h * dh, dh);
      }
    });
  }

  static T gelu_value(T x) {
    const T c = T(0.7978845608028654);  // sqrt(2/pi)
    const T inner = c * (x + T(0.044715) * x * x * x);
    return T(0.5) * x * (T(1) + std::tanh(inner));
  }
  static T gelu_derivative(T x) {
    const T c = T(0.7978845608028654);
    const T inner = c * (x + T(0.044715) * x * x * x);
    const T th = std::tanh(inner);
    const T dinner = c * (T(1) + T(3) * T(0.044715) * x * x);
    return T(0.5) * (T(1) + th) + T(0.5) * x * (T(1) - th * th) * dinner;
  }

 private:
  struct Node {
    Mat value;
    Mat grad;
    std::function<void(Tape&, const Node&)> back;
    Param<T>* param = nullptr;
  };

  Var push(Mat value, std::function<void(Tape&, const Node&)> back) {
    nodes_.push_back(Node{std::move(value), Mat(), std::move(back), nullptr});
    return Var{static_cast<int>(nodes_.size()) - 1};
  }

  std::vector<Node> nodes_;
};

}  // namespace art
