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
#include <functional>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "art/autodiff.hpp"
#include "gradcheck.hpp"

namespace {

using Mat = art::Matrix<double>;
using Tape = art::Tape<double>;
using Var = Tape::Var;

Mat random_mat(std::mt19937_64& rng, int r, int c, double s = 1.0) {
  std::uniform_real_distribution<double> u(-s, s);
  Mat m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
  return m;
}

// Builds a graph from parameters, contracts its output with a fixed random
// matrix and compares the tape gradients with central differences.
void check_op(art::ParamStore<double>& ps, const std::function<Var(Tape&, std::vector<Var>&)>& build,
              double tol = 1e-6) {
  std::mt19937_64 rng(99);
  Mat proj;
  auto loss = [&](bool backward) {
    Tape t;
    std::vector<Var> in;
    for (std::size_t i = 0; i < ps.size(); ++i) in.push_back(t.parameter(ps[i]));
    const Var out = build(t, in);
    if (proj.size() == 0) proj = random_mat(rng, t.value(out).rows(), t.value(out).cols());
    const double l = t.value(out).cwiseProduct(proj).sum();
    if (backward) {
      t.grad(out) += proj;
      t.backward();
    }
    return l;
  };
  ps.zero_grad();
  loss(true);
  std::vector<double*> x;
  std::vector<double> g;
  for (std::size_t i = 0; i < ps.size(); ++i)
    for (Eigen::Index k = 0; k < ps[i].value.size(); ++k) {
      x.push_back(ps[i].value.data() + k);
      g.push_back(ps[i].grad.data()[k]);
    }
  const auto rep = art_test::check_gradient(x, g, [&] { return loss(false); }, 1e-6, 1e-6);
  EXPECT_GT(rep.checked, 0);
  EXPECT_LE(rep.max_rel, tol);
}

TEST(TapeOps, Matmul) {
  std::mt19937_64 rng(1);
  art::ParamStore<double> ps;
  ps.add("a", random_mat(rng, 3, 4), false);
  ps.add("b", random_mat(rng, 4, 5), false);
  check_op(ps, [](Tape& t, std::vector<Var>& v) { return t.matmul(v[0], v[1]); });
}

TEST(TapeOps, AddAndRowBroadcast) {
  std::mt19937_64 rng(2);
  art::ParamStore<double> ps;
  ps.add("a", random_mat(rng, 3, 4), false);
  ps.add("b", random_mat(rng, 3, 4), false);
  ps.add("r", random_mat(rng, 1, 4), false);
  check_op(ps, [](Tape& t, std::vector<Var>& v) { return t.add_row(t.add(v[0], v[1]), v[2]); });
}

TEST(TapeOps, Linear) {
  std::mt19937_64 rng(3);
  art::ParamStore<double> ps;
  ps.add("x", random_mat(rng, 5, 3), false);
  ps.add("w", random_mat(rng, 3, 2), false);
  ps.add("b", random_mat(rng, 1, 2), false);
  check_op(ps, [](Tape& t, std::vector<Var>& v) { return t.linear(v[0], v[1], v[2]); });
}

TEST(TapeOps, IndexedRowsAndGather) {
  std::mt19937_64 rng(4);
  art::ParamStore<double> ps;
  ps.add("x", random_mat(rng, 6, 3), false);
  ps.add("table", random_mat(rng, 2, 3), false);
  check_op(ps, [](Tape& t, std::vector<Var>& v) {
    const Var y = t.add_indexed_rows(v[0], v[1], {0, 1, 1, 0, 1, 1});
    return t.gather_rows(y, {5, 0, 0, 3});
  });
}

TEST(TapeOps, ConcatAndSlice) {
  std::mt19937_64 rng(5);
  art::ParamStore<double> ps;
  ps.add("a", random_mat(rng, 2, 3), false);
  ps.add("b", random_mat(rng, 4, 3), false);
  check_op(ps, [](Tape& t, std::vector<Var>& v) {
    const Var c = t.concat_rows(v[0], v[1]);
    return t.add(t.slice_rows(c, 1, 3), t.slice_rows(c, 3, 3));
  });
}

TEST(TapeOps, LayerNorm) {
  std::mt19937_64 rng(6);
  art::ParamStore<double> ps;
  ps.add("x", random_mat(rng, 4, 8, 2.0), false);
  ps.add("g", random_mat(rng, 1, 8), false);
  ps.add("b", random_mat(rng, 1, 8), false);
  check_op(ps, [](Tape& t, std::vector<Var>& v) { return t.layer_norm(v[0], v[1], v[2]); }, 1e-5);
}

TEST(TapeOps, LayerNormNormalizes) {
  std::mt19937_64 rng(6);
  Tape t;
  const Var x = t.constant(random_mat(rng, 3, 16, 5.0));
  const Var y = t.layer_norm(x, t.constant(Mat::Ones(1, 16)), t.constant(Mat::Zero(1, 16)), 0.0);
  for (int r = 0; r < 3; ++r) {
    EXPECT_NEAR(t.value(y).row(r).mean(), 0.0, 1e-12);
    EXPECT_NEAR(t.value(y).row(r).squaredNorm() / 16, 1.0, 1e-12);
  }
}

TEST(TapeOps, Gelu) {
  std::mt19937_64 rng(7);
  art::ParamStore<double> ps;
  ps.add("x", random_mat(rng, 4, 5, 3.0), false);
  check_op(ps, [](Tape& t, std::vector<Var>& v) { return t.gelu(v[0]); });
  EXPECT_NEAR(Tape::gelu_value(1.0), 0.8411919906, 1e-9);
  EXPECT_EQ(Tape::gelu_value(0.0), 0.0);
}

TEST(TapeOps, Attention) {
  std::mt19937_64 rng(8);
  art::ParamStore<double> ps;
  ps.add("q", random_mat(rng, 5, 8), false);
  ps.add("k", random_mat(rng, 7, 8), false);
  ps.add("v", random_mat(rng, 7, 8), false);
  check_op(ps, [](Tape& t, std::vector<Var>& v) { return t.attention(v[0], v[1], v[2], 2); });
}

TEST(TapeOps, AttentionMatchesDirectFormula) {
  std::mt19937_64 rng(9);
  const Mat q = random_mat(rng, 3, 4), k = random_mat(rng, 5, 4), v = random_mat(rng, 5, 4);
  Tape t;
  const Var o = t.attention(t.constant(q), t.constant(k), t.constant(v), 1);
  Mat s = q * k.transpose() / 2.0;
  for (int r = 0; r < 3; ++r) {
    s.row(r) = s.row(r).array().exp();
    s.row(r) /= s.row(r).sum();
  }
  EXPECT_LT((t.value(o) - s * v).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(TapeOps, SharedInputAccumulates) {
  std::mt19937_64 rng(10);
  art::ParamStore<double> ps;
  ps.add("x", random_mat(rng, 4, 4), false);
  check_op(ps, [](Tape& t, std::vector<Var>& v) {
    return t.attention(v[0], v[0], v[0], 2);
  });
}

TEST(ParamStoreTest, RegistrationOrderAndLookup) {
  art::ParamStore<double> ps;
  ps.add("b", Mat::Zero(2, 3), true);
  ps.add("a", Mat::Ones(1, 4), false);
  EXPECT_EQ(ps[0].name, "b");
  EXPECT_EQ(ps.scalar_count(), 10u);
  EXPECT_TRUE(ps.contains("a"));
  EXPECT_THROW(ps.get("c"), art::ContractError);
  EXPECT_THROW(ps.add("a", Mat::Zero(1, 1), false), art::ContractError);
}

}  // namespace
