// Copyright 2026 The GTNB Authors
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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <filesystem>
#include <set>

#include "gtnb/vqvae.hpp"
#include "oracles.hpp"

using namespace gtnb;
using ad::Var;

namespace {

Tensor<double> random_pose(std::size_t frames, Rng& rng, double scale = 0.5) {
  Tensor<double> t({frames, kPoseWidth});
  for (auto& v : t.values()) v = scale * rng.uniform(-1.0, 1.0);
  return t;
}

VqConfig toy_vq() {
  VqConfig c;
  c.codebook_size = 6;
  c.code_dim = 4;
  c.hidden = 3;
  c.codebook_init_stddev = 0.5;
  return c;
}

}  // namespace

TEST_CASE("half-body split") {
  std::set<std::size_t> all(kUpperJoints.begin(), kUpperJoints.end());
  all.insert(kLowerJoints.begin(), kLowerJoints.end());
  CHECK(all.size() == kJointCount);
  CHECK(kUpperWidth == 39);
  CHECK(kLowerWidth == 33);

  Rng rng(1);
  const auto pose = random_pose(5, rng);
  const auto halves = split_body(pose);
  CHECK(halves.upper.shape() == Shape{5, 39});
  CHECK(halves.lower.shape() == Shape{5, 33});
  CHECK(merge_body(halves.upper, halves.lower) == pose);
  // Column 0 of the lower half is the root.
  CHECK(halves.lower.at(2, 0) == pose.at(2, 0));
  CHECK(halves.upper.at(2, 3) == pose.at(2, 12 * 3));

  const auto zero = split_body(Tensor<double>({4, 72}));
  for (double v : zero.upper.values()) CHECK(v == 0.0);
  for (double v : zero.lower.values()) CHECK(v == 0.0);
  CHECK_THROWS_AS(split_body(Tensor<double>({4, 71})), ShapeError);
}

TEST_CASE("pose csv round trip") {
  Rng rng(2);
  PoseSequence pose{random_pose(12, rng).cast<float>()};
  const auto path = (std::filesystem::temp_directory_path() / "gtnb_pose_test.csv").string();
  write_pose_csv(path, pose);
  const auto back = read_pose_csv(path);
  CHECK(back.data == pose.data);
  CHECK(back.fps == 60.0);
  std::filesystem::remove(path);
  CHECK_THROWS_AS(read_pose_csv(path), IoError);
}

TEST_CASE("quantize examples") {
  const auto book = Var<double>::constant(Tensor<double>({2, 2}, {0.0, 0.0, 1.0, 1.0}));
  auto q = quantize(Var<double>::constant(Tensor<double>({1, 2}, {0.9, 0.8})), book);
  CHECK(q.codes == std::vector<int>{1});
  q = quantize(Var<double>::constant(Tensor<double>({1, 2}, {1.0, 1.0})), book);
  CHECK(q.codes == std::vector<int>{1});
  CHECK(q.values.value() == Tensor<double>({1, 2}, {1.0, 1.0}));
  q = quantize(Var<double>::constant(Tensor<double>({1, 2}, {0.5, 0.5})), book);
  CHECK(q.codes == std::vector<int>{0});
  CHECK_THROWS(quantize(Var<double>::constant(Tensor<double>({1, 2})),
                        Var<double>::constant(Tensor<double>({0, 2}))));
}

TEST_CASE("quantize matches a linear scan on random queries") {
  Rng rng(3);
  Tensor<float> book({64, 8});
  for (auto& v : book.values()) v = static_cast<float>(rng.normal());
  std::vector<std::vector<double>> oracle_book(64, std::vector<double>(8));
  for (std::size_t k = 0; k < 64; ++k)
    for (std::size_t c = 0; c < 8; ++c) oracle_book[k][c] = book.at(k, c);
  Tensor<float> queries({2000, 8});
  for (auto& v : queries.values()) v = static_cast<float>(1.5 * rng.normal());
  const auto codes = nearest_codes(queries, book);
  int agree = 0;
  for (std::size_t r = 0; r < queries.rows(); ++r) {
    std::vector<double> x(8);
    for (std::size_t c = 0; c < 8; ++c) x[c] = queries.at(r, c);
    agree += codes[r] == oracle::nearest_entry(x, oracle_book);
  }
  CHECK(agree == 2000);
}

TEST_CASE("encoder and decoder shapes") {
  Rng rng(4);
  nn::ParameterStore<float> store;
  VqVae<float> vq(store, VqConfig{}, rng);
  const auto& upper = vq.half(Half::Upper);
  CHECK(upper.encode(Var<float>::constant(Tensor<float>({240, 39}))).shape() == Shape{30, 128});
  CHECK(upper.encode(Var<float>::constant(Tensor<float>({8, 39}))).shape() == Shape{1, 128});
  CHECK_THROWS_AS(upper.encode(Var<float>::constant(Tensor<float>({241, 39}))), ShapeError);
  CHECK_THROWS_AS(upper.encode(Var<float>::constant(Tensor<float>({240, 33}))), ShapeError);

  const auto zero_latent = upper.encode(Var<float>::constant(Tensor<float>({16, 39})));
  for (float v : zero_latent.value().values()) CHECK(v == 0.0f);

  std::vector<int> codes(30, 7);
  const auto out = vq.half(Half::Lower).decode_codes(codes).value();
  CHECK(out.shape() == Shape{240, 33});
  // Away from the edges a constant code stream decodes to a signal with
  // period 8 (one code step), so consecutive frames stay bounded.
  for (std::size_t f = 32; f + 8 < 208; ++f)
    for (std::size_t c = 0; c < 33; ++c) CHECK(out.at(f, c) == doctest::Approx(out.at(f + 8, c)).epsilon(1e-4));

  codes[3] = 512;
  CHECK_THROWS(vq.half(Half::Lower).decode_codes(codes));
  codes[3] = -1;
  CHECK_THROWS(vq.half(Half::Lower).decode_codes(codes));

  Rng prng(5);
  PoseSequence pose{random_pose(240, prng).cast<float>()};
  const auto a = pose_to_codes(vq, pose);
  const auto b = pose_to_codes(vq, pose);
  CHECK(a.upper.size() == 30);
  CHECK(a.lower.size() == 30);
  CHECK(a.upper == b.upper);
  CHECK(a.lower == b.lower);
  for (int c : a.upper) CHECK((c >= 0 && c < 512));
  CHECK(vq.decode_codes(a).shape() == Shape{240, 72});
}

TEST_CASE("vqvae loss examples") {
  Rng rng(6);
  Tensor<double> x({4, 3});
  for (auto& v : x.values()) v = rng.normal();
  Tensor<double> q({2, 5});
  for (auto& v : q.values()) v = rng.normal();
  const auto xv = Var<double>::constant(x);
  const auto qv = Var<double>::constant(q);
  CHECK(vqvae_loss(xv, xv, qv, qv, 0.25).item() == 0.0);

  Tensor<double> offset = q;
  for (auto& v : offset.values()) v += 0.3;
  const double loss = vqvae_loss(xv, xv, Var<double>::constant(offset), qv, 0.25).item();
  CHECK(loss == doctest::Approx(1.25 * 0.09).epsilon(1e-12));

  for (int i = 0; i < 50; ++i) {
    Tensor<double> a({3, 2}), b({3, 2}), z({2, 2}), e({2, 2});
    for (auto* t : {&a, &b, &z, &e})
      for (auto& v : t->values()) v = rng.normal();
    CHECK(vqvae_loss(Var<double>::constant(a), Var<double>::constant(b), Var<double>::constant(z),
                     Var<double>::constant(e), 0.25)
              .item() >= 0.0);
  }
  CHECK_THROWS_AS(vqvae_loss(xv, qv, qv, qv, 0.25), ShapeError);
}

TEST_CASE("full vq-vae loss gradient at toy size, 64-bit") {
  Rng rng(7);
  nn::ParameterStore<double> store;
  VqVae<double> vq(store, toy_vq(), rng);
  // Zero biases put dead ReLU units exactly on the kink; move them off it.
  for (const auto& [name, var] : store.entries()) {
    if (!name.ends_with(".b")) continue;
    Tensor<double> b(var.shape());
    for (auto& v : b.values()) v = rng.uniform(-0.3, 0.3);
    store.assign(name, b);
  }
  const auto pose = random_pose(16, rng);
  CHECK(oracle::vqvae_grad_error(store, vq, pose) < 1e-5);
}
