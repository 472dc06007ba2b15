// Copyright 2026 The oracle4rec Authors. All Rights Reserved.
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


#include <cstring>
#include <fstream>

#include "doctest.h"
#include "oracle4rec/model.hpp"
#include "test_util.hpp"

using namespace oracle4rec;

namespace {

ModelConfig toy_config() {
  ModelConfig cfg;
  cfg.encoder.num_items = 11;
  cfg.encoder.length = 6;
  cfg.encoder.dim = 4;
  cfg.encoder.dropout = 0.0;
  cfg.encoder.init_std = 0.3;
  cfg.guiding.future = 2;
  return cfg;
}

}  // namespace

TEST_CASE("configuration checks name the key") {
  auto cfg = toy_config();
  cfg.validate();
  cfg.guiding.future = cfg.encoder.length;
  try {
    cfg.validate();
    FAIL("expected a ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("model.P") != std::string::npos);
  }
  cfg = toy_config();
  cfg.encoder.quantile = 0.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = toy_config();
  cfg.guiding.gamma = -1;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("parameter initialization") {
  const auto cfg = toy_config();
  const auto a = init_model_params<double>(cfg, 3);
  const auto b = init_model_params<double>(cfg, 3);
  const auto c = init_model_params<double>(cfg, 4);
  CHECK(a.shared.items == b.shared.items);
  CHECK(a.past.attention[0].wq == b.past.attention[0].wq);
  CHECK(a.shared.items != c.shared.items);
  CHECK(a.past.attention[0].wq != a.future.attention[0].wq);
  CHECK(a.past.attention[0].ln1_gain == Matrix<double>::Ones(1, 4));
  CHECK(a.past.attention[0].b1 == Matrix<double>::Zero(1, 4));

  // Gaussian init with the configured spread.
  auto big = cfg;
  big.encoder.num_items = 4000;
  big.encoder.dim = 16;
  big.encoder.init_std = 0.02;
  const auto p = init_model_params<double>(big, 1);
  const double mean = p.shared.items.mean();
  const double sd = std::sqrt((p.shared.items.array() - mean).square().mean());
  CHECK(std::abs(mean) < 1e-3);
  CHECK(sd == doctest::Approx(0.02).epsilon(0.02));

  Index blocks = 0, scalars = 0;
  auto copy = a;
  for_each_model_block(
      [&](const std::string& name, ParamGroup group, Matrix<double>& m) {
        ++blocks;
        scalars += m.size();
        if (name.rfind("shared.", 0) == 0) CHECK(group == ParamGroup::shared);
        if (name.rfind("future.", 0) == 0) CHECK(group == ParamGroup::future);
      },
      copy);
  CHECK(scalars == parameter_count(a));
  // shared: 2, per encoder: 1 filter layer x 2 + 2 attention layers x 13.
  CHECK(blocks == 2 + 2 * (2 + 26));
}

TEST_CASE("recurrent configurations carry only recurrent blocks") {
  auto cfg = toy_config();
  cfg.encoder.kind = EncoderKind::recurrent;
  auto p = init_model_params<double>(cfg, 1);
  Index blocks = 0;
  for_each_model_block([&](const std::string&, ParamGroup, Matrix<double>&) { ++blocks; }, p);
  CHECK(blocks == 2 + 2 * 11);
}

TEST_CASE("both encoders read one shared embedding table") {
  const auto cfg = toy_config();
  Model<double> model(cfg);
  auto params = init_model_params<double>(cfg, 5);
  const std::vector<ItemId> window = {0, 0, 3, 4, 5, 6};
  Rng rng(1);
  const auto& enc = model.encoder();
  const Matrix<double> q0 = enc.forward(window, params.shared, params.past, rng, false, nullptr);
  const Matrix<double> r0 = enc.forward(window, params.shared, params.future, rng, false, nullptr);
  params.shared.items.row(4).array() += 0.5;
  const Matrix<double> q1 = enc.forward(window, params.shared, params.past, rng, false, nullptr);
  const Matrix<double> r1 = enc.forward(window, params.shared, params.future, rng, false, nullptr);
  CHECK(q1 != q0);
  CHECK(r1 != r0);
  // Gradients of both encoders land in the same shared block.
  auto grad = zeros_like(params);
  std::unique_ptr<SequenceEncoder<double>::Cache> c1, c2;
  enc.forward(window, params.shared, params.past, rng, false, &c1);
  enc.forward(window, params.shared, params.future, rng, false, &c2);
  const Matrix<double> ones = Matrix<double>::Ones(6, 4);
  enc.backward(ones, *c1, params.shared, params.past, grad.shared, grad.past);
  const Matrix<double> after_past = grad.shared.items;
  enc.backward(ones, *c2, params.shared, params.future, grad.shared, grad.future);
  CHECK(grad.shared.items != after_past);
  CHECK(grad.shared.items.row(7).isZero());
}

TEST_CASE("prediction uses the last row of the selected encoder") {
  auto cfg = toy_config();
  Model<double> past_model(cfg);
  const auto params = init_model_params<double>(cfg, 6);
  const std::vector<ItemId> two = {0, 0, 3, 4, 5, 6, 0, 1, 2, 3, 4, 5};
  const Matrix<double> pred = past_model.predict(params, two);
  REQUIRE(pred.rows() == 2);
  Rng rng(0);
  const Matrix<double> full = past_model.encoder().forward(two, params.shared, params.past, rng,
                                                           false, nullptr);
  CHECK(pred.row(0) == full.row(5));
  CHECK(pred.row(1) == full.row(11));
  cfg.inference = InferenceEncoder::future;
  Model<double> future_model(cfg);
  const Matrix<double> fut = future_model.encoder().forward(two, params.shared, params.future,
                                                            rng, false, nullptr);
  CHECK(future_model.predict(params, two).row(1) == fut.row(11));
}

TEST_CASE("checkpoint round trip") {
  auto cfg = toy_config();
  cfg.encoder.learnable_filter = true;
  cfg.guiding.kind = Discrepancy::js;
  cfg.r2l_future = true;
  const auto params = init_model_params<float>(cfg, 8);
  testing::TempDir dir("model");
  const auto bin = dir.path() / "checkpoint.bin";
  save_checkpoint<float>(bin, cfg, params, {{"train.seed", "8"}});
  CHECK(std::filesystem::exists(manifest_path_for(bin)));
  CHECK(std::filesystem::file_size(bin) == static_cast<std::uintmax_t>(4 * parameter_count(params)));

  for (const auto& path : {bin, manifest_path_for(bin)}) {
    const auto loaded = load_checkpoint(path);
    CHECK(loaded.echo.at("train.seed") == "8");
    CHECK(loaded.config.r2l_future);
    CHECK(loaded.config.guiding.kind == Discrepancy::js);
    CHECK(loaded.config.encoder.learnable_filter);
    CHECK(loaded.config.encoder.length == cfg.encoder.length);
    auto a = params;
    auto b = loaded.params;
    Index compared = 0;
    for_each_model_block(
        [&](const std::string& name, ParamGroup, Matrix<float>& x, Matrix<float>& y) {
          CAPTURE(name);
          CHECK(bitwise_equal(x, y));
          ++compared;
        },
        a, b);
    CHECK(compared > 0);
  }

  // Little-endian float32 layout: the first block starts at byte 0.
  std::ifstream in(bin, std::ios::binary);
  unsigned char bytes[4];
  in.read(reinterpret_cast<char*>(bytes), 4);
  const std::uint32_t raw = bytes[0] | (bytes[1] << 8) | (bytes[2] << 16) |
                            (static_cast<std::uint32_t>(bytes[3]) << 24);
  float first;
  std::memcpy(&first, &raw, 4);
  CHECK(first == params.shared.items(0, 0));

  std::filesystem::resize_file(bin, 8);
  CHECK_THROWS(load_checkpoint(bin));
}

TEST_CASE("casting between precisions") {
  const auto cfg = toy_config();
  const auto d = init_model_params<double>(cfg, 9);
  const auto f = cast_params<float>(d);
  const auto back = cast_params<double>(f);
  CHECK(f.shared.items(1, 1) == static_cast<float>(d.shared.items(1, 1)));
  CHECK((back.past.attention[1].wv - d.past.attention[1].wv).cwiseAbs().maxCoeff() < 1e-6);
}
