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


#include <sstream>

#include "doctest.h"
#include "oracle4rec/config.hpp"

using namespace oracle4rec;

namespace {

KeyValues parse(const std::string& text) {
  std::istringstream in(text);
  return parse_config_text(in, "test.conf");
}

}  // namespace

TEST_CASE("defaults") {
  const RunConfig c = resolve_config({}, {});
  CHECK(c.model.encoder.length == 50);
  CHECK(c.model.guiding.future == 10);
  CHECK(c.model.encoder.dropout == 0.5);
  CHECK(c.model.encoder.dim == 64);
  CHECK(c.model.encoder.quantile == 0.75);
  CHECK(c.model.guiding.gamma == 0.05);
  CHECK(c.model.guiding.beta == 0.01);
  CHECK(c.model.guiding.kind == Discrepancy::kl);
  CHECK(c.train.lr1 == 0.001);
  CHECK(c.train.lr2 == 0.001);
  CHECK(c.train.batch == 256);
  CHECK(c.train.epochs == 200);
  CHECK(c.train.patience == 20);
  CHECK(c.model.encoder.ln_eps == 1e-8);
  CHECK(c.eval_protocol == Protocol::sampled99);
}

TEST_CASE("file parsing") {
  const auto kv = parse("# comment\n\nmodel.d = 32   # trailing\n  guiding.kind=js\n");
  CHECK(kv.at("model.d") == "32");
  CHECK(kv.at("guiding.kind") == "js");
  try {
    parse("model.d = 32\nnot a pair\n");
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("test.conf:2") != std::string::npos);
  }
  CHECK_THROWS_AS(parse("model.bogus = 1\n"), ConfigError);
}

TEST_CASE("overrides take precedence over the file") {
  const RunConfig c = resolve_config(parse("model.d = 32\nmodel.L = 20\n"), {{"model.d", "64"}});
  CHECK(c.model.encoder.dim == 64);
  CHECK(c.model.encoder.length == 20);
}

TEST_CASE("range checks name the key") {
  auto fails_on = [](const KeyValues& kv, const std::string& key) {
    try {
      resolve_config({}, kv);
    } catch (const ConfigError& e) {
      return std::string(e.what()).find(key) != std::string::npos;
    }
    return false;
  };
  CHECK(fails_on({{"model.P", "50"}}, "model.P"));
  CHECK(fails_on({{"filter.q", "0"}}, "filter.q"));
  CHECK(fails_on({{"guiding.gamma", "-0.1"}}, "guiding.gamma"));
  CHECK(fails_on({{"guiding.beta", "0"}}, "guiding.beta"));
  CHECK(fails_on({{"model.d", "abc"}}, "model.d"));
  CHECK(fails_on({{"train.mode", "sometimes"}}, "train.mode"));
  CHECK(fails_on({{"train.epochs", "0"}}, "train.epochs"));
}

TEST_CASE("soft ranges warn") {
  std::vector<std::string> warnings;
  const RunConfig c = resolve_config({}, {{"filter.q", "1.5"}, {"model.K", "7"}}, &warnings);
  CHECK(c.model.encoder.quantile == 1.5);
  CHECK(warnings.size() == 2);
  CHECK(cutoff_keep_count(26, c.model.encoder.quantile) == 26);
}

TEST_CASE("echo is re-readable") {
  const RunConfig a = resolve_config(
      {}, {{"model.d", "16"}, {"guiding.kind", "cosine"}, {"guiding.r2l", "true"},
           {"train.mode", "joint"}, {"filter.learnable", "true"}, {"model.encoder", "recurrent"},
           {"synth.drift_rate", "0.25"}});
  const KeyValues echo = echo_config(a);
  const RunConfig b = resolve_config(parse(format_config(echo)), {});
  CHECK(echo_config(b) == echo);
  CHECK(b.model.r2l_future);
  CHECK(b.model.encoder.kind == EncoderKind::recurrent);
  CHECK(b.synth.drift_rate == 0.25);
  for (const auto& [k, v] : echo) CHECK(is_known_config_key(k));
}
