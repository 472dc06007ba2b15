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


#include <fstream>
#include <sstream>

#include "doctest.h"
#include "json.hpp"
#include "oracle4rec/cli.hpp"
#include "oracle4rec/seqdata.hpp"
#include "test_util.hpp"

using namespace oracle4rec;
using nlohmann::json;

namespace {

struct Run {
  int code;
  std::string out, err;
};

Run run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

json read_json(const std::filesystem::path& p) {
  std::ifstream in(p);
  return json::parse(in);
}

}  // namespace

TEST_CASE("usage errors exit with 2") {
  CHECK(run({"--bogus"}).code == kExitUsage);
  CHECK(run({}).code == kExitUsage);
  CHECK(run({"frobnicate"}).code == kExitUsage);
  CHECK(run({"train"}).code == kExitUsage);
  CHECK(run({"train", "--out", "x", "--model.nonsense", "3"}).code == kExitUsage);
  const auto r = run({"train", "--out", "x", "--model.P", "80", "--input", "missing.tsv"});
  CHECK(r.code == kExitUsage);
  CHECK(r.err.find("model.P") != std::string::npos);
  CHECK(run({"--help"}).code == kExitOk);
}

TEST_CASE("runtime errors exit with 1") {
  testing::TempDir dir("cli_rt");
  CHECK(run({"prep", "--input", (dir.path() / "none.tsv").string(), "--out", dir.path().string()})
            .code == kExitRuntime);
  CHECK(run({"eval", "--checkpoint", (dir.path() / "none.bin").string()}).code == kExitRuntime);
}

TEST_CASE("ablate lists every configuration") {
  const auto r = run({"ablate", "--list"});
  CHECK(r.code == kExitOk);
  for (const char* name : {"no_filter", "learnable_filter", "no_future", "gamma_zero", "joint",
                           "js", "euclidean", "cosine", "future_only", "r2l", "full"})
    CHECK(r.out.find(name) != std::string::npos);
}

TEST_CASE("prep writes a dataset and stats") {
  testing::TempDir dir("cli_prep");
  std::ofstream tsv(dir.path() / "log.tsv");
  for (int u = 0; u < 6; ++u)
    for (int i = 0; i < 5; ++i)
      tsv << "u" << u << "\ti" << i << "\t" << i << "\tDrama|Comedy\n";
  tsv << "lonely\ti0\t1\n";
  tsv.close();
  const auto out = dir.path() / "data";
  const auto r = run({"prep", "--input", (dir.path() / "log.tsv").string(), "--out", out.string()});
  REQUIRE(r.code == kExitOk);
  CHECK(r.out.find("users 6") != std::string::npos);
  const json stats = read_json(out / "stats.json");
  CHECK(stats["users"] == 6);
  CHECK(stats["items"] == 5);
  CHECK(stats["interactions"] == 30);
  CHECK(load_dataset(out / "dataset.json").num_users == 6);
}

TEST_CASE("synth, train, eval, analyze pipeline") {
  testing::TempDir dir("cli_pipe");
  const auto d = dir.path();
  std::ofstream(d / "toy.conf") << "model.d = 8\nmodel.L = 10\nmodel.P = 2\nmodel.K = 1\n"
                                   "train.epochs = 2\ntrain.batch = 64\n"
                                   "train.targets_per_user = 3\nsynth.users = 30\n"
                                   "synth.items = 120\n";
  const std::string conf = (d / "toy.conf").string();
  auto r = run({"synth", "--config", conf, "--out", (d / "syn").string()});
  REQUIRE(r.code == kExitOk);
  const std::string data = (d / "syn" / "dataset.json").string();
  REQUIRE(std::filesystem::exists(data));

  r = run({"train", "--config", conf, "--input", data, "--out", (d / "full").string()});
  REQUIRE(r.code == kExitOk);
  for (const char* f : {"checkpoint.bin", "manifest.json", "trainlog.csv", "config.txt", "metrics.json"})
    CHECK(std::filesystem::exists(d / "full" / f));
  const json trained = read_json(d / "full" / "metrics.json");
  CHECK(trained["epochs_run"] == 2);
  CHECK(trained["config"]["model.d"] == "8");

  r = run({"eval", "--checkpoint", (d / "full" / "checkpoint.bin").string(), "--out",
           (d / "ev").string()});
  REQUIRE(r.code == kExitOk);
  const json ev = read_json(d / "ev" / "metrics.json");
  CHECK(ev["protocol"] == "sampled99");
  CHECK(ev["NDCG@1"] == ev["HR@1"]);
  // Re-evaluating the saved checkpoint reproduces the training-time numbers.
  CHECK(ev["MRR"] == trained["MRR"]);
  CHECK(ev["HR@10"] == trained["HR@10"]);

  r = run({"eval", "--checkpoint", (d / "full" / "manifest.json").string(), "--out",
           (d / "ev_full").string(), "--protocol", "full"});
  REQUIRE(r.code == kExitOk);
  CHECK(read_json(d / "ev_full" / "metrics.json")["protocol"] == "full");

  r = run({"ablate", "no_future", "--config", conf, "--input", data, "--out",
           (d / "nofut").string()});
  REQUIRE(r.code == kExitOk);
  CHECK(read_json(d / "nofut" / "metrics.json")["config"]["train.use_future"] == "false");

  r = run({"analyze", "--checkpoint", (d / "full" / "checkpoint.bin").string(), "--checkpoint",
           (d / "nofut" / "checkpoint.bin").string(), "--out", (d / "an").string()});
  REQUIRE(r.code == kExitOk);
  CHECK(std::filesystem::exists(d / "an" / "prefdist.csv"));
  const json an = read_json(d / "an" / "analysis.json");
  CHECK(an.contains("relative_improvement"));
  CHECK(an["users"] == 30);

  // Re-reading the config echo gives the same run configuration.
  r = run({"train", "--config", (d / "full" / "config.txt").string(), "--out",
           (d / "again").string()});
  REQUIRE(r.code == kExitOk);
  CHECK(read_json(d / "again" / "metrics.json")["MRR"] == trained["MRR"]);
}
