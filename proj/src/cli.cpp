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

#include "oracle4rec/cli.hpp"

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>

#include "CLI11.hpp"
#include "json.hpp"
#include "oracle4rec/config.hpp"
#include "oracle4rec/eval.hpp"
#include "oracle4rec/training.hpp"

namespace oracle4rec {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Common {
  std::string config;
  std::string input;
  std::string out;
  std::vector<std::string> checkpoints;
  std::string protocol;
  std::optional<std::uint64_t> seed;
  std::map<std::string, std::string> values;  // dotted-key overrides as given
};

void add_overrides(CLI::App* app, Common& c) {
  for (const auto& k : known_config_keys()) {
    app->add_option("--" + k.name, c.values[k.name], k.help);
  }
}

KeyValues overrides_of(CLI::App* app, const Common& c) {
  KeyValues kv;
  for (const auto& k : known_config_keys()) {
    if (app->count("--" + k.name) > 0) kv[k.name] = c.values.at(k.name);
  }
  return kv;
}

RunConfig resolve(CLI::App* app, const Common& c, std::ostream& err) {
  KeyValues file;
  if (!c.config.empty()) file = read_config_file(c.config);
  KeyValues over = overrides_of(app, c);
  if (!c.input.empty()) over["data.path"] = c.input;
  std::vector<std::string> warnings;
  RunConfig rc = resolve_config(file, over, &warnings);
  for (const auto& w : warnings) err << "warning: " << w << "\n";
  return rc;
}

json metrics_json(const MetricsReport& m) {
  return json{{"protocol", to_string(m.protocol)},
              {"target", m.target == EvalTarget::test ? "test" : "valid"},
              {"seed", m.seed},
              {"HR@1", m.hr1},
              {"HR@5", m.hr5},
              {"HR@10", m.hr10},
              {"NDCG@1", m.ndcg1},
              {"NDCG@5", m.ndcg5},
              {"NDCG@10", m.ndcg10},
              {"MRR", m.mrr},
              {"users", m.users}};
}

void write_json(const fs::path& path, const json& j) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << j.dump(2) << "\n";
}

json stats_json(const Dataset& ds) {
  return json{{"users", ds.num_users},
              {"items", ds.num_items},
              {"interactions", ds.num_interactions()},
              {"density", ds.density()},
              {"density_percent", 100.0 * ds.density()},
              {"categories", ds.category_names.size()}};
}

void print_stats(std::ostream& out, const Dataset& ds) {
  out << "users " << ds.num_users << "\nitems " << ds.num_items << "\ninteractions "
      << ds.num_interactions() << "\ndensity " << std::fixed << std::setprecision(3)
      << 100.0 * ds.density() << "%\n";
  out.unsetf(std::ios::floatfield);
}

SplitDataset load_split(const RunConfig& rc) {
  if (rc.data_path.empty()) throw ConfigError("data.path: no dataset given (--input or data.path)");
  return split_leave_one_out(load_any_dataset(rc.data_path, rc.min_count));
}

template <typename T>
int train_and_save(const RunConfig& rc, const SplitDataset& split, const fs::path& out_dir,
                   std::ostream& out) {
  ModelConfig mc = rc.model;
  mc.encoder.num_items = split.train.num_items;
  mc.validate();
  Trainer<T> trainer(mc, rc.train, split);
  const TrainLog log = trainer.train();
  fs::create_directories(out_dir);
  const KeyValues echo = echo_config(rc);
  save_checkpoint(out_dir / "checkpoint.bin", mc, trainer.params(), echo);
  write_trainlog_csv(log, out_dir / "trainlog.csv");
  {
    std::ofstream cfg(out_dir / "config.txt");
    cfg << format_config(echo);
  }
  // Metrics are computed from the float32 checkpoint so that `eval` on the
  // saved files reproduces them exactly.
  const auto ck = load_checkpoint(out_dir / "checkpoint.bin");
  const Model<float> model(ck.config);
  const auto val = evaluate(model, ck.params, split, rc.eval_protocol, EvalTarget::valid, rc.eval_seed);
  const auto test = evaluate(model, ck.params, split, rc.eval_protocol, EvalTarget::test, rc.eval_seed);
  json j = metrics_json(test);
  j["validation"] = metrics_json(val);
  j["epochs_run"] = log.epochs.size();
  j["best_epoch"] = log.best_epoch;
  j["stopped_early"] = log.stopped_early;
  j["config"] = echo;
  write_json(out_dir / "metrics.json", j);
  out << "trained " << log.epochs.size() << " epochs (best " << log.best_epoch << ")\n"
      << "test " << to_string(test.protocol) << ": HR@10 " << test.hr10 << "  NDCG@10 "
      << test.ndcg10 << "  MRR " << test.mrr << "\n";
  return kExitOk;
}

int do_train(RunConfig rc, const fs::path& out_dir, std::ostream& out) {
  const SplitDataset split = load_split(rc);
  if (rc.train.precision == Precision::float64) return train_and_save<double>(rc, split, out_dir, out);
  return train_and_save<float>(rc, split, out_dir, out);
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Sequential recommendation with future-guided training", "oracle4rec"};
  app.require_subcommand(1, 1);
  Common c;

  auto* prep = app.add_subcommand("prep", "ingest a TSV log into a dataset file and stats");
  prep->add_option("--input", c.input, "TSV log: user, item, timestamp[, categories]")->required();
  prep->add_option("--out", c.out, "output directory")->required();
  prep->add_option("--config", c.config, "config file");
  add_overrides(prep, c);

  auto* synth = app.add_subcommand("synth", "write a synthetic preference-drift dataset");
  synth->add_option("--out", c.out, "output directory")->required();
  synth->add_option("--config", c.config, "config file");
  synth->add_option("--seed", c.seed, "generator seed (synth.seed)");
  add_overrides(synth, c);

  auto* train = app.add_subcommand("train", "train a model and write checkpoint, log and metrics");
  train->add_option("--config", c.config, "config file");
  train->add_option("--input", c.input, "dataset (overrides data.path)");
  train->add_option("--out", c.out, "output directory")->required();
  train->add_option("--seed", c.seed, "training seed (train.seed)");
  train->add_option("--protocol", c.protocol, "sampled99 | full");
  add_overrides(train, c);

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on the test items");
  eval->add_option("--checkpoint", c.checkpoints, "checkpoint.bin or manifest.json")
      ->required()
      ->expected(1);
  eval->add_option("--input", c.input, "dataset (defaults to the checkpoint's data.path)");
  eval->add_option("--out", c.out, "output directory (defaults to the checkpoint directory)");
  eval->add_option("--protocol", c.protocol, "sampled99 | full");
  eval->add_option("--seed", c.seed, "negative sampling seed (eval.seed)");

  auto* analyze = app.add_subcommand("analyze", "compare category preference KL of two checkpoints");
  analyze->add_option("--checkpoint", c.checkpoints, "model A (e.g. full) then model B (e.g. beta = 0)")
      ->required()
      ->expected(2);
  analyze->add_option("--input", c.input, "dataset (defaults to model A's data.path)");
  analyze->add_option("--out", c.out, "output directory")->required();
  Index top_k = 10;
  analyze->add_option("--k", top_k, "recommendation list length");

  auto* ablate = app.add_subcommand("ablate", "train a named ablation configuration");
  std::string ablation;
  bool list = false;
  ablate->add_option("name", ablation, "ablation name");
  ablate->add_flag("--list", list, "list ablation names");
  ablate->add_option("--config", c.config, "config file");
  ablate->add_option("--input", c.input, "dataset (overrides data.path)");
  ablate->add_option("--out", c.out, "output directory");
  ablate->add_option("--seed", c.seed, "training seed (train.seed)");
  ablate->add_option("--protocol", c.protocol, "sampled99 | full");
  add_overrides(ablate, c);

  std::vector<const char*> argv{"oracle4rec"};
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*prep) {
      RunConfig rc = resolve(prep, c, err);
      const Dataset ds = build_dataset(load_interactions(c.input), rc.min_count);
      save_dataset(ds, fs::path(c.out) / "dataset.json");
      write_json(fs::path(c.out) / "stats.json", stats_json(ds));
      print_stats(out, ds);
      return kExitOk;
    }
    if (*synth) {
      RunConfig rc = resolve(synth, c, err);
      if (c.seed) rc.synth.seed = *c.seed;
      const Dataset ds = generate_synthetic_drift(rc.synth);
      save_dataset(ds, fs::path(c.out) / "dataset.json");
      json stats = stats_json(ds);
      stats["config"] = echo_config(rc);
      write_json(fs::path(c.out) / "stats.json", stats);
      print_stats(out, ds);
      return kExitOk;
    }
    if (*train || *ablate) {
      CLI::App* sub = *train ? train : ablate;
      if (*ablate && list) {
        for (const auto& a : ablation_catalog()) {
          out << std::setw(2) << a.row << "  " << std::left << std::setw(18) << a.name
              << std::right << a.description << "\n";
        }
        return kExitOk;
      }
      if (*ablate && ablation.empty()) {
        err << "ablate: give an ablation name or --list\n";
        return kExitUsage;
      }
      if (c.out.empty()) {
        err << "--out is required\n";
        return kExitUsage;
      }
      RunConfig rc = resolve(sub, c, err);
      if (c.seed) rc.train.seed = *c.seed;
      if (!c.protocol.empty()) {
        rc.eval_protocol = parse_protocol(c.protocol);
        rc.train.val_protocol = rc.eval_protocol;
      }
      if (*ablate) apply_ablation(ablation, rc.model, rc.train);
      return do_train(rc, c.out, out);
    }
    if (*eval) {
      const auto ck = load_checkpoint(c.checkpoints.front());
      KeyValues echo = ck.echo;
      if (!c.input.empty()) echo["data.path"] = c.input;
      RunConfig rc = resolve_config(echo, {});
      if (!c.protocol.empty()) rc.eval_protocol = parse_protocol(c.protocol);
      if (c.seed) rc.eval_seed = *c.seed;
      const SplitDataset split = load_split(rc);
      if (ck.config.encoder.num_items != split.train.num_items) {
        throw DataError("checkpoint and dataset disagree on the number of items");
      }
      const Model<float> model(ck.config);
      const auto m = evaluate(model, ck.params, split, rc.eval_protocol, EvalTarget::test, rc.eval_seed);
      fs::path dir = c.out.empty() ? manifest_path_for(c.checkpoints.front()).parent_path() : fs::path(c.out);
      json j = metrics_json(m);
      j["checkpoint"] = c.checkpoints.front();
      j["config"] = echo_config(rc);
      write_json(dir / "metrics.json", j);
      out << "test " << to_string(m.protocol) << ": HR@1 " << m.hr1 << "  HR@5 " << m.hr5
          << "  HR@10 " << m.hr10 << "  NDCG@5 " << m.ndcg5 << "  NDCG@10 " << m.ndcg10
          << "  MRR " << m.mrr << "  users " << m.users << "\n";
      return kExitOk;
    }
    if (*analyze) {
      const auto a = load_checkpoint(c.checkpoints[0]);
      const auto b = load_checkpoint(c.checkpoints[1]);
      KeyValues echo = a.echo;
      if (!c.input.empty()) echo["data.path"] = c.input;
      const RunConfig rc = resolve_config(echo, {});
      const SplitDataset split = load_split(rc);
      const Model<float> ma(a.config), mb(b.config);
      const auto rep = analyze_preferences(ma, a.params, mb, b.params, split, top_k);
      fs::create_directories(c.out);
      write_prefdist_csv(rep, split, fs::path(c.out) / "prefdist.csv");
      json j{{"kl_model_a", rep.kl_a},
             {"kl_model_b", rep.kl_b},
             {"relative_improvement", format_relative(rep.relative_improvement)},
             {"relative_improvement_fraction", rep.relative_improvement},
             {"users", rep.users},
             {"k", top_k},
             {"model_a", c.checkpoints[0]},
             {"model_b", c.checkpoints[1]}};
      write_json(fs::path(c.out) / "analysis.json", j);
      out << "KL model A " << rep.kl_a << "  KL model B " << rep.kl_b << "  ("
          << format_relative(rep.relative_improvement) << ")\n";
      return kExitOk;
    }
  } catch (const ConfigError& e) {
    err << "configuration error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}

}  // namespace oracle4rec
