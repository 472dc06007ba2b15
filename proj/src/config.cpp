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

#include "oracle4rec/config.hpp"

#include <charconv>
#include <fstream>
#include <istream>
#include <sstream>

namespace oracle4rec {

const std::vector<ConfigKey>& known_config_keys() {
  static const std::vector<ConfigKey> keys = {
      {"data.path", "dataset file (.json from prep/synth, or a raw TSV log)"},
      {"data.min_count", "k-core threshold when loading a raw log"},
      {"model.d", "embedding size"},
      {"model.L", "maximum sequence length"},
      {"model.P", "future horizon (alias guiding.P)"},
      {"model.G", "noise filter layers"},
      {"model.K", "causal attention layers"},
      {"model.ff", "feed-forward width (0 = d)"},
      {"model.dropout", "dropout probability"},
      {"model.encoder", "attention | recurrent"},
      {"model.mask", "causal | literal"},
      {"model.init_std", "initialization standard deviation"},
      {"filter.q", "kept frequency quantile; >= 1 disables filtering"},
      {"filter.learnable", "learnable complex filter instead of the low-pass mask"},
      {"filter.enabled", "false removes the filter layers"},
      {"guiding.P", "future horizon (alias model.P)"},
      {"guiding.kind", "kl | js | euclidean | cosine"},
      {"guiding.gamma", "attenuation coefficient"},
      {"guiding.beta", "guiding loss weight"},
      {"guiding.r2l", "future encoder reads the window right to left"},
      {"train.mode", "two_phase | joint"},
      {"train.epochs", "maximum epochs"},
      {"train.batch", "batch size"},
      {"train.seed", "training seed"},
      {"train.lr1", "future phase learning rate"},
      {"train.lr2", "past phase learning rate"},
      {"train.targets_per_user", "targets sampled per user per epoch (0 = all)"},
      {"train.patience", "early stopping patience on validation MRR (0 = off)"},
      {"train.precision", "float32 | float64"},
      {"train.future_weight", "future loss weight in joint mode"},
      {"train.use_future", "false trains the past encoder alone"},
      {"train.future_only", "train and predict with the future encoder alone"},
      {"train.time_budget", "wall-clock cap in seconds (0 = none)"},
      {"train.verbose", "print one line per epoch"},
      {"eval.seed", "negative sampling seed"},
      {"eval.protocol", "sampled99 | full"},
      {"synth.users", "synthetic users"},
      {"synth.items", "synthetic items"},
      {"synth.categories", "synthetic categories"},
      {"synth.drift_rate", "per-step probability of moving to the next category"},
      {"synth.min_length", "minimum sequence length"},
      {"synth.max_length", "maximum sequence length"},
      {"synth.focus", "probability of drawing from the favourite category"},
      {"synth.skew", "Zipf exponent inside a category"},
      {"synth.seed", "generator seed"},
  };
  return keys;
}

bool is_known_config_key(const std::string& key) {
  for (const auto& k : known_config_keys())
    if (k.name == key) return true;
  return false;
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

long long parse_int(const std::string& key, const std::string& v) {
  long long out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) {
    throw ConfigError(key + ": expected an integer, got '" + v + "'");
  }
  return out;
}

std::uint64_t parse_uint(const std::string& key, const std::string& v) {
  const long long x = parse_int(key, v);
  if (x < 0) throw ConfigError(key + ": must be >= 0");
  return static_cast<std::uint64_t>(x);
}

double parse_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double out = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return out;
  } catch (const std::exception&) {
    throw ConfigError(key + ": expected a number, got '" + v + "'");
  }
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError(key + ": expected true or false, got '" + v + "'");
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

void apply(RunConfig& c, const std::string& key, const std::string& v) {
  auto& e = c.model.encoder;
  auto& g = c.model.guiding;
  auto& t = c.train;
  auto& s = c.synth;
  if (key == "data.path") c.data_path = v;
  else if (key == "data.min_count") c.min_count = static_cast<int>(parse_int(key, v));
  else if (key == "model.d") e.dim = parse_int(key, v);
  else if (key == "model.L") e.length = parse_int(key, v);
  else if (key == "model.P" || key == "guiding.P") g.future = parse_int(key, v);
  else if (key == "model.G") e.filter_layers = parse_int(key, v);
  else if (key == "model.K") e.attention_layers = parse_int(key, v);
  else if (key == "model.ff") e.ff_dim = parse_int(key, v);
  else if (key == "model.dropout") e.dropout = parse_double(key, v);
  else if (key == "model.encoder") {
    if (v == "attention") e.kind = EncoderKind::attention;
    else if (v == "recurrent") e.kind = EncoderKind::recurrent;
    else throw ConfigError(key + ": expected attention or recurrent");
  } else if (key == "model.mask") {
    if (v == "causal") e.mask_mode = MaskMode::causal;
    else if (v == "literal") e.mask_mode = MaskMode::literal;
    else throw ConfigError(key + ": expected causal or literal");
  } else if (key == "model.init_std") e.init_std = parse_double(key, v);
  else if (key == "filter.q") e.quantile = parse_double(key, v);
  else if (key == "filter.learnable") e.learnable_filter = parse_bool(key, v);
  else if (key == "filter.enabled") e.use_filter = parse_bool(key, v);
  else if (key == "guiding.kind") {
    try {
      g.kind = parse_discrepancy(v);
    } catch (const ConfigError& err) {
      throw ConfigError(key + ": " + err.what());
    }
  } else if (key == "guiding.gamma") g.gamma = parse_double(key, v);
  else if (key == "guiding.beta") g.beta = parse_double(key, v);
  else if (key == "guiding.r2l") c.model.r2l_future = parse_bool(key, v);
  else if (key == "train.mode") t.mode = parse_train_mode(v);
  else if (key == "train.epochs") t.epochs = parse_int(key, v);
  else if (key == "train.batch") t.batch = parse_int(key, v);
  else if (key == "train.seed") t.seed = parse_uint(key, v);
  else if (key == "train.lr1") t.lr1 = parse_double(key, v);
  else if (key == "train.lr2") t.lr2 = parse_double(key, v);
  else if (key == "train.targets_per_user") t.targets_per_user = parse_int(key, v);
  else if (key == "train.patience") t.patience = parse_int(key, v);
  else if (key == "train.precision") {
    if (v == "float32") t.precision = Precision::float32;
    else if (v == "float64") t.precision = Precision::float64;
    else throw ConfigError(key + ": expected float32 or float64");
  } else if (key == "train.future_weight") t.future_loss_weight = parse_double(key, v);
  else if (key == "train.use_future") t.use_future = parse_bool(key, v);
  else if (key == "train.future_only") {
    t.future_only = parse_bool(key, v);
    c.model.inference = t.future_only ? InferenceEncoder::future : InferenceEncoder::past;
  } else if (key == "train.time_budget") t.time_budget = parse_double(key, v);
  else if (key == "train.verbose") t.verbose = parse_bool(key, v);
  else if (key == "eval.seed") c.eval_seed = parse_uint(key, v);
  else if (key == "eval.protocol") {
    try {
      c.eval_protocol = parse_protocol(v);
    } catch (const ConfigError& err) {
      throw ConfigError(key + ": " + err.what());
    }
  } else if (key == "synth.users") s.num_users = parse_int(key, v);
  else if (key == "synth.items") s.num_items = parse_int(key, v);
  else if (key == "synth.categories") s.num_categories = parse_int(key, v);
  else if (key == "synth.drift_rate") s.drift_rate = parse_double(key, v);
  else if (key == "synth.min_length") s.min_length = parse_int(key, v);
  else if (key == "synth.max_length") s.max_length = parse_int(key, v);
  else if (key == "synth.focus") s.focus = parse_double(key, v);
  else if (key == "synth.skew") s.popularity_skew = parse_double(key, v);
  else if (key == "synth.seed") s.seed = parse_uint(key, v);
  else throw ConfigError("unknown configuration key '" + key + "'");
}

}  // namespace

KeyValues parse_config_text(std::istream& in, const std::string& source) {
  KeyValues kv;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ParseError(source + ":" + std::to_string(lineno) + ": expected 'key = value'");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw ParseError(source + ":" + std::to_string(lineno) + ": empty key");
    if (!is_known_config_key(key)) {
      throw ConfigError(source + ":" + std::to_string(lineno) + ": unknown key '" + key + "'");
    }
    kv[key] = value;
  }
  return kv;
}

KeyValues read_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  return parse_config_text(in, path.string());
}

RunConfig resolve_config(const KeyValues& file, const KeyValues& overrides,
                         std::vector<std::string>* warnings) {
  RunConfig c;
  for (const auto& [k, v] : file) apply(c, k, v);
  for (const auto& [k, v] : overrides) apply(c, k, v);

  auto warn = [&](const std::string& w) {
    if (warnings) warnings->push_back(w);
  };
  const auto& e = c.model.encoder;
  const auto& g = c.model.guiding;
  if (e.dim < 1) throw ConfigError("model.d: must be >= 1");
  if (e.length < 1) throw ConfigError("model.L: must be >= 1");
  if (g.future < 0) throw ConfigError("model.P: must be >= 0");
  if (g.future >= e.length) throw ConfigError("model.P: must be smaller than model.L");
  if (e.filter_layers < 0) throw ConfigError("model.G: must be >= 0");
  if (e.attention_layers < 0) throw ConfigError("model.K: must be >= 0");
  if (e.filter_layers < 1 || e.filter_layers > 3) warn("model.G outside the usual range [1, 3]");
  if (e.attention_layers < 1 || e.attention_layers > 5) warn("model.K outside the usual range [1, 5]");
  if (e.ff_dim < 0) throw ConfigError("model.ff: must be >= 0");
  if (!(e.dropout >= 0.0 && e.dropout < 1.0)) throw ConfigError("model.dropout: must be in [0, 1)");
  if (!(e.quantile > 0.0)) throw ConfigError("filter.q: must be in (0, 1]");
  if (e.quantile > 1.0) warn("filter.q > 1: every frequency is kept (identity filter)");
  if (!(g.gamma >= 0.0)) throw ConfigError("guiding.gamma: must be >= 0");
  if (!(g.beta > 0.0)) throw ConfigError("guiding.beta: must be > 0");
  c.train.eval_seed = c.eval_seed;
  c.train.val_protocol = c.eval_protocol;
  c.train.validate();
  if (c.min_count < 1) throw ConfigError("data.min_count: must be >= 1");
  return c;
}

KeyValues echo_config(const RunConfig& c) {
  const auto& e = c.model.encoder;
  const auto& g = c.model.guiding;
  const auto& t = c.train;
  const auto& s = c.synth;
  auto b = [](bool v) { return std::string(v ? "true" : "false"); };
  return {
      {"data.path", c.data_path},
      {"data.min_count", std::to_string(c.min_count)},
      {"model.d", std::to_string(e.dim)},
      {"model.L", std::to_string(e.length)},
      {"model.P", std::to_string(g.future)},
      {"model.G", std::to_string(e.filter_layers)},
      {"model.K", std::to_string(e.attention_layers)},
      {"model.ff", std::to_string(e.ff_dim)},
      {"model.dropout", fmt(e.dropout)},
      {"model.encoder", e.kind == EncoderKind::attention ? "attention" : "recurrent"},
      {"model.mask", e.mask_mode == MaskMode::causal ? "causal" : "literal"},
      {"model.init_std", fmt(e.init_std)},
      {"filter.q", fmt(e.quantile)},
      {"filter.learnable", b(e.learnable_filter)},
      {"filter.enabled", b(e.use_filter)},
      {"guiding.kind", to_string(g.kind)},
      {"guiding.gamma", fmt(g.gamma)},
      {"guiding.beta", fmt(g.beta)},
      {"guiding.r2l", b(c.model.r2l_future)},
      {"train.mode", to_string(t.mode)},
      {"train.epochs", std::to_string(t.epochs)},
      {"train.batch", std::to_string(t.batch)},
      {"train.seed", std::to_string(t.seed)},
      {"train.lr1", fmt(t.lr1)},
      {"train.lr2", fmt(t.lr2)},
      {"train.targets_per_user", std::to_string(t.targets_per_user)},
      {"train.patience", std::to_string(t.patience)},
      {"train.precision", t.precision == Precision::float32 ? "float32" : "float64"},
      {"train.future_weight", fmt(t.future_loss_weight)},
      {"train.use_future", b(t.use_future)},
      {"train.future_only", b(t.future_only)},
      {"train.time_budget", fmt(t.time_budget)},
      {"train.verbose", b(t.verbose)},
      {"eval.seed", std::to_string(c.eval_seed)},
      {"eval.protocol", to_string(c.eval_protocol)},
      {"synth.users", std::to_string(s.num_users)},
      {"synth.items", std::to_string(s.num_items)},
      {"synth.categories", std::to_string(s.num_categories)},
      {"synth.drift_rate", fmt(s.drift_rate)},
      {"synth.min_length", std::to_string(s.min_length)},
      {"synth.max_length", std::to_string(s.max_length)},
      {"synth.focus", fmt(s.focus)},
      {"synth.skew", fmt(s.popularity_skew)},
      {"synth.seed", std::to_string(s.seed)},
  };
}

std::string format_config(const KeyValues& kv) {
  std::string out;
  for (const auto& k : known_config_keys()) {
    const auto it = kv.find(k.name);
    if (it != kv.end()) out += k.name + " = " + it->second + "\n";
  }
  return out;
}

}  // namespace oracle4rec
