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

#include "oracle4rec/seqdata.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <unordered_map>

#include "json.hpp"

namespace oracle4rec {

namespace {

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    out.push_back(s.substr(start, pos - start));
    if (pos == std::string::npos) break;
    start = pos + 1;
  }
  return out;
}

}  // namespace

std::vector<Interaction> parse_interactions(std::istream& in, const std::string& source) {
  std::vector<Interaction> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto cols = split(line, '\t');
    auto fail = [&](const std::string& why) {
      throw ParseError(source + ": line " + std::to_string(lineno) + ": " + why);
    };
    if (cols.size() < 3) fail("expected user, item and timestamp columns");
    if (cols.size() > 4) fail("too many columns");
    if (cols[0].empty() || cols[1].empty()) fail("empty user or item id");
    Interaction it;
    it.user_id = cols[0];
    it.item_id = cols[1];
    const auto& ts = cols[2];
    const auto [ptr, ec] = std::from_chars(ts.data(), ts.data() + ts.size(), it.timestamp);
    if (ec != std::errc() || ptr != ts.data() + ts.size()) fail("bad timestamp '" + ts + "'");
    if (it.timestamp < 0) fail("negative timestamp");
    if (cols.size() == 4 && !cols[3].empty()) {
      for (auto& c : split(cols[3], '|')) {
        if (c.empty()) continue;
        if (std::find(it.categories.begin(), it.categories.end(), c) == it.categories.end()) {
          it.categories.push_back(std::move(c));
        }
      }
    }
    out.push_back(std::move(it));
  }
  if (out.empty()) throw ParseError(source + ": empty input");
  return out;
}

std::vector<Interaction> load_interactions(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path.string());
  return parse_interactions(in, path.string());
}

std::size_t Dataset::num_interactions() const {
  std::size_t total = 0;
  for (const auto& s : sequences) total += s.size();
  return total;
}

double Dataset::density() const {
  if (num_users == 0 || num_items == 0) return 0.0;
  return static_cast<double>(num_interactions()) /
         (static_cast<double>(num_users) * static_cast<double>(num_items));
}

bool Dataset::has_categories() const {
  return std::any_of(item_categories.begin(), item_categories.end(),
                     [](const auto& c) { return !c.empty(); });
}

void Dataset::validate(Index min_length) const {
  if (static_cast<Index>(sequences.size()) != num_users ||
      static_cast<Index>(user_ids.size()) != num_users) {
    throw DataError("dataset: user count does not match sequences / id map");
  }
  if (static_cast<Index>(item_ids.size()) != num_items + 1) {
    throw DataError("dataset: item id map must have n + 1 entries");
  }
  if (!item_categories.empty() && static_cast<Index>(item_categories.size()) != num_items + 1) {
    throw DataError("dataset: item category map must have n + 1 entries");
  }
  for (Index u = 0; u < num_users; ++u) {
    const auto& s = sequences[u];
    if (static_cast<Index>(s.size()) < min_length) {
      throw DataError("dataset: user " + user_ids[u] + " has " + std::to_string(s.size()) +
                      " interactions, fewer than " + std::to_string(min_length));
    }
    for (ItemId v : s) {
      if (v < 1 || v > num_items) {
        throw DataError("dataset: item index " + std::to_string(v) + " out of range for user " +
                        user_ids[u]);
      }
    }
  }
}

Dataset build_dataset(const std::vector<Interaction>& interactions, int min_count) {
  if (min_count < 1) throw ConfigError("build_dataset: min_count must be >= 1");

  // Provisional dense ids in order of first appearance.
  std::unordered_map<std::string, std::int32_t> user_of, item_of;
  std::vector<std::string> users, items;
  std::vector<std::int32_t> iu(interactions.size()), ii(interactions.size());
  for (std::size_t k = 0; k < interactions.size(); ++k) {
    const auto& it = interactions[k];
    auto [uit, unew] = user_of.try_emplace(it.user_id, static_cast<std::int32_t>(users.size()));
    if (unew) users.push_back(it.user_id);
    auto [iit, inew] = item_of.try_emplace(it.item_id, static_cast<std::int32_t>(items.size()));
    if (inew) items.push_back(it.item_id);
    iu[k] = uit->second;
    ii[k] = iit->second;
  }

  // Iterative k-core: dropping items can push users under the threshold and
  // vice versa, so repeat until nothing changes.
  std::vector<char> alive(interactions.size(), 1);
  while (true) {
    std::vector<int> ucount(users.size(), 0), icount(items.size(), 0);
    for (std::size_t k = 0; k < alive.size(); ++k) {
      if (!alive[k]) continue;
      ++ucount[iu[k]];
      ++icount[ii[k]];
    }
    bool changed = false;
    for (std::size_t k = 0; k < alive.size(); ++k) {
      if (alive[k] && (ucount[iu[k]] < min_count || icount[ii[k]] < min_count)) {
        alive[k] = 0;
        changed = true;
      }
    }
    if (!changed) break;
  }

  Dataset ds;
  std::vector<std::int32_t> new_user(users.size(), -1), new_item(items.size(), -1);
  ds.item_ids.push_back("");
  for (std::size_t k = 0; k < alive.size(); ++k) {
    if (!alive[k]) continue;
    if (new_user[iu[k]] < 0) {
      new_user[iu[k]] = static_cast<std::int32_t>(ds.user_ids.size());
      ds.user_ids.push_back(users[iu[k]]);
    }
    if (new_item[ii[k]] < 0) {
      new_item[ii[k]] = static_cast<std::int32_t>(ds.item_ids.size());
      ds.item_ids.push_back(items[ii[k]]);
    }
  }
  if (ds.user_ids.empty()) throw DataError("build_dataset: no user survives filtering");
  ds.num_users = static_cast<Index>(ds.user_ids.size());
  ds.num_items = static_cast<Index>(ds.item_ids.size()) - 1;

  // Group per user, then a stable sort keeps input order on timestamp ties.
  std::vector<std::vector<std::size_t>> rows(ds.num_users);
  for (std::size_t k = 0; k < alive.size(); ++k) {
    if (alive[k]) rows[new_user[iu[k]]].push_back(k);
  }
  ds.sequences.resize(ds.num_users);
  for (Index u = 0; u < ds.num_users; ++u) {
    auto& r = rows[u];
    std::stable_sort(r.begin(), r.end(), [&](std::size_t a, std::size_t b) {
      return interactions[a].timestamp < interactions[b].timestamp;
    });
    ds.sequences[u].reserve(r.size());
    for (auto k : r) ds.sequences[u].push_back(new_item[ii[k]]);
  }

  std::unordered_map<std::string, std::int32_t> cat_of;
  ds.item_categories.assign(ds.num_items + 1, {});
  for (std::size_t k = 0; k < alive.size(); ++k) {
    if (!alive[k]) continue;
    auto& cats = ds.item_categories[new_item[ii[k]]];
    for (const auto& name : interactions[k].categories) {
      auto [cit, cnew] = cat_of.try_emplace(name, static_cast<std::int32_t>(ds.category_names.size()));
      if (cnew) ds.category_names.push_back(name);
      if (std::find(cats.begin(), cats.end(), cit->second) == cats.end()) cats.push_back(cit->second);
    }
  }
  for (auto& c : ds.item_categories) std::sort(c.begin(), c.end());
  return ds;
}

std::vector<Interaction> to_interactions(const Dataset& dataset) {
  std::vector<Interaction> out;
  out.reserve(dataset.num_interactions());
  for (Index u = 0; u < dataset.num_users; ++u) {
    const auto& s = dataset.sequences[u];
    for (std::size_t p = 0; p < s.size(); ++p) {
      Interaction it;
      it.user_id = dataset.user_ids[u];
      it.item_id = dataset.item_ids[s[p]];
      it.timestamp = static_cast<std::int64_t>(p);
      if (!dataset.item_categories.empty()) {
        for (auto c : dataset.item_categories[s[p]]) it.categories.push_back(dataset.category_names[c]);
      }
      out.push_back(std::move(it));
    }
  }
  return out;
}

SplitDataset split_leave_one_out(const Dataset& dataset) {
  SplitDataset split;
  split.train = dataset;
  split.full = dataset.sequences;
  split.valid_target.resize(dataset.num_users);
  split.test_target.resize(dataset.num_users);
  for (Index u = 0; u < dataset.num_users; ++u) {
    const auto& s = dataset.sequences[u];
    if (s.size() < 3) {
      throw DataError("split_leave_one_out: user " + dataset.user_ids[u] + " has only " +
                      std::to_string(s.size()) + " interactions (need 3)");
    }
    split.valid_target[u] = s[s.size() - 2];
    split.test_target[u] = s.back();
    split.train.sequences[u].resize(s.size() - 2);
    if (!split.train.preference_trajectory.empty()) {
      split.train.preference_trajectory[u].resize(s.size() - 2);
    }
  }
  return split;
}

std::vector<ItemId> build_history(std::span<const ItemId> seq, Index t, Index length) {
  const Index n = static_cast<Index>(seq.size());
  if (t < 2 || t > n + 1) {
    throw IndexError("build_history: target position " + std::to_string(t) +
                     " outside [2, " + std::to_string(n + 1) + "]");
  }
  std::vector<ItemId> out(length, 0);
  const Index take = std::min(t - 1, length);
  // positions t-take .. t-1 (1-based) land in the last `take` slots
  for (Index k = 0; k < take; ++k) out[length - take + k] = seq[t - 1 - take + k];
  return out;
}

GlobalWindow build_global(std::span<const ItemId> seq, Index t, Index length, Index future) {
  const Index n = static_cast<Index>(seq.size());
  if (t < 2 || t > n) {
    throw IndexError("build_global: target position " + std::to_string(t) + " outside [2, " +
                     std::to_string(n) + "]");
  }
  GlobalWindow g;
  g.end = std::min(t + future, n);
  g.available_future = std::min(future + 1, n - t + 1);
  g.items.assign(length, 0);
  const Index take = std::min(g.end, length);
  for (Index k = 0; k < take; ++k) g.items[length - take + k] = seq[g.end - take + k];
  return g;
}

SequencePair make_sequence_pair(std::span<const ItemId> seq, Index t, Index length,
                                Index future) {
  SequencePair p;
  p.history = build_history(seq, t, length);
  auto g = build_global(seq, t, length, future);
  p.global = std::move(g.items);
  p.target_index = t;
  p.available_future = g.available_future;
  return p;
}

ItemSet::ItemSet(std::span<const ItemId> items) : items_(items.begin(), items.end()) {
  std::sort(items_.begin(), items_.end());
  items_.erase(std::unique(items_.begin(), items_.end()), items_.end());
}

bool ItemSet::contains(ItemId item) const {
  return std::binary_search(items_.begin(), items_.end(), item);
}

ItemId sample_negative(const ItemSet& interacted, Index num_items, Rng& rng) {
  const auto items = interacted.items();
  const auto lo = std::lower_bound(items.begin(), items.end(), ItemId{1});
  const auto hi = std::upper_bound(items.begin(), items.end(), static_cast<ItemId>(num_items));
  if (hi - lo >= num_items) {
    throw DataError("sample_negative: user interacted with every item");
  }
  while (true) {
    const auto v = static_cast<ItemId>(1 + uniform_index(rng, static_cast<std::uint64_t>(num_items)));
    if (!interacted.contains(v)) return v;
  }
}

Dataset generate_synthetic_drift(const DriftConfig& cfg) {
  if (cfg.num_categories < 2) throw ConfigError("synthetic drift: need at least 2 categories");
  if (cfg.num_items < cfg.num_categories) {
    throw ConfigError("synthetic drift: fewer items than categories");
  }
  if (cfg.drift_rate < 0.0 || cfg.drift_rate > 1.0) {
    throw ConfigError("synthetic drift: drift_rate must lie in [0, 1]");
  }
  if (cfg.num_users < 1 || cfg.min_length < 3 || cfg.max_length < cfg.min_length) {
    throw ConfigError("synthetic drift: need num_users >= 1 and 3 <= min_length <= max_length");
  }
  if (cfg.focus < 0.0 || cfg.focus > 1.0) throw ConfigError("synthetic drift: focus outside [0, 1]");

  const Index C = cfg.num_categories;
  const Index n = cfg.num_items;
  Dataset ds;
  ds.num_users = cfg.num_users;
  ds.num_items = n;
  ds.item_ids.push_back("");
  for (Index i = 1; i <= n; ++i) ds.item_ids.push_back("i" + std::to_string(i));
  for (Index c = 0; c < C; ++c) ds.category_names.push_back("c" + std::to_string(c));

  // Contiguous blocks of items per category, Zipf popularity inside a block.
  std::vector<std::vector<ItemId>> members(C);
  ds.item_categories.assign(n + 1, {});
  for (Index i = 1; i <= n; ++i) {
    const auto c = static_cast<std::int32_t>((i - 1) * C / n);
    members[c].push_back(static_cast<ItemId>(i));
    ds.item_categories[i] = {c};
  }
  std::vector<std::vector<double>> cdf(C);
  for (Index c = 0; c < C; ++c) {
    double acc = 0.0;
    for (std::size_t r = 0; r < members[c].size(); ++r) {
      acc += 1.0 / std::pow(static_cast<double>(r + 1), cfg.popularity_skew);
      cdf[c].push_back(acc);
    }
    for (auto& x : cdf[c]) x /= acc;
  }

  Rng rng = derive_rng(cfg.seed, {0x5917});
  ds.sequences.resize(cfg.num_users);
  ds.preference_trajectory.resize(cfg.num_users);
  for (Index u = 0; u < cfg.num_users; ++u) {
    ds.user_ids.push_back("u" + std::to_string(u + 1));
    const Index len = cfg.min_length +
                      static_cast<Index>(uniform_index(rng, cfg.max_length - cfg.min_length + 1));
    auto fav = static_cast<std::int32_t>(uniform_index(rng, C));
    auto& seq = ds.sequences[u];
    auto& traj = ds.preference_trajectory[u];
    for (Index step = 0; step < len; ++step) {
      if (step > 0 && uniform01(rng) < cfg.drift_rate) fav = static_cast<std::int32_t>((fav + 1) % C);
      traj.push_back(fav);
      std::int32_t cat = fav;
      if (uniform01(rng) >= cfg.focus) cat = static_cast<std::int32_t>(uniform_index(rng, C));
      const double r = uniform01(rng);
      const auto& cd = cdf[cat];
      const auto pos = std::min<std::size_t>(std::lower_bound(cd.begin(), cd.end(), r) - cd.begin(),
                                             cd.size() - 1);
      seq.push_back(members[cat][pos]);
    }
  }
  return ds;
}

void save_dataset(const Dataset& ds, const std::filesystem::path& path) {
  nlohmann::json j;
  j["schema"] = "oracle4rec.dataset";
  j["version"] = 1;
  j["num_users"] = ds.num_users;
  j["num_items"] = ds.num_items;
  j["user_ids"] = ds.user_ids;
  j["item_ids"] = ds.item_ids;
  j["category_names"] = ds.category_names;
  j["item_categories"] = ds.item_categories;
  j["sequences"] = ds.sequences;
  if (!ds.preference_trajectory.empty()) j["preference_trajectory"] = ds.preference_trajectory;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << j.dump() << '\n';
}

Dataset load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
  if (j.value("schema", "") != "oracle4rec.dataset") {
    throw ParseError(path.string() + ": not a dataset file");
  }
  if (j.value("version", 0) != 1) throw ParseError(path.string() + ": unsupported dataset version");
  Dataset ds;
  try {
    ds.num_users = j.at("num_users").get<Index>();
    ds.num_items = j.at("num_items").get<Index>();
    ds.user_ids = j.at("user_ids").get<std::vector<std::string>>();
    ds.item_ids = j.at("item_ids").get<std::vector<std::string>>();
    ds.category_names = j.at("category_names").get<std::vector<std::string>>();
    ds.item_categories = j.at("item_categories").get<std::vector<std::vector<std::int32_t>>>();
    ds.sequences = j.at("sequences").get<std::vector<std::vector<ItemId>>>();
    if (j.contains("preference_trajectory")) {
      ds.preference_trajectory =
          j["preference_trajectory"].get<std::vector<std::vector<std::int32_t>>>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
  ds.validate();
  return ds;
}

Dataset load_any_dataset(const std::filesystem::path& path, int min_count) {
  if (path.extension() == ".json") return load_dataset(path);
  return build_dataset(load_interactions(path), min_count);
}

}  // namespace oracle4rec
