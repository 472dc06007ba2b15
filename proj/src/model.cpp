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

#include "oracle4rec/model.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "json.hpp"

namespace oracle4rec {

using nlohmann::json;

void ModelConfig::validate() const {
  const auto& e = encoder;
  auto fail = [](const std::string& key, const std::string& why) {
    throw ConfigError(key + ": " + why);
  };
  if (e.num_items < 1) fail("data.path", "dataset has no items");
  if (e.dim < 1) fail("model.d", "must be >= 1");
  if (e.length < 1) fail("model.L", "must be >= 1");
  if (e.ff_dim < 0) fail("model.ff", "must be >= 0");
  if (e.filter_layers < 0) fail("model.G", "must be >= 0");
  if (e.attention_layers < 0) fail("model.K", "must be >= 0");
  if (!(e.quantile > 0.0)) fail("filter.q", "must be > 0");
  if (!(e.dropout >= 0.0 && e.dropout < 1.0)) fail("model.dropout", "must be in [0, 1)");
  if (guiding.future < 0) fail("model.P", "must be >= 0");
  if (guiding.future >= e.length) fail("model.P", "must be smaller than model.L");
  if (!(guiding.gamma >= 0.0)) fail("guiding.gamma", "must be >= 0");
  if (!(guiding.beta >= 0.0)) fail("guiding.beta", "must be >= 0");
}

template <typename T>
ModelParams<T> init_model_params(const ModelConfig& cfg, std::uint64_t seed) {
  ModelParams<T> p;
  Rng shared_rng = derive_rng(seed, {0x5348u});
  Rng past_rng = derive_rng(seed, {0x5041u});
  Rng future_rng = derive_rng(seed, {0x4655u});
  p.shared = init_embeddings<T>(cfg.encoder, shared_rng);
  p.past = init_encoder_params<T>(cfg.encoder, past_rng);
  p.future = init_encoder_params<T>(cfg.encoder, future_rng);
  return p;
}

template <typename T>
ModelParams<T> zeros_like(const ModelParams<T>& p) {
  return {zeros_like(p.shared), zeros_like(p.past), zeros_like(p.future)};
}

template <typename To, typename From>
ModelParams<To> cast_params(const ModelParams<From>& p) {
  ModelParams<To> out;
  out.shared.items = p.shared.items.template cast<To>();
  out.shared.positions = p.shared.positions.template cast<To>();
  auto cast_encoder = [](const EncoderParams<From>& e) {
    EncoderParams<To> o;
    o.filters.resize(e.filters.size());
    o.attention.resize(e.attention.size());
    for_each_block(
        "", [](const std::string&, Matrix<To>& d, Matrix<From>& s) { d = s.template cast<To>(); },
        o, const_cast<EncoderParams<From>&>(e));
    return o;
  };
  out.past = cast_encoder(p.past);
  out.future = cast_encoder(p.future);
  return out;
}

template <typename T>
Index parameter_count(const ModelParams<T>& p) {
  Index total = 0;
  for_each_model_block([&](const std::string&, ParamGroup, Matrix<T>& m) { total += m.size(); },
                       const_cast<ModelParams<T>&>(p));
  return total;
}

template <typename T>
bool bitwise_equal(const Matrix<T>& a, const Matrix<T>& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) return false;
  return a.size() == 0 ||
         std::memcmp(a.data(), b.data(), sizeof(T) * static_cast<std::size_t>(a.size())) == 0;
}

template <typename T>
Model<T>::Model(const ModelConfig& cfg) : cfg_(cfg), encoder_(make_encoder<T>(cfg.encoder)) {}

template <typename T>
Matrix<T> Model<T>::predict(const ModelParams<T>& params, std::span<const ItemId> histories) const {
  const Index L = length();
  const Index batch = static_cast<Index>(histories.size()) / L;
  const auto& enc = cfg_.inference == InferenceEncoder::future ? params.future : params.past;
  Rng unused(0);
  const Matrix<T> out = encoder_->forward(histories, params.shared, enc, unused, false, nullptr);
  Matrix<T> rows(batch, out.cols());
  for (Index b = 0; b < batch; ++b) rows.row(b) = out.row(b * L + L - 1);
  return rows;
}

// ---------------------------------------------------------------------------
// Checkpoints.
// ---------------------------------------------------------------------------

namespace {

constexpr const char* kSchema = "oracle4rec.checkpoint";
constexpr int kVersion = 1;

json model_config_json(const ModelConfig& c) {
  const auto& e = c.encoder;
  return json{{"num_items", e.num_items},
              {"length", e.length},
              {"dim", e.dim},
              {"ff_dim", e.ff_dim},
              {"filter_layers", e.filter_layers},
              {"attention_layers", e.attention_layers},
              {"quantile", e.quantile},
              {"use_filter", e.use_filter},
              {"learnable_filter", e.learnable_filter},
              {"dropout", e.dropout},
              {"ln_eps", e.ln_eps},
              {"mask_mode", e.mask_mode == MaskMode::causal ? "causal" : "literal"},
              {"encoder", e.kind == EncoderKind::attention ? "attention" : "recurrent"},
              {"init_std", e.init_std},
              {"future", c.guiding.future},
              {"gamma", c.guiding.gamma},
              {"discrepancy", to_string(c.guiding.kind)},
              {"beta", c.guiding.beta},
              {"r2l_future", c.r2l_future},
              {"inference", c.inference == InferenceEncoder::past ? "past" : "future"}};
}

ModelConfig model_config_from_json(const json& j) {
  ModelConfig c;
  auto& e = c.encoder;
  e.num_items = j.at("num_items").get<Index>();
  e.length = j.at("length").get<Index>();
  e.dim = j.at("dim").get<Index>();
  e.ff_dim = j.at("ff_dim").get<Index>();
  e.filter_layers = j.at("filter_layers").get<Index>();
  e.attention_layers = j.at("attention_layers").get<Index>();
  e.quantile = j.at("quantile").get<double>();
  e.use_filter = j.at("use_filter").get<bool>();
  e.learnable_filter = j.at("learnable_filter").get<bool>();
  e.dropout = j.at("dropout").get<double>();
  e.ln_eps = j.at("ln_eps").get<double>();
  e.mask_mode = j.at("mask_mode").get<std::string>() == "literal" ? MaskMode::literal
                                                                  : MaskMode::causal;
  e.kind = j.at("encoder").get<std::string>() == "recurrent" ? EncoderKind::recurrent
                                                             : EncoderKind::attention;
  e.init_std = j.at("init_std").get<double>();
  c.guiding.future = j.at("future").get<Index>();
  c.guiding.gamma = j.at("gamma").get<double>();
  c.guiding.kind = parse_discrepancy(j.at("discrepancy").get<std::string>());
  c.guiding.beta = j.at("beta").get<double>();
  c.r2l_future = j.at("r2l_future").get<bool>();
  c.inference = j.at("inference").get<std::string>() == "future" ? InferenceEncoder::future
                                                                 : InferenceEncoder::past;
  return c;
}

std::uint32_t swap32(std::uint32_t v) { return __builtin_bswap32(v); }

void write_le_floats(std::ostream& out, const Matrix<float>& m) {
  static_assert(sizeof(float) == 4);
  if constexpr (std::endian::native == std::endian::little) {
    out.write(reinterpret_cast<const char*>(m.data()),
              static_cast<std::streamsize>(sizeof(float) * m.size()));
  } else {
    for (Index i = 0; i < m.size(); ++i) {
      auto u = swap32(std::bit_cast<std::uint32_t>(m.data()[i]));
      out.write(reinterpret_cast<const char*>(&u), 4);
    }
  }
}

void read_le_floats(std::istream& in, Matrix<float>& m) {
  in.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(sizeof(float) * m.size()));
  if constexpr (std::endian::native != std::endian::little) {
    for (Index i = 0; i < m.size(); ++i) {
      m.data()[i] = std::bit_cast<float>(swap32(std::bit_cast<std::uint32_t>(m.data()[i])));
    }
  }
}

}  // namespace

std::filesystem::path manifest_path_for(const std::filesystem::path& bin_path) {
  return bin_path.parent_path() / "manifest.json";
}

template <typename T>
void save_checkpoint(const std::filesystem::path& bin_path, const ModelConfig& cfg,
                     const ModelParams<T>& params, const ConfigEcho& echo) {
  if (!bin_path.parent_path().empty()) std::filesystem::create_directories(bin_path.parent_path());
  const ModelParams<float> p32 = cast_params<float>(params);
  json blocks = json::array();
  std::ofstream out(bin_path, std::ios::binary);
  if (!out) throw Error("cannot write checkpoint " + bin_path.string());
  std::size_t offset = 0;
  for_each_model_block(
      [&](const std::string& name, ParamGroup, Matrix<float>& m) {
        blocks.push_back({{"name", name}, {"rows", m.rows()}, {"cols", m.cols()}, {"offset", offset}});
        write_le_floats(out, m);
        offset += static_cast<std::size_t>(m.size()) * 4;
      },
      const_cast<ModelParams<float>&>(p32));
  out.close();
  json manifest{{"schema", kSchema},
                {"version", kVersion},
                {"dtype", "float32-le"},
                {"binary", bin_path.filename().string()},
                {"bytes", offset},
                {"model", model_config_json(cfg)},
                {"parameters", blocks},
                {"config", echo}};
  std::ofstream mf(manifest_path_for(bin_path));
  if (!mf) throw Error("cannot write manifest next to " + bin_path.string());
  mf << manifest.dump(2) << "\n";
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
  std::filesystem::path manifest_path = path;
  if (path.extension() != ".json") manifest_path = manifest_path_for(path);
  std::ifstream mf(manifest_path);
  if (!mf) throw Error("cannot open checkpoint manifest " + manifest_path.string());
  json manifest;
  try {
    manifest = json::parse(mf);
  } catch (const json::exception& e) {
    throw ParseError("malformed manifest " + manifest_path.string() + ": " + e.what());
  }
  if (manifest.value("schema", "") != kSchema || manifest.value("version", 0) != kVersion) {
    throw ParseError("unsupported checkpoint schema in " + manifest_path.string());
  }
  LoadedCheckpoint ck;
  ck.config = model_config_from_json(manifest.at("model"));
  ck.echo = manifest.at("config").get<ConfigEcho>();
  ck.params = init_model_params<float>(ck.config, 0);
  const auto bin_path = manifest_path.parent_path() / manifest.at("binary").get<std::string>();
  std::ifstream in(bin_path, std::ios::binary);
  if (!in) throw Error("cannot open checkpoint " + bin_path.string());
  const auto& blocks = manifest.at("parameters");
  std::size_t idx = 0;
  for_each_model_block(
      [&](const std::string& name, ParamGroup, Matrix<float>& m) {
        if (idx >= blocks.size() || blocks[idx].at("name") != name ||
            blocks[idx].at("rows").get<Index>() != m.rows() ||
            blocks[idx].at("cols").get<Index>() != m.cols()) {
          throw ParseError("checkpoint block mismatch at " + name);
        }
        read_le_floats(in, m);
        if (!in) throw ParseError("checkpoint truncated at " + name);
        ++idx;
      },
      ck.params);
  if (idx != blocks.size()) throw ParseError("checkpoint has unexpected extra blocks");
  return ck;
}

#define ORACLE4REC_INSTANTIATE(T)                                                        \
  template ModelParams<T> init_model_params<T>(const ModelConfig&, std::uint64_t);        \
  template ModelParams<T> zeros_like<T>(const ModelParams<T>&);                          \
  template Index parameter_count<T>(const ModelParams<T>&);                              \
  template bool bitwise_equal<T>(const Matrix<T>&, const Matrix<T>&);                    \
  template class Model<T>;                                                               \
  template void save_checkpoint<T>(const std::filesystem::path&, const ModelConfig&,     \
                                   const ModelParams<T>&, const ConfigEcho&);

ORACLE4REC_INSTANTIATE(float)
ORACLE4REC_INSTANTIATE(double)
template ModelParams<float> cast_params<float, float>(const ModelParams<float>&);
template ModelParams<float> cast_params<float, double>(const ModelParams<double>&);
template ModelParams<double> cast_params<double, float>(const ModelParams<float>&);
template ModelParams<double> cast_params<double, double>(const ModelParams<double>&);

#undef ORACLE4REC_INSTANTIATE

}  // namespace oracle4rec
