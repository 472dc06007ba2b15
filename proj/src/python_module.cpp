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

// Python bindings for the core library.

#include <pybind11/complex.h>
#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "oracle4rec/cli.hpp"
#include "oracle4rec/encoder.hpp"
#include "oracle4rec/eval.hpp"
#include "oracle4rec/guiding.hpp"
#include "oracle4rec/numerics.hpp"
#include "oracle4rec/seqdata.hpp"

namespace py = pybind11;
namespace o4 = oracle4rec;

namespace {

using MatrixD = o4::Matrix<double>;
using ComplexD = o4::ComplexMatrix<double>;

std::tuple<int, std::string, std::string> run_cli(const std::vector<std::string>& args) {
  std::ostringstream out;
  std::ostringstream err;
  int code = 0;
  {
    py::gil_scoped_release release;
    code = o4::run_cli(args, out, err);
  }
  return {code, out.str(), err.str()};
}

std::tuple<ComplexD, std::vector<double>> rfft(const MatrixD& signal) {
  auto spec = o4::rfft_seq<double>(signal);
  return {spec.values, spec.freq};
}

MatrixD irfft(const ComplexD& values, o4::Index length) {
  o4::ComplexSpectrum<double> spec;
  spec.values = values;
  spec.length = length;
  return o4::irfft_seq<double>(spec, length);
}

double discrepancy(const std::string& kind, const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  if (a.size() != b.size()) throw py::value_error("a and b must have the same length");
  const o4::RowVector<double> ra = a.transpose();
  const o4::RowVector<double> rb = b.transpose();
  return o4::discrepancy<double>(o4::parse_discrepancy(kind), ra, rb);
}

py::dict dataset_stats(const o4::Dataset& d) {
  py::dict s;
  s["users"] = d.num_users;
  s["items"] = d.num_items;
  s["interactions"] = d.num_interactions();
  s["density"] = d.density();
  s["categories"] = d.category_names.size();
  return s;
}

py::dict load_stats(const std::string& path, int min_count) {
  return dataset_stats(o4::load_any_dataset(path, min_count));
}

py::dict synth(const std::string& path, o4::Index users, o4::Index items,
               o4::Index categories, double drift_rate, std::uint64_t seed) {
  o4::DriftConfig cfg;
  cfg.num_users = users;
  cfg.num_items = items;
  cfg.num_categories = categories;
  cfg.drift_rate = drift_rate;
  cfg.seed = seed;
  const auto d = o4::generate_synthetic_drift(cfg);
  o4::save_dataset(d, path);
  return dataset_stats(d);
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Past/future sequence encoders with oracle guiding.";

  py::register_exception<o4::Error>(m, "Error", PyExc_RuntimeError);

  m.def("run_cli", &run_cli, py::arg("args"),
        "Runs one CLI verb and returns (exit_code, stdout, stderr).");
  m.def("rfft", &rfft, py::arg("signal"),
        "Half spectrum along rows of an L x d signal; returns (values, freq).");
  m.def("irfft", &irfft, py::arg("values"), py::arg("length"));
  m.def("lowpass_operator", &o4::lowpass_operator<double>, py::arg("length"),
        py::arg("keep_count"));
  m.def("cutoff_keep_count", &o4::cutoff_keep_count, py::arg("num_freq"), py::arg("quantile"));
  m.def("attenuation_weights", &o4::attenuation_weights, py::arg("future"), py::arg("gamma"));
  m.def("discrepancy", &discrepancy, py::arg("kind"), py::arg("a"), py::arg("b"));
  m.def("hr_at_k", &o4::hr_at_k, py::arg("rank"), py::arg("k"));
  m.def("ndcg_at_k", &o4::ndcg_at_k, py::arg("rank"), py::arg("k"));
  m.def("mrr", &o4::mrr, py::arg("rank"));
  m.def("dataset_stats", &load_stats, py::arg("path"), py::arg("min_count") = 5,
        "Loads a dataset file or raw TSV log and returns its statistics.");
  m.def("synth", &synth, py::arg("path"), py::arg("users") = 200, py::arg("items") = 100,
        py::arg("categories") = 5, py::arg("drift_rate") = 0.1, py::arg("seed") = 1,
        "Writes a synthetic drift dataset and returns its statistics.");
}
