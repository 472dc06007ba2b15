# Copyright 2026 The oracle4rec Authors. All Rights Reserved.
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

"""Sequential recommendation with past/future encoders and oracle guiding."""

from oracle4rec._core import (
    Error,
    attenuation_weights,
    cutoff_keep_count,
    dataset_stats,
    discrepancy,
    hr_at_k,
    irfft,
    lowpass_operator,
    mrr,
    ndcg_at_k,
    rfft,
    run_cli,
    synth,
)

__all__ = [
    "Error",
    "attenuation_weights",
    "cutoff_keep_count",
    "dataset_stats",
    "discrepancy",
    "hr_at_k",
    "irfft",
    "lowpass_operator",
    "mrr",
    "ndcg_at_k",
    "rfft",
    "run_cli",
    "synth",
]
