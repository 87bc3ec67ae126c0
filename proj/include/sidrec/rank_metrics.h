// Copyright 2026-present the sidrec project
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

#pragma once

#include <cstdint>
#include <optional>
#include <span>

namespace sidrec {

struct ScoredExample {
    uint64_t user_id = 0;
    double score = 0.0;
    int label = 0;
};

// Probability that a random positive outscores a random negative, ties
// counting one half. Throws ArgumentError unless both classes are present.
double
Auc(std::span<const double> scores, std::span<const int> labels);

struct RankMetrics {
    double auc = 0.0;
    std::optional<double> uauc;  // unweighted mean of per-user AUC
    std::optional<double> gauc;  // impression-weighted mean of per-user AUC
    size_t users_with_both_classes = 0;
};

RankMetrics
ComputeRankMetrics(std::span<const ScoredExample> scored);

}  // namespace sidrec
