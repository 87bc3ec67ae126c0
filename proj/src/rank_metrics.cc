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

#include "sidrec/rank_metrics.h"

#include <algorithm>
#include <map>
#include <numeric>
#include <vector>

#include "sidrec/error.h"

namespace sidrec {

double
Auc(std::span<const double> scores, std::span<const int> labels) {
    if (scores.size() != labels.size()) {
        throw ArgumentError("scores and labels differ in length");
    }
    const size_t n = scores.size();
    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](size_t a, size_t b) { return scores[a] < scores[b]; });

    // Mann-Whitney U with mid-ranks for tied scores.
    double positive_rank_sum = 0.0;
    size_t positives = 0;
    for (size_t i = 0; i < n;) {
        size_t j = i;
        while (j < n && scores[order[j]] == scores[order[i]]) {
            ++j;
        }
        double mid_rank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
        for (size_t t = i; t < j; ++t) {
            if (labels[order[t]]) {
                positive_rank_sum += mid_rank;
                ++positives;
            }
        }
        i = j;
    }
    size_t negatives = n - positives;
    if (positives == 0 || negatives == 0) {
        throw ArgumentError("AUC is undefined without both positive and negative labels");
    }
    double p = static_cast<double>(positives);
    double u = positive_rank_sum - p * (p + 1.0) / 2.0;
    return u / (p * static_cast<double>(negatives));
}

RankMetrics
ComputeRankMetrics(std::span<const ScoredExample> scored) {
    RankMetrics out;
    std::vector<double> scores;
    std::vector<int> labels;
    std::map<uint64_t, std::pair<std::vector<double>, std::vector<int>>> per_user;
    for (const auto& s : scored) {
        scores.push_back(s.score);
        labels.push_back(s.label ? 1 : 0);
        auto& u = per_user[s.user_id];
        u.first.push_back(s.score);
        u.second.push_back(s.label ? 1 : 0);
    }
    out.auc = Auc(scores, labels);

    double sum = 0.0;
    double weighted = 0.0;
    double weight = 0.0;
    for (const auto& [user, data] : per_user) {
        const auto& ls = data.second;
        size_t pos = static_cast<size_t>(std::count(ls.begin(), ls.end(), 1));
        if (pos == 0 || pos == ls.size()) {
            continue;
        }
        double a = Auc(data.first, ls);
        sum += a;
        weighted += a * static_cast<double>(ls.size());
        weight += static_cast<double>(ls.size());
        ++out.users_with_both_classes;
    }
    if (out.users_with_both_classes > 0) {
        out.uauc = sum / static_cast<double>(out.users_with_both_classes);
        out.gauc = weighted / weight;
    }
    return out;
}

}  // namespace sidrec
