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

#include "sidrec/gsu.h"

#include <algorithm>
#include <cmath>
#include <optional>
#include <queue>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>
#include <unordered_set>

#include "sidrec/error.h"
#include "sidrec/parallel.h"
#include "sidrec/rng.h"

namespace sidrec {

void
UserSequence::Validate() const {
    for (size_t i = 1; i < events.size(); ++i) {
        if (events[i].timestamp < events[i - 1].timestamp) {
            throw ArgumentError("user " + std::to_string(user_id) +
                                " has decreasing timestamps at event " + std::to_string(i));
        }
    }
}

std::vector<ItemId>
UserSequence::LastClicked(size_t n) const {
    std::vector<ItemId> out;
    for (auto it = events.rbegin(); it != events.rend() && out.size() < n; ++it) {
        if (it->click) {
            out.push_back(it->item);
        }
    }
    std::reverse(out.begin(), out.end());
    return out;
}

namespace {

double
InnerProduct(std::span<const float> a, std::span<const float> b) {
    double s = 0.0;
    for (size_t j = 0; j < a.size(); ++j) {
        s += static_cast<double>(a[j]) * b[j];
    }
    return s;
}

// Ranking order: higher score first, then earlier position.
bool
Better(const RetrievalEntry& a, const RetrievalEntry& b) {
    return a.score != b.score ? a.score > b.score : a.position < b.position;
}

}  // namespace

RetrievalResult
TopKGsu(std::span<const ItemId> ids,
        std::span<const float> vectors,
        size_t dim,
        std::span<const float> target,
        size_t k) {
    if (k < 1) {
        throw ArgumentError("k must be at least 1");
    }
    if (target.size() != dim || vectors.size() != ids.size() * dim) {
        throw ArgumentError("history and target dimensions are inconsistent");
    }
    RetrievalResult result;
    result.k = k;
    // Min-heap on ranking order keeps the k best seen so far at O(T log k).
    std::priority_queue<RetrievalEntry, std::vector<RetrievalEntry>, decltype(&Better)> heap(
        &Better);
    for (size_t i = 0; i < ids.size(); ++i) {
        RetrievalEntry e{ids[i], InnerProduct(vectors.subspan(i * dim, dim), target), i};
        if (heap.size() < k) {
            heap.push(e);
        } else if (Better(e, heap.top())) {
            heap.pop();
            heap.push(e);
        }
    }
    result.entries.resize(heap.size());
    for (size_t i = heap.size(); i-- > 0;) {
        result.entries[i] = heap.top();
        heap.pop();
    }
    return result;
}

RetrievalResult
TopKGsu(const EmbeddingMatrix& history, std::span<const float> target, size_t k) {
    return TopKGsu(history.ids(), history.values(), history.dim(), target, k);
}

std::vector<ItemId>
SelectSubsequence(const EmbeddingMatrix& catalog,
                  std::span<const ItemId> history,
                  ItemId target,
                  size_t depth) {
    auto target_row = catalog.Find(target);
    if (!target_row) {
        throw ArgumentError("target item " + std::to_string(target) + " has no embedding");
    }
    std::vector<ItemId> ids;
    std::vector<float> vectors;
    for (ItemId item : history) {
        if (auto row = catalog.Find(item)) {
            ids.push_back(item);
            auto r = catalog.row(*row);
            vectors.insert(vectors.end(), r.begin(), r.end());
        }
    }
    auto result = TopKGsu(ids, vectors, catalog.dim(), catalog.row(*target_row), depth);
    std::vector<ItemId> out;
    out.reserve(result.entries.size());
    for (const auto& e : result.entries) {
        out.push_back(e.item_id);
    }
    return out;
}

std::vector<PooledCandidate>
PooledRetrieve(const EmbeddingMatrix& catalog, std::span<const ItemId> triggers, size_t per_trigger_k) {
    std::unordered_map<ItemId, double> best;
    for (ItemId trigger : triggers) {
        auto row = catalog.Find(trigger);
        if (!row) {
            continue;
        }
        // +1 for the trigger itself
        auto found = TopKGsu(catalog, catalog.row(*row), per_trigger_k + 1);
        size_t taken = 0;
        for (const auto& e : found.entries) {
            if (e.item_id == trigger) {
                continue;
            }
            if (taken++ == per_trigger_k) {
                break;
            }
            auto [it, inserted] = best.emplace(e.item_id, e.score);
            if (!inserted) {
                it->second = std::max(it->second, e.score);
            }
        }
    }
    std::vector<PooledCandidate> pooled;
    pooled.reserve(best.size());
    for (const auto& [item, score] : best) {
        pooled.push_back({item, score});
    }
    std::sort(pooled.begin(), pooled.end(), [](const PooledCandidate& a, const PooledCandidate& b) {
        return a.score != b.score ? a.score > b.score : a.item_id < b.item_id;
    });
    return pooled;
}

HitRateReport
PooledRetrieveEval(const EmbeddingMatrix& catalog,
                   std::span<const EvalUser> users,
                   const PooledEvalOptions& options) {
    if (options.per_trigger_k < 1) {
        throw ArgumentError("per_trigger_k must be at least 1");
    }
    const size_t nk = options.ks.size();
    // Per-user hit counts; a negative total marks a skipped user.
    std::vector<std::vector<size_t>> hits(users.size(), std::vector<size_t>(nk, 0));
    std::vector<long> totals(users.size(), -1);

    ParallelFor(users.size(), options.threads, [&](size_t begin, size_t end) {
        for (size_t u = begin; u < end; ++u) {
            const auto& user = users[u];
            bool any_trigger = std::any_of(user.triggers.begin(), user.triggers.end(),
                                           [&](ItemId t) { return catalog.Find(t).has_value(); });
            if (!any_trigger || user.ground_truth.empty()) {
                continue;
            }
            auto pooled = PooledRetrieve(catalog, user.triggers, options.per_trigger_k);
            std::unordered_map<ItemId, size_t> rank;
            for (size_t r = 0; r < pooled.size(); ++r) {
                rank.emplace(pooled[r].item_id, r);
            }
            std::set<ItemId> truth(user.ground_truth.begin(), user.ground_truth.end());
            for (ItemId item : truth) {
                auto it = rank.find(item);
                if (it == rank.end()) {
                    continue;
                }
                for (size_t i = 0; i < nk; ++i) {
                    if (it->second < options.ks[i]) {
                        ++hits[u][i];
                    }
                }
            }
            totals[u] = static_cast<long>(truth.size());
        }
    });

    HitRateReport report;
    std::vector<double> macro(nk, 0.0);
    std::vector<size_t> micro_hits(nk, 0);
    size_t micro_total = 0;
    for (size_t u = 0; u < users.size(); ++u) {
        if (totals[u] < 0) {
            ++report.users_skipped;
            continue;
        }
        ++report.users_evaluated;
        micro_total += static_cast<size_t>(totals[u]);
        for (size_t i = 0; i < nk; ++i) {
            macro[i] += hits[u][i] / static_cast<double>(totals[u]);
            micro_hits[i] += hits[u][i];
        }
    }
    for (size_t i = 0; i < nk; ++i) {
        double users_n = static_cast<double>(report.users_evaluated);
        report.macro[options.ks[i]] = report.users_evaluated ? macro[i] / users_n : 0.0;
        report.micro[options.ks[i]] =
            micro_total ? micro_hits[i] / static_cast<double>(micro_total) : 0.0;
    }
    return report;
}

double
ExclusiveRate(std::span<const ItemId> mine, std::span<const ItemId> baseline) {
    std::unordered_set<ItemId> mine_set(mine.begin(), mine.end());
    if (mine_set.empty()) {
        return 0.0;
    }
    std::unordered_set<ItemId> base_set(baseline.begin(), baseline.end());
    size_t exclusive = 0;
    for (ItemId id : mine_set) {
        exclusive += base_set.count(id) == 0;
    }
    return 100.0 * exclusive / static_cast<double>(mine_set.size());
}

std::vector<RatingRecord>
ParseRatingsCsv(std::istream& in, size_t* malformed) {
    std::vector<RatingRecord> out;
    size_t bad = 0;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        auto first = line.find_first_not_of(" \t");
        if (first == std::string::npos || line[first] == '#') {
            continue;
        }
        std::istringstream fields(line);
        std::string u, i, r, t, extra;
        RatingRecord rec;
        try {
            if (!std::getline(fields, u, ',') || !std::getline(fields, i, ',') ||
                !std::getline(fields, r, ',') || !std::getline(fields, t, ',') ||
                std::getline(fields, extra, ',')) {
                throw std::invalid_argument("field count");
            }
            size_t pos = 0;
            rec.user = std::stoull(u, &pos);
            if (pos != u.size()) throw std::invalid_argument("user");
            rec.item = std::stoull(i, &pos);
            if (pos != i.size()) throw std::invalid_argument("item");
            rec.rating = std::stod(r, &pos);
            if (pos != r.size() || !std::isfinite(rec.rating)) throw std::invalid_argument("rating");
            rec.time = std::stoll(t, &pos);
            if (pos != t.size()) throw std::invalid_argument("time");
        } catch (const std::exception&) {
            ++bad;
            continue;
        }
        out.push_back(rec);
    }
    if (malformed) {
        *malformed = bad;
    }
    return out;
}

PublicDataset
PrepPublicDataset(std::span<const RatingRecord> records,
                  const PublicDatasetOptions& options,
                  size_t malformed) {
    PublicDataset out;
    out.malformed = malformed;
    out.retrieval_depth = options.retrieval_depth;

    std::map<uint64_t, std::vector<RatingRecord>> by_user;
    std::set<ItemId> catalog;
    for (const auto& rec : records) {
        by_user[rec.user].push_back(rec);
        catalog.insert(rec.item);
    }
    std::vector<ItemId> catalog_items(catalog.begin(), catalog.end());
    out.users_total = by_user.size();

    struct Kept {
        uint64_t user;
        std::vector<PublicSample> samples;
    };
    std::vector<Kept> kept;
    Rng neg_rng(options.seed ^ 0xA5A5A5A5ULL);
    for (auto& [user, events] : by_user) {
        if (events.size() < options.min_sequence_length) {
            ++out.users_too_short;
            continue;
        }
        std::stable_sort(events.begin(), events.end(),
                         [](const RatingRecord& a, const RatingRecord& b) { return a.time < b.time; });
        auto is_pos = [&](const RatingRecord& r) { return r.rating >= options.positive_threshold; };
        std::optional<size_t> last_pos, last_neg;
        for (size_t i = 0; i < events.size(); ++i) {
            (is_pos(events[i]) ? last_pos : last_neg) = i;
        }
        if (!last_pos) {
            ++out.users_without_positive;
            continue;
        }
        auto history_before = [&](size_t idx) {
            std::vector<ItemId> h;
            for (size_t i = 0; i < idx; ++i) {
                h.push_back(events[i].item);
            }
            return h;
        };
        Kept k{user, {}};
        k.samples.push_back({user, events[*last_pos].item, 1, history_before(*last_pos), false, {}});
        if (last_neg) {
            k.samples.push_back({user, events[*last_neg].item, 0, history_before(*last_neg), false, {}});
        } else {
            // no low rating: sample an unseen item
            std::set<ItemId> seen;
            for (const auto& e : events) {
                seen.insert(e.item);
            }
            if (seen.size() < catalog_items.size()) {
                ItemId pick;
                do {
                    pick = catalog_items[neg_rng.Below(catalog_items.size())];
                } while (seen.count(pick));
                k.samples.push_back({user, pick, 0, history_before(events.size()), true, {}});
            }
        }
        kept.push_back(std::move(k));
    }

    std::vector<size_t> order(kept.size());
    for (size_t i = 0; i < order.size(); ++i) {
        order[i] = i;
    }
    Rng split_rng(options.seed);
    split_rng.Shuffle(order);
    out.test_users = static_cast<size_t>(std::llround(options.test_fraction * kept.size()));
    std::vector<bool> is_test(kept.size(), false);
    for (size_t i = 0; i < out.test_users; ++i) {
        is_test[order[i]] = true;
    }
    for (size_t i = 0; i < kept.size(); ++i) {
        auto& dst = is_test[i] ? out.test : out.train;
        for (auto& s : kept[i].samples) {
            dst.push_back(std::move(s));
        }
    }
    return out;
}

size_t
AttachRetrieval(PublicDataset& dataset, const EmbeddingMatrix& catalog) {
    size_t missing = 0;
    for (auto* part : {&dataset.train, &dataset.test}) {
        for (auto& s : *part) {
            if (!catalog.Find(s.target)) {
                s.retrieved.clear();
                ++missing;
                continue;
            }
            s.retrieved = SelectSubsequence(catalog, s.history, s.target, dataset.retrieval_depth);
        }
    }
    return missing;
}

}  // namespace sidrec
