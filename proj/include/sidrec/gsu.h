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
#include <istream>
#include <map>
#include <span>
#include <vector>

#include "sidrec/embedstore.h"

namespace sidrec {

struct BehaviorEvent {
    ItemId item = 0;
    int64_t timestamp = 0;
    bool click = false;
    bool order = false;
};

// Lifelong behaviour sequence. Repeated items are kept as-is.
struct UserSequence {
    uint64_t user_id = 0;
    std::vector<BehaviorEvent> events;

    // Throws ArgumentError when timestamps decrease.
    void
    Validate() const;
    // Items of the last n clicked events, oldest first.
    std::vector<ItemId>
    LastClicked(size_t n) const;
};

struct RetrievalEntry {
    ItemId item_id = 0;
    double score = 0.0;
    size_t position = 0;  // index in the scanned sequence
};

struct RetrievalResult {
    std::vector<RetrievalEntry> entries;  // scores non-increasing
    size_t k = 0;
};

// Exact top-k by inner product with the target. Equal scores keep the
// earlier sequence position first. `vectors` holds ids.size() rows of `dim`.
RetrievalResult
TopKGsu(std::span<const ItemId> ids,
        std::span<const float> vectors,
        size_t dim,
        std::span<const float> target,
        size_t k);
RetrievalResult
TopKGsu(const EmbeddingMatrix& history, std::span<const float> target, size_t k);

// Retrieves the top-`depth` subsequence of `history` for `target` using the
// embedding catalog; history items without an embedding are not candidates.
// The returned ids keep the retrieval order.
std::vector<ItemId>
SelectSubsequence(const EmbeddingMatrix& catalog,
                  std::span<const ItemId> history,
                  ItemId target,
                  size_t depth);

struct PooledCandidate {
    ItemId item_id = 0;
    double score = 0.0;
};

// Retrieves per_trigger_k catalog items for each trigger (a trigger never
// retrieves itself), merges them keeping each item's maximum score and ranks
// by score descending, then item id ascending.
std::vector<PooledCandidate>
PooledRetrieve(const EmbeddingMatrix& catalog, std::span<const ItemId> triggers, size_t per_trigger_k);

struct EvalUser {
    uint64_t user_id = 0;
    std::vector<ItemId> triggers;
    std::vector<ItemId> ground_truth;
};

struct PooledEvalOptions {
    size_t per_trigger_k = 50;
    std::vector<size_t> ks = {50, 100, 200, 500};
    size_t threads = 1;
};

struct HitRateReport {
    std::map<size_t, double> macro;  // mean over users of per-user hit fraction
    std::map<size_t, double> micro;  // total hits / total ground-truth items
    size_t users_evaluated = 0;
    size_t users_skipped = 0;  // no usable trigger or no ground truth
};

HitRateReport
PooledRetrieveEval(const EmbeddingMatrix& catalog,
                   std::span<const EvalUser> users,
                   const PooledEvalOptions& options);

// 100 * |mine \ baseline| / |mine| over distinct ids; 0 when mine is empty.
double
ExclusiveRate(std::span<const ItemId> mine, std::span<const ItemId> baseline);

struct RatingRecord {
    uint64_t user = 0;
    ItemId item = 0;
    double rating = 0.0;
    int64_t time = 0;
};

// CSV lines "user,item,rating,time". Blank and '#' lines are ignored; other
// unparseable lines are counted in *malformed.
std::vector<RatingRecord>
ParseRatingsCsv(std::istream& in, size_t* malformed);

struct PublicSample {
    uint64_t user = 0;
    ItemId target = 0;
    int label = 0;
    std::vector<ItemId> history;  // items strictly before the target, oldest first
    bool sampled_negative = false;
    std::vector<ItemId> retrieved;  // top retrieval_depth history items; filled by AttachRetrieval
};

struct PublicDatasetOptions {
    double positive_threshold = 4.0;
    size_t min_sequence_length = 20;
    double test_fraction = 0.15;
    size_t retrieval_depth = 50;
    uint64_t seed = 0;
};

struct PublicDataset {
    std::vector<PublicSample> train;
    std::vector<PublicSample> test;
    size_t malformed = 0;
    size_t users_total = 0;
    size_t users_too_short = 0;
    size_t users_without_positive = 0;
    size_t test_users = 0;
    size_t retrieval_depth = 0;
};

// Fills `retrieved` for every sample whose target has an embedding; returns
// the number of samples left without one.
size_t
AttachRetrieval(PublicDataset& dataset, const EmbeddingMatrix& catalog);

PublicDataset
PrepPublicDataset(std::span<const RatingRecord> records,
                  const PublicDatasetOptions& options,
                  size_t malformed = 0);

}  // namespace sidrec
