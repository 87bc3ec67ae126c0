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

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <unordered_map>
#include <utility>
#include <vector>

#include "sidrec/embedstore.h"
#include "sidrec/quantizer.h"

namespace sidrec {

inline constexpr uint64_t kFnvOffsetBasis = 14695981039346656037ULL;
inline constexpr uint64_t kFnvPrime = 1099511628211ULL;

uint64_t
Fnv1a64(std::span<const uint8_t> bytes, uint64_t basis = kFnvOffsetBasis);

// FNV-1a over [c1 u32 LE][c2 u32 LE][c3 u64 LE].
uint64_t
SidHash(const SemanticId& sid);

struct EdgeEntry {
    ItemId item_id = 0;
    uint32_t count = 0;
};

// Hash(SID) -> observed items. Each item lives under exactly one hash.
class SidEdgeStore {
 public:
    // Throws ConsistencyError when the item was previously seen with another SID.
    void
    Insert(ItemId item, const SemanticId& sid, uint32_t times = 1);
    void
    InsertHash(ItemId item, uint64_t hash, uint32_t times = 1);

    // Items ordered by observation count descending, then item id ascending.
    std::vector<ItemId>
    ReverseLookup(const SemanticId& sid) const;
    std::vector<ItemId>
    ReverseLookupHash(uint64_t hash) const;
    std::vector<EdgeEntry>
    Bucket(uint64_t hash) const;

    std::optional<uint64_t>
    HashOf(ItemId item) const;
    size_t
    total_items() const {
        return item_hash_.size();
    }
    size_t
    bucket_count() const {
        return edges_.size();
    }
    bool
    empty() const {
        return edges_.empty();
    }
    const std::map<uint64_t, std::vector<EdgeEntry>>&
    edges() const {
        return edges_;
    }

    // "SIDE" | u32 version=1 | u64 count | count x (u64 hash, u64 item_id,
    // u32 count), little-endian, sorted by hash then item id.
    void
    Save(const std::filesystem::path& path) const;
    static SidEdgeStore
    Load(const std::filesystem::path& path);

    bool
    operator==(const SidEdgeStore& other) const;

 private:
    std::map<uint64_t, std::vector<EdgeEntry>> edges_;  // entries sorted by item id
    std::unordered_map<ItemId, uint64_t> item_hash_;
};

struct CollisionReport {
    double collision_rate = 0.0;         // % of items sharing a bucket with another item
    double bucket_collision_rate = 0.0;  // % of buckets holding >= 2 items (alternative reading)
    double edge_num = 0.0;               // mean reverse-lookup length over queries
    std::map<size_t, double> hr_at_k;    // fraction of queries whose item is in the top-K
    size_t queries = 0;
    size_t items = 0;
    size_t buckets = 0;
};

CollisionReport
BuildCollisionReport(const SidEdgeStore& store,
                     std::span<const std::pair<ItemId, SemanticId>> queries,
                     std::span<const size_t> ks);

}  // namespace sidrec
