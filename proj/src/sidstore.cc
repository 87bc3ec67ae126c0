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

#include "sidrec/sidstore.h"

#include <algorithm>
#include <fstream>
#include <string>

#include "sidrec/binary_io.h"
#include "sidrec/error.h"

namespace sidrec {

uint64_t
Fnv1a64(std::span<const uint8_t> bytes, uint64_t basis) {
    uint64_t h = basis;
    for (uint8_t b : bytes) {
        h ^= b;
        h *= kFnvPrime;
    }
    return h;
}

uint64_t
SidHash(const SemanticId& sid) {
    uint8_t buf[16];
    for (int i = 0; i < 4; ++i) {
        buf[i] = static_cast<uint8_t>(sid.c1 >> (8 * i));
        buf[4 + i] = static_cast<uint8_t>(sid.c2 >> (8 * i));
    }
    for (int i = 0; i < 8; ++i) {
        buf[8 + i] = static_cast<uint8_t>(sid.c3 >> (8 * i));
    }
    return Fnv1a64(buf);
}

void
SidEdgeStore::Insert(ItemId item, const SemanticId& sid, uint32_t times) {
    InsertHash(item, SidHash(sid), times);
}

void
SidEdgeStore::InsertHash(ItemId item, uint64_t hash, uint32_t times) {
    if (times == 0) {
        throw ArgumentError("observation count must be positive");
    }
    auto [it, inserted] = item_hash_.emplace(item, hash);
    if (!inserted && it->second != hash) {
        throw ConsistencyError("item " + std::to_string(item) +
                               " observed under two different semantic ids");
    }
    auto& bucket = edges_[hash];
    auto pos = std::lower_bound(bucket.begin(), bucket.end(), item,
                                [](const EdgeEntry& e, ItemId id) { return e.item_id < id; });
    if (pos != bucket.end() && pos->item_id == item) {
        pos->count += times;
    } else {
        bucket.insert(pos, EdgeEntry{item, times});
    }
}

std::vector<EdgeEntry>
SidEdgeStore::Bucket(uint64_t hash) const {
    auto it = edges_.find(hash);
    if (it == edges_.end()) {
        return {};
    }
    return it->second;
}

std::vector<ItemId>
SidEdgeStore::ReverseLookupHash(uint64_t hash) const {
    auto entries = Bucket(hash);
    std::stable_sort(entries.begin(), entries.end(), [](const EdgeEntry& a, const EdgeEntry& b) {
        return a.count != b.count ? a.count > b.count : a.item_id < b.item_id;
    });
    std::vector<ItemId> out;
    out.reserve(entries.size());
    for (const auto& e : entries) {
        out.push_back(e.item_id);
    }
    return out;
}

std::vector<ItemId>
SidEdgeStore::ReverseLookup(const SemanticId& sid) const {
    return ReverseLookupHash(SidHash(sid));
}

std::optional<uint64_t>
SidEdgeStore::HashOf(ItemId item) const {
    auto it = item_hash_.find(item);
    if (it == item_hash_.end()) {
        return std::nullopt;
    }
    return it->second;
}

bool
SidEdgeStore::operator==(const SidEdgeStore& other) const {
    if (edges_.size() != other.edges_.size()) {
        return false;
    }
    for (auto a = edges_.begin(), b = other.edges_.begin(); a != edges_.end(); ++a, ++b) {
        if (a->first != b->first || a->second.size() != b->second.size()) {
            return false;
        }
        for (size_t i = 0; i < a->second.size(); ++i) {
            if (a->second[i].item_id != b->second[i].item_id ||
                a->second[i].count != b->second[i].count) {
                return false;
            }
        }
    }
    return true;
}

namespace {
constexpr char kStoreMagic[4] = {'S', 'I', 'D', 'E'};
constexpr uint32_t kStoreVersion = 1;
}  // namespace

void
SidEdgeStore::Save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw IoError("cannot open " + path.string() + " for writing");
    }
    BinaryWriter w(out);
    w.Bytes(std::string_view(kStoreMagic, 4));
    w.U32(kStoreVersion);
    uint64_t count = 0;
    for (const auto& [hash, bucket] : edges_) {
        count += bucket.size();
    }
    w.U64(count);
    for (const auto& [hash, bucket] : edges_) {
        for (const auto& e : bucket) {
            w.U64(hash);
            w.U64(e.item_id);
            w.U32(e.count);
        }
    }
    if (!out) {
        throw IoError("write failed for " + path.string());
    }
}

SidEdgeStore
SidEdgeStore::Load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open " + path.string());
    }
    BinaryReader r(in);
    if (r.Bytes(4) != std::string_view(kStoreMagic, 4)) {
        throw FormatError(path.string() + ": bad magic, not an edge store");
    }
    if (r.U32() != kStoreVersion) {
        throw FormatError(path.string() + ": unsupported edge store version");
    }
    uint64_t count = r.U64();
    SidEdgeStore store;
    uint64_t prev_hash = 0;
    ItemId prev_item = 0;
    for (uint64_t i = 0; i < count; ++i) {
        uint64_t hash = r.U64();
        ItemId item = r.U64();
        uint32_t c = r.U32();
        if (i > 0 && (hash < prev_hash || (hash == prev_hash && item <= prev_item))) {
            throw CorruptionError(path.string() + ": edges not sorted by (hash, item_id)");
        }
        if (c == 0) {
            throw CorruptionError(path.string() + ": zero observation count");
        }
        try {
            store.InsertHash(item, hash, c);
        } catch (const ConsistencyError& e) {
            throw CorruptionError(path.string() + ": " + e.what());
        }
        prev_hash = hash;
        prev_item = item;
    }
    if (!r.AtEnd()) {
        throw CorruptionError(path.string() + ": trailing bytes after edges");
    }
    return store;
}

CollisionReport
BuildCollisionReport(const SidEdgeStore& store,
                     std::span<const std::pair<ItemId, SemanticId>> queries,
                     std::span<const size_t> ks) {
    if (store.empty()) {
        throw ArgumentError("collision report needs a non-empty store");
    }
    if (queries.empty()) {
        throw ArgumentError("collision report needs at least one query");
    }
    CollisionReport report;
    report.items = store.total_items();
    report.buckets = store.bucket_count();
    size_t colliding_items = 0;
    size_t colliding_buckets = 0;
    for (const auto& [hash, bucket] : store.edges()) {
        if (bucket.size() >= 2) {
            colliding_items += bucket.size();
            ++colliding_buckets;
        }
    }
    report.collision_rate = 100.0 * colliding_items / static_cast<double>(report.items);
    report.bucket_collision_rate = 100.0 * colliding_buckets / static_cast<double>(report.buckets);

    std::vector<size_t> hits(ks.size(), 0);
    double returned = 0.0;
    for (const auto& [item, sid] : queries) {
        auto found = store.ReverseLookup(sid);
        returned += static_cast<double>(found.size());
        auto pos = std::find(found.begin(), found.end(), item);
        size_t rank = static_cast<size_t>(pos - found.begin());  // 0-based; size() when absent
        for (size_t i = 0; i < ks.size(); ++i) {
            if (pos != found.end() && rank < ks[i]) {
                ++hits[i];
            }
        }
    }
    report.queries = queries.size();
    report.edge_num = returned / static_cast<double>(queries.size());
    for (size_t i = 0; i < ks.size(); ++i) {
        report.hr_at_k[ks[i]] = hits[i] / static_cast<double>(queries.size());
    }
    return report;
}

}  // namespace sidrec
