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
#include <filesystem>
#include <optional>
#include <span>
#include <unordered_map>
#include <vector>

#include "sidrec/linalg.h"

namespace sidrec {

using ItemId = uint64_t;

struct ItemEmbedding {
    ItemId item_id = 0;
    std::vector<float> vector;
};

// Ordered set of item vectors sharing one dimension. Rows are stored
// contiguously; item ids are unique.
class EmbeddingMatrix {
 public:
    EmbeddingMatrix() = default;
    explicit EmbeddingMatrix(uint32_t dim);

    // Throws ArgumentError on dimension mismatch, duplicate id or a
    // non-finite component.
    void
    Append(ItemId id, std::span<const float> vector);
    void
    Append(const ItemEmbedding& e) {
        Append(e.item_id, e.vector);
    }

    uint32_t
    dim() const {
        return dim_;
    }
    size_t
    size() const {
        return ids_.size();
    }
    bool
    empty() const {
        return ids_.empty();
    }
    ItemId
    id(size_t i) const {
        return ids_[i];
    }
    const std::vector<ItemId>&
    ids() const {
        return ids_;
    }
    std::span<const float>
    row(size_t i) const {
        return {values_.data() + i * dim_, dim_};
    }
    std::span<const float>
    values() const {
        return values_;
    }
    std::optional<size_t>
    Find(ItemId id) const;

    // Copy into a double-precision matrix for numeric work.
    Matrix
    ToMatrix() const;
    std::vector<double>
    RowAsDouble(size_t i) const;

    bool
    operator==(const EmbeddingMatrix& other) const;

 private:
    uint32_t dim_ = 0;
    std::vector<ItemId> ids_;
    std::vector<float> values_;
    std::unordered_map<ItemId, size_t> index_;
};

// Binary embedding file:
//   "SIDF" | u32 version=1 | u64 n | u32 d | n x (u64 item_id, d x f32)
// All integers and floats little-endian.
inline constexpr char kEmbeddingMagic[4] = {'S', 'I', 'D', 'F'};
inline constexpr uint32_t kEmbeddingVersion = 1;

EmbeddingMatrix
LoadEmbeddings(const std::filesystem::path& path);
void
SaveEmbeddings(const EmbeddingMatrix& m, const std::filesystem::path& path);

// Line-delimited JSON fixtures: {"item_id": 7, "vector": [0.1, ...]} per line.
EmbeddingMatrix
LoadEmbeddingsJsonl(const std::filesystem::path& path);

struct PcaModel {
    std::vector<double> mean;                // d
    Matrix components;                       // r x d, orthonormal rows
    std::vector<double> explained_variance;  // r, non-increasing
    double total_variance = 0.0;             // trace of the covariance

    size_t
    dim() const {
        return mean.size();
    }
    size_t
    rank() const {
        return components.rows();
    }

    std::vector<double>
    Project(std::span<const double> x) const;
    std::vector<double>
    Reconstruct(std::span<const double> z) const;
};

// Exact PCA through the eigendecomposition of the sample covariance
// (normalized by n - 1). Component signs are fixed so that the entry with
// the largest magnitude is positive.
PcaModel
PcaFit(const EmbeddingMatrix& m, size_t rank);

EmbeddingMatrix
PcaApply(const PcaModel& pca, const EmbeddingMatrix& m);

void
SavePca(const PcaModel& pca, const std::filesystem::path& path);
PcaModel
LoadPca(const std::filesystem::path& path);

}  // namespace sidrec
