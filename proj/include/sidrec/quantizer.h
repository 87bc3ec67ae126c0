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

#include <array>
#include <compare>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <vector>

#include "sidrec/embedstore.h"
#include "sidrec/linalg.h"

namespace sidrec {

struct KmeansCodebook {
    Matrix centroids;  // K x d

    size_t
    k() const {
        return centroids.rows();
    }
    size_t
    dim() const {
        return centroids.cols();
    }
    std::span<const double>
    centroid(size_t i) const {
        return centroids.row(i);
    }
};

struct KmeansOptions {
    size_t k = 8192;
    size_t max_iters = 50;
    uint64_t seed = 0;
    size_t threads = 1;
};

struct KmeansResult {
    KmeansCodebook codebook;
    std::vector<uint32_t> assignment;    // nearest centroid per point
    std::vector<double> inertia_history;  // one entry per assignment pass
    size_t iterations = 0;                // centroid update steps taken
    bool converged = false;               // last pass left assignments unchanged
};

// Lloyd's algorithm seeded by k-means++. Empty clusters are re-seeded with
// the point farthest from its centroid. Inertia is the mean squared distance
// to the nearest centroid and never increases between passes.
KmeansResult
KmeansFit(const Matrix& data, const KmeansOptions& options);

struct NearestRep {
    uint32_t index = 0;
    double squared_distance = 0.0;
};

// Exact argmin over squared Euclidean distance; ties go to the lower index.
NearestRep
NearestRepresentative(std::span<const double> x, const KmeansCodebook& codebook);

// Last-layer finite scalar quantizer. Each of the n projected coordinates is
// squashed by a sigmoid, scaled by `levels` and rounded, giving a digit in
// {0, ..., levels}; the digits form a mixed-radix code with radix levels + 1.
struct FsqQuantizer {
    Matrix projection;  // d x n, the learnable encoder
    Matrix decoder;     // n x d, maps centred digits back to residual space
    uint32_t levels = 1;

    size_t
    dims() const {
        return projection.cols();
    }
    size_t
    input_dim() const {
        return projection.rows();
    }
    uint64_t
    radix() const {
        return uint64_t{levels} + 1;
    }
    // Number of distinct packed codes, radix^dims.
    uint64_t
    code_space() const;
};

struct FsqCode {
    std::vector<uint32_t> digits;
    uint64_t packed = 0;
};

FsqCode
FsqEncode(const FsqQuantizer& q, std::span<const double> residual);

// packed = sum_i digit_i * radix^i
uint64_t
PackDigits(std::span<const uint32_t> digits, uint64_t radix);
std::vector<uint32_t>
UnpackDigits(uint64_t packed, size_t dims, uint64_t radix);

std::vector<double>
FsqDecode(const FsqQuantizer& q, std::span<const uint32_t> digits);

struct SemanticId {
    uint32_t c1 = 0;
    uint32_t c2 = 0;
    uint64_t c3 = 0;

    auto
    operator<=>(const SemanticId&) const = default;
};

using LevelMse = std::array<double, 3>;

// Common surface of the hybrid model and the all-K-means baseline.
class SidQuantizer {
 public:
    virtual ~SidQuantizer() = default;

    virtual size_t
    dim() const = 0;
    virtual SemanticId
    Assign(std::span<const double> embedding) const = 0;
    virtual std::vector<double>
    Reconstruct(const SemanticId& sid) const = 0;
    // Per-element mean squared residual after each of the three stages.
    virtual LevelMse
    MseReport(const Matrix& data) const = 0;
    virtual void
    Save(const std::filesystem::path& path) const = 0;
};

struct FsqTrainOptions {
    size_t epochs = 20;
    double lr = 0.05;
    size_t batch = 64;
};

struct QuantizerOptions {
    size_t k = 8192;
    size_t n_fsq = 13;
    uint32_t levels = 1;
    uint64_t seed = 0;
    size_t max_iters = 50;
    size_t threads = 1;
    FsqTrainOptions fsq;
};

class ResKmeansFsqModel : public SidQuantizer {
 public:
    KmeansCodebook level1;
    KmeansCodebook level2;
    FsqQuantizer fsq;
    LevelMse training_report{};
    double fsq_training_loss = 0.0;  // straight-through objective after the last epoch

    size_t
    dim() const override {
        return level1.dim();
    }
    SemanticId
    Assign(std::span<const double> embedding) const override;
    std::vector<double>
    Reconstruct(const SemanticId& sid) const override;
    LevelMse
    MseReport(const Matrix& data) const override;
    void
    Save(const std::filesystem::path& path) const override;

    // Residual left after both K-means levels.
    std::vector<double>
    SecondResidual(std::span<const double> embedding) const;

    bool
    operator==(const ResKmeansFsqModel& o) const;
};

// Three plain residual K-means levels; the third code is a centroid index.
class ResKmeansModel : public SidQuantizer {
 public:
    std::array<KmeansCodebook, 3> levels;
    LevelMse training_report{};

    size_t
    dim() const override {
        return levels[0].dim();
    }
    SemanticId
    Assign(std::span<const double> embedding) const override;
    std::vector<double>
    Reconstruct(const SemanticId& sid) const override;
    LevelMse
    MseReport(const Matrix& data) const override;
    void
    Save(const std::filesystem::path& path) const override;
};

// Fits level-1 K-means on the data, level-2 K-means on the first residuals
// and the FSQ encoder/decoder on the second residuals.
ResKmeansFsqModel
ResKmeansFsqFit(const Matrix& data, const QuantizerOptions& options);
ResKmeansFsqModel
ResKmeansFsqFit(const EmbeddingMatrix& data, const QuantizerOptions& options);

ResKmeansModel
ResKmeansFit(const Matrix& data, const QuantizerOptions& options);

struct FsqFit {
    FsqQuantizer quantizer;
    double loss = 0.0;  // per-element reconstruction MSE on the training residuals
};

// Trains a fresh quantizer on residuals: SGD with a straight-through
// estimator through rounding, then an exact ridge refit of the decoder on
// the final codes.
FsqFit
TrainFsq(const Matrix& residuals,
         size_t dims,
         uint32_t levels,
         const FsqTrainOptions& options,
         uint64_t seed);

LevelMse
LevelMseReport(const SidQuantizer& model, const EmbeddingMatrix& data);

std::unique_ptr<SidQuantizer>
LoadQuantizer(const std::filesystem::path& path);
ResKmeansFsqModel
LoadResKmeansFsq(const std::filesystem::path& path);

}  // namespace sidrec
