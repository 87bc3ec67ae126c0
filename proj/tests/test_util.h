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

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "sidrec/embedstore.h"
#include "sidrec/linalg.h"
#include "sidrec/rng.h"

namespace sidrec::testing {

inline std::filesystem::path
TempDir(const std::string& name) {
    auto dir = std::filesystem::path(SIDREC_TEST_TMP) / name;
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

inline std::string
ReadFile(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void
WriteFile(const std::filesystem::path& p, const std::string& bytes) {
    std::ofstream out(p, std::ios::binary);
    out << bytes;
}

inline Matrix
RandomMatrix(Rng& rng, size_t rows, size_t cols, double scale = 1.0) {
    Matrix m(rows, cols);
    for (size_t i = 0; i < rows; ++i) {
        for (size_t j = 0; j < cols; ++j) {
            m(i, j) = scale * rng.Normal();
        }
    }
    return m;
}

inline EmbeddingMatrix
RandomEmbeddings(Rng& rng, size_t n, uint32_t d, ItemId first_id = 1) {
    EmbeddingMatrix m(d);
    std::vector<float> v(d);
    for (size_t i = 0; i < n; ++i) {
        for (auto& x : v) {
            x = static_cast<float>(rng.Normal());
        }
        m.Append(first_id + i, v);
    }
    return m;
}

// Isotropic Gaussian mixture with `components` well separated centres.
inline Matrix
GaussianMixture(Rng& rng, size_t n, size_t d, size_t components, double spread, double noise) {
    Matrix centres = RandomMatrix(rng, components, d, spread);
    Matrix x(n, d);
    for (size_t i = 0; i < n; ++i) {
        size_t c = rng.Below(components);
        for (size_t j = 0; j < d; ++j) {
            x(i, j) = centres(c, j) + noise * rng.Normal();
        }
    }
    return x;
}

inline EmbeddingMatrix
ToEmbeddings(const Matrix& x, ItemId first_id = 1) {
    EmbeddingMatrix m(static_cast<uint32_t>(x.cols()));
    std::vector<float> v(x.cols());
    for (size_t i = 0; i < x.rows(); ++i) {
        for (size_t j = 0; j < x.cols(); ++j) {
            v[j] = static_cast<float>(x(i, j));
        }
        m.Append(first_id + i, v);
    }
    return m;
}

}  // namespace sidrec::testing
