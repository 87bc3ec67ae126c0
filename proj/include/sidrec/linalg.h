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
#include <span>
#include <vector>

namespace sidrec {

// Dense row-major matrix of doubles.
class Matrix {
 public:
    Matrix() = default;
    Matrix(size_t rows, size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {
    }

    size_t
    rows() const {
        return rows_;
    }
    size_t
    cols() const {
        return cols_;
    }
    bool
    empty() const {
        return data_.empty();
    }

    double&
    operator()(size_t r, size_t c) {
        return data_[r * cols_ + c];
    }
    double
    operator()(size_t r, size_t c) const {
        return data_[r * cols_ + c];
    }

    std::span<double>
    row(size_t r) {
        return {data_.data() + r * cols_, cols_};
    }
    std::span<const double>
    row(size_t r) const {
        return {data_.data() + r * cols_, cols_};
    }

    std::vector<double>&
    data() {
        return data_;
    }
    const std::vector<double>&
    data() const {
        return data_;
    }

    bool
    operator==(const Matrix&) const = default;

 private:
    size_t rows_ = 0;
    size_t cols_ = 0;
    std::vector<double> data_;
};

inline double
Dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        s += a[i] * b[i];
    }
    return s;
}

inline double
SquaredDistance(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        double d = a[i] - b[i];
        s += d * d;
    }
    return s;
}

}  // namespace sidrec
