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
#include <cstdint>
#include <numbers>
#include <random>
#include <vector>

namespace sidrec {

// Seeded generator with platform-independent distributions, derived from
// raw mt19937_64 output.
class Rng {
 public:
    explicit Rng(uint64_t seed) : engine_(seed) {
    }

    uint64_t
    Next() {
        return engine_();
    }

    // Uniform in [0, 1).
    double
    Uniform() {
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

    double
    Uniform(double lo, double hi) {
        return lo + (hi - lo) * Uniform();
    }

    // Uniform integer in [0, n). Rejection sampling removes modulo bias.
    uint64_t
    Below(uint64_t n) {
        if (n <= 1) {
            return 0;
        }
        uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        uint64_t v;
        do {
            v = engine_();
        } while (v >= limit);
        return v % n;
    }

    // Standard normal via Box-Muller.
    double
    Normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = Uniform();
        double u2 = Uniform();
        if (u1 < 1e-300) {
            u1 = 1e-300;
        }
        double r = std::sqrt(-2.0 * std::log(u1));
        double t = 2.0 * std::numbers::pi * u2;
        spare_ = r * std::sin(t);
        has_spare_ = true;
        return r * std::cos(t);
    }

    template <typename T>
    void
    Shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            size_t j = Below(i);
            std::swap(v[i - 1], v[j]);
        }
    }

 private:
    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace sidrec
