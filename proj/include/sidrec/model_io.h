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
#include <string>

#include "sidrec/binary_io.h"
#include "sidrec/linalg.h"

namespace sidrec {

// Versioned binary container shared by every trained model:
//   "SIDM" | u32 container version | u32 kind | kind-specific payload
// Doubles are written bit-for-bit, so save/load is an exact roundtrip.
enum class ModelKind : uint32_t {
    kResKmeansFsq = 1,
    kResKmeans = 2,
    kEsu = 3,
};

inline constexpr uint32_t kContainerVersion = 1;

inline void
WriteContainerHeader(BinaryWriter& w, ModelKind kind) {
    w.Bytes("SIDM");
    w.U32(kContainerVersion);
    w.U32(static_cast<uint32_t>(kind));
}

inline ModelKind
ReadContainerHeader(BinaryReader& r) {
    std::string magic;
    try {
        magic = r.Bytes(4);
    } catch (const CorruptionError&) {
        throw FormatError("model file too short");
    }
    if (magic != "SIDM") {
        throw FormatError("bad magic, not a model container");
    }
    uint32_t version = r.U32();
    if (version != kContainerVersion) {
        throw FormatError("unsupported model container version " + std::to_string(version));
    }
    uint32_t kind = r.U32();
    if (kind < 1 || kind > 3) {
        throw FormatError("unknown model kind " + std::to_string(kind));
    }
    return static_cast<ModelKind>(kind);
}

inline void
WriteMatrix(BinaryWriter& w, const Matrix& m) {
    w.U64(m.rows());
    w.U64(m.cols());
    for (double v : m.data()) {
        w.F64(v);
    }
}

inline Matrix
ReadMatrix(BinaryReader& r) {
    uint64_t rows = r.U64();
    uint64_t cols = r.U64();
    if (cols != 0 && rows > (1ULL << 32) / cols) {
        throw CorruptionError("matrix shape too large");
    }
    Matrix m(rows, cols);
    for (auto& v : m.data()) {
        v = r.F64();
    }
    return m;
}

}  // namespace sidrec
