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

#include <bit>
#include <cstdint>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "sidrec/error.h"

namespace sidrec {

// Little-endian primitive writer. Byte order is fixed regardless of host.
class BinaryWriter {
 public:
    explicit BinaryWriter(std::ostream& out) : out_(out) {
    }

    void
    Bytes(std::string_view bytes) {
        out_.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    }
    void
    U8(uint8_t v) {
        out_.put(static_cast<char>(v));
    }
    void
    U32(uint32_t v) {
        Le(v, 4);
    }
    void
    U64(uint64_t v) {
        Le(v, 8);
    }
    void
    F32(float v) {
        U32(std::bit_cast<uint32_t>(v));
    }
    void
    F64(double v) {
        U64(std::bit_cast<uint64_t>(v));
    }
    void
    F64s(std::span<const double> values) {
        U64(values.size());
        for (double v : values) {
            F64(v);
        }
    }
    void
    String(std::string_view s) {
        U32(static_cast<uint32_t>(s.size()));
        Bytes(s);
    }
    bool
    good() const {
        return out_.good();
    }

 private:
    void
    Le(uint64_t v, int width) {
        char buf[8];
        for (int i = 0; i < width; ++i) {
            buf[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
        }
        out_.write(buf, width);
    }

    std::ostream& out_;
};

// Reader counterpart; every short read is reported as corruption.
class BinaryReader {
 public:
    explicit BinaryReader(std::istream& in) : in_(in) {
    }

    std::string
    Bytes(size_t n) {
        std::string s(n, '\0');
        in_.read(s.data(), static_cast<std::streamsize>(n));
        if (static_cast<size_t>(in_.gcount()) != n) {
            throw CorruptionError("unexpected end of stream");
        }
        return s;
    }
    uint8_t
    U8() {
        return static_cast<uint8_t>(Le(1));
    }
    uint32_t
    U32() {
        return static_cast<uint32_t>(Le(4));
    }
    uint64_t
    U64() {
        return Le(8);
    }
    float
    F32() {
        return std::bit_cast<float>(U32());
    }
    double
    F64() {
        return std::bit_cast<double>(U64());
    }
    std::vector<double>
    F64s(uint64_t max_len = (1ULL << 34)) {
        uint64_t n = U64();
        if (n > max_len) {
            throw CorruptionError("array length " + std::to_string(n) + " exceeds limit");
        }
        std::vector<double> v(n);
        for (auto& x : v) {
            x = F64();
        }
        return v;
    }
    std::string
    String() {
        return Bytes(U32());
    }
    // True when the stream has no bytes left.
    bool
    AtEnd() {
        return in_.peek() == std::char_traits<char>::eof();
    }

 private:
    uint64_t
    Le(int width) {
        unsigned char buf[8];
        in_.read(reinterpret_cast<char*>(buf), width);
        if (in_.gcount() != width) {
            throw CorruptionError("unexpected end of stream");
        }
        uint64_t v = 0;
        for (int i = 0; i < width; ++i) {
            v |= static_cast<uint64_t>(buf[i]) << (8 * i);
        }
        return v;
    }

    std::istream& in_;
};

}  // namespace sidrec
