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

#include "sidrec/embedstore.h"

#include <Eigen/Dense>
#include <cmath>
#include <fstream>
#include <numeric>
#include "json.hpp"
#include <string>

#include "sidrec/binary_io.h"
#include "sidrec/error.h"

namespace sidrec {

EmbeddingMatrix::EmbeddingMatrix(uint32_t dim) : dim_(dim) {
    if (dim == 0) {
        throw ArgumentError("embedding dimension must be positive");
    }
}

void
EmbeddingMatrix::Append(ItemId id, std::span<const float> vector) {
    if (vector.size() != dim_) {
        throw ArgumentError("item " + std::to_string(id) + " has dimension " +
                            std::to_string(vector.size()) + ", expected " + std::to_string(dim_));
    }
    for (float v : vector) {
        if (!std::isfinite(v)) {
            throw ArgumentError("item " + std::to_string(id) + " has a non-finite component");
        }
    }
    if (!index_.emplace(id, ids_.size()).second) {
        throw ArgumentError("duplicate item id " + std::to_string(id));
    }
    ids_.push_back(id);
    values_.insert(values_.end(), vector.begin(), vector.end());
}

std::optional<size_t>
EmbeddingMatrix::Find(ItemId id) const {
    auto it = index_.find(id);
    if (it == index_.end()) {
        return std::nullopt;
    }
    return it->second;
}

Matrix
EmbeddingMatrix::ToMatrix() const {
    Matrix out(size(), dim_);
    std::copy(values_.begin(), values_.end(), out.data().begin());
    return out;
}

std::vector<double>
EmbeddingMatrix::RowAsDouble(size_t i) const {
    auto r = row(i);
    return {r.begin(), r.end()};
}

bool
EmbeddingMatrix::operator==(const EmbeddingMatrix& other) const {
    if (dim_ != other.dim_ || ids_ != other.ids_ || values_.size() != other.values_.size()) {
        return false;
    }
    // bitwise
    for (size_t i = 0; i < values_.size(); ++i) {
        if (std::bit_cast<uint32_t>(values_[i]) != std::bit_cast<uint32_t>(other.values_[i])) {
            return false;
        }
    }
    return true;
}

EmbeddingMatrix
LoadEmbeddings(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open " + path.string());
    }
    BinaryReader reader(in);
    std::string magic;
    try {
        magic = reader.Bytes(4);
    } catch (const CorruptionError&) {
        throw FormatError(path.string() + ": file too short for embedding header");
    }
    if (magic != std::string_view(kEmbeddingMagic, 4)) {
        throw FormatError(path.string() + ": bad magic, not an embedding file");
    }
    uint32_t version = reader.U32();
    if (version != kEmbeddingVersion) {
        throw FormatError(path.string() + ": unsupported version " + std::to_string(version));
    }
    uint64_t n = reader.U64();
    uint32_t d = reader.U32();
    if (d == 0) {
        throw CorruptionError(path.string() + ": header declares dimension 0");
    }

    // Validate the payload size against the header before allocating.
    auto header_end = in.tellg();
    in.seekg(0, std::ios::end);
    auto file_end = in.tellg();
    in.seekg(header_end);
    uint64_t payload = static_cast<uint64_t>(file_end - header_end);
    uint64_t record = 8 + 4ULL * d;
    if (n > payload / record || payload != n * record) {
        throw CorruptionError(path.string() + ": header declares n=" + std::to_string(n) +
                              ", d=" + std::to_string(d) + " but payload holds " +
                              std::to_string(payload) + " bytes");
    }

    EmbeddingMatrix m(d);
    std::vector<float> buf(d);
    for (uint64_t i = 0; i < n; ++i) {
        ItemId id = reader.U64();
        for (auto& v : buf) {
            v = reader.F32();
        }
        try {
            m.Append(id, buf);
        } catch (const ArgumentError& e) {
            throw CorruptionError(path.string() + ": " + e.what());
        }
    }
    return m;
}

void
SaveEmbeddings(const EmbeddingMatrix& m, const std::filesystem::path& path) {
    if (m.empty()) {
        throw ArgumentError("refusing to save an empty embedding matrix");
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw IoError("cannot open " + path.string() + " for writing");
    }
    BinaryWriter w(out);
    w.Bytes(std::string_view(kEmbeddingMagic, 4));
    w.U32(kEmbeddingVersion);
    w.U64(m.size());
    w.U32(m.dim());
    for (size_t i = 0; i < m.size(); ++i) {
        w.U64(m.id(i));
        for (float v : m.row(i)) {
            w.F32(v);
        }
    }
    out.flush();
    if (!out) {
        throw IoError("write failed for " + path.string());
    }
}

EmbeddingMatrix
LoadEmbeddingsJsonl(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open " + path.string());
    }
    std::optional<EmbeddingMatrix> m;
    std::string line;
    size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) {
            continue;
        }
        std::vector<float> vec;
        ItemId id = 0;
        try {
            auto j = nlohmann::json::parse(line);
            id = j.at("item_id").get<ItemId>();
            vec = j.at("vector").get<std::vector<float>>();
        } catch (const nlohmann::json::exception& e) {
            throw FormatError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
        }
        if (!m) {
            if (vec.empty()) {
                throw FormatError(path.string() + ":" + std::to_string(line_no) + ": empty vector");
            }
            m.emplace(static_cast<uint32_t>(vec.size()));
        }
        m->Append(id, vec);
    }
    if (!m) {
        throw FormatError(path.string() + ": no embeddings found");
    }
    return std::move(*m);
}

std::vector<double>
PcaModel::Project(std::span<const double> x) const {
    if (x.size() != dim()) {
        throw ArgumentError("PCA input has dimension " + std::to_string(x.size()) + ", expected " +
                            std::to_string(dim()));
    }
    std::vector<double> centered(x.size());
    for (size_t j = 0; j < x.size(); ++j) {
        centered[j] = x[j] - mean[j];
    }
    std::vector<double> z(rank());
    for (size_t r = 0; r < rank(); ++r) {
        z[r] = Dot(components.row(r), centered);
    }
    return z;
}

std::vector<double>
PcaModel::Reconstruct(std::span<const double> z) const {
    if (z.size() != rank()) {
        throw ArgumentError("PCA code has length " + std::to_string(z.size()) + ", expected " +
                            std::to_string(rank()));
    }
    std::vector<double> x(mean);
    for (size_t r = 0; r < rank(); ++r) {
        auto c = components.row(r);
        for (size_t j = 0; j < x.size(); ++j) {
            x[j] += z[r] * c[j];
        }
    }
    return x;
}

PcaModel
PcaFit(const EmbeddingMatrix& m, size_t rank) {
    const size_t d = m.dim();
    const size_t n = m.size();
    if (rank < 1 || rank > d) {
        throw ArgumentError("PCA rank " + std::to_string(rank) + " outside [1, " +
                            std::to_string(d) + "]");
    }
    if (n < 2) {
        throw ArgumentError("PCA needs at least 2 rows");
    }

    PcaModel pca;
    pca.mean.assign(d, 0.0);
    for (size_t i = 0; i < n; ++i) {
        auto r = m.row(i);
        for (size_t j = 0; j < d; ++j) {
            pca.mean[j] += r[j];
        }
    }
    for (auto& v : pca.mean) {
        v /= static_cast<double>(n);
    }

    Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(d, d);
    Eigen::VectorXd centered(d);
    for (size_t i = 0; i < n; ++i) {
        auto r = m.row(i);
        for (size_t j = 0; j < d; ++j) {
            centered[j] = r[j] - pca.mean[j];
        }
        cov.selfadjointView<Eigen::Lower>().rankUpdate(centered);
    }
    cov = cov.selfadjointView<Eigen::Lower>();
    cov /= static_cast<double>(n - 1);

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
    if (solver.info() != Eigen::Success) {
        throw DataError("covariance eigendecomposition failed");
    }
    // Eigen returns ascending eigenvalues.
    const auto& values = solver.eigenvalues();
    const auto& vectors = solver.eigenvectors();
    pca.total_variance = cov.trace();
    pca.components = Matrix(rank, d);
    pca.explained_variance.resize(rank);
    for (size_t r = 0; r < rank; ++r) {
        Eigen::Index col = static_cast<Eigen::Index>(d - 1 - r);
        pca.explained_variance[r] = std::max(0.0, values[col]);
        Eigen::Index arg = 0;
        vectors.col(col).cwiseAbs().maxCoeff(&arg);
        double sign = vectors(arg, col) < 0 ? -1.0 : 1.0;
        for (size_t j = 0; j < d; ++j) {
            pca.components(r, j) = sign * vectors(static_cast<Eigen::Index>(j), col);
        }
    }
    return pca;
}

EmbeddingMatrix
PcaApply(const PcaModel& pca, const EmbeddingMatrix& m) {
    if (m.dim() != pca.dim()) {
        throw ArgumentError("PCA fitted on dimension " + std::to_string(pca.dim()) +
                            ", input has " + std::to_string(m.dim()));
    }
    EmbeddingMatrix out(static_cast<uint32_t>(pca.rank()));
    std::vector<float> z32(pca.rank());
    for (size_t i = 0; i < m.size(); ++i) {
        auto z = pca.Project(m.RowAsDouble(i));
        std::copy(z.begin(), z.end(), z32.begin());
        out.Append(m.id(i), z32);
    }
    return out;
}

namespace {
constexpr char kPcaMagic[4] = {'S', 'I', 'D', 'P'};
constexpr uint32_t kPcaVersion = 1;
}  // namespace

void
SavePca(const PcaModel& pca, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw IoError("cannot open " + path.string() + " for writing");
    }
    BinaryWriter w(out);
    w.Bytes(std::string_view(kPcaMagic, 4));
    w.U32(kPcaVersion);
    w.U64(pca.rank());
    w.U64(pca.dim());
    w.F64s(pca.mean);
    w.F64s(pca.components.data());
    w.F64s(pca.explained_variance);
    w.F64(pca.total_variance);
    if (!out) {
        throw IoError("write failed for " + path.string());
    }
}

PcaModel
LoadPca(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open " + path.string());
    }
    BinaryReader r(in);
    if (r.Bytes(4) != std::string_view(kPcaMagic, 4)) {
        throw FormatError(path.string() + ": bad magic, not a PCA model");
    }
    if (r.U32() != kPcaVersion) {
        throw FormatError(path.string() + ": unsupported PCA model version");
    }
    uint64_t rank = r.U64();
    uint64_t d = r.U64();
    PcaModel pca;
    pca.mean = r.F64s();
    auto comps = r.F64s();
    pca.explained_variance = r.F64s();
    pca.total_variance = r.F64();
    if (pca.mean.size() != d || comps.size() != rank * d || pca.explained_variance.size() != rank) {
        throw CorruptionError(path.string() + ": PCA arrays disagree with header");
    }
    pca.components = Matrix(rank, d);
    pca.components.data() = std::move(comps);
    return pca;
}

}  // namespace sidrec
