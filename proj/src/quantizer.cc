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

#include "sidrec/quantizer.h"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <string>

#include "sidrec/error.h"
#include "sidrec/model_io.h"
#include "sidrec/parallel.h"
#include "sidrec/rng.h"

namespace sidrec {

namespace {

void
CheckFinite(const Matrix& data) {
    for (double v : data.data()) {
        if (!std::isfinite(v)) {
            throw DataError("training data contains NaN or Inf");
        }
    }
}

// Assign every point to its nearest centroid. Each worker writes only its
// own slots, so the result is independent of the thread count.
void
AssignAll(const Matrix& data,
          const KmeansCodebook& cb,
          size_t threads,
          std::vector<uint32_t>& assignment,
          std::vector<double>& distance) {
    ParallelFor(data.rows(), threads, [&](size_t begin, size_t end) {
        for (size_t i = begin; i < end; ++i) {
            auto nr = NearestRepresentative(data.row(i), cb);
            assignment[i] = nr.index;
            distance[i] = nr.squared_distance;
        }
    });
}

KmeansCodebook
KmeansPlusPlus(const Matrix& data, size_t k, Rng& rng, size_t threads) {
    const size_t n = data.rows();
    const size_t d = data.cols();
    KmeansCodebook cb{Matrix(k, d)};
    size_t first = rng.Below(n);
    std::copy_n(data.row(first).begin(), d, cb.centroids.row(0).begin());

    std::vector<double> d2(n);
    ParallelFor(n, threads, [&](size_t begin, size_t end) {
        for (size_t i = begin; i < end; ++i) {
            d2[i] = SquaredDistance(data.row(i), cb.centroid(0));
        }
    });
    for (size_t c = 1; c < k; ++c) {
        double total = std::accumulate(d2.begin(), d2.end(), 0.0);
        size_t pick = 0;
        if (total <= 0.0) {
            // Every point coincides with a chosen centroid; duplicates are fine.
            pick = rng.Below(n);
        } else {
            double target = rng.Uniform() * total;
            double acc = 0.0;
            pick = n - 1;
            for (size_t i = 0; i < n; ++i) {
                acc += d2[i];
                if (acc > target && d2[i] > 0.0) {
                    pick = i;
                    break;
                }
            }
            while (d2[pick] <= 0.0 && pick > 0) {
                --pick;
            }
        }
        std::copy_n(data.row(pick).begin(), d, cb.centroids.row(c).begin());
        ParallelFor(n, threads, [&](size_t begin, size_t end) {
            for (size_t i = begin; i < end; ++i) {
                d2[i] = std::min(d2[i], SquaredDistance(data.row(i), cb.centroid(c)));
            }
        });
    }
    return cb;
}

}  // namespace

NearestRep
NearestRepresentative(std::span<const double> x, const KmeansCodebook& codebook) {
    if (x.size() != codebook.dim()) {
        throw ArgumentError("vector dimension " + std::to_string(x.size()) +
                            " does not match codebook dimension " +
                            std::to_string(codebook.dim()));
    }
    NearestRep best{0, std::numeric_limits<double>::infinity()};
    for (size_t c = 0; c < codebook.k(); ++c) {
        double dist = SquaredDistance(x, codebook.centroid(c));
        if (dist < best.squared_distance) {
            best = {static_cast<uint32_t>(c), dist};
        }
    }
    return best;
}

KmeansResult
KmeansFit(const Matrix& data, const KmeansOptions& options) {
    const size_t n = data.rows();
    const size_t d = data.cols();
    const size_t k = options.k;
    if (k < 1) {
        throw ArgumentError("K must be at least 1");
    }
    if (n == 0) {
        throw ArgumentError("K-means needs non-empty data");
    }
    if (k > n) {
        throw ArgumentError("K=" + std::to_string(k) + " exceeds the number of points " +
                            std::to_string(n));
    }
    CheckFinite(data);

    Rng rng(options.seed);
    KmeansResult result;
    result.codebook = KmeansPlusPlus(data, k, rng, options.threads);
    auto& centroids = result.codebook.centroids;

    std::vector<uint32_t> assignment(n);
    std::vector<uint32_t> previous;
    std::vector<double> distance(n);
    std::vector<double> sums(k * d);
    std::vector<size_t> counts(k);

    for (size_t iter = 0;; ++iter) {
        AssignAll(data, result.codebook, options.threads, assignment, distance);
        double inertia = std::accumulate(distance.begin(), distance.end(), 0.0) / n;
        result.inertia_history.push_back(inertia);
        if (iter > 0 && assignment == previous) {
            result.converged = true;
            break;
        }
        if (iter == options.max_iters) {
            break;
        }
        previous = assignment;

        std::fill(sums.begin(), sums.end(), 0.0);
        std::fill(counts.begin(), counts.end(), 0);
        for (size_t i = 0; i < n; ++i) {
            auto row = data.row(i);
            double* s = sums.data() + size_t{assignment[i]} * d;
            for (size_t j = 0; j < d; ++j) {
                s[j] += row[j];
            }
            ++counts[assignment[i]];
        }
        std::vector<bool> taken(n, false);
        for (size_t c = 0; c < k; ++c) {
            auto centroid = centroids.row(c);
            if (counts[c] > 0) {
                for (size_t j = 0; j < d; ++j) {
                    centroid[j] = sums[c * d + j] / static_cast<double>(counts[c]);
                }
                continue;
            }
            // Empty cluster: move it onto the worst-served point.
            size_t far = n;
            for (size_t i = 0; i < n; ++i) {
                if (!taken[i] && (far == n || distance[i] > distance[far])) {
                    far = i;
                }
            }
            if (far == n) {
                far = 0;
            }
            taken[far] = true;
            std::copy_n(data.row(far).begin(), d, centroid.begin());
        }
        ++result.iterations;
    }
    result.assignment = std::move(assignment);
    return result;
}

uint64_t
FsqQuantizer::code_space() const {
    uint64_t space = 1;
    for (size_t i = 0; i < dims(); ++i) {
        if (space > std::numeric_limits<uint64_t>::max() / radix()) {
            throw ArgumentError("FSQ code space does not fit in 64 bits");
        }
        space *= radix();
    }
    return space;
}

uint64_t
PackDigits(std::span<const uint32_t> digits, uint64_t radix) {
    uint64_t packed = 0;
    uint64_t place = 1;
    for (size_t i = 0; i < digits.size(); ++i) {
        if (digits[i] >= radix) {
            throw ArgumentError("digit " + std::to_string(digits[i]) + " exceeds radix " +
                                std::to_string(radix));
        }
        packed += digits[i] * place;
        if (i + 1 < digits.size()) {
            place *= radix;
        }
    }
    return packed;
}

std::vector<uint32_t>
UnpackDigits(uint64_t packed, size_t dims, uint64_t radix) {
    std::vector<uint32_t> digits(dims);
    for (size_t i = 0; i < dims; ++i) {
        digits[i] = static_cast<uint32_t>(packed % radix);
        packed /= radix;
    }
    if (packed != 0) {
        throw ArgumentError("packed FSQ code out of range");
    }
    return digits;
}

namespace {

double
Sigmoid(double x) {
    return 1.0 / (1.0 + std::exp(-x));
}

// Digit value scaled into [-0.5, 0.5]; this is what the decoder consumes.
double
CentredDigit(double digit, uint32_t levels) {
    return digit / static_cast<double>(levels) - 0.5;
}

}  // namespace

FsqCode
FsqEncode(const FsqQuantizer& q, std::span<const double> residual) {
    if (residual.size() != q.input_dim()) {
        throw ArgumentError("FSQ input has dimension " + std::to_string(residual.size()) +
                            ", expected " + std::to_string(q.input_dim()));
    }
    const size_t n = q.dims();
    FsqCode code;
    code.digits.resize(n);
    for (size_t i = 0; i < n; ++i) {
        double u = 0.0;
        for (size_t j = 0; j < residual.size(); ++j) {
            u += residual[j] * q.projection(j, i);
        }
        // std::round rounds halfway cases away from zero.
        double digit = std::round(q.levels * Sigmoid(u));
        code.digits[i] = static_cast<uint32_t>(std::clamp(digit, 0.0, double(q.levels)));
    }
    code.packed = PackDigits(code.digits, q.radix());
    return code;
}

std::vector<double>
FsqDecode(const FsqQuantizer& q, std::span<const uint32_t> digits) {
    if (digits.size() != q.dims()) {
        throw ArgumentError("FSQ digit count mismatch");
    }
    std::vector<double> out(q.decoder.cols(), 0.0);
    for (size_t i = 0; i < digits.size(); ++i) {
        if (digits[i] > q.levels) {
            throw ArgumentError("FSQ digit out of range");
        }
        double c = CentredDigit(digits[i], q.levels);
        auto w = q.decoder.row(i);
        for (size_t j = 0; j < out.size(); ++j) {
            out[j] += c * w[j];
        }
    }
    return out;
}

FsqFit
TrainFsq(const Matrix& residuals,
         size_t dims,
         uint32_t levels,
         const FsqTrainOptions& options,
         uint64_t seed) {
    if (dims < 1 || levels < 1) {
        throw ArgumentError("FSQ needs at least one dimension and one level");
    }
    if (residuals.rows() == 0) {
        throw ArgumentError("FSQ training needs residuals");
    }
    const size_t n = residuals.rows();
    const size_t d = residuals.cols();
    FsqFit fit;
    FsqQuantizer& q = fit.quantizer;
    q.levels = levels;
    q.projection = Matrix(d, dims);
    q.decoder = Matrix(dims, d);
    (void)q.code_space();

    // Scale the encoder so projected coordinates start with unit variance.
    double mean_sq_norm = 0.0;
    for (double v : residuals.data()) {
        mean_sq_norm += v * v;
    }
    mean_sq_norm /= static_cast<double>(n);
    double scale = mean_sq_norm > 1e-24 ? 1.0 / std::sqrt(mean_sq_norm) : 1.0;
    Rng rng(seed ^ 0x9E3779B97F4A7C15ULL);
    for (auto& w : q.projection.data()) {
        w = rng.Normal() * scale;
    }

    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    const size_t batch = std::max<size_t>(1, options.batch);
    Matrix grad_w(d, dims);
    Matrix grad_out(dims, d);
    std::vector<double> s(dims), c(dims), dc(dims), err(d);

    for (size_t epoch = 0; epoch < options.epochs; ++epoch) {
        rng.Shuffle(order);
        for (size_t start = 0; start < n; start += batch) {
            size_t stop = std::min(n, start + batch);
            std::fill(grad_w.data().begin(), grad_w.data().end(), 0.0);
            std::fill(grad_out.data().begin(), grad_out.data().end(), 0.0);
            for (size_t b = start; b < stop; ++b) {
                auto x = residuals.row(order[b]);
                for (size_t i = 0; i < dims; ++i) {
                    double u = 0.0;
                    for (size_t j = 0; j < d; ++j) {
                        u += x[j] * q.projection(j, i);
                    }
                    s[i] = Sigmoid(u);
                    c[i] = CentredDigit(std::round(levels * s[i]), levels);
                }
                for (size_t j = 0; j < d; ++j) {
                    double rec = 0.0;
                    for (size_t i = 0; i < dims; ++i) {
                        rec += c[i] * q.decoder(i, j);
                    }
                    err[j] = 2.0 * (rec - x[j]) / static_cast<double>(d);
                }
                for (size_t i = 0; i < dims; ++i) {
                    double g = 0.0;
                    auto w_out = q.decoder.row(i);
                    auto g_out = grad_out.row(i);
                    for (size_t j = 0; j < d; ++j) {
                        g += w_out[j] * err[j];
                        g_out[j] += c[i] * err[j];
                    }
                    // Straight-through: d round(L s) / du taken as L s (1 - s).
                    dc[i] = g * s[i] * (1.0 - s[i]);
                }
                for (size_t j = 0; j < d; ++j) {
                    for (size_t i = 0; i < dims; ++i) {
                        grad_w(j, i) += x[j] * dc[i];
                    }
                }
            }
            double step = options.lr / static_cast<double>(stop - start);
            for (size_t t = 0; t < grad_w.data().size(); ++t) {
                q.projection.data()[t] -= step * grad_w.data()[t];
            }
            for (size_t t = 0; t < grad_out.data().size(); ++t) {
                q.decoder.data()[t] -= step * grad_out.data()[t];
            }
        }
    }

    // Ridge refit of the decoder on the final codes.
    Eigen::MatrixXd codes(n, dims);
    Eigen::MatrixXd target(n, d);
    for (size_t r = 0; r < n; ++r) {
        auto code = FsqEncode(q, residuals.row(r));
        for (size_t i = 0; i < dims; ++i) {
            codes(r, i) = CentredDigit(code.digits[i], levels);
        }
        for (size_t j = 0; j < d; ++j) {
            target(r, j) = residuals(r, j);
        }
    }
    Eigen::MatrixXd gram = codes.transpose() * codes;
    double ridge = 1e-9 * std::max(1.0, gram.trace() / static_cast<double>(dims));
    gram.diagonal().array() += ridge;
    Eigen::MatrixXd w_out = gram.ldlt().solve(codes.transpose() * target);
    for (size_t i = 0; i < dims; ++i) {
        for (size_t j = 0; j < d; ++j) {
            q.decoder(i, j) = w_out(i, j);
        }
    }
    Eigen::MatrixXd diff = target - codes * w_out;
    fit.loss = diff.squaredNorm() / static_cast<double>(n * d);
    return fit;
}

namespace {

void
Subtract(std::vector<double>& v, std::span<const double> c) {
    for (size_t j = 0; j < v.size(); ++j) {
        v[j] -= c[j];
    }
}

double
SumSquares(std::span<const double> v) {
    return Dot(v, v);
}

void
CheckDim(size_t got, size_t want) {
    if (got != want) {
        throw ArgumentError("embedding dimension " + std::to_string(got) +
                            " does not match model dimension " + std::to_string(want));
    }
}

Matrix
ResidualsAfter(const Matrix& data, const KmeansCodebook& cb, const std::vector<uint32_t>& assign) {
    Matrix out = data;
    for (size_t i = 0; i < data.rows(); ++i) {
        auto r = out.row(i);
        auto c = cb.centroid(assign[i]);
        for (size_t j = 0; j < r.size(); ++j) {
            r[j] -= c[j];
        }
    }
    return out;
}

KmeansOptions
LevelOptions(const QuantizerOptions& o, uint64_t level) {
    return KmeansOptions{o.k, o.max_iters, o.seed + 0x100 * level, o.threads};
}

}  // namespace

std::vector<double>
ResKmeansFsqModel::SecondResidual(std::span<const double> embedding) const {
    CheckDim(embedding.size(), dim());
    std::vector<double> r(embedding.begin(), embedding.end());
    Subtract(r, level1.centroid(NearestRepresentative(r, level1).index));
    Subtract(r, level2.centroid(NearestRepresentative(r, level2).index));
    return r;
}

SemanticId
ResKmeansFsqModel::Assign(std::span<const double> embedding) const {
    CheckDim(embedding.size(), dim());
    SemanticId sid;
    std::vector<double> r(embedding.begin(), embedding.end());
    sid.c1 = NearestRepresentative(r, level1).index;
    Subtract(r, level1.centroid(sid.c1));
    sid.c2 = NearestRepresentative(r, level2).index;
    Subtract(r, level2.centroid(sid.c2));
    sid.c3 = FsqEncode(fsq, r).packed;
    return sid;
}

std::vector<double>
ResKmeansFsqModel::Reconstruct(const SemanticId& sid) const {
    if (sid.c1 >= level1.k() || sid.c2 >= level2.k()) {
        throw ArgumentError("semantic id K-means code out of range");
    }
    if (sid.c3 >= fsq.code_space()) {
        throw ArgumentError("semantic id FSQ code out of range");
    }
    auto out = FsqDecode(fsq, UnpackDigits(sid.c3, fsq.dims(), fsq.radix()));
    auto a = level1.centroid(sid.c1);
    auto b = level2.centroid(sid.c2);
    for (size_t j = 0; j < out.size(); ++j) {
        out[j] += a[j] + b[j];
    }
    return out;
}

LevelMse
ResKmeansFsqModel::MseReport(const Matrix& data) const {
    if (data.rows() == 0) {
        throw ArgumentError("MSE report needs data");
    }
    CheckDim(data.cols(), dim());
    LevelMse sums{};
    for (size_t i = 0; i < data.rows(); ++i) {
        auto x = data.row(i);
        std::vector<double> r(x.begin(), x.end());
        Subtract(r, level1.centroid(NearestRepresentative(r, level1).index));
        sums[0] += SumSquares(r);
        Subtract(r, level2.centroid(NearestRepresentative(r, level2).index));
        sums[1] += SumSquares(r);
        Subtract(r, FsqDecode(fsq, FsqEncode(fsq, r).digits));
        sums[2] += SumSquares(r);
    }
    double denom = static_cast<double>(data.rows() * data.cols());
    return {sums[0] / denom, sums[1] / denom, sums[2] / denom};
}

bool
ResKmeansFsqModel::operator==(const ResKmeansFsqModel& o) const {
    auto bits = [](double v) { return std::bit_cast<uint64_t>(v); };
    for (size_t i = 0; i < 3; ++i) {
        if (bits(training_report[i]) != bits(o.training_report[i])) {
            return false;
        }
    }
    return level1.centroids == o.level1.centroids && level2.centroids == o.level2.centroids &&
           fsq.projection == o.fsq.projection && fsq.decoder == o.fsq.decoder &&
           fsq.levels == o.fsq.levels && bits(fsq_training_loss) == bits(o.fsq_training_loss);
}

ResKmeansFsqModel
ResKmeansFsqFit(const Matrix& data, const QuantizerOptions& options) {
    if (options.k > data.rows()) {
        throw ArgumentError("need at least K points to fit K centroids");
    }
    ResKmeansFsqModel model;
    auto first = KmeansFit(data, LevelOptions(options, 1));
    model.level1 = std::move(first.codebook);
    Matrix m1 = ResidualsAfter(data, model.level1, first.assignment);

    auto second = KmeansFit(m1, LevelOptions(options, 2));
    model.level2 = std::move(second.codebook);
    Matrix m2 = ResidualsAfter(m1, model.level2, second.assignment);

    auto fsq = TrainFsq(m2, options.n_fsq, options.levels, options.fsq, options.seed + 0x300);
    model.fsq = std::move(fsq.quantizer);
    model.fsq_training_loss = fsq.loss;
    model.training_report = model.MseReport(data);
    return model;
}

ResKmeansFsqModel
ResKmeansFsqFit(const EmbeddingMatrix& data, const QuantizerOptions& options) {
    return ResKmeansFsqFit(data.ToMatrix(), options);
}

SemanticId
ResKmeansModel::Assign(std::span<const double> embedding) const {
    CheckDim(embedding.size(), dim());
    std::vector<double> r(embedding.begin(), embedding.end());
    uint32_t codes[3];
    for (size_t l = 0; l < 3; ++l) {
        codes[l] = NearestRepresentative(r, levels[l]).index;
        Subtract(r, levels[l].centroid(codes[l]));
    }
    return {codes[0], codes[1], codes[2]};
}

std::vector<double>
ResKmeansModel::Reconstruct(const SemanticId& sid) const {
    if (sid.c1 >= levels[0].k() || sid.c2 >= levels[1].k() || sid.c3 >= levels[2].k()) {
        throw ArgumentError("semantic id code out of range");
    }
    std::vector<double> out(dim(), 0.0);
    const uint64_t codes[3] = {sid.c1, sid.c2, sid.c3};
    for (size_t l = 0; l < 3; ++l) {
        auto c = levels[l].centroid(codes[l]);
        for (size_t j = 0; j < out.size(); ++j) {
            out[j] += c[j];
        }
    }
    return out;
}

LevelMse
ResKmeansModel::MseReport(const Matrix& data) const {
    if (data.rows() == 0) {
        throw ArgumentError("MSE report needs data");
    }
    CheckDim(data.cols(), dim());
    LevelMse sums{};
    for (size_t i = 0; i < data.rows(); ++i) {
        auto x = data.row(i);
        std::vector<double> r(x.begin(), x.end());
        for (size_t l = 0; l < 3; ++l) {
            Subtract(r, levels[l].centroid(NearestRepresentative(r, levels[l]).index));
            sums[l] += SumSquares(r);
        }
    }
    double denom = static_cast<double>(data.rows() * data.cols());
    return {sums[0] / denom, sums[1] / denom, sums[2] / denom};
}

ResKmeansModel
ResKmeansFit(const Matrix& data, const QuantizerOptions& options) {
    ResKmeansModel model;
    Matrix residual = data;
    for (size_t l = 0; l < 3; ++l) {
        auto fit = KmeansFit(residual, LevelOptions(options, l + 1));
        residual = ResidualsAfter(residual, fit.codebook, fit.assignment);
        model.levels[l] = std::move(fit.codebook);
    }
    model.training_report = model.MseReport(data);
    return model;
}

LevelMse
LevelMseReport(const SidQuantizer& model, const EmbeddingMatrix& data) {
    if (data.empty()) {
        throw ArgumentError("MSE report needs data");
    }
    return model.MseReport(data.ToMatrix());
}

// Serialization. Payloads follow the container header from model_io.h.

void
ResKmeansFsqModel::Save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw IoError("cannot open " + path.string() + " for writing");
    }
    BinaryWriter w(out);
    WriteContainerHeader(w, ModelKind::kResKmeansFsq);
    WriteMatrix(w, level1.centroids);
    WriteMatrix(w, level2.centroids);
    w.U32(fsq.levels);
    WriteMatrix(w, fsq.projection);
    WriteMatrix(w, fsq.decoder);
    for (double v : training_report) {
        w.F64(v);
    }
    w.F64(fsq_training_loss);
    if (!out) {
        throw IoError("write failed for " + path.string());
    }
}

void
ResKmeansModel::Save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw IoError("cannot open " + path.string() + " for writing");
    }
    BinaryWriter w(out);
    WriteContainerHeader(w, ModelKind::kResKmeans);
    for (const auto& level : levels) {
        WriteMatrix(w, level.centroids);
    }
    for (double v : training_report) {
        w.F64(v);
    }
    if (!out) {
        throw IoError("write failed for " + path.string());
    }
}

namespace {

ResKmeansFsqModel
ReadResKmeansFsq(BinaryReader& r) {
    ResKmeansFsqModel m;
    m.level1.centroids = ReadMatrix(r);
    m.level2.centroids = ReadMatrix(r);
    m.fsq.levels = r.U32();
    m.fsq.projection = ReadMatrix(r);
    m.fsq.decoder = ReadMatrix(r);
    for (auto& v : m.training_report) {
        v = r.F64();
    }
    m.fsq_training_loss = r.F64();
    size_t d = m.level1.dim();
    if (m.level2.dim() != d || m.fsq.input_dim() != d || m.fsq.decoder.rows() != m.fsq.dims() ||
        m.fsq.decoder.cols() != d || m.fsq.levels < 1 || m.level1.k() == 0 || m.level2.k() == 0) {
        throw CorruptionError("quantizer model shapes are inconsistent");
    }
    return m;
}

}  // namespace

ResKmeansFsqModel
LoadResKmeansFsq(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open " + path.string());
    }
    BinaryReader r(in);
    if (ReadContainerHeader(r) != ModelKind::kResKmeansFsq) {
        throw FormatError(path.string() + ": not a Res-KmeansFSQ model");
    }
    return ReadResKmeansFsq(r);
}

std::unique_ptr<SidQuantizer>
LoadQuantizer(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open " + path.string());
    }
    BinaryReader r(in);
    ModelKind kind = ReadContainerHeader(r);
    if (kind == ModelKind::kResKmeansFsq) {
        return std::make_unique<ResKmeansFsqModel>(ReadResKmeansFsq(r));
    }
    if (kind != ModelKind::kResKmeans) {
        throw FormatError(path.string() + ": not a quantizer model");
    }
    auto m = std::make_unique<ResKmeansModel>();
    for (auto& level : m->levels) {
        level.centroids = ReadMatrix(r);
        if (level.k() == 0 || level.dim() != m->levels[0].dim()) {
            throw CorruptionError(path.string() + ": quantizer model shapes are inconsistent");
        }
    }
    for (auto& v : m->training_report) {
        v = r.F64();
    }
    return m;
}

}  // namespace sidrec
