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

#include "sidrec/segmask.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include "sidrec/error.h"

namespace sidrec {

namespace {
constexpr double kNegInf = -std::numeric_limits<double>::infinity();
}

AttentionMask
BuildSegmentMask(const SegmentLayout& layout) {
    const size_t n = layout.total();
    if (n == 0) {
        throw ArgumentError("segment layout has no tokens");
    }
    AttentionMask mask;
    mask.n = n;
    mask.allow.assign(n * n, 0);
    mask.bias.assign(n * n, kNegInf);
    const size_t qa_start = layout.n_in + layout.n_emb;
    for (size_t i = 0; i < n; ++i) {
        for (size_t j = 0; j < n; ++j) {
            bool ok = false;
            if (layout.IsInput(i)) {
                ok = j <= i;
            } else if (layout.IsCompression(i)) {
                ok = layout.IsInput(j) || j == i;
            } else {
                ok = j < qa_start || (j >= qa_start && j <= i);
            }
            if (ok) {
                mask.allow[i * n + j] = 1;
                mask.bias[i * n + j] = 0.0;
            }
        }
    }
    return mask;
}

double
AnnealSchedule::Alpha(size_t step) const {
    if (total_steps == 0) {
        throw ArgumentError("anneal schedule needs at least one step");
    }
    if (step >= total_steps) {
        return 0.0;
    }
    return 1.0 - static_cast<double>(step) / static_cast<double>(total_steps);
}

AttentionMask
AnnealInputBias(const AttentionMask& mask,
                const SegmentLayout& layout,
                size_t step,
                const AnnealSchedule& schedule) {
    if (mask.n != layout.total()) {
        throw ArgumentError("mask size does not match layout");
    }
    if (step > schedule.total_steps) {
        throw ArgumentError("anneal step beyond the schedule");
    }
    AttentionMask out = mask;
    const double alpha = schedule.Alpha(step);
    for (size_t i = 0; i < out.n; ++i) {
        if (!layout.IsQa(i)) {
            continue;
        }
        for (size_t j = 0; j < layout.n_in; ++j) {
            if (!out.allowed(i, j)) {
                continue;
            }
            if (alpha <= 0.0) {
                out.allow[i * out.n + j] = 0;
                out.bias[i * out.n + j] = kNegInf;
            } else {
                out.bias[i * out.n + j] = std::log(alpha);
            }
        }
    }
    return out;
}

namespace {

// rows(x) * W
Matrix
Project(const Matrix& x, const Matrix& w) {
    Matrix out(x.rows(), w.cols());
    for (size_t i = 0; i < x.rows(); ++i) {
        for (size_t k = 0; k < x.cols(); ++k) {
            double v = x(i, k);
            for (size_t j = 0; j < w.cols(); ++j) {
                out(i, j) += v * w(k, j);
            }
        }
    }
    return out;
}

}  // namespace

Matrix
ToyForward(const ToyAttentionParams& params, const Matrix& tokens, const AttentionMask& mask) {
    const size_t n = tokens.rows();
    const size_t e = tokens.cols();
    for (const Matrix* w : {&params.wq, &params.wk, &params.wv}) {
        if (w->rows() != e || w->cols() != e) {
            throw ArgumentError("attention weights must be e x e");
        }
    }
    if (mask.n != n) {
        throw ArgumentError("mask size does not match token count");
    }
    Matrix q = Project(tokens, params.wq);
    Matrix k = Project(tokens, params.wk);
    Matrix v = Project(tokens, params.wv);
    const double scale = 1.0 / std::sqrt(static_cast<double>(e));
    Matrix out = tokens;
    std::vector<double> w(n);
    for (size_t i = 0; i < n; ++i) {
        // Masked keys are skipped outright so they cannot leak into the sum.
        double mx = kNegInf;
        for (size_t j = 0; j < n; ++j) {
            if (mask.allowed(i, j)) {
                w[j] = Dot(q.row(i), k.row(j)) * scale + mask.bias_at(i, j);
                mx = std::max(mx, w[j]);
            }
        }
        double sum = 0.0;
        for (size_t j = 0; j < n; ++j) {
            if (mask.allowed(i, j)) {
                w[j] = std::exp(w[j] - mx);
                sum += w[j];
            }
        }
        for (size_t j = 0; j < n; ++j) {
            if (!mask.allowed(i, j)) {
                continue;
            }
            double a = w[j] / sum;
            for (size_t c = 0; c < e; ++c) {
                out(i, c) += a * v(j, c);
            }
        }
    }
    return out;
}

std::vector<double>
PooledEmbVector(const Matrix& outputs, const SegmentLayout& layout) {
    if (layout.n_emb == 0) {
        throw ArgumentError("pooling needs at least one compression token");
    }
    if (outputs.rows() != layout.total()) {
        throw ArgumentError("outputs do not match layout");
    }
    std::vector<double> pooled(outputs.cols(), 0.0);
    for (size_t i = layout.n_in; i < layout.n_in + layout.n_emb; ++i) {
        for (size_t c = 0; c < outputs.cols(); ++c) {
            pooled[c] += outputs(i, c);
        }
    }
    for (auto& v : pooled) {
        v /= static_cast<double>(layout.n_emb);
    }
    return pooled;
}

namespace {

double
CrossEntropyRow(std::span<const double> logits, size_t target) {
    double mx = *std::max_element(logits.begin(), logits.end());
    double sum = 0.0;
    for (double l : logits) {
        sum += std::exp(l - mx);
    }
    return std::log(sum) + mx - logits[target];
}

}  // namespace

double
InfoNceLoss(const Matrix& anchors, const Matrix& positives, double temperature) {
    const size_t b = anchors.rows();
    if (b == 0 || positives.rows() != b || anchors.cols() != positives.cols()) {
        throw ArgumentError("InfoNCE needs equally shaped, non-empty batches");
    }
    if (!(temperature > 0.0)) {
        throw ArgumentError("temperature must be positive");
    }
    auto norms = [](const Matrix& m) {
        std::vector<double> n(m.rows());
        for (size_t i = 0; i < m.rows(); ++i) {
            n[i] = std::sqrt(Dot(m.row(i), m.row(i)));
            if (n[i] == 0.0) {
                throw DataError("zero-norm embedding in contrastive batch");
            }
        }
        return n;
    };
    auto na = norms(anchors);
    auto np = norms(positives);
    Matrix sim(b, b);
    for (size_t i = 0; i < b; ++i) {
        for (size_t j = 0; j < b; ++j) {
            sim(i, j) = Dot(anchors.row(i), positives.row(j)) / (na[i] * np[j]) / temperature;
        }
    }
    double forward = 0.0;
    double backward = 0.0;
    std::vector<double> col(b);
    for (size_t i = 0; i < b; ++i) {
        forward += CrossEntropyRow(sim.row(i), i);
        for (size_t j = 0; j < b; ++j) {
            col[j] = sim(j, i);
        }
        backward += CrossEntropyRow(col, i);
    }
    return 0.5 * (forward + backward) / static_cast<double>(b);
}

double
ToyNtpLoss(const Matrix& outputs,
           const SegmentLayout& layout,
           const Matrix& unembed,
           std::span<const size_t> next_tokens) {
    if (outputs.rows() != layout.total() || unembed.rows() != outputs.cols()) {
        throw ArgumentError("NTP shapes are inconsistent");
    }
    if (next_tokens.size() != layout.n_qa || layout.n_qa == 0) {
        throw ArgumentError("need one next token per QA position");
    }
    const size_t first = layout.n_in + layout.n_emb;
    std::vector<double> logits(unembed.cols());
    double total = 0.0;
    for (size_t t = 0; t < layout.n_qa; ++t) {
        if (next_tokens[t] >= unembed.cols()) {
            throw ArgumentError("next token outside vocabulary");
        }
        auto h = outputs.row(first + t);
        std::fill(logits.begin(), logits.end(), 0.0);
        for (size_t c = 0; c < h.size(); ++c) {
            for (size_t v = 0; v < logits.size(); ++v) {
                logits[v] += h[c] * unembed(c, v);
            }
        }
        total += CrossEntropyRow(logits, next_tokens[t]);
    }
    return total / static_cast<double>(layout.n_qa);
}

double
JointLoss(double ntp_ce, double contrastive, double lambda) {
    if (!(lambda >= 0.0)) {
        throw ArgumentError("contrastive weight must be non-negative");
    }
    return ntp_ce + lambda * contrastive;
}

std::string
MaskToText(const AttentionMask& mask) {
    std::string out;
    for (size_t i = 0; i < mask.n; ++i) {
        for (size_t j = 0; j < mask.n; ++j) {
            out += mask.allowed(i, j) ? '1' : '0';
        }
        out += '\n';
    }
    return out;
}

std::string
MaskBiasToText(const AttentionMask& mask) {
    std::string out;
    char buf[32];
    for (size_t i = 0; i < mask.n; ++i) {
        for (size_t j = 0; j < mask.n; ++j) {
            if (j > 0) {
                out += ' ';
            }
            if (!mask.allowed(i, j)) {
                out += "-inf";
            } else {
                std::snprintf(buf, sizeof(buf), "%.6f", mask.bias_at(i, j));
                out += buf;
            }
        }
        out += '\n';
    }
    return out;
}

}  // namespace sidrec
