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
#include <string>
#include <vector>

#include "sidrec/linalg.h"

namespace sidrec {

// Token layout: [input | compression <EMB> tokens | question-answer].
struct SegmentLayout {
    size_t n_in = 0;
    size_t n_emb = 0;
    size_t n_qa = 0;

    size_t
    total() const {
        return n_in + n_emb + n_qa;
    }
    bool
    IsInput(size_t i) const {
        return i < n_in;
    }
    bool
    IsCompression(size_t i) const {
        return i >= n_in && i < n_in + n_emb;
    }
    bool
    IsQa(size_t i) const {
        return i >= n_in + n_emb && i < total();
    }
};

struct AttentionMask {
    size_t n = 0;
    std::vector<unsigned char> allow;  // n x n, row = query token
    std::vector<double> bias;          // additive; -inf where disallowed

    bool
    allowed(size_t row, size_t col) const {
        return allow[row * n + col] != 0;
    }
    double
    bias_at(size_t row, size_t col) const {
        return bias[row * n + col];
    }
};

// Input tokens are causal among themselves; compression tokens see every
// input token and themselves; QA tokens see all input and compression tokens
// and are causal within the QA segment.
AttentionMask
BuildSegmentMask(const SegmentLayout& layout);

// Linear warm-start schedule: alpha(step) = 1 - step / total_steps.
struct AnnealSchedule {
    size_t total_steps = 1;

    double
    Alpha(size_t step) const;
};

// Scales QA -> input attention by alpha(step) through an additive ln(alpha)
// bias; alpha = 0 removes those entries from the mask.
AttentionMask
AnnealInputBias(const AttentionMask& mask,
                const SegmentLayout& layout,
                size_t step,
                const AnnealSchedule& schedule);

// One masked single-head attention layer with a residual connection:
//   out_i = x_i + sum_j softmax_j(q_i . k_j / sqrt(e) + bias_ij) v_j
struct ToyAttentionParams {
    Matrix wq;  // e x e, applied as x W
    Matrix wk;
    Matrix wv;
};

Matrix
ToyForward(const ToyAttentionParams& params, const Matrix& tokens, const AttentionMask& mask);

// Mean of the compression-segment rows.
std::vector<double>
PooledEmbVector(const Matrix& outputs, const SegmentLayout& layout);

// Symmetric in-batch InfoNCE over cosine similarities: the mean of the
// anchor->positive and positive->anchor cross-entropies.
double
InfoNceLoss(const Matrix& anchors, const Matrix& positives, double temperature = 0.05);

// Mean next-token cross-entropy over QA positions: the output at QA
// position i is projected by `unembed` (e x V) and must predict
// next_tokens[i - first QA position].
double
ToyNtpLoss(const Matrix& outputs,
           const SegmentLayout& layout,
           const Matrix& unembed,
           std::span<const size_t> next_tokens);

double
JointLoss(double ntp_ce, double contrastive, double lambda);

// One text row per query token; '1' allowed, '0' masked.
std::string
MaskToText(const AttentionMask& mask);
// Same grid with the additive bias of each allowed entry ("-inf" when masked).
std::string
MaskBiasToText(const AttentionMask& mask);

}  // namespace sidrec
