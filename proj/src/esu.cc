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

#include "sidrec/esu.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "sidrec/error.h"
#include "sidrec/model_io.h"
#include "sidrec/parallel.h"
#include "sidrec/rng.h"

namespace sidrec {

uint32_t
ItemVocabulary::Add(ItemId item) {
    auto [it, inserted] = rows_.emplace(item, static_cast<uint32_t>(ids_.size() + 1));
    if (inserted) {
        ids_.push_back(item);
    }
    return it->second;
}

uint32_t
ItemVocabulary::Lookup(ItemId item) const {
    auto it = rows_.find(item);
    return it == rows_.end() ? 0 : it->second;
}

EsuModel::EsuModel(EsuConfig config) : config_(std::move(config)) {
    const auto& c = config_;
    if (c.embed_dim == 0 || c.attn_dim == 0 || c.experts == 0 || c.expert_hidden == 0 ||
        c.expert_out == 0 || c.tasks.empty()) {
        throw ArgumentError("ESU widths, expert count and task list must be non-empty");
    }
    if (c.item_vocab == 0 || c.sid1_vocab == 0 || c.sid2_vocab == 0 || c.sid3_vocab == 0) {
        throw ArgumentError("ESU vocabularies must be non-empty");
    }
    BuildLayout();

    Rng rng(c.seed);
    auto glorot = [&](const std::string& name, size_t fan_in, size_t fan_out) {
        double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
        for (auto& v : view(name)) {
            v = rng.Uniform(-limit, limit);
        }
    };
    for (const char* table : {"item_table", "sid1_table", "sid2_table", "sid3_table", "null_value"}) {
        for (auto& v : view(table)) {
            v = c.init_scale * rng.Normal();
        }
    }
    const size_t d = input_dim();
    glorot("wq", d, c.attn_dim);
    glorot("wk", d, c.attn_dim);
    glorot("wv", d, c.attn_dim);
    glorot("gate_w", c.attn_dim, c.experts);
    glorot("expert_w1", moe_dim(), c.expert_hidden);
    glorot("expert_w2", c.expert_hidden, c.expert_out);
    glorot("head_w", c.expert_out, 1);
}

void
EsuModel::BuildLayout() {
    const auto& c = config_;
    const size_t d = input_dim();
    size_t offset = 0;
    auto add = [&](std::string name, size_t rows, size_t cols) {
        groups_.push_back({std::move(name), offset, rows, cols});
        offset += rows * cols;
    };
    add("item_table", c.item_vocab, c.embed_dim);
    add("sid1_table", c.sid1_vocab, c.embed_dim);
    add("sid2_table", c.sid2_vocab, c.embed_dim);
    add("sid3_table", c.sid3_vocab, c.embed_dim);
    add("wq", c.attn_dim, d);
    add("wk", c.attn_dim, d);
    add("wv", c.attn_dim, d);
    add("null_value", 1, c.attn_dim);
    add("gate_w", c.experts, c.attn_dim);
    add("gate_b", 1, c.experts);
    add("expert_w1", c.experts * c.expert_hidden, moe_dim());
    add("expert_b1", c.experts, c.expert_hidden);
    add("expert_w2", c.experts * c.expert_out, c.expert_hidden);
    add("expert_b2", c.experts, c.expert_out);
    add("head_w", c.tasks.size(), c.expert_out);
    add("head_b", 1, c.tasks.size());
    params_.assign(offset, 0.0);
}

const ParamGroup&
EsuModel::group(const std::string& name) const {
    for (const auto& g : groups_) {
        if (g.name == name) {
            return g;
        }
    }
    throw ArgumentError("unknown parameter group " + name);
}

std::span<double>
EsuModel::view(const std::string& name) {
    const auto& g = group(name);
    return {params_.data() + g.offset, g.size()};
}

std::span<const double>
EsuModel::view(const std::string& name) const {
    const auto& g = group(name);
    return {params_.data() + g.offset, g.size()};
}

namespace {

double
Sigmoid(double x) {
    if (x >= 0) {
        return 1.0 / (1.0 + std::exp(-x));
    }
    double e = std::exp(x);
    return e / (1.0 + e);
}

void
SoftmaxInPlace(std::vector<double>& v) {
    if (v.empty()) {
        return;
    }
    double mx = *std::max_element(v.begin(), v.end());
    double sum = 0.0;
    for (auto& x : v) {
        x = std::exp(x - mx);
        sum += x;
    }
    for (auto& x : v) {
        x /= sum;
    }
}

// y += W x for W stored row-major rows x cols.
void
MatVec(const double* w, size_t rows, size_t cols, const double* x, double* y) {
    for (size_t r = 0; r < rows; ++r) {
        double s = 0.0;
        const double* wr = w + r * cols;
        for (size_t c = 0; c < cols; ++c) {
            s += wr[c] * x[c];
        }
        y[r] += s;
    }
}

// x_grad += W^T y_grad, W_grad += y_grad x^T
void
MatVecBackward(const double* w,
               size_t rows,
               size_t cols,
               const double* x,
               const double* y_grad,
               double* x_grad,
               double* w_grad) {
    for (size_t r = 0; r < rows; ++r) {
        double gy = y_grad[r];
        if (gy == 0.0) {
            continue;
        }
        const double* wr = w + r * cols;
        double* gwr = w_grad ? w_grad + r * cols : nullptr;
        for (size_t c = 0; c < cols; ++c) {
            if (x_grad) {
                x_grad[c] += wr[c] * gy;
            }
            if (gwr) {
                gwr[c] += gy * x[c];
            }
        }
    }
}

struct Offsets {
    size_t item, sid1, sid2, sid3, wq, wk, wv, null_value, gate_w, gate_b, w1, b1, w2, b2, head_w,
        head_b;

    explicit Offsets(const EsuModel& m)
        : item(m.group("item_table").offset),
          sid1(m.group("sid1_table").offset),
          sid2(m.group("sid2_table").offset),
          sid3(m.group("sid3_table").offset),
          wq(m.group("wq").offset),
          wk(m.group("wk").offset),
          wv(m.group("wv").offset),
          null_value(m.group("null_value").offset),
          gate_w(m.group("gate_w").offset),
          gate_b(m.group("gate_b").offset),
          w1(m.group("expert_w1").offset),
          b1(m.group("expert_b1").offset),
          w2(m.group("expert_w2").offset),
          b2(m.group("expert_b2").offset),
          head_w(m.group("head_w").offset),
          head_b(m.group("head_b").offset) {
    }
};

// Activations kept for the backward pass.
struct Cache {
    std::vector<size_t> rows;  // per item (target first): 4 table row offsets
    std::vector<double> x;     // (1 + k) x D; row 0 is the target
    std::vector<double> q;
    std::vector<double> keys;    // k x h
    std::vector<double> values;  // k x h
    std::vector<double> attn;
    std::vector<double> o;
    std::vector<double> z;
    std::vector<double> gate;
    std::vector<double> pre;  // E x H
    std::vector<double> out;  // E x P
    std::vector<double> m;
    std::vector<double> probs;
};

void
CheckFeatures(const EsuConfig& c, const ItemFeatures& f) {
    if (f.item >= c.item_vocab) {
        throw ArgumentError("item row " + std::to_string(f.item) + " outside item table");
    }
    if (f.sid.c1 >= c.sid1_vocab || f.sid.c2 >= c.sid2_vocab || f.sid.c3 >= c.sid3_vocab) {
        throw ArgumentError("semantic id code outside its embedding table");
    }
}

void
Forward(const EsuModel& model, const TrainingExample& ex, Cache& cache) {
    const auto& c = model.config();
    const auto& p = model.params();
    const Offsets off(model);
    const size_t e = c.embed_dim;
    const size_t d = model.input_dim();
    const size_t h = c.attn_dim;
    const size_t k = ex.subsequence.size();
    const size_t nz = model.moe_dim();
    const size_t nh = c.expert_hidden;
    const size_t np = c.expert_out;

    if (ex.side.size() != c.side_dim) {
        throw ArgumentError("side feature width " + std::to_string(ex.side.size()) +
                            ", model expects " + std::to_string(c.side_dim));
    }
    CheckFeatures(c, ex.target);
    for (const auto& f : ex.subsequence) {
        CheckFeatures(c, f);
    }

    // Embedding lookups. SID slots stay zero in the ablated model.
    cache.rows.assign((k + 1) * 4, SIZE_MAX);
    cache.x.assign((k + 1) * d, 0.0);
    for (size_t t = 0; t <= k; ++t) {
        const ItemFeatures& f = t == 0 ? ex.target : ex.subsequence[t - 1];
        size_t rows[4] = {off.item + f.item * e, off.sid1 + f.sid.c1 * e, off.sid2 + f.sid.c2 * e,
                          off.sid3 + static_cast<size_t>(f.sid.c3) * e};
        for (size_t s = 0; s < 4; ++s) {
            if (s > 0 && !c.use_sid) {
                continue;
            }
            cache.rows[t * 4 + s] = rows[s];
            std::copy_n(p.data() + rows[s], e, cache.x.data() + t * d + s * e);
        }
    }

    const double* xt = cache.x.data();
    cache.o.assign(h, 0.0);
    cache.attn.clear();
    cache.q.assign(h, 0.0);
    cache.keys.assign(k * h, 0.0);
    cache.values.assign(k * h, 0.0);
    if (k == 0) {
        std::copy_n(p.data() + off.null_value, h, cache.o.begin());
    } else {
        MatVec(p.data() + off.wq, h, d, xt, cache.q.data());
        const double scale = 1.0 / std::sqrt(static_cast<double>(h));
        cache.attn.assign(k, 0.0);
        for (size_t j = 0; j < k; ++j) {
            const double* xj = cache.x.data() + (j + 1) * d;
            MatVec(p.data() + off.wk, h, d, xj, cache.keys.data() + j * h);
            MatVec(p.data() + off.wv, h, d, xj, cache.values.data() + j * h);
            double s = 0.0;
            for (size_t i = 0; i < h; ++i) {
                s += cache.q[i] * cache.keys[j * h + i];
            }
            cache.attn[j] = s * scale;
        }
        SoftmaxInPlace(cache.attn);
        for (size_t j = 0; j < k; ++j) {
            for (size_t i = 0; i < h; ++i) {
                cache.o[i] += cache.attn[j] * cache.values[j * h + i];
            }
        }
    }

    cache.z.assign(nz, 0.0);
    std::copy(cache.o.begin(), cache.o.end(), cache.z.begin());
    std::copy_n(xt, d, cache.z.begin() + h);
    std::copy(ex.side.begin(), ex.side.end(), cache.z.begin() + h + d);

    cache.gate.assign(p.begin() + off.gate_b, p.begin() + off.gate_b + c.experts);
    MatVec(p.data() + off.gate_w, c.experts, h, cache.o.data(), cache.gate.data());
    SoftmaxInPlace(cache.gate);

    cache.pre.assign(c.experts * nh, 0.0);
    cache.out.assign(c.experts * np, 0.0);
    cache.m.assign(np, 0.0);
    std::vector<double> hidden(nh);
    for (size_t x = 0; x < c.experts; ++x) {
        double* pre = cache.pre.data() + x * nh;
        std::copy_n(p.data() + off.b1 + x * nh, nh, pre);
        MatVec(p.data() + off.w1 + x * nh * nz, nh, nz, cache.z.data(), pre);
        for (size_t i = 0; i < nh; ++i) {
            hidden[i] = pre[i] > 0.0 ? pre[i] : 0.0;
        }
        double* out = cache.out.data() + x * np;
        std::copy_n(p.data() + off.b2 + x * np, np, out);
        MatVec(p.data() + off.w2 + x * np * nh, np, nh, hidden.data(), out);
        for (size_t i = 0; i < np; ++i) {
            cache.m[i] += cache.gate[x] * out[i];
        }
    }

    const size_t nt = c.tasks.size();
    cache.probs.assign(nt, 0.0);
    for (size_t t = 0; t < nt; ++t) {
        double logit = p[off.head_b + t];
        for (size_t i = 0; i < np; ++i) {
            logit += p[off.head_w + t * np + i] * cache.m[i];
        }
        cache.probs[t] = Sigmoid(logit);
    }
}

double
ClampedBce(double prob, int label) {
    double pc = std::clamp(prob, kBceEpsilon, 1.0 - kBceEpsilon);
    return label ? -std::log(pc) : -std::log(1.0 - pc);
}

}  // namespace

ForwardTrace
EsuForwardTrace(const EsuModel& model, const TrainingExample& example) {
    Cache cache;
    Forward(model, example, cache);
    ForwardTrace trace;
    for (size_t t = 0; t < model.config().tasks.size(); ++t) {
        trace.predictions[model.config().tasks[t]] = cache.probs[t];
    }
    trace.attention = cache.attn;
    trace.gate = cache.gate;
    return trace;
}

Predictions
EsuForward(const EsuModel& model, const TrainingExample& example) {
    return EsuForwardTrace(model, example).predictions;
}

double
MultitaskBceLoss(const Predictions& predictions, const std::map<std::string, int>& labels) {
    if (predictions.size() != labels.size()) {
        throw ArgumentError("prediction and label task sets differ");
    }
    double loss = 0.0;
    for (const auto& [task, prob] : predictions) {
        auto it = labels.find(task);
        if (it == labels.end()) {
            throw ArgumentError("no label for task " + task);
        }
        if (it->second != 0 && it->second != 1) {
            throw ArgumentError("label for task " + task + " is not binary");
        }
        loss += ClampedBce(prob, it->second);
    }
    return loss;
}

double
EsuLossAndGradient(const EsuModel& model, const TrainingExample& example, std::vector<double>* grad) {
    const auto& c = model.config();
    Cache cache;
    Forward(model, example, cache);

    const size_t nt = c.tasks.size();
    if (example.labels.size() != nt) {
        throw ArgumentError("example labels do not match the model's tasks");
    }
    std::vector<int> labels(nt);
    double loss = 0.0;
    for (size_t t = 0; t < nt; ++t) {
        auto it = example.labels.find(c.tasks[t]);
        if (it == example.labels.end()) {
            throw ArgumentError("example has no label for task " + c.tasks[t]);
        }
        if (it->second != 0 && it->second != 1) {
            throw ArgumentError("label for task " + c.tasks[t] + " is not binary");
        }
        labels[t] = it->second;
        loss += ClampedBce(cache.probs[t], labels[t]);
    }
    if (grad == nullptr) {
        return loss;
    }

    const auto& p = model.params();
    auto& g = *grad;
    const Offsets off(model);
    const size_t e = c.embed_dim;
    const size_t d = model.input_dim();
    const size_t h = c.attn_dim;
    const size_t k = example.subsequence.size();
    const size_t nz = model.moe_dim();
    const size_t nh = c.expert_hidden;
    const size_t np = c.expert_out;

    // Heads. Inside the clamp dL/dlogit = p - y; the clamped region is flat.
    std::vector<double> dm(np, 0.0);
    for (size_t t = 0; t < nt; ++t) {
        double prob = cache.probs[t];
        double dlogit = (prob < kBceEpsilon || prob > 1.0 - kBceEpsilon) ? 0.0 : prob - labels[t];
        g[off.head_b + t] += dlogit;
        for (size_t i = 0; i < np; ++i) {
            g[off.head_w + t * np + i] += dlogit * cache.m[i];
            dm[i] += dlogit * p[off.head_w + t * np + i];
        }
    }

    // Experts and gate.
    std::vector<double> dz(nz, 0.0);
    std::vector<double> dgate(c.experts, 0.0);
    std::vector<double> hidden(nh), dhidden(nh), dout(np);
    for (size_t x = 0; x < c.experts; ++x) {
        const double* out = cache.out.data() + x * np;
        const double* pre = cache.pre.data() + x * nh;
        for (size_t i = 0; i < np; ++i) {
            dgate[x] += dm[i] * out[i];
            dout[i] = cache.gate[x] * dm[i];
            g[off.b2 + x * np + i] += dout[i];
        }
        for (size_t i = 0; i < nh; ++i) {
            hidden[i] = pre[i] > 0.0 ? pre[i] : 0.0;
        }
        std::fill(dhidden.begin(), dhidden.end(), 0.0);
        MatVecBackward(p.data() + off.w2 + x * np * nh, np, nh, hidden.data(), dout.data(),
                       dhidden.data(), g.data() + off.w2 + x * np * nh);
        for (size_t i = 0; i < nh; ++i) {
            dhidden[i] = pre[i] > 0.0 ? dhidden[i] : 0.0;
            g[off.b1 + x * nh + i] += dhidden[i];
        }
        MatVecBackward(p.data() + off.w1 + x * nh * nz, nh, nz, cache.z.data(), dhidden.data(),
                       dz.data(), g.data() + off.w1 + x * nh * nz);
    }
    double gate_dot = 0.0;
    for (size_t x = 0; x < c.experts; ++x) {
        gate_dot += cache.gate[x] * dgate[x];
    }
    std::vector<double> dgate_logit(c.experts);
    for (size_t x = 0; x < c.experts; ++x) {
        dgate_logit[x] = cache.gate[x] * (dgate[x] - gate_dot);
        g[off.gate_b + x] += dgate_logit[x];
    }
    std::vector<double> dout_attn(dz.begin(), dz.begin() + h);
    MatVecBackward(p.data() + off.gate_w, c.experts, h, cache.o.data(), dgate_logit.data(),
                   dout_attn.data(), g.data() + off.gate_w);

    std::vector<double> dx((k + 1) * d, 0.0);
    std::copy(dz.begin() + h, dz.begin() + h + d, dx.begin());

    // Attention.
    if (k == 0) {
        for (size_t i = 0; i < h; ++i) {
            g[off.null_value + i] += dout_attn[i];
        }
    } else {
        const double scale = 1.0 / std::sqrt(static_cast<double>(h));
        std::vector<double> dw(k, 0.0);
        for (size_t j = 0; j < k; ++j) {
            for (size_t i = 0; i < h; ++i) {
                dw[j] += dout_attn[i] * cache.values[j * h + i];
            }
        }
        double wdot = 0.0;
        for (size_t j = 0; j < k; ++j) {
            wdot += cache.attn[j] * dw[j];
        }
        std::vector<double> dq(h, 0.0), dkey(h), dval(h);
        for (size_t j = 0; j < k; ++j) {
            double ds = cache.attn[j] * (dw[j] - wdot) * scale;
            for (size_t i = 0; i < h; ++i) {
                dq[i] += ds * cache.keys[j * h + i];
                dkey[i] = ds * cache.q[i];
                dval[i] = cache.attn[j] * dout_attn[i];
            }
            const double* xj = cache.x.data() + (j + 1) * d;
            double* dxj = dx.data() + (j + 1) * d;
            MatVecBackward(p.data() + off.wk, h, d, xj, dkey.data(), dxj, g.data() + off.wk);
            MatVecBackward(p.data() + off.wv, h, d, xj, dval.data(), dxj, g.data() + off.wv);
        }
        MatVecBackward(p.data() + off.wq, h, d, cache.x.data(), dq.data(), dx.data(),
                       g.data() + off.wq);
    }

    // Scatter into the referenced table rows only.
    for (size_t t = 0; t <= k; ++t) {
        for (size_t s = 0; s < 4; ++s) {
            size_t row = cache.rows[t * 4 + s];
            if (row == SIZE_MAX) {
                continue;
            }
            const double* src = dx.data() + t * d + s * e;
            for (size_t i = 0; i < e; ++i) {
                g[row + i] += src[i];
            }
        }
    }
    return loss;
}

double
TrainStep(EsuModel& model, std::span<const TrainingExample> batch, double lr, size_t threads) {
    if (!(lr >= 0.0)) {
        throw ArgumentError("learning rate must be non-negative");
    }
    if (batch.empty()) {
        throw ArgumentError("empty training batch");
    }
    constexpr size_t kChunk = 8;
    const size_t chunks = (batch.size() + kChunk - 1) / kChunk;
    const size_t np = model.params().size();
    std::vector<std::vector<double>> grads(chunks);
    std::vector<double> losses(chunks, 0.0);
    ParallelFor(chunks, threads, [&](size_t begin, size_t end) {
        for (size_t ch = begin; ch < end; ++ch) {
            grads[ch].assign(np, 0.0);
            size_t stop = std::min(batch.size(), (ch + 1) * kChunk);
            for (size_t i = ch * kChunk; i < stop; ++i) {
                losses[ch] += EsuLossAndGradient(model, batch[i], &grads[ch]);
            }
        }
    });
    double loss = 0.0;
    for (size_t ch = 0; ch < chunks; ++ch) {
        loss += losses[ch];
    }
    loss /= static_cast<double>(batch.size());
    if (!std::isfinite(loss)) {
        throw TrainingError("non-finite training loss " + std::to_string(loss) + " on a batch of " +
                            std::to_string(batch.size()) + " examples (lr=" + std::to_string(lr) +
                            ")");
    }
    if (lr == 0.0) {
        return loss;
    }
    std::vector<double> total(np, 0.0);
    for (size_t ch = 0; ch < chunks; ++ch) {
        for (size_t i = 0; i < np; ++i) {
            total[i] += grads[ch][i];
        }
    }
    const double step = lr / static_cast<double>(batch.size());
    auto& params = model.params();
    for (size_t i = 0; i < np; ++i) {
        if (total[i] != 0.0) {
            params[i] -= step * total[i];
        }
    }
    return loss;
}

GradCheckResult
GradCheck(const EsuModel& model, const TrainingExample& example, double step) {
    GradCheckResult result;
    std::vector<double> analytic(model.params().size(), 0.0);
    EsuLossAndGradient(model, example, &analytic);
    EsuModel probe = model;
    auto& p = probe.params();
    for (const auto& grp : model.groups()) {
        for (size_t i = grp.offset; i < grp.offset + grp.size(); ++i) {
            double saved = p[i];
            p[i] = saved + step;
            double up = EsuLossAndGradient(probe, example, nullptr);
            p[i] = saved - step;
            double down = EsuLossAndGradient(probe, example, nullptr);
            p[i] = saved;
            double numeric = (up - down) / (2.0 * step);
            if (!std::isfinite(numeric) || !std::isfinite(analytic[i])) {
                result.all_finite = false;
                result.max_relative_error = std::numeric_limits<double>::infinity();
                result.worst_group = grp.name;
                result.worst_index = i - grp.offset;
                continue;
            }
            double denom = std::max({std::abs(analytic[i]), std::abs(numeric), 1e-6});
            double rel = std::abs(analytic[i] - numeric) / denom;
            if (rel > result.max_relative_error) {
                result.max_relative_error = rel;
                result.worst_group = grp.name;
                result.worst_index = i - grp.offset;
            }
        }
    }
    return result;
}

double
MeanLoss(const EsuModel& model, std::span<const TrainingExample> examples) {
    if (examples.empty()) {
        return 0.0;
    }
    double total = 0.0;
    for (const auto& ex : examples) {
        total += EsuLossAndGradient(model, ex, nullptr);
    }
    return total / static_cast<double>(examples.size());
}

EsuTrainReport
TrainEsu(EsuModel& model, std::span<const TrainingExample> examples, const EsuTrainOptions& options) {
    if (examples.empty()) {
        throw ArgumentError("no training examples");
    }
    EsuTrainReport report;
    report.initial_loss = MeanLoss(model, examples);
    std::vector<size_t> order(examples.size());
    std::iota(order.begin(), order.end(), 0);
    Rng rng(options.seed);
    const size_t batch = std::max<size_t>(1, options.batch);
    std::vector<TrainingExample> buf;
    for (size_t epoch = 0; epoch < options.epochs; ++epoch) {
        rng.Shuffle(order);
        double total = 0.0;
        for (size_t start = 0; start < order.size(); start += batch) {
            size_t stop = std::min(order.size(), start + batch);
            buf.clear();
            for (size_t i = start; i < stop; ++i) {
                buf.push_back(examples[order[i]]);
            }
            total += TrainStep(model, buf, options.lr, options.threads) * buf.size();
        }
        report.epoch_loss.push_back(total / static_cast<double>(order.size()));
    }
    return report;
}

void
EsuModel::Save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw IoError("cannot open " + path.string() + " for writing");
    }
    BinaryWriter w(out);
    WriteContainerHeader(w, ModelKind::kEsu);
    const auto& c = config_;
    for (size_t v : {c.item_vocab, c.sid1_vocab, c.sid2_vocab, c.sid3_vocab, c.embed_dim, c.attn_dim,
                     c.experts, c.expert_hidden, c.expert_out, c.side_dim}) {
        w.U64(v);
    }
    w.U32(static_cast<uint32_t>(c.tasks.size()));
    for (const auto& t : c.tasks) {
        w.String(t);
    }
    w.U8(c.use_sid ? 1 : 0);
    w.U64(c.seed);
    w.F64(c.init_scale);
    w.U64(vocabulary.ids().size());
    for (ItemId id : vocabulary.ids()) {
        w.U64(id);
    }
    w.F64s(params_);
    if (!out) {
        throw IoError("write failed for " + path.string());
    }
}

EsuModel
EsuModel::Load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open " + path.string());
    }
    BinaryReader r(in);
    if (ReadContainerHeader(r) != ModelKind::kEsu) {
        throw FormatError(path.string() + ": not an ESU checkpoint");
    }
    EsuConfig c;
    for (size_t* v : {&c.item_vocab, &c.sid1_vocab, &c.sid2_vocab, &c.sid3_vocab, &c.embed_dim,
                      &c.attn_dim, &c.experts, &c.expert_hidden, &c.expert_out, &c.side_dim}) {
        *v = r.U64();
    }
    c.tasks.resize(r.U32());
    for (auto& t : c.tasks) {
        t = r.String();
    }
    c.use_sid = r.U8() != 0;
    c.seed = r.U64();
    c.init_scale = r.F64();
    ItemVocabulary vocab;
    uint64_t nv = r.U64();
    for (uint64_t i = 0; i < nv; ++i) {
        vocab.Add(r.U64());
    }
    auto params = r.F64s();
    EsuModel model(c);
    if (params.size() != model.params_.size()) {
        throw CorruptionError(path.string() + ": parameter count disagrees with config");
    }
    model.params_ = std::move(params);
    model.vocabulary = std::move(vocab);
    return model;
}

}  // namespace sidrec
