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
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "sidrec/embedstore.h"
#include "sidrec/quantizer.h"

namespace sidrec {

// Maps raw item ids onto embedding-table rows. Row 0 is reserved for items
// never added, so lookups of unknown items stay in range.
class ItemVocabulary {
 public:
    uint32_t
    Add(ItemId item);
    uint32_t
    Lookup(ItemId item) const;
    size_t
    size() const {
        return ids_.size() + 1;
    }
    const std::vector<ItemId>&
    ids() const {
        return ids_;
    }

 private:
    std::vector<ItemId> ids_;  // row r + 1 holds ids_[r]
    std::unordered_map<ItemId, uint32_t> rows_;
};

// Sparse features of one item: its ItemID row plus its three SID codes.
struct ItemFeatures {
    uint32_t item = 0;
    SemanticId sid;
};

struct TrainingExample {
    uint64_t user_id = 0;
    ItemFeatures target;
    std::vector<ItemFeatures> subsequence;  // GSU output, at most k entries
    std::vector<double> side;               // optional dense "other" features
    std::map<std::string, int> labels;      // task -> {0, 1}
};

struct EsuConfig {
    size_t item_vocab = 1;
    size_t sid1_vocab = 1;
    size_t sid2_vocab = 1;
    size_t sid3_vocab = 1;
    size_t embed_dim = 8;      // e, width of every table
    size_t attn_dim = 8;       // h
    size_t experts = 4;        // E
    size_t expert_hidden = 16;
    size_t expert_out = 8;
    size_t side_dim = 0;
    std::vector<std::string> tasks = {"ctr", "cvr"};
    bool use_sid = true;  // false zeroes the three SID slots (ablation)
    uint64_t seed = 0;
    double init_scale = 0.1;
};

// Named slice of the flat parameter vector.
struct ParamGroup {
    std::string name;
    size_t offset = 0;
    size_t rows = 0;
    size_t cols = 0;

    size_t
    size() const {
        return rows * cols;
    }
};

// Target-attention ranker. All parameters live in one flat vector.
//
// Forward pass for one example:
//   x    = [E_item[i]; E_1[c1]; E_2[c2]; E_3[c3]]              (4e)
//   q    = Wq x_target, k_j = Wk x_j, v_j = Wv x_j              (h)
//   a    = softmax(q . k_j / sqrt(h)),  o = sum_j a_j v_j       (o = null when empty)
//   z    = [o; x_target; side]
//   g    = softmax(G o + g_b)                                  (gate over experts)
//   m    = sum_e g_e (B_e relu(A_e z + a_e) + b_e)
//   y_t  = sigmoid(u_t . m + c_t)                              (per task)
class EsuModel {
 public:
    EsuModel() = default;
    explicit EsuModel(EsuConfig config);

    const EsuConfig&
    config() const {
        return config_;
    }
    std::vector<double>&
    params() {
        return params_;
    }
    const std::vector<double>&
    params() const {
        return params_;
    }
    const std::vector<ParamGroup>&
    groups() const {
        return groups_;
    }
    const ParamGroup&
    group(const std::string& name) const;
    std::span<double>
    view(const std::string& name);
    std::span<const double>
    view(const std::string& name) const;

    size_t
    input_dim() const {
        return 4 * config_.embed_dim;
    }
    size_t
    moe_dim() const {
        return config_.attn_dim + input_dim() + config_.side_dim;
    }

    ItemVocabulary vocabulary;  // raw item id -> item table row

    void
    Save(const std::filesystem::path& path) const;
    static EsuModel
    Load(const std::filesystem::path& path);

 private:
    void
    BuildLayout();

    EsuConfig config_;
    std::vector<ParamGroup> groups_;
    std::vector<double> params_;
};

using Predictions = std::map<std::string, double>;

struct ForwardTrace {
    Predictions predictions;
    std::vector<double> attention;  // weights over the subsequence
    std::vector<double> gate;       // weights over experts
};

// Throws ArgumentError on out-of-vocabulary codes or a side vector of the
// wrong width.
Predictions
EsuForward(const EsuModel& model, const TrainingExample& example);
ForwardTrace
EsuForwardTrace(const EsuModel& model, const TrainingExample& example);

inline constexpr double kBceEpsilon = 1e-7;

// -sum_t [y log p + (1 - y) log(1 - p)] with p clamped to [eps, 1 - eps].
double
MultitaskBceLoss(const Predictions& predictions, const std::map<std::string, int>& labels);

// Loss of one example; when grad is non-null the analytic gradient is
// added into it (grad must be sized like the parameter vector).
double
EsuLossAndGradient(const EsuModel& model, const TrainingExample& example, std::vector<double>* grad);

// One SGD step on the mean batch loss. Returns that mean loss. Gradient
// accumulation is split into fixed chunks and reduced in order, so the
// result does not depend on `threads`.
double
TrainStep(EsuModel& model, std::span<const TrainingExample> batch, double lr, size_t threads = 1);

struct GradCheckResult {
    double max_relative_error = 0.0;
    std::string worst_group;
    size_t worst_index = 0;
    bool all_finite = true;
};

// Central finite differences (step h) against the analytic gradient over
// every parameter. Relative error is |a - n| / max(|a|, |n|, 1e-6).
GradCheckResult
GradCheck(const EsuModel& model, const TrainingExample& example, double step = 1e-5);

struct EsuTrainOptions {
    size_t epochs = 5;
    size_t batch = 32;
    double lr = 0.05;
    uint64_t seed = 0;
    size_t threads = 1;
};

struct EsuTrainReport {
    std::vector<double> epoch_loss;  // mean example loss per epoch
    double initial_loss = 0.0;       // mean loss before the first step
};

EsuTrainReport
TrainEsu(EsuModel& model, std::span<const TrainingExample> examples, const EsuTrainOptions& options);

// Mean multitask loss over a data set without updating the model.
double
MeanLoss(const EsuModel& model, std::span<const TrainingExample> examples);

}  // namespace sidrec
