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

#include <cmath>

#include "doctest.h"
#include "sidrec/error.h"
#include "sidrec/esu.h"
#include "test_util.h"

using namespace sidrec;
using namespace sidrec::testing;

namespace {

EsuConfig
SmallConfig(uint64_t seed) {
    EsuConfig c;
    c.item_vocab = 12;
    c.sid1_vocab = 5;
    c.sid2_vocab = 6;
    c.sid3_vocab = 7;
    c.embed_dim = 4;
    c.attn_dim = 4;
    c.experts = 2;
    c.expert_hidden = 5;
    c.expert_out = 3;
    c.tasks = {"ctr", "cvr"};
    c.seed = seed;
    c.init_scale = 0.5;
    return c;
}

ItemFeatures
RandomFeatures(Rng& rng, const EsuConfig& c) {
    return {static_cast<uint32_t>(rng.Below(c.item_vocab)),
            {static_cast<uint32_t>(rng.Below(c.sid1_vocab)), static_cast<uint32_t>(rng.Below(c.sid2_vocab)),
             rng.Below(c.sid3_vocab)}};
}

TrainingExample
RandomExample(Rng& rng, const EsuConfig& c, size_t k) {
    TrainingExample ex;
    ex.user_id = rng.Below(5);
    ex.target = RandomFeatures(rng, c);
    for (size_t i = 0; i < k; ++i) {
        ex.subsequence.push_back(RandomFeatures(rng, c));
    }
    for (size_t i = 0; i < c.side_dim; ++i) {
        ex.side.push_back(rng.Normal());
    }
    for (const auto& t : c.tasks) {
        ex.labels[t] = static_cast<int>(rng.Below(2));
    }
    return ex;
}

// Biases start at zero; give them values so their gradients are exercised.
void
Jitter(EsuModel& m, Rng& rng) {
    for (const char* g : {"gate_b", "expert_b1", "expert_b2", "head_b"}) {
        for (auto& v : m.view(g)) {
            v = 0.3 * rng.Normal();
        }
    }
}

}  // namespace

TEST_CASE("vocabulary reserves row zero") {
    ItemVocabulary v;
    CHECK(v.Lookup(5) == 0);
    CHECK(v.Add(5) == 1);
    CHECK(v.Add(9) == 2);
    CHECK(v.Add(5) == 1);
    CHECK(v.Lookup(9) == 2);
    CHECK(v.size() == 3);
}

TEST_CASE("bce loss hand values") {
    CHECK(MultitaskBceLoss({{"ctr", 1.0 - kBceEpsilon}}, {{"ctr", 1}}) < 1e-6);
    CHECK(MultitaskBceLoss({{"ctr", 0.5}}, {{"ctr", 1}}) == doctest::Approx(std::log(2.0)));
    CHECK(MultitaskBceLoss({{"ctr", 0.9}, {"cvr", 0.2}}, {{"ctr", 1}, {"cvr", 0}}) ==
          doctest::Approx(-(std::log(0.9) + std::log(0.8))));
    CHECK(MultitaskBceLoss({{"ctr", 1.0}}, {{"ctr", 0}}) == doctest::Approx(-std::log(kBceEpsilon)));
    CHECK_THROWS_AS(MultitaskBceLoss({{"ctr", 0.5}}, {{"cvr", 1}}), ArgumentError);
    CHECK_THROWS_AS(MultitaskBceLoss({{"ctr", 0.5}}, {{"ctr", 1}, {"cvr", 0}}), ArgumentError);
    CHECK_THROWS_AS(MultitaskBceLoss({{"ctr", 0.5}}, {{"ctr", 2}}), ArgumentError);
}

TEST_CASE("forward with one key gives weight one and probabilities in range") {
    EsuModel m(SmallConfig(1));
    Rng rng(1);
    for (int t = 0; t < 50; ++t) {
        auto ex = RandomExample(rng, m.config(), rng.Below(6));
        auto trace = EsuForwardTrace(m, ex);
        double sum = 0;
        for (double a : trace.attention) {
            sum += a;
        }
        if (!ex.subsequence.empty()) {
            CHECK(std::abs(sum - 1.0) < 1e-9);
        }
        double gsum = 0;
        for (double g : trace.gate) {
            gsum += g;
        }
        CHECK(std::abs(gsum - 1.0) < 1e-9);
        for (auto [task, p] : trace.predictions) {
            CHECK(p > 0.0);
            CHECK(p < 1.0);
        }
    }
    auto one = RandomExample(rng, m.config(), 1);
    auto trace = EsuForwardTrace(m, one);
    REQUIRE(trace.attention.size() == 1);
    CHECK(trace.attention[0] == 1.0);
}

TEST_CASE("forward matches a hand computation at h=2, k=2") {
    EsuConfig c;
    c.item_vocab = 3;
    c.sid1_vocab = c.sid2_vocab = c.sid3_vocab = 1;
    c.embed_dim = 1;
    c.attn_dim = 2;
    c.experts = 1;
    c.expert_hidden = 1;
    c.expert_out = 1;
    c.tasks = {"ctr"};
    EsuModel m(c);
    std::fill(m.params().begin(), m.params().end(), 0.0);
    // Item embeddings (sid tables stay zero): rows 0, 1, 2 -> 1.0, 2.0, -1.0.
    auto item = m.view("item_table");
    item[0] = 1.0;
    item[1] = 2.0;
    item[2] = -1.0;
    // Only the item slot (column 0 of each projection row) is non-zero.
    auto wq = m.view("wq");
    auto wk = m.view("wk");
    auto wv = m.view("wv");
    wq[0 * 4] = 1.0;
    wq[1 * 4] = 0.5;
    wk[0 * 4] = 1.0;
    wk[1 * 4] = -1.0;
    wv[0 * 4] = 2.0;
    wv[1 * 4] = 1.0;
    // Expert: hidden = relu(o_0 + x_item), out = hidden, head: logit = 0.7 * out - 0.2.
    auto w1 = m.view("expert_w1");
    w1[0] = 1.0;  // o_0
    w1[2] = 1.0;  // x_target item slot
    m.view("expert_w2")[0] = 1.0;
    m.view("head_w")[0] = 0.7;
    m.view("head_b")[0] = -0.2;

    TrainingExample ex;
    ex.target = {0, {0, 0, 0}};
    ex.subsequence = {{1, {0, 0, 0}}, {2, {0, 0, 0}}};
    ex.labels = {{"ctr", 1}};

    // Hand chain.
    double xt = 1.0;
    double q0 = 1.0 * xt, q1 = 0.5 * xt;
    double k1[2] = {1.0 * 2.0, -1.0 * 2.0};
    double k2[2] = {1.0 * -1.0, -1.0 * -1.0};
    double s1 = (q0 * k1[0] + q1 * k1[1]) / std::sqrt(2.0);
    double s2 = (q0 * k2[0] + q1 * k2[1]) / std::sqrt(2.0);
    double a1 = std::exp(s1) / (std::exp(s1) + std::exp(s2));
    double a2 = 1.0 - a1;
    double o0 = a1 * (2.0 * 2.0) + a2 * (2.0 * -1.0);
    double hidden = std::max(0.0, o0 + xt);
    double logit = 0.7 * hidden - 0.2;
    double prob = 1.0 / (1.0 + std::exp(-logit));

    auto trace = EsuForwardTrace(m, ex);
    CHECK(trace.attention[0] == doctest::Approx(a1).epsilon(1e-12));
    CHECK(trace.attention[1] == doctest::Approx(a2).epsilon(1e-12));
    CHECK(trace.predictions.at("ctr") == doctest::Approx(prob).epsilon(1e-12));
}

TEST_CASE("empty subsequence uses the null vector") {
    EsuModel m(SmallConfig(2));
    Rng rng(2);
    auto ex = RandomExample(rng, m.config(), 0);
    auto before = EsuForward(m, ex);
    for (auto& v : m.view("null_value")) {
        v += 1.0;
    }
    auto after = EsuForward(m, ex);
    CHECK(before.at("ctr") != after.at("ctr"));
    std::vector<double> grad(m.params().size(), 0.0);
    EsuLossAndGradient(m, ex, &grad);
    const auto& g = m.group("null_value");
    double norm = 0;
    for (size_t i = g.offset; i < g.offset + g.size(); ++i) {
        norm += std::abs(grad[i]);
    }
    CHECK(norm > 0.0);
}

TEST_CASE("out of range ids and bad side features are rejected") {
    EsuModel m(SmallConfig(3));
    Rng rng(3);
    auto ex = RandomExample(rng, m.config(), 2);
    ex.target.item = 12;
    CHECK_THROWS_AS(EsuForward(m, ex), ArgumentError);
    ex.target.item = 0;
    ex.subsequence[1].sid.c3 = 7;
    CHECK_THROWS_AS(EsuForward(m, ex), ArgumentError);
    ex.subsequence[1].sid.c3 = 0;
    ex.side = {1.0};
    CHECK_THROWS_AS(EsuForward(m, ex), ArgumentError);
    EsuConfig bad = SmallConfig(0);
    bad.tasks.clear();
    CHECK_THROWS_AS(EsuModel{bad}, ArgumentError);
}

TEST_CASE("gradient check over random draws") {
    Rng rng(42);
    for (int draw = 0; draw < 10; ++draw) {
        auto c = SmallConfig(draw);
        c.side_dim = draw % 2 ? 2 : 0;
        c.use_sid = draw % 3 != 0;
        EsuModel m(c);
        Jitter(m, rng);
        auto ex = RandomExample(rng, c, draw % 4);
        auto r = GradCheck(m, ex);
        CHECK(r.all_finite);
        INFO("worst group " << r.worst_group << " index " << r.worst_index);
        CHECK(r.max_relative_error < 1e-4);
    }
}

TEST_CASE("zero input example keeps gradients finite") {
    auto c = SmallConfig(5);
    EsuModel m(c);
    std::fill(m.params().begin(), m.params().end(), 0.0);
    TrainingExample ex;
    ex.target = {0, {0, 0, 0}};
    ex.subsequence = {{0, {0, 0, 0}}, {0, {0, 0, 0}}};
    ex.labels = {{"ctr", 1}, {"cvr", 0}};
    std::vector<double> grad(m.params().size(), 0.0);
    double loss = EsuLossAndGradient(m, ex, &grad);
    CHECK(loss == doctest::Approx(2 * std::log(2.0)));
    for (double g : grad) {
        CHECK(std::isfinite(g));
    }
    CHECK(GradCheck(m, ex).all_finite);
}

TEST_CASE("clamped region gradient matches the clamped loss") {
    auto c = SmallConfig(6);
    EsuModel m(c);
    Rng rng(6);
    auto ex = RandomExample(rng, c, 3);
    // Saturate both heads far past 1 - eps against a zero label.
    m.view("head_b")[0] = 40.0;
    m.view("head_b")[1] = -40.0;
    ex.labels = {{"ctr", 0}, {"cvr", 1}};
    auto pred = EsuForward(m, ex);
    CHECK(pred.at("ctr") > 1.0 - kBceEpsilon);
    auto r = GradCheck(m, ex);
    CHECK(r.all_finite);
    CHECK(r.max_relative_error < 1e-4);
    std::vector<double> grad(m.params().size(), 0.0);
    EsuLossAndGradient(m, ex, &grad);
    for (double g : grad) {
        CHECK(g == 0.0);
    }
}

TEST_CASE("train step: null update, locality, determinism") {
    auto c = SmallConfig(7);
    EsuModel m(c);
    Rng rng(7);
    std::vector<TrainingExample> batch;
    for (int i = 0; i < 20; ++i) {
        auto ex = RandomExample(rng, c, 3);
        // Item rows 10 and 11 never appear.
        ex.target.item %= 10;
        for (auto& s : ex.subsequence) {
            s.item %= 10;
        }
        batch.push_back(ex);
    }
    EsuModel frozen = m;
    TrainStep(frozen, batch, 0.0);
    CHECK(frozen.params() == m.params());

    EsuModel stepped = m;
    TrainStep(stepped, batch, 0.1);
    const auto& g = m.group("item_table");
    for (size_t row : {10, 11}) {
        for (size_t j = 0; j < c.embed_dim; ++j) {
            size_t i = g.offset + row * c.embed_dim + j;
            CHECK(stepped.params()[i] == m.params()[i]);
        }
    }
    CHECK(stepped.params() != m.params());

    EsuModel threaded = m;
    TrainStep(threaded, batch, 0.1, 4);
    CHECK(threaded.params() == stepped.params());

    CHECK_THROWS_AS(TrainStep(frozen, batch, -1.0), ArgumentError);
    CHECK_THROWS_AS(TrainStep(frozen, {}, 0.1), ArgumentError);
    EsuModel broken = m;
    broken.view("head_w")[0] = std::nan("");
    CHECK_THROWS_AS(TrainStep(broken, batch, 0.1), TrainingError);
}

TEST_CASE("training on a separable batch lowers the loss") {
    auto c = SmallConfig(8);
    c.tasks = {"ctr"};
    EsuModel m(c);
    Rng rng(8);
    std::vector<TrainingExample> batch;
    for (int i = 0; i < 32; ++i) {
        auto ex = RandomExample(rng, c, 2);
        ex.labels = {{"ctr", ex.target.item < 6 ? 1 : 0}};
        batch.push_back(ex);
    }
    double initial = MeanLoss(m, batch);
    for (int step = 0; step < 200; ++step) {
        TrainStep(m, batch, 0.2);
    }
    CHECK(MeanLoss(m, batch) < initial);
}

TEST_CASE("checkpoint roundtrip") {
    auto dir = TempDir("esu_io");
    auto c = SmallConfig(9);
    c.side_dim = 3;
    c.use_sid = false;
    EsuModel m(c);
    m.vocabulary.Add(77);
    m.vocabulary.Add(78);
    m.Save(dir / "m.sidm");
    auto back = EsuModel::Load(dir / "m.sidm");
    CHECK(back.params() == m.params());
    CHECK(back.config().tasks == c.tasks);
    CHECK(back.config().side_dim == 3);
    CHECK_FALSE(back.config().use_sid);
    CHECK(back.vocabulary.Lookup(78) == 2);
    WriteFile(dir / "bad.sidm", "SIDM....");
    CHECK_THROWS(EsuModel::Load(dir / "bad.sidm"));
}
