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

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "sidrec/alignpipe.h"
#include "sidrec/embedstore.h"
#include "sidrec/error.h"
#include "sidrec/esu.h"
#include "sidrec/gsu.h"
#include "sidrec/judge.h"
#include "sidrec/quantizer.h"
#include "sidrec/rank_metrics.h"
#include "sidrec/rng.h"
#include "sidrec/segmask.h"
#include "sidrec/sidstore.h"
#include "sidrec_cli.h"

namespace sidrec::cli {

using nlohmann::json;
namespace fs = std::filesystem;

const std::vector<std::string>&
Subcommands() {
    static const std::vector<std::string> names = {
        "ingest",     "pca",        "quantize-train", "quantize-assign", "sid-analyze",
        "gsu-retrieve", "gsu-eval", "esu-train",      "esu-eval",        "pairs-export",
        "pairs-filter", "mask-demo", "prep-public"};
    return names;
}

json
DefaultConfig() {
    return json{
        {"seed", 7},
        {"threads", 1},
        {"paths",
         {{"work_dir", "."},
          {"embeddings_jsonl", "embeddings.jsonl"},
          {"embeddings", "embeddings.sidf"},
          {"pca", "pca.sidp"},
          {"reduced_embeddings", "reduced.sidf"},
          {"quantizer", "quantizer.sidm"},
          {"sids", "sids.jsonl"},
          {"store", "store.side"},
          {"sequences", "sequences.jsonl"},
          {"examples", "examples.jsonl"},
          {"checkpoint", "esu.sidm"},
          {"items_meta", "items_meta.jsonl"},
          {"pairs", "pairs.jsonl"},
          {"verdicts", "verdicts.jsonl"},
          {"accepted_pairs", "accepted_pairs.jsonl"},
          {"ratings", "ratings.csv"},
          {"public_train", "public_train.jsonl"},
          {"public_test", "public_test.jsonl"}}},
        {"pca", {{"rank", 8}}},
        {"quantizer",
         {{"method", "reskmeansfsq"},
          {"input", "raw"},
          {"k", 16},
          {"n_fsq", 13},
          {"levels", 1},
          {"max_iters", 50},
          {"fsq_epochs", 20},
          {"fsq_lr", 0.05},
          {"fsq_batch", 64}}},
        {"sid", {{"ks", {1, 5, 10}}}},
        {"gsu",
         {{"embeddings", "reduced"},
          {"k", 50},
          {"per_trigger_k", 50},
          {"triggers", 10},
          {"holdout", 5},
          {"ks", {50, 100, 200, 500}}}},
        {"esu",
         {{"targets_per_user", 4},
          {"embed_dim", 8},
          {"attn_dim", 8},
          {"experts", 4},
          {"expert_hidden", 16},
          {"expert_out", 8},
          {"lr", 0.05},
          {"epochs", 5},
          {"batch", 32},
          {"tasks", {"ctr", "cvr"}},
          {"use_sid", true},
          {"sid3_buckets", 65536},
          {"test_fraction", 0.2},
          {"init_scale", 0.1}}},
        {"pairs", {{"sources", "both"}, {"min_score", 1.0}, {"top_n", 10}, {"window", 50}}},
        {"judge",
         {{"mode", "category"},
          {"host", "127.0.0.1"},
          {"port", 8080},
          {"path", "/judge"},
          {"timeout_ms", 5000},
          {"max_retries", 2},
          {"max_in_flight", 4}}},
        {"mask", {{"n_in", 4}, {"n_emb", 2}, {"n_qa", 3}, {"embed_dim", 4}, {"step", 0}, {"total_steps", 10}}},
        {"public",
         {{"positive_threshold", 4.0},
          {"min_sequence_length", 20},
          {"test_fraction", 0.15},
          {"retrieval_depth", 50},
          {"retrieve", false}}},
    };
}

namespace {

void
CheckType(const json& slot, const json& value, const std::string& key) {
    if (slot.is_number_integer()) {
        if (!value.is_number_integer()) {
            throw ConfigError(key, "expected a non-negative integer");
        }
        if (value.is_number_integer() && !value.is_number_unsigned() && value.get<int64_t>() < 0) {
            throw ConfigError(key, "expected a non-negative integer");
        }
    } else if (slot.is_number()) {
        if (!value.is_number()) {
            throw ConfigError(key, "expected a number");
        }
    } else if (slot.is_boolean()) {
        if (!value.is_boolean()) {
            throw ConfigError(key, "expected true or false");
        }
    } else if (slot.is_string()) {
        if (!value.is_string()) {
            throw ConfigError(key, "expected a string");
        }
    } else if (slot.is_array()) {
        if (!value.is_array()) {
            throw ConfigError(key, "expected a list");
        }
        if (!slot.empty()) {
            for (const auto& v : value) {
                CheckType(slot.front(), v, key);
            }
        }
    }
}

void
MergeInto(json& base, const json& over, const std::string& prefix) {
    if (!over.is_object()) {
        throw ConfigError(prefix.empty() ? "<root>" : prefix, "expected a table of keys");
    }
    for (const auto& [k, v] : over.items()) {
        const std::string key = prefix.empty() ? k : prefix + "." + k;
        if (!base.contains(k)) {
            throw ConfigError(key, "unknown key");
        }
        json& slot = base[k];
        if (slot.is_object()) {
            MergeInto(slot, v, key);
        } else {
            CheckType(slot, v, key);
            slot = v;
        }
    }
}

json
OverrideToJson(const std::string& text) {
    auto eq = text.find('=');
    if (eq == std::string::npos || eq == 0) {
        throw ConfigError(text, "override must look like key=value");
    }
    std::string key = text.substr(0, eq);
    std::string raw = text.substr(eq + 1);
    json value = json::parse(raw, nullptr, false);
    if (value.is_discarded()) {
        value = raw;
    }
    std::vector<std::string> parts;
    std::stringstream ss(key);
    for (std::string p; std::getline(ss, p, '.');) {
        if (p.empty()) {
            throw ConfigError(key, "empty key segment");
        }
        parts.push_back(p);
    }
    for (auto it = parts.rbegin(); it != parts.rend(); ++it) {
        value = json{{*it, value}};
    }
    return value;
}

void
Require(bool ok, const std::string& key, const std::string& what) {
    if (!ok) {
        throw ConfigError(key, what);
    }
}

}  // namespace

RunConfig
RunConfig::Build(const std::optional<fs::path>& file, const std::vector<std::string>& overrides) {
    RunConfig cfg;
    cfg.root_ = DefaultConfig();
    if (file) {
        std::ifstream in(*file);
        if (!in) {
            throw ConfigError("--config", "cannot open " + file->string());
        }
        json user = json::parse(in, nullptr, false);
        if (user.is_discarded()) {
            throw ConfigError("--config", "not valid JSON: " + file->string());
        }
        MergeInto(cfg.root_, user, "");
    }
    for (const auto& o : overrides) {
        MergeInto(cfg.root_, OverrideToJson(o), "");
    }
    cfg.Validate();
    return cfg;
}

const json&
RunConfig::at(const std::string& dotted) const {
    const json* node = &root_;
    std::stringstream ss(dotted);
    for (std::string p; std::getline(ss, p, '.');) {
        node = &node->at(p);
    }
    return *node;
}

fs::path
RunConfig::path(const std::string& name) const {
    fs::path p = get<std::string>("paths." + name);
    if (p.is_absolute()) {
        return p;
    }
    return fs::path(get<std::string>("paths.work_dir")) / p;
}

void
RunConfig::Validate() const {
    Require(threads() >= 1, "threads", "must be at least 1");
    Require(get<size_t>("pca.rank") >= 1, "pca.rank", "must be at least 1");
    auto method = get<std::string>("quantizer.method");
    Require(method == "reskmeansfsq" || method == "reskmeans", "quantizer.method",
            "must be reskmeansfsq or reskmeans");
    for (const char* key : {"quantizer.input", "gsu.embeddings"}) {
        auto v = get<std::string>(key);
        Require(v == "raw" || v == "reduced", key, "must be raw or reduced");
    }
    Require(get<size_t>("quantizer.k") >= 1, "quantizer.k", "must be at least 1");
    Require(get<size_t>("quantizer.n_fsq") >= 1, "quantizer.n_fsq", "must be at least 1");
    Require(get<size_t>("quantizer.levels") >= 1, "quantizer.levels", "must be at least 1");
    Require(get<size_t>("quantizer.fsq_batch") >= 1, "quantizer.fsq_batch", "must be at least 1");
    Require(get<double>("quantizer.fsq_lr") > 0.0, "quantizer.fsq_lr", "must be positive");
    for (const char* key : {"sid.ks", "gsu.ks"}) {
        const auto& ks = at(key);
        Require(!ks.empty(), key, "must not be empty");
        for (const auto& k : ks) {
            Require(k.get<size_t>() >= 1, key, "entries must be at least 1");
        }
    }
    for (const char* key : {"gsu.k", "gsu.per_trigger_k", "gsu.triggers", "gsu.holdout", "esu.targets_per_user",
                            "esu.embed_dim", "esu.attn_dim", "esu.experts", "esu.expert_hidden",
                            "esu.expert_out", "esu.batch", "esu.sid3_buckets", "pairs.top_n", "pairs.window",
                            "judge.max_in_flight", "mask.embed_dim", "mask.total_steps",
                            "public.min_sequence_length", "public.retrieval_depth"}) {
        Require(get<size_t>(key) >= 1, key, "must be at least 1");
    }
    Require(get<double>("esu.lr") >= 0.0, "esu.lr", "must be non-negative");
    Require(!at("esu.tasks").empty(), "esu.tasks", "must name at least one task");
    std::set<std::string> tasks;
    for (const auto& t : at("esu.tasks")) {
        Require(tasks.insert(t.get<std::string>()).second, "esu.tasks", "duplicate task");
    }
    for (const char* key : {"esu.test_fraction", "public.test_fraction"}) {
        double f = get<double>(key);
        Require(f >= 0.0 && f < 1.0, key, "must be in [0, 1)");
    }
    auto sources = get<std::string>("pairs.sources");
    Require(sources == "both" || sources == "i2i" || sources == "u2i", "pairs.sources",
            "must be both, i2i or u2i");
    auto mode = get<std::string>("judge.mode");
    Require(mode == "category" || mode == "accept_all" || mode == "http", "judge.mode",
            "must be category, accept_all or http");
    auto port = get<size_t>("judge.port");
    Require(port >= 1 && port <= 65535, "judge.port", "must be a TCP port");
    Require(get<size_t>("mask.n_in") + get<size_t>("mask.n_emb") + get<size_t>("mask.n_qa") >= 1, "mask",
            "layout has no tokens");
    Require(get<size_t>("mask.step") <= get<size_t>("mask.total_steps"), "mask.step",
            "must not exceed mask.total_steps");
}

namespace {

class Report {
 public:
    void
    Add(const std::string& key, const std::string& value) {
        lines_.emplace_back(key, value);
    }
    void
    Add(const std::string& key, const char* value) {
        Add(key, std::string(value));
    }
    void
    Add(const std::string& key, double value) {
        char buf[64];
        std::snprintf(buf, sizeof(buf), "%.9g", value);
        Add(key, std::string(buf));
    }
    void
    Add(const std::string& key, size_t value) {
        Add(key, std::to_string(value));
    }
    void
    Add(const std::string& key, bool value) {
        Add(key, value ? "true" : "false");
    }

    void
    Print(std::ostream& out) const {
        for (const auto& [k, v] : lines_) {
            out << k << '=' << v << '\n';
        }
    }

 private:
    std::vector<std::pair<std::string, std::string>> lines_;
};

void
Log(std::ostream& err, const std::string& stage, const std::string& msg) {
    err << "[sidrec " << stage << "] " << msg << '\n';
}

std::ofstream
OpenOut(const fs::path& p) {
    if (p.has_parent_path()) {
        fs::create_directories(p.parent_path());
    }
    std::ofstream out(p, std::ios::binary);
    if (!out) {
        throw IoError("cannot write " + p.string());
    }
    return out;
}

std::ifstream
OpenIn(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) {
        throw IoError("cannot read " + p.string());
    }
    return in;
}

template <class Fn>
void
ForEachJsonLine(const fs::path& p, Fn fn) {
    auto in = OpenIn(p);
    std::string line;
    size_t no = 0;
    while (std::getline(in, line)) {
        ++no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) {
            continue;
        }
        json j = json::parse(line, nullptr, false);
        if (j.is_discarded()) {
            throw FormatError(p.string() + " line " + std::to_string(no) + ": not valid JSON");
        }
        try {
            fn(j);
        } catch (const json::exception& e) {
            throw FormatError(p.string() + " line " + std::to_string(no) + ": " + e.what());
        }
    }
}

std::vector<UserSequence>
ReadSequences(const fs::path& p) {
    std::vector<UserSequence> out;
    ForEachJsonLine(p, [&](const json& j) {
        UserSequence s;
        s.user_id = j.at("user_id").get<uint64_t>();
        for (const auto& e : j.at("events")) {
            s.events.push_back({e.at("item").get<ItemId>(), e.at("ts").get<int64_t>(), e.value("click", false),
                                e.value("order", false)});
        }
        s.Validate();
        out.push_back(std::move(s));
    });
    return out;
}

std::vector<std::pair<ItemId, SemanticId>>
ReadSids(const fs::path& p) {
    std::vector<std::pair<ItemId, SemanticId>> out;
    ForEachJsonLine(p, [&](const json& j) {
        SemanticId sid{j.at("c1").get<uint32_t>(), j.at("c2").get<uint32_t>(), j.at("c3").get<uint64_t>()};
        out.emplace_back(j.at("item_id").get<ItemId>(), sid);
    });
    return out;
}

EmbeddingMatrix
GsuCatalog(const RunConfig& cfg) {
    return LoadEmbeddings(cfg.get<std::string>("gsu.embeddings") == "raw" ? cfg.path("embeddings")
                                                                         : cfg.path("reduced_embeddings"));
}

EmbeddingMatrix
QuantizerInput(const RunConfig& cfg) {
    return LoadEmbeddings(cfg.get<std::string>("quantizer.input") == "raw" ? cfg.path("embeddings")
                                                                          : cfg.path("reduced_embeddings"));
}

void
AddMse(Report& r, const std::string& prefix, const LevelMse& mse) {
    for (size_t i = 0; i < 3; ++i) {
        r.Add(prefix + std::to_string(i + 1), mse[i]);
    }
}

int
Ingest(const RunConfig& cfg, Report& r, std::ostream& err) {
    auto m = LoadEmbeddingsJsonl(cfg.path("embeddings_jsonl"));
    SaveEmbeddings(m, cfg.path("embeddings"));
    Log(err, "ingest", "wrote " + cfg.path("embeddings").string());
    r.Add("items", m.size());
    r.Add("dim", size_t{m.dim()});
    return kExitOk;
}

int
Pca(const RunConfig& cfg, Report& r, std::ostream& err) {
    auto m = LoadEmbeddings(cfg.path("embeddings"));
    auto pca = PcaFit(m, cfg.get<size_t>("pca.rank"));
    SavePca(pca, cfg.path("pca"));
    auto reduced = PcaApply(pca, m);
    SaveEmbeddings(reduced, cfg.path("reduced_embeddings"));
    double explained = 0.0;
    for (double v : pca.explained_variance) {
        explained += v;
    }
    Log(err, "pca", "wrote " + cfg.path("reduced_embeddings").string());
    r.Add("items", m.size());
    r.Add("input_dim", pca.dim());
    r.Add("rank", pca.rank());
    r.Add("explained_variance_ratio", pca.total_variance > 0 ? explained / pca.total_variance : 0.0);
    return kExitOk;
}

QuantizerOptions
QuantOptions(const RunConfig& cfg) {
    QuantizerOptions o;
    o.k = cfg.get<size_t>("quantizer.k");
    o.n_fsq = cfg.get<size_t>("quantizer.n_fsq");
    o.levels = cfg.get<uint32_t>("quantizer.levels");
    o.max_iters = cfg.get<size_t>("quantizer.max_iters");
    o.seed = cfg.seed();
    o.threads = cfg.threads();
    o.fsq.epochs = cfg.get<size_t>("quantizer.fsq_epochs");
    o.fsq.lr = cfg.get<double>("quantizer.fsq_lr");
    o.fsq.batch = cfg.get<size_t>("quantizer.fsq_batch");
    return o;
}

int
QuantizeTrain(const RunConfig& cfg, Report& r, std::ostream& err) {
    auto m = QuantizerInput(cfg);
    auto opts = QuantOptions(cfg);
    auto method = cfg.get<std::string>("quantizer.method");
    r.Add("method", method);
    r.Add("items", m.size());
    if (method == "reskmeansfsq") {
        auto model = ResKmeansFsqFit(m, opts);
        model.Save(cfg.path("quantizer"));
        AddMse(r, "level_mse_", model.training_report);
        r.Add("fsq_training_loss", model.fsq_training_loss);
    } else {
        auto model = ResKmeansFit(m.ToMatrix(), opts);
        model.Save(cfg.path("quantizer"));
        AddMse(r, "level_mse_", model.training_report);
    }
    Log(err, "quantize-train", "wrote " + cfg.path("quantizer").string());
    return kExitOk;
}

int
QuantizeAssign(const RunConfig& cfg, Report& r, std::ostream& err) {
    auto model = LoadQuantizer(cfg.path("quantizer"));
    auto m = QuantizerInput(cfg);
    if (m.dim() != model->dim()) {
        throw ConsistencyError("quantizer expects dimension " + std::to_string(model->dim()) + ", embeddings have " +
                               std::to_string(m.dim()));
    }
    SidEdgeStore store;
    auto out = OpenOut(cfg.path("sids"));
    for (size_t i = 0; i < m.size(); ++i) {
        auto sid = model->Assign(m.RowAsDouble(i));
        store.Insert(m.id(i), sid);
        out << json{{"item_id", m.id(i)}, {"c1", sid.c1}, {"c2", sid.c2}, {"c3", sid.c3}}.dump() << '\n';
    }
    store.Save(cfg.path("store"));
    Log(err, "quantize-assign", "wrote " + cfg.path("sids").string() + " and " + cfg.path("store").string());
    r.Add("items", m.size());
    r.Add("buckets", store.bucket_count());
    AddMse(r, "level_mse_", LevelMseReport(*model, m));
    return kExitOk;
}

int
SidAnalyze(const RunConfig& cfg, Report& r, std::ostream& err) {
    auto store = SidEdgeStore::Load(cfg.path("store"));
    auto queries = ReadSids(cfg.path("sids"));
    auto ks = cfg.get<std::vector<size_t>>("sid.ks");
    auto report = BuildCollisionReport(store, queries, ks);
    Log(err, "sid-analyze", std::to_string(queries.size()) + " queries");
    r.Add("items", report.items);
    r.Add("buckets", report.buckets);
    r.Add("queries", report.queries);
    r.Add("collision_rate", report.collision_rate);
    r.Add("bucket_collision_rate", report.bucket_collision_rate);
    r.Add("edge_num", report.edge_num);
    for (const auto& [k, v] : report.hr_at_k) {
        r.Add("hr@" + std::to_string(k), v);
    }
    return kExitOk;
}

int
GsuRetrieve(const RunConfig& cfg, Report& r, std::ostream& err) {
    auto catalog = GsuCatalog(cfg);
    auto sequences = ReadSequences(cfg.path("sequences"));
    std::map<ItemId, SemanticId> sids;
    for (const auto& [item, sid] : ReadSids(cfg.path("sids"))) {
        sids[item] = sid;
    }
    auto sid_json = [&](ItemId item) {
        auto it = sids.find(item);
        SemanticId s = it == sids.end() ? SemanticId{} : it->second;
        return json{{"item", item}, {"c1", s.c1}, {"c2", s.c2}, {"c3", s.c3}};
    };
    const size_t per_user = cfg.get<size_t>("esu.targets_per_user");
    const size_t depth = cfg.get<size_t>("gsu.k");
    auto out = OpenOut(cfg.path("examples"));
    size_t examples = 0;
    size_t skipped = 0;
    size_t total_len = 0;
    for (const auto& seq : sequences) {
        const size_t t = seq.events.size();
        const size_t first = t > per_user ? t - per_user : 0;
        for (size_t p = first; p < t; ++p) {
            const auto& ev = seq.events[p];
            if (!catalog.Find(ev.item)) {
                ++skipped;
                continue;
            }
            std::vector<ItemId> history;
            for (size_t q = 0; q < p; ++q) {
                if (seq.events[q].click) {
                    history.push_back(seq.events[q].item);
                }
            }
            auto sub = SelectSubsequence(catalog, history, ev.item, depth);
            json j{{"user_id", seq.user_id},
                   {"target", sid_json(ev.item)},
                   {"labels", {{"ctr", ev.click ? 1 : 0}, {"cvr", ev.order ? 1 : 0}}}};
            j["subsequence"] = json::array();
            for (ItemId item : sub) {
                j["subsequence"].push_back(sid_json(item));
            }
            out << j.dump() << '\n';
            ++examples;
            total_len += sub.size();
        }
    }
    Log(err, "gsu-retrieve", "wrote " + cfg.path("examples").string());
    r.Add("users", sequences.size());
    r.Add("examples", examples);
    r.Add("skipped_targets", skipped);
    r.Add("mean_subsequence_length", examples ? static_cast<double>(total_len) / examples : 0.0);
    return kExitOk;
}

int
GsuEval(const RunConfig& cfg, Report& r, std::ostream& err) {
    auto catalog = GsuCatalog(cfg);
    auto sequences = ReadSequences(cfg.path("sequences"));
    const size_t holdout = cfg.get<size_t>("gsu.holdout");
    const size_t n_triggers = cfg.get<size_t>("gsu.triggers");
    std::vector<EvalUser> users;
    for (const auto& seq : sequences) {
        EvalUser u;
        u.user_id = seq.user_id;
        const size_t t = seq.events.size();
        const size_t split = t > holdout ? t - holdout : 0;
        UserSequence past{seq.user_id, {seq.events.begin(), seq.events.begin() + split}};
        u.triggers = past.LastClicked(n_triggers);
        std::set<ItemId> seen;
        for (size_t p = split; p < t; ++p) {
            if (seq.events[p].click && seen.insert(seq.events[p].item).second) {
                u.ground_truth.push_back(seq.events[p].item);
            }
        }
        users.push_back(std::move(u));
    }
    PooledEvalOptions opts;
    opts.per_trigger_k = cfg.get<size_t>("gsu.per_trigger_k");
    opts.ks = cfg.get<std::vector<size_t>>("gsu.ks");
    opts.threads = cfg.threads();
    auto report = PooledRetrieveEval(catalog, users, opts);
    Log(err, "gsu-eval", std::to_string(report.users_evaluated) + " users evaluated");
    r.Add("users_evaluated", report.users_evaluated);
    r.Add("users_skipped", report.users_skipped);
    for (const auto& [k, v] : report.macro) {
        r.Add("hr@" + std::to_string(k), v);
    }
    for (const auto& [k, v] : report.micro) {
        r.Add("hr_micro@" + std::to_string(k), v);
    }
    return kExitOk;
}

struct RawFeature {
    ItemId item = 0;
    SemanticId sid;
};

struct RawExample {
    uint64_t user_id = 0;
    RawFeature target;
    std::vector<RawFeature> subsequence;
    std::map<std::string, int> labels;
};

RawFeature
ParseFeature(const json& j) {
    return {j.at("item").get<ItemId>(),
            {j.at("c1").get<uint32_t>(), j.at("c2").get<uint32_t>(), j.at("c3").get<uint64_t>()}};
}

std::vector<RawExample>
ReadExamples(const fs::path& p) {
    std::vector<RawExample> out;
    ForEachJsonLine(p, [&](const json& j) {
        RawExample ex;
        ex.user_id = j.at("user_id").get<uint64_t>();
        ex.target = ParseFeature(j.at("target"));
        for (const auto& s : j.at("subsequence")) {
            ex.subsequence.push_back(ParseFeature(s));
        }
        ex.labels = j.at("labels").get<std::map<std::string, int>>();
        out.push_back(std::move(ex));
    });
    if (out.empty()) {
        throw DataError("no examples in " + p.string());
    }
    return out;
}

// Seeded user-level split; returns the set of test users.
std::set<uint64_t>
TestUsers(const std::vector<RawExample>& examples, double fraction, uint64_t seed) {
    std::set<uint64_t> unique;
    for (const auto& ex : examples) {
        unique.insert(ex.user_id);
    }
    std::vector<uint64_t> users(unique.begin(), unique.end());
    Rng rng(seed + 0x500);
    rng.Shuffle(users);
    auto n_test = static_cast<size_t>(std::llround(fraction * static_cast<double>(users.size())));
    return {users.begin(), users.begin() + std::min(n_test, users.size())};
}

ItemFeatures
ToFeatures(const RawFeature& f, const EsuModel& model) {
    const auto& c = model.config();
    return {model.vocabulary.Lookup(f.item),
            {static_cast<uint32_t>(f.sid.c1 % c.sid1_vocab), static_cast<uint32_t>(f.sid.c2 % c.sid2_vocab),
             f.sid.c3 % c.sid3_vocab}};
}

TrainingExample
ToExample(const RawExample& raw, const EsuModel& model) {
    TrainingExample ex;
    ex.user_id = raw.user_id;
    ex.target = ToFeatures(raw.target, model);
    for (const auto& s : raw.subsequence) {
        ex.subsequence.push_back(ToFeatures(s, model));
    }
    for (const auto& task : model.config().tasks) {
        auto it = raw.labels.find(task);
        if (it == raw.labels.end()) {
            throw DataError("example for user " + std::to_string(raw.user_id) + " lacks label " + task);
        }
        ex.labels[task] = it->second;
    }
    return ex;
}

void
AddRankMetrics(Report& r,
               const EsuModel& model,
               const std::vector<TrainingExample>& examples,
               const std::string& prefix) {
    for (const auto& task : model.config().tasks) {
        std::vector<ScoredExample> scored;
        bool pos = false;
        bool neg = false;
        for (const auto& ex : examples) {
            int label = ex.labels.at(task);
            scored.push_back({ex.user_id, EsuForward(model, ex).at(task), label});
            (label ? pos : neg) = true;
        }
        if (!(pos && neg)) {
            r.Add(prefix + "auc_" + task, "undefined");
            continue;
        }
        auto m = ComputeRankMetrics(scored);
        r.Add(prefix + "auc_" + task, m.auc);
        if (m.uauc) {
            r.Add(prefix + "uauc_" + task, *m.uauc);
        }
        if (m.gauc) {
            r.Add(prefix + "gauc_" + task, *m.gauc);
        }
    }
}

int
EsuTrain(const RunConfig& cfg, Report& r, std::ostream& err) {
    auto raw = ReadExamples(cfg.path("examples"));
    auto test_users = TestUsers(raw, cfg.get<double>("esu.test_fraction"), cfg.seed());

    EsuConfig ec;
    std::set<ItemId> items;
    uint32_t max_c1 = 0;
    uint32_t max_c2 = 0;
    uint64_t max_c3 = 0;
    auto visit = [&](const RawFeature& f) {
        items.insert(f.item);
        max_c1 = std::max(max_c1, f.sid.c1);
        max_c2 = std::max(max_c2, f.sid.c2);
        max_c3 = std::max(max_c3, f.sid.c3);
    };
    for (const auto& ex : raw) {
        if (test_users.count(ex.user_id)) {
            continue;
        }
        visit(ex.target);
        for (const auto& s : ex.subsequence) {
            visit(s);
        }
    }
    ec.item_vocab = items.size() + 1;
    ec.sid1_vocab = size_t{max_c1} + 1;
    ec.sid2_vocab = size_t{max_c2} + 1;
    ec.sid3_vocab = static_cast<size_t>(std::min<uint64_t>(max_c3 + 1, cfg.get<uint64_t>("esu.sid3_buckets")));
    ec.embed_dim = cfg.get<size_t>("esu.embed_dim");
    ec.attn_dim = cfg.get<size_t>("esu.attn_dim");
    ec.experts = cfg.get<size_t>("esu.experts");
    ec.expert_hidden = cfg.get<size_t>("esu.expert_hidden");
    ec.expert_out = cfg.get<size_t>("esu.expert_out");
    ec.tasks = cfg.get<std::vector<std::string>>("esu.tasks");
    ec.use_sid = cfg.get<bool>("esu.use_sid");
    ec.seed = cfg.seed();
    ec.init_scale = cfg.get<double>("esu.init_scale");
    EsuModel model(ec);
    for (ItemId item : items) {
        model.vocabulary.Add(item);
    }

    std::vector<TrainingExample> train;
    std::vector<TrainingExample> test;
    for (const auto& ex : raw) {
        (test_users.count(ex.user_id) ? test : train).push_back(ToExample(ex, model));
    }
    if (train.empty()) {
        throw DataError("the split left no training examples");
    }
    EsuTrainOptions opts;
    opts.epochs = cfg.get<size_t>("esu.epochs");
    opts.batch = cfg.get<size_t>("esu.batch");
    opts.lr = cfg.get<double>("esu.lr");
    opts.seed = cfg.seed();
    opts.threads = cfg.threads();
    auto report = TrainEsu(model, train, opts);
    model.Save(cfg.path("checkpoint"));
    Log(err, "esu-train", "wrote " + cfg.path("checkpoint").string());

    r.Add("train_examples", train.size());
    r.Add("test_examples", test.size());
    r.Add("parameters", model.params().size());
    r.Add("use_sid", ec.use_sid);
    r.Add("initial_loss", report.initial_loss);
    for (size_t e = 0; e < report.epoch_loss.size(); ++e) {
        r.Add("epoch_loss_" + std::to_string(e + 1), report.epoch_loss[e]);
    }
    r.Add("final_train_loss", MeanLoss(model, train));
    AddRankMetrics(r, model, train, "train_");
    return kExitOk;
}

int
EsuEval(const RunConfig& cfg, Report& r, std::ostream& err) {
    auto raw = ReadExamples(cfg.path("examples"));
    auto test_users = TestUsers(raw, cfg.get<double>("esu.test_fraction"), cfg.seed());
    auto model = EsuModel::Load(cfg.path("checkpoint"));
    std::vector<TrainingExample> test;
    for (const auto& ex : raw) {
        if (test_users.empty() || test_users.count(ex.user_id)) {
            test.push_back(ToExample(ex, model));
        }
    }
    Log(err, "esu-eval", "evaluating " + std::to_string(test.size()) + " examples");
    r.Add("examples", test.size());
    r.Add("loss", MeanLoss(model, test));
    AddRankMetrics(r, model, test, "");
    return kExitOk;
}

int
PairsExport(const RunConfig& cfg, Report& r, std::ostream& err) {
    auto sequences = ReadSequences(cfg.path("sequences"));
    std::vector<std::vector<ItemId>> clicked;
    for (const auto& seq : sequences) {
        std::vector<ItemId> c;
        for (const auto& e : seq.events) {
            if (e.click) {
                c.push_back(e.item);
            }
        }
        clicked.push_back(std::move(c));
    }
    auto sources = cfg.get<std::string>("pairs.sources");
    std::vector<ItemPair> pairs;
    if (sources != "u2i") {
        auto i2i = ExportI2iPairs(clicked, cfg.get<double>("pairs.min_score"), cfg.get<size_t>("pairs.top_n"));
        r.Add("i2i_pairs", i2i.size());
        pairs.insert(pairs.end(), i2i.begin(), i2i.end());
    }
    if (sources != "i2i") {
        auto catalog = LoadEmbeddings(cfg.path("embeddings"));
        auto u2i = ExportU2iPairs(clicked, catalog, cfg.get<size_t>("pairs.window"));
        r.Add("u2i_pairs", u2i.pairs.size());
        r.Add("u2i_skipped_missing_embedding", u2i.skipped_missing_embedding);
        pairs.insert(pairs.end(), u2i.pairs.begin(), u2i.pairs.end());
    }
    auto out = OpenOut(cfg.path("pairs"));
    WritePairsJsonl(out, pairs);
    Log(err, "pairs-export", "wrote " + cfg.path("pairs").string());
    r.Add("pairs", pairs.size());
    return kExitOk;
}

int
PairsFilter(const RunConfig& cfg, Report& r, std::ostream& err) {
    auto pairs_in = OpenIn(cfg.path("pairs"));
    auto pairs = ReadPairsJsonl(pairs_in);
    auto meta_in = OpenIn(cfg.path("items_meta"));
    auto catalog = ReadItemMetaJsonl(meta_in);
    std::unique_ptr<JudgeService> judge;
    auto mode = cfg.get<std::string>("judge.mode");
    if (mode == "category") {
        judge = MakeCategoryMatchJudge(catalog);
    } else if (mode == "accept_all") {
        judge = MakeAcceptAllJudge();
    } else {
        judge = std::make_unique<HttpJudgeClient>(cfg.get<std::string>("judge.host"), cfg.get<int>("judge.port"),
                                                  cfg.get<std::string>("judge.path"),
                                                  cfg.get<int>("judge.timeout_ms"));
    }
    FilterPolicy policy;
    policy.max_retries = cfg.get<size_t>("judge.max_retries");
    policy.max_in_flight = cfg.get<size_t>("judge.max_in_flight");
    auto result = FilterPairs(pairs, catalog, {judge.get(), judge.get()}, policy);
    {
        auto out = OpenOut(cfg.path("verdicts"));
        WriteVerdictsJsonl(out, result);
    }
    {
        auto out = OpenOut(cfg.path("accepted_pairs"));
        WritePairsJsonl(out, result.accepted);
    }
    Log(err, "pairs-filter", "wrote " + cfg.path("verdicts").string());
    r.Add("pairs", pairs.size());
    r.Add("accepted", result.accepted.size());
    r.Add("quarantined", result.quarantined.size());
    r.Add("transport_retries", result.transport_retries);
    for (const auto& [source, s] : result.stats) {
        std::string p(SourceName(source));
        r.Add(p + "_total", s.total);
        r.Add(p + "_accepted", s.accepted);
        r.Add(p + "_rejected", s.rejected);
        r.Add(p + "_quarantined", s.quarantined);
        r.Add(p + "_rejection_rate", s.rejection_rate());
    }
    return kExitOk;
}

Matrix
RandomMatrix(Rng& rng, size_t rows, size_t cols) {
    Matrix m(rows, cols);
    for (size_t i = 0; i < rows; ++i) {
        for (size_t j = 0; j < cols; ++j) {
            m(i, j) = rng.Normal() * 0.5;
        }
    }
    return m;
}

int
MaskDemo(const RunConfig& cfg, Report& r, std::ostream& err) {
    SegmentLayout layout{cfg.get<size_t>("mask.n_in"), cfg.get<size_t>("mask.n_emb"), cfg.get<size_t>("mask.n_qa")};
    AnnealSchedule schedule{cfg.get<size_t>("mask.total_steps")};
    const size_t step = cfg.get<size_t>("mask.step");
    auto mask = AnnealInputBias(BuildSegmentMask(layout), layout, step, schedule);
    const size_t e = cfg.get<size_t>("mask.embed_dim");
    Rng rng(cfg.seed() + 0x700);
    ToyAttentionParams params{RandomMatrix(rng, e, e), RandomMatrix(rng, e, e), RandomMatrix(rng, e, e)};
    Matrix tokens = RandomMatrix(rng, layout.total(), e);
    Matrix base = ToyForward(params, tokens, mask);
    Matrix perturbed_tokens = tokens;
    for (size_t i = layout.n_in + layout.n_emb; i < layout.total(); ++i) {
        for (size_t c = 0; c < e; ++c) {
            perturbed_tokens(i, c) += rng.Normal();
        }
    }
    Matrix perturbed = ToyForward(params, perturbed_tokens, mask);
    double delta = 0.0;
    for (size_t i = 0; i < layout.n_in + layout.n_emb; ++i) {
        for (size_t c = 0; c < e; ++c) {
            delta = std::max(delta, std::abs(perturbed(i, c) - base(i, c)));
        }
    }
    Log(err, "mask-demo", "\n" + MaskBiasToText(mask));
    r.Add("tokens", layout.total());
    r.Add("alpha", schedule.Alpha(step));
    std::istringstream rows(MaskToText(mask));
    size_t i = 0;
    for (std::string line; std::getline(rows, line); ++i) {
        r.Add("mask_row_" + std::to_string(i), line);
    }
    r.Add("qa_perturbation_max_prefix_delta", delta);
    return kExitOk;
}

json
SampleJson(const PublicSample& s) {
    return json{{"user", s.user},
                {"target", s.target},
                {"label", s.label},
                {"history", s.history},
                {"sampled_negative", s.sampled_negative},
                {"retrieved", s.retrieved}};
}

int
PrepPublic(const RunConfig& cfg, Report& r, std::ostream& err) {
    auto in = OpenIn(cfg.path("ratings"));
    size_t malformed = 0;
    auto records = ParseRatingsCsv(in, &malformed);
    PublicDatasetOptions o;
    o.positive_threshold = cfg.get<double>("public.positive_threshold");
    o.min_sequence_length = cfg.get<size_t>("public.min_sequence_length");
    o.test_fraction = cfg.get<double>("public.test_fraction");
    o.retrieval_depth = cfg.get<size_t>("public.retrieval_depth");
    o.seed = cfg.seed();
    auto ds = PrepPublicDataset(records, o, malformed);
    size_t without_retrieval = 0;
    const bool retrieve = cfg.get<bool>("public.retrieve");
    if (retrieve) {
        without_retrieval = AttachRetrieval(ds, GsuCatalog(cfg));
    }
    for (auto [name, samples] : {std::pair{"public_train", &ds.train}, std::pair{"public_test", &ds.test}}) {
        auto out = OpenOut(cfg.path(name));
        for (const auto& s : *samples) {
            out << SampleJson(s).dump() << '\n';
        }
    }
    Log(err, "prep-public", "wrote " + cfg.path("public_train").string() + " and " + cfg.path("public_test").string());
    r.Add("records", records.size());
    r.Add("malformed", ds.malformed);
    r.Add("users_total", ds.users_total);
    r.Add("users_too_short", ds.users_too_short);
    r.Add("users_without_positive", ds.users_without_positive);
    r.Add("test_users", ds.test_users);
    r.Add("train_samples", ds.train.size());
    r.Add("test_samples", ds.test.size());
    r.Add("retrieval_depth", ds.retrieval_depth);
    if (retrieve) {
        r.Add("samples_without_retrieval", without_retrieval);
    }
    return kExitOk;
}

}  // namespace

int
RunStage(const std::string& subcommand, const RunConfig& cfg, std::ostream& out, std::ostream& err) {
    using Stage = int (*)(const RunConfig&, Report&, std::ostream&);
    static const std::map<std::string, Stage> stages = {
        {"ingest", Ingest},           {"pca", Pca},
        {"quantize-train", QuantizeTrain}, {"quantize-assign", QuantizeAssign},
        {"sid-analyze", SidAnalyze},  {"gsu-retrieve", GsuRetrieve},
        {"gsu-eval", GsuEval},        {"esu-train", EsuTrain},
        {"esu-eval", EsuEval},        {"pairs-export", PairsExport},
        {"pairs-filter", PairsFilter}, {"mask-demo", MaskDemo},
        {"prep-public", PrepPublic},
    };
    auto it = stages.find(subcommand);
    if (it == stages.end()) {
        err << "sidrec: unknown subcommand '" << subcommand << "'\n";
        return kExitUsage;
    }
    Report report;
    int code = it->second(cfg, report, err);
    if (code == kExitOk) {
        report.Print(out);
    }
    return code;
}

int
Run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"sidrec: semantic-ID recommendation pipeline", "sidrec"};
    std::string config_file;
    std::vector<std::string> overrides;
    size_t threads = 0;
    app.add_option("-c,--config", config_file, "JSON config file");
    app.add_option("-s,--set", overrides, "override a config key, e.g. quantizer.k=64")->take_all();
    app.add_option("-t,--threads", threads, "worker threads (overrides the threads key)");
    app.require_subcommand(1);
    app.fallthrough();
    for (const auto& name : Subcommands()) {
        app.add_subcommand(name);
    }

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "sidrec: " << e.what() << '\n' << app.help();
        return kExitUsage;
    }
    auto picked = app.get_subcommands();
    if (picked.size() != 1) {
        err << "sidrec: expected exactly one subcommand\n";
        return kExitUsage;
    }
    const std::string subcommand = picked.front()->get_name();

    RunConfig cfg;
    try {
        if (threads > 0) {
            overrides.push_back("threads=" + std::to_string(threads));
        }
        std::optional<fs::path> file;
        if (!config_file.empty()) {
            file = config_file;
        }
        cfg = RunConfig::Build(file, overrides);
    } catch (const ConfigError& e) {
        err << "sidrec: config error: " << e.what() << '\n';
        return kExitConfig;
    }
    try {
        return RunStage(subcommand, cfg, out, err);
    } catch (const ConfigError& e) {
        err << "sidrec " << subcommand << ": config error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const std::exception& e) {
        err << "sidrec " << subcommand << ": " << e.what() << '\n';
        return kExitFailure;
    }
}

}  // namespace sidrec::cli
