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
#include <fstream>
#include <vector>

#include "sidrec/error.h"
#include "sidrec/rng.h"
#include "sidrec_cli.h"

namespace sidrec::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::ofstream
Create(const fs::path& p) {
    std::ofstream out(p, std::ios::binary);
    if (!out) {
        throw IoError("cannot write " + p.string());
    }
    return out;
}

}  // namespace

void
WriteDemoFixture(const fs::path& dir, const FixtureOptions& o) {
    if (o.items == 0 || o.clusters == 0 || o.dim == 0 || o.clusters > o.items) {
        throw ArgumentError("fixture needs items >= clusters >= 1 and dim >= 1");
    }
    fs::create_directories(dir);
    Rng rng(o.seed);

    // Long-tail cluster masses, mass of cluster c proportional to 1 / (c + 1).
    std::vector<double> mass(o.clusters);
    double total = 0.0;
    for (size_t c = 0; c < o.clusters; ++c) {
        mass[c] = 1.0 / static_cast<double>(c + 1);
        total += mass[c];
    }
    std::vector<std::vector<double>> centers(o.clusters, std::vector<double>(o.dim));
    for (auto& c : centers) {
        for (auto& v : c) {
            v = 2.0 * rng.Normal();
        }
    }
    std::vector<size_t> cluster_of(o.items);
    std::vector<std::vector<size_t>> members(o.clusters);
    for (size_t i = 0; i < o.items; ++i) {
        size_t c = 0;
        if (i < o.clusters) {
            c = i;  // every cluster gets at least one item
        } else {
            double u = rng.Uniform() * total;
            while (c + 1 < o.clusters && u >= mass[c]) {
                u -= mass[c];
                ++c;
            }
        }
        cluster_of[i] = c;
        members[c].push_back(i);
    }
    auto item_id = [](size_t i) { return static_cast<uint64_t>(1000 + i); };

    {
        auto out = Create(dir / "embeddings.jsonl");
        auto meta = Create(dir / "items_meta.jsonl");
        for (size_t i = 0; i < o.items; ++i) {
            std::vector<float> v(o.dim);
            for (size_t d = 0; d < o.dim; ++d) {
                v[d] = static_cast<float>(centers[cluster_of[i]][d] + 0.3 * rng.Normal());
            }
            out << json{{"item_id", item_id(i)}, {"vector", v}}.dump() << '\n';
            std::string cat = "cat" + std::to_string(cluster_of[i]);
            meta << json{{"item_id", item_id(i)},
                         {"title", "Item " + std::to_string(item_id(i))},
                         {"category", cat},
                         {"attributes", {{"category", cat}}}}
                        .dump()
                 << '\n';
        }
    }

    {
        auto out = Create(dir / "sequences.jsonl");
        for (size_t u = 0; u < o.users; ++u) {
            size_t pref_a = rng.Below(o.clusters);
            size_t pref_b = rng.Below(o.clusters);
            json events = json::array();
            int64_t ts = 1700000000;
            for (size_t e = 0; e < o.events_per_user; ++e) {
                bool preferred = rng.Uniform() < 0.7;
                size_t c = preferred ? (rng.Uniform() < 0.5 ? pref_a : pref_b) : rng.Below(o.clusters);
                preferred = c == pref_a || c == pref_b;
                const auto& pool = members[c];
                size_t item = pool[rng.Below(pool.size())];
                bool click = rng.Uniform() < (preferred ? 0.75 : 0.15);
                bool order = click && rng.Uniform() < 0.3;
                ts += 1 + static_cast<int64_t>(rng.Below(600));
                events.push_back({{"item", item_id(item)}, {"ts", ts}, {"click", click}, {"order", order}});
            }
            out << json{{"user_id", u + 1}, {"events", events}}.dump() << '\n';
        }
    }

    {
        auto out = Create(dir / "ratings.csv");
        out << "# user,item,rating,time\n";
        for (size_t u = 0; u < o.users; ++u) {
            size_t n = 10 + rng.Below(31);
            int64_t ts = 1600000000;
            for (size_t e = 0; e < n; ++e) {
                ts += 1 + static_cast<int64_t>(rng.Below(1000));
                out << (u + 1) << ',' << item_id(rng.Below(o.items)) << ',' << (1 + rng.Below(5)) << ',' << ts
                    << '\n';
            }
        }
    }

    {
        auto out = Create(dir / "config.json");
        json cfg = DefaultConfig();
        cfg["paths"]["work_dir"] = fs::absolute(dir).string();
        cfg["seed"] = o.seed;
        out << cfg.dump(2) << '\n';
    }
}

}  // namespace sidrec::cli
