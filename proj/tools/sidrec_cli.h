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

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

namespace sidrec::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitConfig = 3;

const std::vector<std::string>&
Subcommands();

// Every accepted key with its default; user config may only narrow these.
nlohmann::json
DefaultConfig();

class RunConfig {
 public:
    // Merges `file` (if any) and then each dotted `key=value` override over
    // the defaults. Throws ConfigError naming the offending key.
    static RunConfig
    Build(const std::optional<std::filesystem::path>& file,
          const std::vector<std::string>& overrides);

    const nlohmann::json&
    tree() const {
        return root_;
    }
    const nlohmann::json&
    at(const std::string& dotted) const;

    template <class T>
    T
    get(const std::string& dotted) const {
        return at(dotted).get<T>();
    }

    // paths.<name> resolved against paths.work_dir.
    std::filesystem::path
    path(const std::string& name) const;

    uint64_t
    seed() const {
        return get<uint64_t>("seed");
    }
    size_t
    threads() const {
        return get<size_t>("threads");
    }

 private:
    void
    Validate() const;

    nlohmann::json root_;
};

// Runs one subcommand; the report goes to `out`, diagnostics to `err`.
int
Run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

int
RunStage(const std::string& subcommand, const RunConfig& config, std::ostream& out, std::ostream& err);

struct FixtureOptions {
    size_t items = 600;
    size_t dim = 16;
    size_t clusters = 12;
    size_t users = 80;
    size_t events_per_user = 40;
    uint64_t seed = 1;
};

// Writes embeddings.jsonl, sequences.jsonl, items_meta.jsonl, ratings.csv and
// config.json (pointing at those files) into `dir`.
void
WriteDemoFixture(const std::filesystem::path& dir, const FixtureOptions& options);

}  // namespace sidrec::cli
