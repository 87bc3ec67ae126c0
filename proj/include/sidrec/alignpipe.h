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
#include <istream>
#include <map>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "sidrec/embedstore.h"
#include "sidrec/judge.h"

namespace sidrec {

struct ItemMeta {
    ItemId item_id = 0;
    std::string title;
    std::vector<std::pair<std::string, std::string>> attributes;
    std::string category;
    std::string ocr;
    std::string asr;
    std::string image_caption;
};

enum class PairSource { kI2I, kU2I };

std::string_view
SourceName(PairSource source);
PairSource
ParseSource(std::string_view name);

struct ItemPair {
    ItemId trigger = 0;
    ItemId target = 0;
    PairSource source = PairSource::kI2I;
    double score = 0.0;

    bool
    operator==(const ItemPair&) const = default;
};

// Stable identifier used on the judge wire: "<source>:<trigger>:<target>".
std::string
PairId(const ItemPair& pair);

enum class Decision { kAccept, kReject };

struct JudgeVerdict {
    ItemPair pair;
    Decision decision = Decision::kReject;
    std::string raw_response;
};

struct QaPair {
    ItemId item_id = 0;
    std::string question;
    std::string answer;
};

// Scores item pairs from per-user co-interaction sets.
class PairScorer {
 public:
    virtual ~PairScorer() = default;
    // Symmetric score for every unordered pair (a < b) with a positive score.
    virtual std::map<std::pair<ItemId, ItemId>, double>
    Score(std::span<const std::vector<ItemId>> sessions) const = 0;
};

// Number of users whose session contains both items.
class CooccurrenceScorer : public PairScorer {
 public:
    std::map<std::pair<ItemId, ItemId>, double>
    Score(std::span<const std::vector<ItemId>> sessions) const override;
};

// Directed I2I pairs: for each trigger the top_n partners with score >=
// min_score. Ordered by trigger, then score descending, then target.
std::vector<ItemPair>
ExportI2iPairs(std::span<const std::vector<ItemId>> sessions,
               double min_score,
               size_t top_n,
               const PairScorer& scorer);
std::vector<ItemPair>
ExportI2iPairs(std::span<const std::vector<ItemId>> sessions, double min_score, size_t top_n);

struct U2iExport {
    std::vector<ItemPair> pairs;
    size_t skipped_missing_embedding = 0;
};

// For each positive, the most inner-product-similar item among the user's
// previous `window` positives (other ids only). Ties go to the most recent.
U2iExport
ExportU2iPairs(std::span<const std::vector<ItemId>> user_positives,
               const EmbeddingMatrix& embeddings,
               size_t window = 50);

std::string
RenderFilterPrompt(const ItemMeta& a, const ItemMeta& b);
std::string
RenderUnderstandingPrompt(const ItemMeta& item);

// First <answer>...</answer> tag, case-insensitive yes/no. Throws ParseError
// carrying the raw response otherwise.
Decision
ParseJudgeAnswer(std::string_view response);

struct QaParse {
    std::vector<QaPair> pairs;
    size_t skipped = 0;
};

// Lines of {"Question": ..., "Answer": ...}, optionally numbered "1." or
// "1)". Throws ParseError when nothing parses.
QaParse
ParseQaOutput(ItemId item, std::string_view response);

struct FilterPolicy {
    size_t max_retries = 2;  // extra attempts after a transport failure
    size_t max_in_flight = 4;
};

struct QuarantinedPair {
    ItemPair pair;
    std::string raw_response;
    std::string reason;
};

struct SourceStats {
    size_t total = 0;
    size_t accepted = 0;
    size_t rejected = 0;
    size_t quarantined = 0;
    // 100 * rejected / total
    double
    rejection_rate() const {
        return total ? 100.0 * rejected / static_cast<double>(total) : 0.0;
    }
};

struct FilterResult {
    std::vector<ItemPair> accepted;
    std::vector<JudgeVerdict> verdicts;  // accepted and rejected, input order
    std::vector<QuarantinedPair> quarantined;
    std::map<PairSource, SourceStats> stats;
    size_t transport_retries = 0;
};

struct JudgeRouting {
    JudgeService* i2i = nullptr;
    JudgeService* u2i = nullptr;
};

// Judges every pair once with the judge configured for its source. Pairs
// whose verdict cannot be parsed (or whose items lack metadata) are
// quarantined. Throws PipelineError when a judge stays unreachable.
FilterResult
FilterPairs(std::span<const ItemPair> pairs,
            const std::map<ItemId, ItemMeta>& catalog,
            const JudgeRouting& judges,
            const FilterPolicy& policy);

// Answers "<answer>Yes</answer>" iff both items share a category. Item ids
// are read back from the pair id so it works over the wire format alone.
std::unique_ptr<JudgeService>
MakeCategoryMatchJudge(const std::map<ItemId, ItemMeta>& catalog);

// Line-delimited JSON persistence.
void
WritePairsJsonl(std::ostream& out, std::span<const ItemPair> pairs);
std::vector<ItemPair>
ReadPairsJsonl(std::istream& in);
void
WriteVerdictsJsonl(std::ostream& out, const FilterResult& result);
std::map<ItemId, ItemMeta>
ReadItemMetaJsonl(std::istream& in);

}  // namespace sidrec
