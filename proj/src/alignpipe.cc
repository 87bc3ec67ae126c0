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

#include "sidrec/alignpipe.h"

#include <algorithm>
#include <cctype>
#include <set>
#include <sstream>

#include "json.hpp"
#include "sidrec/error.h"
#include "sidrec/parallel.h"

namespace sidrec {

std::string_view
SourceName(PairSource source) {
    return source == PairSource::kI2I ? "i2i" : "u2i";
}

PairSource
ParseSource(std::string_view name) {
    if (name == "i2i") {
        return PairSource::kI2I;
    }
    if (name == "u2i") {
        return PairSource::kU2I;
    }
    throw ArgumentError("unknown pair source '" + std::string(name) + "'");
}

std::string
PairId(const ItemPair& pair) {
    return std::string(SourceName(pair.source)) + ":" + std::to_string(pair.trigger) + ":" +
           std::to_string(pair.target);
}

std::map<std::pair<ItemId, ItemId>, double>
CooccurrenceScorer::Score(std::span<const std::vector<ItemId>> sessions) const {
    std::map<std::pair<ItemId, ItemId>, double> counts;
    for (const auto& session : sessions) {
        std::set<ItemId> items(session.begin(), session.end());
        for (auto a = items.begin(); a != items.end(); ++a) {
            for (auto b = std::next(a); b != items.end(); ++b) {
                counts[{*a, *b}] += 1.0;
            }
        }
    }
    return counts;
}

std::vector<ItemPair>
ExportI2iPairs(std::span<const std::vector<ItemId>> sessions,
               double min_score,
               size_t top_n,
               const PairScorer& scorer) {
    std::map<ItemId, std::vector<std::pair<double, ItemId>>> partners;
    for (const auto& [key, score] : scorer.Score(sessions)) {
        if (score < min_score || score <= 0.0) {
            continue;
        }
        partners[key.first].push_back({score, key.second});
        partners[key.second].push_back({score, key.first});
    }
    std::vector<ItemPair> out;
    for (auto& [trigger, list] : partners) {
        std::sort(list.begin(), list.end(), [](const auto& a, const auto& b) {
            return a.first != b.first ? a.first > b.first : a.second < b.second;
        });
        for (size_t i = 0; i < list.size() && i < top_n; ++i) {
            out.push_back({trigger, list[i].second, PairSource::kI2I, list[i].first});
        }
    }
    return out;
}

std::vector<ItemPair>
ExportI2iPairs(std::span<const std::vector<ItemId>> sessions, double min_score, size_t top_n) {
    return ExportI2iPairs(sessions, min_score, top_n, CooccurrenceScorer{});
}

U2iExport
ExportU2iPairs(std::span<const std::vector<ItemId>> user_positives,
               const EmbeddingMatrix& embeddings,
               size_t window) {
    U2iExport out;
    for (const auto& positives : user_positives) {
        for (size_t i = 0; i < positives.size(); ++i) {
            auto row = embeddings.Find(positives[i]);
            if (!row) {
                ++out.skipped_missing_embedding;
                continue;
            }
            auto anchor = embeddings.row(*row);
            size_t first = i > window ? i - window : 0;
            bool found = false;
            ItemPair best{positives[i], 0, PairSource::kU2I, 0.0};
            // newest to oldest
            for (size_t j = i; j-- > first;) {
                if (positives[j] == positives[i]) {
                    continue;
                }
                auto other = embeddings.Find(positives[j]);
                if (!other) {
                    continue;
                }
                double score = 0.0;
                auto v = embeddings.row(*other);
                for (size_t t = 0; t < v.size(); ++t) {
                    score += static_cast<double>(anchor[t]) * v[t];
                }
                if (!found || score > best.score) {
                    best.target = positives[j];
                    best.score = score;
                    found = true;
                }
            }
            if (found) {
                out.pairs.push_back(best);
            }
        }
    }
    return out;
}

namespace {

// Neutralizes characters that could forge prompt structure or answer tags.
std::string
EscapeField(std::string_view text) {
    std::string out;
    out.reserve(text.size());
    for (char ch : text) {
        switch (ch) {
            case '&':
                out += "&amp;";
                break;
            case '<':
                out += "&lt;";
                break;
            case '>':
                out += "&gt;";
                break;
            case '`':
                out += "&#96;";
                break;
            case '\n':
            case '\r':
            case '\t':
                out += ' ';
                break;
            default:
                out += ch;
        }
    }
    return out;
}

std::string
AttributeText(const ItemMeta& item) {
    std::string out;
    for (const auto& [key, value] : item.attributes) {
        if (!out.empty()) {
            out += ", ";
        }
        out += EscapeField(key) + ": " + EscapeField(value);
    }
    return out;
}

std::string
TitleAndAttributes(const ItemMeta& item) {
    std::string out = EscapeField(item.title);
    std::string attrs = AttributeText(item);
    if (!attrs.empty()) {
        out += ", " + attrs;
    }
    return out;
}

std::string
Lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

std::string_view
Trim(std::string_view s) {
    size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) {
        return {};
    }
    size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

}  // namespace

std::string
RenderFilterPrompt(const ItemMeta& a, const ItemMeta& b) {
    std::string p;
    p += "Item-1 information: " + TitleAndAttributes(a) + ";\n";
    p += "Item-2 information: " + TitleAndAttributes(b) + ";\n";
    p += "Please analyze the potential correlation between two Items, such as semantic correlation "
         "(e.g., similar concepts or uses), complementary purchasing relationships (often "
         "purchased simultaneously or used together). Examples:\n";
    p += "(1) (Fishing rod, parasol): Highly related usage scenarios;\n";
    p += "(2) (Fishing rod, outdoor jacket): Shared outdoor activity scenario;\n";
    p += "If the product pair correlation is strong, reply: `<answer>Yes</answer>`. Otherwise, "
         "reply: `<answer>No</answer>`.";
    return p;
}

std::string
RenderUnderstandingPrompt(const ItemMeta& item) {
    std::string p;
    p += "Item information: " + EscapeField(item.title) + " " + AttributeText(item) + " " +
         EscapeField(item.image_caption) + ", " + EscapeField(item.ocr) + ", " +
         EscapeField(item.asr) + ";\n";
    p += "Please generate ten instruction questions as diverse as possible. These questions are "
         "about facts or an understanding and evaluation of relevant content. Do not ask any "
         "questions that cannot be answered confidently.\n";
    p += "You need to return the result in the following form:\n";
    p += "1. {\"Question\":..., \"Answer\":...}\n";
    p += "2. {\"Question\":..., \"Answer\":...}";
    return p;
}

Decision
ParseJudgeAnswer(std::string_view response) {
    const std::string lower = Lower(response);
    size_t open = lower.find("<answer>");
    if (open == std::string::npos) {
        throw ParseError("judge response has no <answer> tag", std::string(response));
    }
    size_t start = open + 8;
    size_t close = lower.find("</answer>", start);
    if (close == std::string::npos) {
        throw ParseError("judge response has an unterminated <answer> tag", std::string(response));
    }
    std::string_view verdict = Trim(std::string_view(lower).substr(start, close - start));
    if (verdict == "yes") {
        return Decision::kAccept;
    }
    if (verdict == "no") {
        return Decision::kReject;
    }
    throw ParseError("judge answer is neither yes nor no", std::string(response));
}

QaParse
ParseQaOutput(ItemId item, std::string_view response) {
    QaParse out;
    std::istringstream lines{std::string(response)};
    std::string line;
    while (std::getline(lines, line)) {
        std::string_view rest = Trim(line);
        if (rest.empty()) {
            continue;
        }
        // Optional "12." / "12)" numbering.
        size_t digits = 0;
        while (digits < rest.size() && std::isdigit(static_cast<unsigned char>(rest[digits]))) {
            ++digits;
        }
        if (digits > 0 && digits < rest.size() && (rest[digits] == '.' || rest[digits] == ')')) {
            rest = Trim(rest.substr(digits + 1));
        }
        try {
            auto j = nlohmann::json::parse(rest);
            QaPair qa{item, j.at("Question").get<std::string>(), j.at("Answer").get<std::string>()};
            if (Trim(qa.question).empty() || Trim(qa.answer).empty()) {
                ++out.skipped;
                continue;
            }
            out.pairs.push_back(std::move(qa));
        } catch (const nlohmann::json::exception&) {
            ++out.skipped;
        }
    }
    if (out.pairs.empty()) {
        throw ParseError("no question/answer pairs found", std::string(response));
    }
    return out;
}

namespace {

enum class Outcome { kAccept, kReject, kQuarantine };

struct Slot {
    Outcome outcome = Outcome::kQuarantine;
    std::string raw;
    std::string reason;
    size_t retries = 0;
    std::string fatal;  // non-empty when the judge never answered
};

}  // namespace

FilterResult
FilterPairs(std::span<const ItemPair> pairs,
            const std::map<ItemId, ItemMeta>& catalog,
            const JudgeRouting& judges,
            const FilterPolicy& policy) {
    std::vector<Slot> slots(pairs.size());
    ParallelFor(pairs.size(), std::max<size_t>(1, policy.max_in_flight), [&](size_t begin, size_t end) {
        for (size_t i = begin; i < end; ++i) {
            const ItemPair& pair = pairs[i];
            Slot& slot = slots[i];
            auto a = catalog.find(pair.trigger);
            auto b = catalog.find(pair.target);
            if (a == catalog.end() || b == catalog.end()) {
                slot.reason = "missing item metadata";
                continue;
            }
            JudgeService* judge = pair.source == PairSource::kI2I ? judges.i2i : judges.u2i;
            if (judge == nullptr) {
                slot.fatal = "no judge configured for source " + std::string(SourceName(pair.source));
                continue;
            }
            JudgeRequest request{PairId(pair), RenderFilterPrompt(a->second, b->second)};
            std::optional<JudgeResponse> response;
            std::string last_error;
            for (size_t attempt = 0; attempt <= policy.max_retries && !response; ++attempt) {
                try {
                    response = judge->Judge(request);
                } catch (const TransportError& e) {
                    last_error = e.what();
                    if (attempt < policy.max_retries) {
                        ++slot.retries;
                    }
                }
            }
            if (!response) {
                slot.fatal = "judge unavailable for " + request.pair_id + " after " +
                             std::to_string(policy.max_retries + 1) + " attempts: " + last_error;
                continue;
            }
            slot.raw = response->text;
            try {
                slot.outcome = ParseJudgeAnswer(response->text) == Decision::kAccept
                                   ? Outcome::kAccept
                                   : Outcome::kReject;
            } catch (const ParseError& e) {
                slot.outcome = Outcome::kQuarantine;
                slot.reason = e.what();
            }
        }
    });

    FilterResult result;
    for (size_t i = 0; i < pairs.size(); ++i) {
        const Slot& slot = slots[i];
        if (!slot.fatal.empty()) {
            throw PipelineError(slot.fatal);
        }
        result.transport_retries += slot.retries;
        SourceStats& stats = result.stats[pairs[i].source];
        ++stats.total;
        switch (slot.outcome) {
            case Outcome::kAccept:
                ++stats.accepted;
                result.accepted.push_back(pairs[i]);
                result.verdicts.push_back({pairs[i], Decision::kAccept, slot.raw});
                break;
            case Outcome::kReject:
                ++stats.rejected;
                result.verdicts.push_back({pairs[i], Decision::kReject, slot.raw});
                break;
            case Outcome::kQuarantine:
                ++stats.quarantined;
                result.quarantined.push_back({pairs[i], slot.raw, slot.reason});
                break;
        }
    }
    return result;
}

std::unique_ptr<JudgeService>
MakeCategoryMatchJudge(const std::map<ItemId, ItemMeta>& catalog) {
    return std::make_unique<RuleJudge>([&catalog](const JudgeRequest& request) -> std::string {
        // pair id: "<source>:<trigger>:<target>"
        size_t a = request.pair_id.find(':');
        size_t b = request.pair_id.find(':', a + 1);
        if (a == std::string::npos || b == std::string::npos) {
            return "cannot parse pair id";
        }
        ItemId trigger = std::stoull(request.pair_id.substr(a + 1, b - a - 1));
        ItemId target = std::stoull(request.pair_id.substr(b + 1));
        auto x = catalog.find(trigger);
        auto y = catalog.find(target);
        bool match = x != catalog.end() && y != catalog.end() && x->second.category == y->second.category;
        return std::string("Comparing categories. <answer>") + (match ? "Yes" : "No") + "</answer>";
    });
}

void
WritePairsJsonl(std::ostream& out, std::span<const ItemPair> pairs) {
    for (const auto& p : pairs) {
        out << nlohmann::json{{"trigger", p.trigger},
                              {"target", p.target},
                              {"source", SourceName(p.source)},
                              {"score", p.score}}
                   .dump()
            << '\n';
    }
}

std::vector<ItemPair>
ReadPairsJsonl(std::istream& in) {
    std::vector<ItemPair> out;
    std::string line;
    size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (Trim(line).empty()) {
            continue;
        }
        try {
            auto j = nlohmann::json::parse(line);
            ItemPair p{j.at("trigger").get<ItemId>(), j.at("target").get<ItemId>(),
                       ParseSource(j.at("source").get<std::string>()), j.value("score", 0.0)};
            if (p.trigger == p.target) {
                throw ArgumentError("pair with identical trigger and target");
            }
            out.push_back(p);
        } catch (const std::exception& e) {
            throw FormatError("pairs line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    return out;
}

void
WriteVerdictsJsonl(std::ostream& out, const FilterResult& result) {
    for (const auto& v : result.verdicts) {
        out << nlohmann::json{{"pair_id", PairId(v.pair)},
                              {"decision", v.decision == Decision::kAccept ? "accept" : "reject"},
                              {"raw", v.raw_response}}
                   .dump()
            << '\n';
    }
    for (const auto& q : result.quarantined) {
        out << nlohmann::json{{"pair_id", PairId(q.pair)},
                              {"decision", "quarantine"},
                              {"reason", q.reason},
                              {"raw", q.raw_response}}
                   .dump()
            << '\n';
    }
}

std::map<ItemId, ItemMeta>
ReadItemMetaJsonl(std::istream& in) {
    std::map<ItemId, ItemMeta> out;
    std::string line;
    size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (Trim(line).empty()) {
            continue;
        }
        try {
            auto j = nlohmann::json::parse(line);
            ItemMeta m;
            m.item_id = j.at("item_id").get<ItemId>();
            m.title = j.at("title").get<std::string>();
            if (Trim(m.title).empty()) {
                throw ArgumentError("empty title");
            }
            if (j.contains("attributes")) {
                for (const auto& [k, v] : j.at("attributes").items()) {
                    m.attributes.emplace_back(k, v.get<std::string>());
                }
            }
            m.category = j.value("category", "");
            m.ocr = j.value("ocr", "");
            m.asr = j.value("asr", "");
            m.image_caption = j.value("image_caption", "");
            out[m.item_id] = std::move(m);
        } catch (const std::exception& e) {
            throw FormatError("item metadata line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    return out;
}

}  // namespace sidrec
