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

#include <atomic>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <string>

namespace sidrec {

// Wire format, one JSON object per message:
//   request  {"pair_id": "...", "prompt": "..."}
//   response {"pair_id": "...", "text": "..."}
struct JudgeRequest {
    std::string pair_id;
    std::string prompt;
};

struct JudgeResponse {
    std::string pair_id;
    std::string text;
};

std::string
EncodeJudgeRequest(const JudgeRequest& request);
JudgeRequest
DecodeJudgeRequest(const std::string& body);
std::string
EncodeJudgeResponse(const JudgeResponse& response);
JudgeResponse
DecodeJudgeResponse(const std::string& body);

// A reasoning model behind a request/response channel. Implementations throw
// TransportError for failures worth retrying.
class JudgeService {
 public:
    virtual ~JudgeService() = default;
    virtual JudgeResponse
    Judge(const JudgeRequest& request) = 0;
};

// POSTs the request document to http://host:port/path and decodes the reply.
class HttpJudgeClient : public JudgeService {
 public:
    HttpJudgeClient(std::string host, int port, std::string path, int timeout_ms);
    JudgeResponse
    Judge(const JudgeRequest& request) override;

 private:
    std::string host_;
    int port_;
    std::string path_;
    int timeout_ms_;
};

// Deterministic in-process judge driven by a rule over the request.
class RuleJudge : public JudgeService {
 public:
    using Rule = std::function<std::string(const JudgeRequest&)>;
    explicit RuleJudge(Rule rule) : rule_(std::move(rule)) {
    }
    JudgeResponse
    Judge(const JudgeRequest& request) override {
        return {request.pair_id, rule_(request)};
    }

 private:
    Rule rule_;
};

// Replies "<answer>Yes</answer>" to everything.
std::unique_ptr<JudgeService>
MakeAcceptAllJudge();

// Fails the first `failures` calls for each pair id with a TransportError,
// then forwards to the wrapped judge.
class FlakyJudge : public JudgeService {
 public:
    FlakyJudge(JudgeService& inner, size_t failures) : inner_(inner), failures_(failures) {
    }
    JudgeResponse
    Judge(const JudgeRequest& request) override;
    size_t
    calls() const {
        return calls_.load();
    }

 private:
    JudgeService& inner_;
    size_t failures_;
    std::mutex mu_;
    std::map<std::string, size_t> seen_;
    std::atomic<size_t> calls_{0};
};

}  // namespace sidrec
