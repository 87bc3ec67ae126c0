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

#include "sidrec/judge.h"

#include "httplib.h"
#include "json.hpp"
#include "sidrec/error.h"

namespace sidrec {

std::string
EncodeJudgeRequest(const JudgeRequest& request) {
    return nlohmann::json{{"pair_id", request.pair_id}, {"prompt", request.prompt}}.dump();
}

JudgeRequest
DecodeJudgeRequest(const std::string& body) {
    try {
        auto j = nlohmann::json::parse(body);
        return {j.at("pair_id").get<std::string>(), j.at("prompt").get<std::string>()};
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("malformed judge request: ") + e.what(), body);
    }
}

std::string
EncodeJudgeResponse(const JudgeResponse& response) {
    return nlohmann::json{{"pair_id", response.pair_id}, {"text", response.text}}.dump();
}

JudgeResponse
DecodeJudgeResponse(const std::string& body) {
    try {
        auto j = nlohmann::json::parse(body);
        return {j.at("pair_id").get<std::string>(), j.at("text").get<std::string>()};
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("malformed judge response: ") + e.what(), body);
    }
}

HttpJudgeClient::HttpJudgeClient(std::string host, int port, std::string path, int timeout_ms)
    : host_(std::move(host)), port_(port), path_(std::move(path)), timeout_ms_(timeout_ms) {
}

JudgeResponse
HttpJudgeClient::Judge(const JudgeRequest& request) {
    httplib::Client client(host_, port_);
    auto timeout = std::chrono::milliseconds(timeout_ms_);
    client.set_connection_timeout(timeout);
    client.set_read_timeout(timeout);
    client.set_write_timeout(timeout);
    auto res = client.Post(path_, EncodeJudgeRequest(request), "application/json");
    if (!res) {
        throw TransportError("judge " + host_ + ":" + std::to_string(port_) + path_ + ": " +
                             httplib::to_string(res.error()));
    }
    if (res->status != 200) {
        throw TransportError("judge returned HTTP " + std::to_string(res->status));
    }
    JudgeResponse response;
    try {
        response = DecodeJudgeResponse(res->body);
    } catch (const ParseError& e) {
        throw TransportError(e.what());
    }
    if (response.pair_id != request.pair_id) {
        throw TransportError("judge answered pair " + response.pair_id + " for request " +
                             request.pair_id);
    }
    return response;
}

std::unique_ptr<JudgeService>
MakeAcceptAllJudge() {
    return std::make_unique<RuleJudge>([](const JudgeRequest&) { return "<answer>Yes</answer>"; });
}

JudgeResponse
FlakyJudge::Judge(const JudgeRequest& request) {
    ++calls_;
    {
        std::lock_guard<std::mutex> lock(mu_);
        if (seen_[request.pair_id]++ < failures_) {
            throw TransportError("simulated transport failure for " + request.pair_id);
        }
    }
    return inner_.Judge(request);
}

}  // namespace sidrec
