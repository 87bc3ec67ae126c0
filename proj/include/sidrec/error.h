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

#include <stdexcept>
#include <string>

namespace sidrec {

// Caller passed a value outside an operation's contract.
class ArgumentError : public std::invalid_argument {
 public:
    using std::invalid_argument::invalid_argument;
};

// Input bytes are not in the expected file format (bad magic, unknown version).
class FormatError : public std::runtime_error {
 public:
    using std::runtime_error::runtime_error;
};

// File claims a valid format but its payload disagrees with its header.
class CorruptionError : public std::runtime_error {
 public:
    using std::runtime_error::runtime_error;
};

// Numeric content is unusable (NaN/Inf in training data, zero-norm vectors).
class DataError : public std::runtime_error {
 public:
    using std::runtime_error::runtime_error;
};

class ConsistencyError : public std::runtime_error {
 public:
    using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
 public:
    using std::runtime_error::runtime_error;
};

class TrainingError : public std::runtime_error {
 public:
    using std::runtime_error::runtime_error;
};

class TransportError : public std::runtime_error {
 public:
    using std::runtime_error::runtime_error;
};

class PipelineError : public std::runtime_error {
 public:
    using std::runtime_error::runtime_error;
};

// Carries the offending text so callers can quarantine it.
class ParseError : public std::runtime_error {
 public:
    ParseError(const std::string& what, std::string raw)
        : std::runtime_error(what), raw_(std::move(raw)) {
    }
    const std::string&
    raw() const {
        return raw_;
    }

 private:
    std::string raw_;
};

class ConfigError : public std::runtime_error {
 public:
    ConfigError(const std::string& key, const std::string& what)
        : std::runtime_error(key + ": " + what), key_(key) {
    }
    const std::string&
    key() const {
        return key_;
    }

 private:
    std::string key_;
};

}  // namespace sidrec
