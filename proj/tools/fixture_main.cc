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

#include <exception>
#include <iostream>

#include "CLI11.hpp"
#include "sidrec_cli.h"

int
main(int argc, char** argv) {
    CLI::App app{"Writes a small synthetic demo dataset and a matching config", "sidrec_fixture"};
    std::string out;
    sidrec::cli::FixtureOptions o;
    app.add_option("-o,--out", out, "output directory")->required();
    app.add_option("--items", o.items);
    app.add_option("--dim", o.dim);
    app.add_option("--clusters", o.clusters);
    app.add_option("--users", o.users);
    app.add_option("--events", o.events_per_user);
    app.add_option("--seed", o.seed);
    CLI11_PARSE(app, argc, argv);
    try {
        sidrec::cli::WriteDemoFixture(out, o);
    } catch (const std::exception& e) {
        std::cerr << "sidrec_fixture: " << e.what() << '\n';
        return 1;
    }
    std::cout << "fixture_dir=" << out << '\n';
    return 0;
}
