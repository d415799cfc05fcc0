// Copyright 2026 The bioctx Authors
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

#include "bioctx/diag.hpp"

#include <iostream>

namespace bioctx {
namespace {
thread_local WarningCollector* active_collector = nullptr;
}

WarningCollector::WarningCollector() : previous_(active_collector) {
  active_collector = this;
}

WarningCollector::~WarningCollector() { active_collector = previous_; }

void warn(const std::string& message) {
  if (active_collector != nullptr) {
    active_collector->messages_.push_back(message);
    return;
  }
  std::cerr << "warning: " << message << '\n';
}

}  // namespace bioctx
