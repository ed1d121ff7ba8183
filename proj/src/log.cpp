// Copyright 2026 The ULM-DETR Authors. All Rights Reserved.
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

#include "ulm/log.hpp"

#include <atomic>
#include <mutex>

namespace ulm::log {
namespace {
std::atomic<Level> g_threshold{Level::info};
std::mutex g_mutex;

const char* tag(Level level) {
  switch (level) {
    case Level::debug: return "debug";
    case Level::info: return "info";
    case Level::warn: return "warning";
    case Level::error: return "error";
  }
  return "";
}
}  // namespace

Level threshold() { return g_threshold.load(); }
void set_threshold(Level level) { g_threshold.store(level); }

void write(Level level, std::string_view message) {
  if (level < g_threshold.load()) return;
  std::lock_guard lock(g_mutex);
  fmt::print(stderr, "[{}] {}\n", tag(level), message);
}

}  // namespace ulm::log
