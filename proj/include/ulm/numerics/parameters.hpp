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

#pragma once

#include <deque>
#include <string>
#include <vector>

#include "ulm/numerics/graph.hpp"

namespace ulm::num {

// Owns parameters at stable addresses and remembers declaration order.
class ParameterSet {
 public:
  ParameterSet() = default;
  ParameterSet(const ParameterSet&) = delete;
  ParameterSet& operator=(const ParameterSet&) = delete;

  // Throws ContractError on a duplicate name.
  Parameter& add(std::string name, NumArray value);
  Parameter* find(const std::string& name);
  std::vector<Parameter*> all();
  std::vector<const Parameter*> all() const;
  std::size_t size() const { return params_.size(); }
  std::size_t scalar_count() const;

 private:
  std::deque<Parameter> params_;
};

}  // namespace ulm::num
