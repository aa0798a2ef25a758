/* Copyright 2026 The TReID Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/
#ifndef TREID_PARAMS_HPP_
#define TREID_PARAMS_HPP_

#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "treid/tensor.hpp"

namespace treid {

// Ordered registry of named parameter blocks. Registration order is the
// canonical serialization order, so checkpoints are byte-stable.
template <typename T>
class ParamStore {
 public:
  Tensor<T>& add(const std::string& name, Tensor<T> t) {
    if (index_.count(name)) {
      throw ContractError("duplicate parameter block: " + name);
    }
    t.set_requires_grad(true);
    index_[name] = blocks_.size();
    blocks_.emplace_back(name, std::move(t));
    return blocks_.back().second;
  }

  Tensor<T>* find(const std::string& name) {
    auto it = index_.find(name);
    return it == index_.end() ? nullptr : &blocks_[it->second].second;
  }
  const Tensor<T>* find(const std::string& name) const {
    auto it = index_.find(name);
    return it == index_.end() ? nullptr : &blocks_[it->second].second;
  }

  const std::vector<std::pair<std::string, Tensor<T>>>& blocks() const {
    return blocks_;
  }
  std::vector<std::pair<std::string, Tensor<T>>>& blocks() { return blocks_; }

  std::size_t total_size() const {
    std::size_t n = 0;
    for (const auto& [name, t] : blocks_) n += t.size();
    return n;
  }

  void zero_grads() {
    for (auto& [name, t] : blocks_) t.zero_grad();
  }

 private:
  std::vector<std::pair<std::string, Tensor<T>>> blocks_;
  std::unordered_map<std::string, std::size_t> index_;
};

}  // namespace treid

#endif  // TREID_PARAMS_HPP_
