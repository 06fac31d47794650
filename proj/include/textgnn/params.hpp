#pragma once

#include <cmath>
#include <string>
#include <unordered_map>
#include <vector>

#include "textgnn/errors.hpp"
#include "textgnn/rng.hpp"
#include "textgnn/tensor.hpp"

namespace textgnn {

// Owns every trainable tensor of a model, in creation order. Creation order
// is the checkpoint manifest order, so it must be deterministic.
class ParamRegistry {
 public:
  TensorPtr xavier(const std::string& name, std::vector<int> shape, int fan_in, int fan_out,
                   CounterRng& rng) {
    auto t = make(name, std::move(shape));
    const double bound = std::sqrt(6.0 / (fan_in + fan_out));
    for (auto& v : t->data) v = static_cast<Real>(rng.uniform(-bound, bound));
    return t;
  }

  TensorPtr zeros(const std::string& name, std::vector<int> shape) {
    return make(name, std::move(shape));
  }

  TensorPtr ones(const std::string& name, std::vector<int> shape) {
    auto t = make(name, std::move(shape));
    std::fill(t->data.begin(), t->data.end(), Real(1));
    return t;
  }

  const std::vector<TensorPtr>& all() const { return params_; }

  TensorPtr find(const std::string& name) const {
    auto it = index_.find(name);
    return it == index_.end() ? nullptr : params_[it->second];
  }

  std::size_t total_values() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p->data.size();
    return n;
  }

 private:
  TensorPtr make(const std::string& name, std::vector<int> shape) {
    if (index_.count(name)) throw ContractError("duplicate parameter name '" + name + "'");
    auto t = Tensor::zeros(std::move(shape), /*requires_grad=*/true);
    t->name = name;
    index_[name] = params_.size();
    params_.push_back(t);
    return t;
  }

  std::vector<TensorPtr> params_;
  std::unordered_map<std::string, std::size_t> index_;
};

}  // namespace textgnn
