#pragma once

#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "geoadapt/tensor.hpp"

namespace geoadapt {

// A named model parameter. `grad` always has the same shape as `value`;
// when `trainable` is false the optimizer must leave `value` bit-identical.
struct ParamTensor {
  std::string name;
  Tensor value;
  Tensor grad;
  bool trainable = true;

  ParamTensor(std::string n, Tensor v, bool train = true)
      : name(std::move(n)), value(std::move(v)), grad(value.shape()), trainable(train) {}
};

// Ordered map of name -> ParamTensor. Insertion order is the canonical
// iteration and serialization order; names are unique.
class ParameterStore {
 public:
  ParamTensor& add(std::string name, Tensor value, bool trainable = true) {
    if (index_.count(name))
      throw ConfigError("ParameterStore: duplicate parameter name " + name);
    params_.push_back(std::make_unique<ParamTensor>(name, std::move(value), trainable));
    index_[params_.back()->name] = params_.size() - 1;
    return *params_.back();
  }

  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  ParamTensor& get(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw ConfigError("ParameterStore: unknown parameter " + name);
    return *params_[it->second];
  }
  const ParamTensor& get(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw ConfigError("ParameterStore: unknown parameter " + name);
    return *params_[it->second];
  }

  size_t size() const { return params_.size(); }
  ParamTensor& at(size_t i) { return *params_[i]; }
  const ParamTensor& at(size_t i) const { return *params_[i]; }

  std::vector<std::string> names() const {
    std::vector<std::string> out;
    out.reserve(params_.size());
    for (const auto& p : params_) out.push_back(p->name);
    return out;
  }

  size_t total_count() const {
    size_t n = 0;
    for (const auto& p : params_) n += p->value.numel();
    return n;
  }

  size_t trainable_count() const {
    size_t n = 0;
    for (const auto& p : params_)
      if (p->trainable) n += p->value.numel();
    return n;
  }

  void zero_grads() {
    for (auto& p : params_) p->grad.zero();
  }

  void set_all_trainable(bool flag) {
    for (auto& p : params_) p->trainable = flag;
  }

  void for_each(const std::function<void(ParamTensor&)>& fn) {
    for (auto& p : params_) fn(*p);
  }
  void for_each(const std::function<void(const ParamTensor&)>& fn) const {
    for (const auto& p : params_) fn(*p);
  }

  // Deep copy (values, grads, trainable flags, order).
  ParameterStore clone() const {
    ParameterStore out;
    for (const auto& p : params_) {
      auto& q = out.add(p->name, p->value, p->trainable);
      q.grad = p->grad;
    }
    return out;
  }

 private:
  std::vector<std::unique_ptr<ParamTensor>> params_;
  std::map<std::string, size_t> index_;
};

}  // namespace geoadapt
