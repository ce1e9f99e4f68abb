#pragma once

#include <map>
#include <string>

#include "ucm/tensor.hpp"

namespace ucm {

// Name -> tensor map with lexicographic iteration order (std::map).
template <typename Real>
class NamedTensorsT {
  public:
    void add(const std::string& name, TensorT<Real> t) {
        if (items_.count(name)) throw ContractError("duplicate tensor name: " + name);
        items_.emplace(name, std::move(t));
    }

    TensorT<Real>& get(const std::string& name) {
        auto it = items_.find(name);
        if (it == items_.end()) throw ContractError("unknown tensor name: " + name);
        return it->second;
    }
    const TensorT<Real>& get(const std::string& name) const {
        auto it = items_.find(name);
        if (it == items_.end()) throw ContractError("unknown tensor name: " + name);
        return it->second;
    }
    bool contains(const std::string& name) const { return items_.count(name) != 0; }

    auto begin() { return items_.begin(); }
    auto end() { return items_.end(); }
    auto begin() const { return items_.begin(); }
    auto end() const { return items_.end(); }
    std::size_t size() const { return items_.size(); }

    std::int64_t total_elements() const {
        std::int64_t n = 0;
        for (const auto& [name, t] : items_) n += t.numel();
        return n;
    }

  private:
    std::map<std::string, TensorT<Real>> items_;
};

// Learnable parameters; every entry has requires_grad set.
template <typename Real>
class ParamStoreT : public NamedTensorsT<Real> {
  public:
    void add(const std::string& name, TensorT<Real> t) {
        if (!t.requires_grad())
            throw ContractError("parameter '" + name + "' must have requires_grad set");
        NamedTensorsT<Real>::add(name, std::move(t));
    }

    void zero_grad() {
        for (auto& [name, t] : *this) t.zero_grad();
    }
};

using ParamStore = ParamStoreT<float>;

}  // namespace ucm
