#pragma once

#include <istream>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "jala/common.hpp"
#include "jala/serialize.hpp"
#include "jala/tensor.hpp"

namespace jala {

// Ordered, named collection of trainable tensors. Insertion order is the
// canonical order for optimizer state and checkpoints, so construction must
// be deterministic.
template <class T>
struct ParamSet {
  std::vector<std::pair<std::string, Tensor<T>>> items;

  Tensor<T>& add(const std::string& name, Tensor<T> t) {
    check(find(name) == nullptr, "ParamSet: duplicate parameter " + name);
    items.emplace_back(name, std::move(t));
    return items.back().second;
  }

  Tensor<T>* find(const std::string& name) {
    for (auto& [n, t] : items)
      if (n == name) return &t;
    return nullptr;
  }

  const Tensor<T>* find(const std::string& name) const {
    for (const auto& [n, t] : items)
      if (n == name) return &t;
    return nullptr;
  }

  void extend(const std::string& prefix, const ParamSet<T>& other) {
    for (const auto& [n, t] : other.items) add(prefix + n, t);
  }

  std::size_t count() const { return items.size(); }

  std::int64_t total_size() const {
    std::int64_t n = 0;
    for (const auto& [name, t] : items) n += t.size();
    return n;
  }

  void zero_grads() {
    for (auto& [name, t] : items) t.zero_grad();
  }

  // Deep copy with fresh buffers (EMA targets need independent storage).
  ParamSet<T> clone() const {
    ParamSet<T> out;
    for (const auto& [n, t] : items) {
      auto values = t.values();
      out.add(n, Tensor<T>::from_values(t.shape(), std::move(values), t.requires_grad()));
    }
    return out;
  }

  void copy_values_from(const ParamSet<T>& other) {
    check(items.size() == other.items.size(), "ParamSet: structure mismatch");
    for (std::size_t i = 0; i < items.size(); ++i) {
      check(items[i].first == other.items[i].first, "ParamSet: name mismatch");
      items[i].second.values() = other.items[i].second.values();
    }
  }

  void save(std::ostream& os) const {
    io::put_u64(os, items.size());
    for (const auto& [n, t] : items) {
      io::put_string(os, n);
      io::put_tensor(os, t);
    }
  }

  // Loads values into an already-constructed set; names and shapes must match.
  void load_into(std::istream& is) {
    const std::uint64_t n = io::get_u64(is);
    check(n == items.size(), "ParamSet: checkpoint has different parameter count");
    for (auto& [name, t] : items) {
      const std::string loaded = io::get_string(is);
      check(loaded == name, "ParamSet: parameter order mismatch at " + name);
      Tensor<T> lt = io::get_tensor<T>(is);
      check(lt.shape() == t.shape(), "ParamSet: shape mismatch at " + name);
      t.values() = lt.values();
    }
  }
};

}  // namespace jala
