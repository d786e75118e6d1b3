#pragma once

#include <map>
#include <string>
#include <vector>

#include "stoic/tensor.hpp"

namespace stoic {

/// Ordered map from canonical slash-separated layer paths to tensors.
///
/// Iteration order is lexicographic in the path (std::map), which fixes the
/// serialization and optimizer update order. Shapes are determined solely by
/// the architecture configuration that built the store.
class ParamStore {
public:
    using Map = std::map<std::string, Tensor>;

    void insert(const std::string& path, Tensor t) {
        if (!items_.emplace(path, std::move(t)).second)
            throw ValueError("ParamStore: duplicate path " + path);
    }

    bool contains(const std::string& path) const { return items_.count(path) != 0; }

    Tensor& at(const std::string& path) {
        auto it = items_.find(path);
        if (it == items_.end()) throw ValueError("ParamStore: missing path " + path);
        return it->second;
    }
    const Tensor& at(const std::string& path) const {
        return const_cast<ParamStore*>(this)->at(path);
    }

    size_t size() const { return items_.size(); }
    bool empty() const { return items_.empty(); }

    Map::iterator begin() { return items_.begin(); }
    Map::iterator end() { return items_.end(); }
    Map::const_iterator begin() const { return items_.begin(); }
    Map::const_iterator end() const { return items_.end(); }

    std::vector<std::string> paths() const {
        std::vector<std::string> out;
        out.reserve(items_.size());
        for (const auto& [path, t] : items_) out.push_back(path);
        return out;
    }

    int64_t total_scalars() const {
        int64_t n = 0;
        for (const auto& [path, t] : items_) n += t.numel();
        return n;
    }

    void set_requires_grad(bool b) {
        for (auto& [path, t] : items_) t.set_requires_grad(b);
    }
    void zero_grads() {
        for (auto& [path, t] : items_) t.zero_grad();
    }

    ParamStore clone() const {
        ParamStore out;
        for (const auto& [path, t] : items_) out.insert(path, t.clone());
        return out;
    }
    ParamStore astype(DType dt) const {
        ParamStore out;
        for (const auto& [path, t] : items_) out.insert(path, t.astype(dt));
        return out;
    }

private:
    Map items_;
};

}  // namespace stoic
