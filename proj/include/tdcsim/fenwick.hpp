#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

namespace tdcsim {

// Binary indexed tree over 1-based positions; prefix sums and point updates
// in O(log n).
template <typename T>
class FenwickTree {
  public:
    explicit FenwickTree(size_t n = 0) : n_(n), tree_(n + 1, T{}) {}

    size_t size() const { return n_; }

    void resize(size_t n) {
        n_ = n;
        tree_.assign(n + 1, T{});
    }

    void add(size_t pos, T delta) {
        for (size_t i = pos; i <= n_; i += i & (~i + 1)) tree_[i] += delta;
    }

    // sum over positions [1, pos]
    T prefix(size_t pos) const {
        T s{};
        if (pos > n_) pos = n_;
        for (size_t i = pos; i > 0; i -= i & (~i + 1)) s += tree_[i];
        return s;
    }

    T total() const { return prefix(n_); }

  private:
    size_t n_;
    std::vector<T> tree_;
};

}  // namespace tdcsim
