#pragma once

#include <cstddef>
#include <vector>

#include "mlfst/error.hpp"

namespace mlfst {

// Dense row-major rank-3 array. Index order [i, j, k] with k fastest.
template <typename T>
struct Tensor3 {
  std::vector<T> data;
  std::size_t d0 = 0, d1 = 0, d2 = 0;

  Tensor3() = default;
  Tensor3(std::size_t a, std::size_t b, std::size_t c) { resize(a, b, c); }

  void resize(std::size_t a, std::size_t b, std::size_t c) {
    d0 = a;
    d1 = b;
    d2 = c;
    data.assign(a * b * c, T{});
  }

  T& at(std::size_t i, std::size_t j, std::size_t k) { return data[(i * d1 + j) * d2 + k]; }
  const T& at(std::size_t i, std::size_t j, std::size_t k) const {
    return data[(i * d1 + j) * d2 + k];
  }

  std::size_t size() const { return data.size(); }
  bool empty() const { return data.empty(); }

  bool same_shape(const Tensor3& o) const { return d0 == o.d0 && d1 == o.d1 && d2 == o.d2; }
};

}  // namespace mlfst
