#pragma once

#include <cmath>
#include <vector>

#include "s2d/core.hpp"

namespace s2d {

/// Dense 4-D array (N,C,H,W), contiguous row-major storage.
template <typename T>
struct Tensor {
    Shape4 shape{};
    std::vector<T> data;
    bool requires_grad = false;

    Tensor() = default;
    explicit Tensor(Shape4 s) : shape(s), data(static_cast<size_t>(s.numel()), T(0)) {}
    Tensor(Shape4 s, std::vector<T> d) : shape(s), data(std::move(d)) {
        check(static_cast<i64>(data.size()) == s.numel(),
              "Tensor: data length " + std::to_string(data.size()) +
                  " does not match shape " + s.str());
    }

    static Tensor zeros(Shape4 s) { return Tensor(s); }
    static Tensor full(Shape4 s, T v) {
        Tensor t(s);
        for (auto& x : t.data) x = v;
        return t;
    }
    static Tensor scalar(T v) { return full({1, 1, 1, 1}, v); }

    i64 numel() const { return shape.numel(); }

    i64 index(i64 n, i64 c, i64 y, i64 x) const {
        return ((n * shape.c + c) * shape.h + y) * shape.w + x;
    }
    T& at(i64 n, i64 c, i64 y, i64 x) { return data[static_cast<size_t>(index(n, c, y, x))]; }
    const T& at(i64 n, i64 c, i64 y, i64 x) const {
        return data[static_cast<size_t>(index(n, c, y, x))];
    }

    T* ptr() { return data.data(); }
    const T* ptr() const { return data.data(); }

    bool all_finite() const {
        for (T v : data)
            if (!std::isfinite(static_cast<double>(v))) return false;
        return true;
    }

    template <typename U>
    Tensor<U> cast() const {
        Tensor<U> out(shape);
        for (size_t i = 0; i < data.size(); ++i) out.data[i] = static_cast<U>(data[i]);
        return out;
    }
};

template <typename T>
Tensor<T> with_grad(Tensor<T> t) {
    t.requires_grad = true;
    return t;
}

}  // namespace s2d
