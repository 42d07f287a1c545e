#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace plateinspect::nn {

// Dense NCHW tensor. Float for production paths, double for the
// finite-difference test instantiations.
template <typename T>
struct Tensor {
    int n = 0, c = 0, h = 0, w = 0;
    std::vector<T> v;

    Tensor() = default;
    Tensor(int n_, int c_, int h_, int w_)
        : n(n_), c(c_), h(h_), w(w_), v(static_cast<size_t>(n_) * c_ * h_ * w_, T(0)) {}

    size_t size() const { return v.size(); }
    size_t sample_size() const { return static_cast<size_t>(c) * h * w; }
    size_t plane_size() const { return static_cast<size_t>(h) * w; }

    T* sample(int i) { return v.data() + i * sample_size(); }
    const T* sample(int i) const { return v.data() + i * sample_size(); }

    T& at(int i, int j, int y, int x) {
        return v[((static_cast<size_t>(i) * c + j) * h + y) * w + x];
    }
    T at(int i, int j, int y, int x) const {
        return v[((static_cast<size_t>(i) * c + j) * h + y) * w + x];
    }

    bool same_shape(const Tensor& o) const {
        return n == o.n && c == o.c && h == o.h && w == o.w;
    }

    bool all_finite() const {
        for (const T& x : v)
            if (!std::isfinite(static_cast<double>(x))) return false;
        return true;
    }

    void require_finite(const char* what) const {
        if (!all_finite()) throw std::invalid_argument(std::string(what) + ": non-finite values");
    }
};

using Tensor4f = Tensor<float>;
using Tensor4d = Tensor<double>;

}  // namespace plateinspect::nn
