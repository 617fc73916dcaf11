#ifndef SPACTE_TENSOR_HPP
#define SPACTE_TENSOR_HPP

#include <cstddef>
#include <stdexcept>
#include <vector>

namespace spacte {

// Dense NCHW tensor of doubles. Vector-shaped data lives as (n, c, 1, 1).
struct Tensor {
    int n = 0, c = 0, h = 0, w = 0;
    std::vector<double> v;

    Tensor() = default;
    Tensor(int n_, int c_, int h_, int w_)
        : n(n_), c(c_), h(h_), w(w_),
          v(static_cast<std::size_t>(n_) * c_ * h_ * w_, 0.0) {}

    std::size_t size() const { return v.size(); }
    int plane() const { return h * w; }
    int per_sample() const { return c * h * w; }

    double& at(int in, int ic, int ih, int iw) {
        return v[((static_cast<std::size_t>(in) * c + ic) * h + ih) * w + iw];
    }
    double at(int in, int ic, int ih, int iw) const {
        return v[((static_cast<std::size_t>(in) * c + ic) * h + ih) * w + iw];
    }

    double* sample(int in) { return v.data() + static_cast<std::size_t>(in) * per_sample(); }
    const double* sample(int in) const {
        return v.data() + static_cast<std::size_t>(in) * per_sample();
    }

    bool same_shape(const Tensor& o) const {
        return n == o.n && c == o.c && h == o.h && w == o.w;
    }

    void fill(double x) { std::fill(v.begin(), v.end(), x); }
};

inline void check_shape(const Tensor& t, int c, int h, int w, const char* where) {
    if (t.c != c || t.h != h || t.w != w)
        throw std::invalid_argument(std::string(where) + ": input shape mismatch");
}

}  // namespace spacte

#endif  // SPACTE_TENSOR_HPP
