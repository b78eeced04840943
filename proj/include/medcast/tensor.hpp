#pragma once

#include <array>
#include <cstddef>
#include <vector>

namespace medcast {

// Dense 4-d array. Activations use (n, c, h, w); convolution kernels use
// (c_out, c_in, kh, kw); transposed-convolution kernels use
// (c_in, c_out, kh, kw); biases use (c, 1, 1, 1).
template <typename S>
struct Tensor {
    std::array<int, 4> shape{0, 0, 0, 0};
    std::vector<S> v;

    Tensor() = default;
    Tensor(int n, int c, int h, int w) : shape{n, c, h, w} {
        v.assign(static_cast<std::size_t>(n) * c * h * w, S{0});
    }

    std::size_t size() const { return v.size(); }
    S* data() { return v.data(); }
    const S* data() const { return v.data(); }

    int n() const { return shape[0]; }
    int c() const { return shape[1]; }
    int h() const { return shape[2]; }
    int w() const { return shape[3]; }

    // Contiguous (c, h, w) block of one batch member.
    S* sample(int i) { return v.data() + static_cast<std::size_t>(i) * c() * h() * w(); }
    const S* sample(int i) const {
        return v.data() + static_cast<std::size_t>(i) * c() * h() * w();
    }

    void zero() { std::fill(v.begin(), v.end(), S{0}); }
};

}  // namespace medcast
