#include "medcast/unet.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Core>
#include <fmt/format.h>

#include "medcast/rng.hpp"

namespace medcast {
namespace {

template <typename S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;
template <typename S>
using RowMajorMap =
    Eigen::Map<Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
template <typename S>
using ConstRowMajorMap =
    Eigen::Map<const Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

// Column p of the im2col matrix holds the 3x3 neighborhood (zero padded)
// of output pixel p across all input channels; row index is
// ci * 9 + ky * 3 + kx, matching the flattened kernel layout.
template <typename S>
void im2col_3x3(const S* x, int c, int h, int w, Mat<S>& m) {
    m.resize(static_cast<Eigen::Index>(c) * 9, static_cast<Eigen::Index>(h) * w);
    for (int y = 0; y < h; ++y) {
        for (int xx = 0; xx < w; ++xx) {
            const Eigen::Index p = static_cast<Eigen::Index>(y) * w + xx;
            S* col = m.data() + p * m.rows();
            for (int ci = 0; ci < c; ++ci) {
                const S* plane = x + static_cast<std::size_t>(ci) * h * w;
                for (int ky = 0; ky < 3; ++ky) {
                    const int yy = y + ky - 1;
                    for (int kx = 0; kx < 3; ++kx) {
                        const int xs = xx + kx - 1;
                        *col++ = (yy >= 0 && yy < h && xs >= 0 && xs < w)
                                     ? plane[static_cast<std::size_t>(yy) * w + xs]
                                     : S{0};
                    }
                }
            }
        }
    }
}

template <typename S>
void col2im_3x3_add(const Mat<S>& m, int c, int h, int w, S* dx) {
    for (int y = 0; y < h; ++y) {
        for (int xx = 0; xx < w; ++xx) {
            const Eigen::Index p = static_cast<Eigen::Index>(y) * w + xx;
            const S* col = m.data() + p * m.rows();
            for (int ci = 0; ci < c; ++ci) {
                S* plane = dx + static_cast<std::size_t>(ci) * h * w;
                for (int ky = 0; ky < 3; ++ky) {
                    const int yy = y + ky - 1;
                    for (int kx = 0; kx < 3; ++kx) {
                        const int xs = xx + kx - 1;
                        if (yy >= 0 && yy < h && xs >= 0 && xs < w) {
                            plane[static_cast<std::size_t>(yy) * w + xs] += *col;
                        }
                        ++col;
                    }
                }
            }
        }
    }
}

template <typename S>
void relu_inplace(Tensor<S>& t) {
    for (S& v : t.v) v = v > S{0} ? v : S{0};
}

// Masks the upstream gradient with the saved post-ReLU output.
template <typename S>
void relu_backward_inplace(Tensor<S>& grad, const Tensor<S>& output) {
    for (std::size_t i = 0; i < grad.v.size(); ++i) {
        if (!(output.v[i] > S{0})) grad.v[i] = S{0};
    }
}

// 3x3 convolution, stride 1, padding 1.
template <typename S>
Tensor<S> conv3x3_forward(const NamedTensor<S>& kernel, const NamedTensor<S>& bias,
                          const Tensor<S>& x, Mat<S>& scratch) {
    const int co = kernel.shape[0];
    const int ci = kernel.shape[1];
    const int h = x.h();
    const int w = x.w();
    const Eigen::Index hw = static_cast<Eigen::Index>(h) * w;
    Tensor<S> y(x.n(), co, h, w);
    ConstRowMajorMap<S> k(kernel.data.data(), co, static_cast<Eigen::Index>(ci) * 9);
    for (int nn = 0; nn < x.n(); ++nn) {
        im2col_3x3(x.sample(nn), ci, h, w, scratch);
        RowMajorMap<S> ym(y.sample(nn), co, hw);
        ym.noalias() = k * scratch;
        for (int c = 0; c < co; ++c) {
            ym.row(c).array() += bias.data[c];
        }
    }
    return y;
}

// Backward through a conv+ReLU pair. `grad` is the gradient at the ReLU
// output and is consumed. Returns the gradient w.r.t. x.
template <typename S>
Tensor<S> conv3x3_backward(const NamedTensor<S>& kernel, const Tensor<S>& x,
                           const Tensor<S>& y, Tensor<S>&& grad, NamedTensor<S>& g_kernel,
                           NamedTensor<S>& g_bias, Mat<S>& scratch, Mat<S>& scratch2) {
    relu_backward_inplace(grad, y);
    const int co = kernel.shape[0];
    const int ci = kernel.shape[1];
    const int h = x.h();
    const int w = x.w();
    const Eigen::Index hw = static_cast<Eigen::Index>(h) * w;
    Tensor<S> dx(x.n(), ci, h, w);
    ConstRowMajorMap<S> k(kernel.data.data(), co, static_cast<Eigen::Index>(ci) * 9);
    RowMajorMap<S> gk(g_kernel.data.data(), co, static_cast<Eigen::Index>(ci) * 9);
    for (int nn = 0; nn < x.n(); ++nn) {
        im2col_3x3(x.sample(nn), ci, h, w, scratch);
        ConstRowMajorMap<S> gy(grad.sample(nn), co, hw);
        gk.noalias() += gy * scratch.transpose();
        // Fixed-order scalar reduction: Eigen's vectorized sum peels to the
        // pointer's alignment, which varies between allocations and would
        // break bit reproducibility.
        const S* gptr = grad.sample(nn);
        for (int c = 0; c < co; ++c) {
            S acc = 0;
            for (Eigen::Index p = 0; p < hw; ++p) acc += gptr[c * hw + p];
            g_bias.data[c] += acc;
        }
        scratch2.resize(static_cast<Eigen::Index>(ci) * 9, hw);
        scratch2.noalias() = k.transpose() * gy;
        col2im_3x3_add(scratch2, ci, h, w, dx.sample(nn));
    }
    return dx;
}

template <typename S>
Tensor<S> maxpool2x2_forward(const Tensor<S>& x, std::vector<std::uint8_t>& mask) {
    const int oh = x.h() / 2;
    const int ow = x.w() / 2;
    Tensor<S> y(x.n(), x.c(), oh, ow);
    mask.assign(y.size(), 0);
    std::size_t o = 0;
    for (int nn = 0; nn < x.n(); ++nn) {
        for (int c = 0; c < x.c(); ++c) {
            const S* plane = x.sample(nn) + static_cast<std::size_t>(c) * x.h() * x.w();
            for (int i = 0; i < oh; ++i) {
                for (int j = 0; j < ow; ++j) {
                    S best = plane[static_cast<std::size_t>(2 * i) * x.w() + 2 * j];
                    std::uint8_t arg = 0;
                    for (std::uint8_t s = 1; s < 4; ++s) {
                        const int yy = 2 * i + s / 2;
                        const int xx = 2 * j + s % 2;
                        const S v = plane[static_cast<std::size_t>(yy) * x.w() + xx];
                        if (v > best) {
                            best = v;
                            arg = s;
                        }
                    }
                    y.v[o] = best;
                    mask[o] = arg;
                    ++o;
                }
            }
        }
    }
    return y;
}

template <typename S>
Tensor<S> maxpool2x2_backward(const Tensor<S>& grad, const std::vector<std::uint8_t>& mask,
                              int in_h, int in_w) {
    Tensor<S> dx(grad.n(), grad.c(), in_h, in_w);
    std::size_t o = 0;
    for (int nn = 0; nn < grad.n(); ++nn) {
        for (int c = 0; c < grad.c(); ++c) {
            S* plane = dx.sample(nn) + static_cast<std::size_t>(c) * in_h * in_w;
            for (int i = 0; i < grad.h(); ++i) {
                for (int j = 0; j < grad.w(); ++j) {
                    const std::uint8_t s = mask[o];
                    const int yy = 2 * i + s / 2;
                    const int xx = 2 * j + s % 2;
                    plane[static_cast<std::size_t>(yy) * in_w + xx] += grad.v[o];
                    ++o;
                }
            }
        }
    }
    return dx;
}

// Transposed convolution, kernel 2, stride 2 (non-overlapping).
template <typename S>
Tensor<S> tconv2x2_forward(const NamedTensor<S>& kernel, const NamedTensor<S>& bias,
                           const Tensor<S>& x, Mat<S>& scratch) {
    const int ci = kernel.shape[0];
    const int co = kernel.shape[1];
    const int h = x.h();
    const int w = x.w();
    const Eigen::Index hw = static_cast<Eigen::Index>(h) * w;
    Tensor<S> y(x.n(), co, 2 * h, 2 * w);
    ConstRowMajorMap<S> k(kernel.data.data(), ci, static_cast<Eigen::Index>(co) * 4);
    for (int nn = 0; nn < x.n(); ++nn) {
        ConstRowMajorMap<S> xm(x.sample(nn), ci, hw);
        scratch.resize(static_cast<Eigen::Index>(co) * 4, hw);
        scratch.noalias() = k.transpose() * xm;
        S* out = y.sample(nn);
        for (int c = 0; c < co; ++c) {
            S* plane = out + static_cast<std::size_t>(c) * 4 * h * w;
            for (int ky = 0; ky < 2; ++ky) {
                for (int kx = 0; kx < 2; ++kx) {
                    const Eigen::Index r = static_cast<Eigen::Index>(c) * 4 + ky * 2 + kx;
                    for (int i = 0; i < h; ++i) {
                        S* row = plane + static_cast<std::size_t>(2 * i + ky) * 2 * w + kx;
                        for (int j = 0; j < w; ++j) {
                            row[2 * j] = scratch(r, static_cast<Eigen::Index>(i) * w + j) +
                                         bias.data[c];
                        }
                    }
                }
            }
        }
    }
    return y;
}

template <typename S>
Tensor<S> tconv2x2_backward(const NamedTensor<S>& kernel, const Tensor<S>& x,
                            const Tensor<S>& grad, NamedTensor<S>& g_kernel,
                            NamedTensor<S>& g_bias, Mat<S>& scratch) {
    const int ci = kernel.shape[0];
    const int co = kernel.shape[1];
    const int h = x.h();
    const int w = x.w();
    const Eigen::Index hw = static_cast<Eigen::Index>(h) * w;
    Tensor<S> dx(x.n(), ci, h, w);
    ConstRowMajorMap<S> k(kernel.data.data(), ci, static_cast<Eigen::Index>(co) * 4);
    RowMajorMap<S> gk(g_kernel.data.data(), ci, static_cast<Eigen::Index>(co) * 4);
    for (int nn = 0; nn < x.n(); ++nn) {
        // Gather the strided output gradient back into (co*4) x (h*w).
        scratch.resize(static_cast<Eigen::Index>(co) * 4, hw);
        const S* gin = grad.sample(nn);
        for (int c = 0; c < co; ++c) {
            const S* plane = gin + static_cast<std::size_t>(c) * 4 * h * w;
            S acc = 0;
            for (int ky = 0; ky < 2; ++ky) {
                for (int kx = 0; kx < 2; ++kx) {
                    const Eigen::Index r = static_cast<Eigen::Index>(c) * 4 + ky * 2 + kx;
                    for (int i = 0; i < h; ++i) {
                        const S* row = plane + static_cast<std::size_t>(2 * i + ky) * 2 * w + kx;
                        for (int j = 0; j < w; ++j) {
                            const S v = row[2 * j];
                            scratch(r, static_cast<Eigen::Index>(i) * w + j) = v;
                            acc += v;
                        }
                    }
                }
            }
            g_bias.data[c] += acc;
        }
        ConstRowMajorMap<S> xm(x.sample(nn), ci, hw);
        gk.noalias() += xm * scratch.transpose();
        RowMajorMap<S> dxm(dx.sample(nn), ci, hw);
        dxm.noalias() = k * scratch;
    }
    return dx;
}

template <typename S>
Tensor<S> concat_channels(const Tensor<S>& a, const Tensor<S>& b) {
    Tensor<S> y(a.n(), a.c() + b.c(), a.h(), a.w());
    const std::size_t plane = static_cast<std::size_t>(a.h()) * a.w();
    for (int nn = 0; nn < a.n(); ++nn) {
        std::copy_n(a.sample(nn), plane * a.c(), y.sample(nn));
        std::copy_n(b.sample(nn), plane * b.c(), y.sample(nn) + plane * a.c());
    }
    return y;
}

template <typename S>
std::pair<Tensor<S>, Tensor<S>> split_channels(const Tensor<S>& y, int c_first) {
    Tensor<S> a(y.n(), c_first, y.h(), y.w());
    Tensor<S> b(y.n(), y.c() - c_first, y.h(), y.w());
    const std::size_t plane = static_cast<std::size_t>(y.h()) * y.w();
    for (int nn = 0; nn < y.n(); ++nn) {
        std::copy_n(y.sample(nn), plane * c_first, a.sample(nn));
        std::copy_n(y.sample(nn) + plane * c_first, plane * b.c(), b.sample(nn));
    }
    return {std::move(a), std::move(b)};
}

template <typename S>
Tensor<S> conv1x1_sigmoid_forward(const NamedTensor<S>& kernel, const NamedTensor<S>& bias,
                                  const Tensor<S>& x) {
    const int co = kernel.shape[0];
    const int ci = kernel.shape[1];
    const Eigen::Index hw = static_cast<Eigen::Index>(x.h()) * x.w();
    Tensor<S> y(x.n(), co, x.h(), x.w());
    ConstRowMajorMap<S> k(kernel.data.data(), co, ci);
    for (int nn = 0; nn < x.n(); ++nn) {
        ConstRowMajorMap<S> xm(x.sample(nn), ci, hw);
        RowMajorMap<S> ym(y.sample(nn), co, hw);
        ym.noalias() = k * xm;
        for (int c = 0; c < co; ++c) ym.row(c).array() += bias.data[c];
    }
    for (S& v : y.v) v = S{1} / (S{1} + std::exp(-v));
    return y;
}

template <typename S>
struct Trace {
    std::vector<std::vector<Tensor<S>>> enc_out;  // [depth][convs]
    std::vector<Tensor<S>> pooled;                // [depth]
    std::vector<std::vector<std::uint8_t>> pool_mask;
    std::vector<Tensor<S>> bott_out;             // [convs]
    std::vector<Tensor<S>> up_out;               // [depth], post-ReLU
    std::vector<Tensor<S>> cat;                  // [depth]
    std::vector<std::vector<Tensor<S>>> dec_out;  // [depth][convs]
    Tensor<S> output;
};

template <typename S>
void check_input(const NetworkConfig& cfg, const Tensor<S>& input) {
    cfg.validate();
    if (input.n() < 1 || input.c() != cfg.input_channels) {
        throw Error(Error::Kind::format,
                    fmt::format("network expects {} input channels, got shape ({}, {}, {}, {})",
                                cfg.input_channels, input.n(), input.c(), input.h(), input.w()));
    }
    const int m = 1 << cfg.depth;
    if (input.h() % m != 0 || input.w() % m != 0 || input.h() == 0 || input.w() == 0) {
        throw Error(Error::Kind::format,
                    fmt::format("input dims {}x{} must be divisible by 2^depth = {}", input.h(),
                                input.w(), m));
    }
}

template <typename S>
Trace<S> forward_impl(const NetworkWeightsT<S>& w, const Tensor<S>& input) {
    const NetworkConfig& cfg = w.cfg;
    check_input(cfg, input);
    Mat<S> scratch;

    Trace<S> tr;
    tr.enc_out.resize(cfg.depth);
    tr.pooled.resize(cfg.depth);
    tr.pool_mask.resize(cfg.depth);
    tr.up_out.resize(cfg.depth);
    tr.cat.resize(cfg.depth);
    tr.dec_out.resize(cfg.depth);

    const Tensor<S>* x = &input;
    for (int i = 0; i < cfg.depth; ++i) {
        tr.enc_out[i].reserve(cfg.convs_per_stage);
        for (int j = 0; j < cfg.convs_per_stage; ++j) {
            const auto& k = w.find(fmt::format("enc{}.conv{}.kernel", i, j));
            const auto& b = w.find(fmt::format("enc{}.conv{}.bias", i, j));
            Tensor<S> y = conv3x3_forward(k, b, *x, scratch);
            relu_inplace(y);
            tr.enc_out[i].push_back(std::move(y));
            x = &tr.enc_out[i].back();
        }
        tr.pooled[i] = maxpool2x2_forward(*x, tr.pool_mask[i]);
        x = &tr.pooled[i];
    }

    tr.bott_out.reserve(cfg.convs_per_stage);
    for (int j = 0; j < cfg.convs_per_stage; ++j) {
        const auto& k = w.find(fmt::format("bottleneck.conv{}.kernel", j));
        const auto& b = w.find(fmt::format("bottleneck.conv{}.bias", j));
        Tensor<S> y = conv3x3_forward(k, b, *x, scratch);
        relu_inplace(y);
        tr.bott_out.push_back(std::move(y));
        x = &tr.bott_out.back();
    }

    for (int i = cfg.depth - 1; i >= 0; --i) {
        const auto& uk = w.find(fmt::format("dec{}.up.kernel", i));
        const auto& ub = w.find(fmt::format("dec{}.up.bias", i));
        Tensor<S> up = tconv2x2_forward(uk, ub, *x, scratch);
        relu_inplace(up);
        tr.up_out[i] = std::move(up);
        tr.cat[i] = concat_channels(tr.up_out[i], tr.enc_out[i].back());
        x = &tr.cat[i];
        tr.dec_out[i].reserve(cfg.convs_per_stage);
        for (int j = 0; j < cfg.convs_per_stage; ++j) {
            const auto& k = w.find(fmt::format("dec{}.conv{}.kernel", i, j));
            const auto& b = w.find(fmt::format("dec{}.conv{}.bias", i, j));
            Tensor<S> y = conv3x3_forward(k, b, *x, scratch);
            relu_inplace(y);
            tr.dec_out[i].push_back(std::move(y));
            x = &tr.dec_out[i].back();
        }
    }

    tr.output = conv1x1_sigmoid_forward(w.find("head.kernel"), w.find("head.bias"), *x);
    return tr;
}

}  // namespace

void NetworkConfig::validate() const {
    if (base_channels < 1 || depth < 1 || convs_per_stage < 1 || input_channels < 1 ||
        output_channels < 1) {
        throw Error(Error::Kind::config, "network config fields must be positive");
    }
}

template <typename S>
const NamedTensor<S>& NetworkWeightsT<S>::find(const std::string& name) const {
    for (const auto& t : tensors) {
        if (t.name == name) return t;
    }
    throw Error(Error::Kind::format, fmt::format("weights have no tensor '{}'", name));
}

template <typename S>
NamedTensor<S>& NetworkWeightsT<S>::find(const std::string& name) {
    for (auto& t : tensors) {
        if (t.name == name) return t;
    }
    throw Error(Error::Kind::format, fmt::format("weights have no tensor '{}'", name));
}

template <typename S>
std::size_t NetworkWeightsT<S>::parameter_count() const {
    std::size_t n = 0;
    for (const auto& t : tensors) n += t.data.size();
    return n;
}

std::vector<std::pair<std::string, std::array<int, 4>>> weight_layout(const NetworkConfig& cfg) {
    cfg.validate();
    std::vector<std::pair<std::string, std::array<int, 4>>> layout;
    auto add_conv = [&](const std::string& prefix, int ci, int co) {
        layout.push_back({prefix + ".kernel", {co, ci, 3, 3}});
        layout.push_back({prefix + ".bias", {co, 1, 1, 1}});
    };
    for (int i = 0; i < cfg.depth; ++i) {
        const int co = cfg.stage_channels(i);
        const int ci0 = i == 0 ? cfg.input_channels : cfg.stage_channels(i - 1);
        for (int j = 0; j < cfg.convs_per_stage; ++j) {
            add_conv(fmt::format("enc{}.conv{}", i, j), j == 0 ? ci0 : co, co);
        }
    }
    {
        const int co = cfg.bottleneck_channels();
        const int ci0 = cfg.stage_channels(cfg.depth - 1);
        for (int j = 0; j < cfg.convs_per_stage; ++j) {
            add_conv(fmt::format("bottleneck.conv{}", j), j == 0 ? ci0 : co, co);
        }
    }
    for (int i = cfg.depth - 1; i >= 0; --i) {
        const int co = cfg.stage_channels(i);
        const int ci = cfg.stage_channels(i + 1);
        layout.push_back({fmt::format("dec{}.up.kernel", i), {ci, co, 2, 2}});
        layout.push_back({fmt::format("dec{}.up.bias", i), {co, 1, 1, 1}});
        for (int j = 0; j < cfg.convs_per_stage; ++j) {
            add_conv(fmt::format("dec{}.conv{}", i, j), j == 0 ? 2 * co : co, co);
        }
    }
    layout.push_back({"head.kernel", {cfg.output_channels, cfg.base_channels, 1, 1}});
    layout.push_back({"head.bias", {cfg.output_channels, 1, 1, 1}});
    return layout;
}

template <typename S>
NetworkWeightsT<S> init_network_t(const NetworkConfig& cfg) {
    NetworkWeightsT<S> w;
    w.cfg = cfg;
    Rng rng(cfg.seed);
    for (const auto& [name, shape] : weight_layout(cfg)) {
        NamedTensor<S> t;
        t.name = name;
        t.shape = shape;
        const std::size_t count = static_cast<std::size_t>(shape[0]) * shape[1] * shape[2] * shape[3];
        t.data.assign(count, S{0});
        if (name.ends_with(".kernel")) {
            // He fan-in scaling; transposed convolutions see one tap per
            // input channel, so their fan-in is just c_in.
            const bool is_up = name.find(".up.") != std::string::npos;
            const double fan_in = is_up ? shape[0]
                                        : static_cast<double>(shape[1]) * shape[2] * shape[3];
            const double stddev = std::sqrt(2.0 / fan_in);
            for (S& v : t.data) v = static_cast<S>(rng.normal(0.0, stddev));
        }
        w.tensors.push_back(std::move(t));
    }
    return w;
}

template <typename S>
Tensor<S> forward_t(const NetworkWeightsT<S>& w, const Tensor<S>& input) {
    return std::move(forward_impl(w, input).output);
}

template <typename S>
double mse_loss_t(const Tensor<S>& pred, const Tensor<S>& target) {
    if (pred.shape != target.shape) {
        throw Error(Error::Kind::format, "mse_loss: shape mismatch");
    }
    if (pred.size() == 0) {
        throw Error(Error::Kind::format, "mse_loss: empty tensors");
    }
    double acc = 0.0;
    for (std::size_t i = 0; i < pred.v.size(); ++i) {
        const double d = static_cast<double>(pred.v[i]) - static_cast<double>(target.v[i]);
        acc += d * d;
    }
    return acc / static_cast<double>(pred.size());
}

template <typename S>
std::pair<double, GradientsT<S>> backward_t(const NetworkWeightsT<S>& w, const Tensor<S>& input,
                                            const Tensor<S>& target) {
    const NetworkConfig& cfg = w.cfg;
    Trace<S> tr = forward_impl(w, input);
    if (tr.output.shape != target.shape) {
        throw Error(Error::Kind::format, "backward: target shape mismatch");
    }
    const double loss = mse_loss_t(tr.output, target);

    GradientsT<S> g;
    g.cfg = cfg;
    g.tensors.reserve(w.tensors.size());
    for (const auto& t : w.tensors) {
        NamedTensor<S> zt;
        zt.name = t.name;
        zt.shape = t.shape;
        zt.data.assign(t.data.size(), S{0});
        g.tensors.push_back(std::move(zt));
    }

    Mat<S> scratch, scratch2;

    // d(loss)/d(pre-sigmoid) = 2 (y - t) / numel * y (1 - y)
    const Tensor<S>& y = tr.output;
    Tensor<S> dz(y.n(), y.c(), y.h(), y.w());
    const double scale = 2.0 / static_cast<double>(y.size());
    for (std::size_t i = 0; i < y.v.size(); ++i) {
        const S yi = y.v[i];
        dz.v[i] = static_cast<S>(scale * (static_cast<double>(yi) - target.v[i])) * yi *
                  (S{1} - yi);
    }

    // Head (1x1 conv).
    Tensor<S> d_cur;
    {
        const auto& k = w.find("head.kernel");
        auto& gk = g.find("head.kernel");
        auto& gb = g.find("head.bias");
        const Tensor<S>& hx = tr.dec_out[0].back();
        const Eigen::Index hw = static_cast<Eigen::Index>(hx.h()) * hx.w();
        d_cur = Tensor<S>(hx.n(), hx.c(), hx.h(), hx.w());
        ConstRowMajorMap<S> km(k.data.data(), k.shape[0], k.shape[1]);
        RowMajorMap<S> gkm(gk.data.data(), k.shape[0], k.shape[1]);
        for (int nn = 0; nn < hx.n(); ++nn) {
            ConstRowMajorMap<S> xm(hx.sample(nn), hx.c(), hw);
            ConstRowMajorMap<S> dzm(dz.sample(nn), k.shape[0], hw);
            gkm.noalias() += dzm * xm.transpose();
            const S* dzp = dz.sample(nn);
            for (int c = 0; c < k.shape[0]; ++c) {
                S acc = 0;
                for (Eigen::Index p = 0; p < hw; ++p) acc += dzp[c * hw + p];
                gb.data[c] += acc;
            }
            RowMajorMap<S> dxm(d_cur.sample(nn), hx.c(), hw);
            dxm.noalias() = km.transpose() * dzm;
        }
    }

    // Decoder stages, shallowest first (reverse of the forward pass).
    std::vector<Tensor<S>> d_skip(cfg.depth);
    for (int i = 0; i < cfg.depth; ++i) {
        for (int j = cfg.convs_per_stage - 1; j >= 0; --j) {
            const Tensor<S>& cin = j == 0 ? tr.cat[i] : tr.dec_out[i][j - 1];
            d_cur = conv3x3_backward(w.find(fmt::format("dec{}.conv{}.kernel", i, j)), cin,
                                     tr.dec_out[i][j], std::move(d_cur),
                                     g.find(fmt::format("dec{}.conv{}.kernel", i, j)),
                                     g.find(fmt::format("dec{}.conv{}.bias", i, j)), scratch,
                                     scratch2);
        }
        auto [d_up, d_sk] = split_channels(d_cur, tr.up_out[i].c());
        d_skip[i] = std::move(d_sk);
        relu_backward_inplace(d_up, tr.up_out[i]);
        const Tensor<S>& tin = i == cfg.depth - 1 ? tr.bott_out.back() : tr.dec_out[i + 1].back();
        d_cur = tconv2x2_backward(w.find(fmt::format("dec{}.up.kernel", i)), tin, d_up,
                                  g.find(fmt::format("dec{}.up.kernel", i)),
                                  g.find(fmt::format("dec{}.up.bias", i)), scratch);
    }

    // Bottleneck.
    for (int j = cfg.convs_per_stage - 1; j >= 0; --j) {
        const Tensor<S>& cin = j == 0 ? tr.pooled[cfg.depth - 1] : tr.bott_out[j - 1];
        d_cur = conv3x3_backward(w.find(fmt::format("bottleneck.conv{}.kernel", j)), cin,
                                 tr.bott_out[j], std::move(d_cur),
                                 g.find(fmt::format("bottleneck.conv{}.kernel", j)),
                                 g.find(fmt::format("bottleneck.conv{}.bias", j)), scratch,
                                 scratch2);
    }

    // Encoder stages, deepest first. Each stage output fed both the pool
    // chain and a skip connection, so the two gradient paths sum.
    for (int i = cfg.depth - 1; i >= 0; --i) {
        const Tensor<S>& stage_out = tr.enc_out[i].back();
        Tensor<S> d_out =
            maxpool2x2_backward(d_cur, tr.pool_mask[i], stage_out.h(), stage_out.w());
        for (std::size_t n = 0; n < d_out.v.size(); ++n) d_out.v[n] += d_skip[i].v[n];
        d_cur = std::move(d_out);
        for (int j = cfg.convs_per_stage - 1; j >= 0; --j) {
            const Tensor<S>& cin = j == 0 ? (i == 0 ? input : tr.pooled[i - 1])
                                          : tr.enc_out[i][j - 1];
            d_cur = conv3x3_backward(w.find(fmt::format("enc{}.conv{}.kernel", i, j)), cin,
                                     tr.enc_out[i][j], std::move(d_cur),
                                     g.find(fmt::format("enc{}.conv{}.kernel", i, j)),
                                     g.find(fmt::format("enc{}.conv{}.bias", i, j)), scratch,
                                     scratch2);
        }
    }

    return {loss, std::move(g)};
}

template <typename S>
AdamStateT<S> AdamStateT<S>::zeros_like(const NetworkWeightsT<S>& w) {
    AdamStateT<S> st;
    st.m.reserve(w.tensors.size());
    st.v.reserve(w.tensors.size());
    for (const auto& t : w.tensors) {
        st.m.emplace_back(t.data.size(), S{0});
        st.v.emplace_back(t.data.size(), S{0});
    }
    return st;
}

template <typename S>
void adam_update_t(NetworkWeightsT<S>& w, const GradientsT<S>& g, AdamStateT<S>& state,
                   const AdamHyper& hyper, long step) {
    if (g.tensors.size() != w.tensors.size() || state.m.size() != w.tensors.size()) {
        throw Error(Error::Kind::format, "adam_update: mismatched weight/gradient/state shapes");
    }
    const double bc1 = 1.0 - std::pow(hyper.beta1, static_cast<double>(step));
    const double bc2 = 1.0 - std::pow(hyper.beta2, static_cast<double>(step));
    for (std::size_t t = 0; t < w.tensors.size(); ++t) {
        auto& wt = w.tensors[t].data;
        const auto& gt = g.tensors[t].data;
        if (gt.size() != wt.size()) {
            throw Error(Error::Kind::format,
                        fmt::format("adam_update: tensor '{}' size mismatch", w.tensors[t].name));
        }
        auto& m = state.m[t];
        auto& v = state.v[t];
        for (std::size_t i = 0; i < wt.size(); ++i) {
            m[i] = static_cast<S>(hyper.beta1 * m[i] + (1.0 - hyper.beta1) * gt[i]);
            v[i] = static_cast<S>(hyper.beta2 * v[i] +
                                  (1.0 - hyper.beta2) * static_cast<double>(gt[i]) * gt[i]);
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            wt[i] = static_cast<S>(wt[i] - hyper.lr * mhat / (std::sqrt(vhat) + hyper.eps));
        }
    }
}

template struct NetworkWeightsT<float>;
template struct NetworkWeightsT<double>;
template struct AdamStateT<float>;
template struct AdamStateT<double>;
template NetworkWeightsT<float> init_network_t<float>(const NetworkConfig&);
template NetworkWeightsT<double> init_network_t<double>(const NetworkConfig&);
template Tensor<float> forward_t<float>(const NetworkWeightsT<float>&, const Tensor<float>&);
template Tensor<double> forward_t<double>(const NetworkWeightsT<double>&, const Tensor<double>&);
template double mse_loss_t<float>(const Tensor<float>&, const Tensor<float>&);
template double mse_loss_t<double>(const Tensor<double>&, const Tensor<double>&);
template std::pair<double, GradientsT<float>> backward_t<float>(const NetworkWeightsT<float>&,
                                                                const Tensor<float>&,
                                                                const Tensor<float>&);
template std::pair<double, GradientsT<double>> backward_t<double>(const NetworkWeightsT<double>&,
                                                                  const Tensor<double>&,
                                                                  const Tensor<double>&);
template void adam_update_t<float>(NetworkWeightsT<float>&, const GradientsT<float>&,
                                   AdamStateT<float>&, const AdamHyper&, long);
template void adam_update_t<double>(NetworkWeightsT<double>&, const GradientsT<double>&,
                                    AdamStateT<double>&, const AdamHyper&, long);

}  // namespace medcast
