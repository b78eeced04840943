#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "medcast/common.hpp"
#include "medcast/tensor.hpp"

namespace medcast {

// Encoder-decoder with skip concatenation: 3x3 convolutions (stride 1,
// padding 1, ReLU), 2x2 max pooling, 2x2 stride-2 transposed convolutions,
// and a sigmoid-squashed 1x1 output projection. Channels double at each
// downsampling, so the bottleneck carries base_channels * 2^depth.
struct NetworkConfig {
    int base_channels = 32;
    int depth = 3;
    int convs_per_stage = 2;
    int input_channels = 2;
    int output_channels = 1;
    std::uint64_t seed = 0;

    int bottleneck_channels() const { return base_channels << depth; }
    int stage_channels(int stage) const { return base_channels << stage; }
    void validate() const;
    bool operator==(const NetworkConfig&) const = default;
};

template <typename S>
struct NamedTensor {
    std::string name;
    std::array<int, 4> shape{0, 0, 0, 0};
    std::vector<S> data;

    std::size_t size() const { return data.size(); }
};

template <typename S>
struct NetworkWeightsT {
    NetworkConfig cfg;
    std::vector<NamedTensor<S>> tensors;

    const NamedTensor<S>& find(const std::string& name) const;
    NamedTensor<S>& find(const std::string& name);
    std::size_t parameter_count() const;
};

using NetworkWeights = NetworkWeightsT<float>;

// Gradients mirror the weight tensors key for key.
template <typename S>
using GradientsT = NetworkWeightsT<S>;
using Gradients = GradientsT<float>;

// Tensor names and shapes implied by a config, in serialization order.
std::vector<std::pair<std::string, std::array<int, 4>>> weight_layout(const NetworkConfig& cfg);

template <typename S>
NetworkWeightsT<S> init_network_t(const NetworkConfig& cfg);

template <typename S>
Tensor<S> forward_t(const NetworkWeightsT<S>& w, const Tensor<S>& input);

template <typename S>
double mse_loss_t(const Tensor<S>& pred, const Tensor<S>& target);

template <typename S>
std::pair<double, GradientsT<S>> backward_t(const NetworkWeightsT<S>& w, const Tensor<S>& input,
                                            const Tensor<S>& target);

struct AdamHyper {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

template <typename S>
struct AdamStateT {
    std::vector<std::vector<S>> m;
    std::vector<std::vector<S>> v;

    static AdamStateT zeros_like(const NetworkWeightsT<S>& w);
};

using AdamState = AdamStateT<float>;

template <typename S>
void adam_update_t(NetworkWeightsT<S>& w, const GradientsT<S>& g, AdamStateT<S>& state,
                   const AdamHyper& hyper, long step);

inline NetworkWeights init_network(const NetworkConfig& cfg) { return init_network_t<float>(cfg); }
inline Tensor<float> forward(const NetworkWeights& w, const Tensor<float>& input) {
    return forward_t<float>(w, input);
}
inline double mse_loss(const Tensor<float>& pred, const Tensor<float>& target) {
    return mse_loss_t<float>(pred, target);
}
inline std::pair<double, Gradients> backward(const NetworkWeights& w, const Tensor<float>& input,
                                             const Tensor<float>& target) {
    return backward_t<float>(w, input, target);
}
inline void adam_update(NetworkWeights& w, const Gradients& g, AdamState& state,
                        const AdamHyper& hyper, long step) {
    adam_update_t<float>(w, g, state, hyper, step);
}

extern template NetworkWeightsT<float> init_network_t<float>(const NetworkConfig&);
extern template NetworkWeightsT<double> init_network_t<double>(const NetworkConfig&);
extern template Tensor<float> forward_t<float>(const NetworkWeightsT<float>&, const Tensor<float>&);
extern template Tensor<double> forward_t<double>(const NetworkWeightsT<double>&, const Tensor<double>&);
extern template double mse_loss_t<float>(const Tensor<float>&, const Tensor<float>&);
extern template double mse_loss_t<double>(const Tensor<double>&, const Tensor<double>&);
extern template std::pair<double, GradientsT<float>> backward_t<float>(const NetworkWeightsT<float>&,
                                                                       const Tensor<float>&,
                                                                       const Tensor<float>&);
extern template std::pair<double, GradientsT<double>> backward_t<double>(const NetworkWeightsT<double>&,
                                                                         const Tensor<double>&,
                                                                         const Tensor<double>&);
extern template void adam_update_t<float>(NetworkWeightsT<float>&, const GradientsT<float>&,
                                          AdamStateT<float>&, const AdamHyper&, long);
extern template void adam_update_t<double>(NetworkWeightsT<double>&, const GradientsT<double>&,
                                           AdamStateT<double>&, const AdamHyper&, long);

}  // namespace medcast
