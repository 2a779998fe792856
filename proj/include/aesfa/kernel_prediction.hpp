#pragma once

#include <string>
#include <vector>

#include "aesfa/encoders.hpp"

namespace aesfa {

enum class Frequency { High, Low };

// Style-predicted weights for one generator layer and frequency branch:
// grouped 3x3 spatial kernels, grouped 1x1 pointwise kernels, and a
// per-channel bias. All carry the style batch as their leading dim.
template <typename T>
struct AestheticKernelSet {
    Var<T> spatial;    // [B, C, C/groups, 3, 3]
    Var<T> pointwise;  // [B, C, C/groups, 1, 1]
    Var<T> bias;       // [B, C]
    int groups = 1;
    int channels() const { return spatial.defined() && spatial.value().ndim() == 5 ? spatial.value().dim(1) : 0; }
    int batch() const { return spatial.defined() && spatial.value().ndim() == 5 ? spatial.value().dim(0) : 0; }
};

// Head that maps a descriptor to one kernel set. Spatial taps come from a
// 1x1 conv over the 3x3 descriptor map (each descriptor position yields the
// matching kernel tap); pointwise kernels and biases come from an affine map
// of the pooled descriptor.
template <typename T>
struct KernelPredictor {
    int channels = 0;  // C for this layer+frequency
    int groups = 1;
    Var<T> spatial_w, spatial_b;  // conv 1x1: D -> C*(C/groups)
    Var<T> point_w, point_b;      // linear: D -> C*(C/groups)
    Var<T> bias_w, bias_b;        // linear: D -> C

    static KernelPredictor make(int channels, int groups, int descriptor_channels, Rng& rng) {
        if (channels % groups != 0) throw InvalidArgument("kernel predictor: groups must divide channels");
        KernelPredictor p;
        p.channels = channels;
        p.groups = groups;
        const int per_group = channels / groups;
        const int fan = channels * per_group;
        p.spatial_w = detail::init_conv_weight<T>(Shape{fan, descriptor_channels, 1, 1}, rng, 1.0);
        p.spatial_b = detail::init_zero_bias<T>(fan);
        p.point_w = detail::init_linear_weight<T>(Shape{fan, descriptor_channels}, rng);
        p.point_b = detail::init_zero_bias<T>(fan);
        p.bias_w = detail::init_linear_weight<T>(Shape{channels, descriptor_channels}, rng);
        p.bias_b = detail::init_zero_bias<T>(channels);
        return p;
    }

    AestheticKernelSet<T> predict(const Var<T>& descriptor) const {
        check_4d(descriptor.value(), "kernel predictor descriptor");
        if (descriptor.value().dim(2) != 3 || descriptor.value().dim(3) != 3)
            throw InvalidArgument("kernel predictor: descriptor must be Bx" + std::to_string(spatial_w.value().dim(1)) +
                                  "x3x3, got " + shape_str(descriptor.value().shape));
        const int B = descriptor.value().dim(0);
        const int per_group = channels / groups;
        // Raw head outputs are rescaled by the fan-in of the convolution they
        // parameterize, so the predicted stages neither collapse nor saturate
        // the signal at any layer width.
        const T spatial_scale = static_cast<T>(1.0 / std::sqrt(static_cast<double>(per_group) * 9.0));
        const T point_scale = static_cast<T>(1.0 / std::sqrt(static_cast<double>(per_group)));
        AestheticKernelSet<T> k;
        k.groups = groups;
        Var<T> sp = scale(conv2d(descriptor, spatial_w, spatial_b, 1, 0, 1), spatial_scale);  // [B, C*C/g, 3, 3]
        k.spatial = reshape(sp, Shape{B, channels, per_group, 3, 3});
        Var<T> pooled = global_avg_pool(descriptor);  // [B, D]
        Var<T> pw = scale(linear(pooled, point_w, point_b), point_scale);
        k.pointwise = reshape(pw, Shape{B, channels, per_group, 1, 1});
        k.bias = scale(linear(pooled, bias_w, bias_b), point_scale);
        return k;
    }

    template <typename Fn>
    void visit_params(const std::string& prefix, Fn&& fn) {
        fn(prefix + ".spatial_w", spatial_w);
        fn(prefix + ".spatial_b", spatial_b);
        fn(prefix + ".point_w", point_w);
        fn(prefix + ".point_b", point_b);
        fn(prefix + ".bias_w", bias_w);
        fn(prefix + ".bias_b", bias_b);
    }
};

// One predictor per (generator layer, frequency branch). A branch that
// carries zero channels at the configured alpha has no predictor and yields
// an empty kernel set.
template <typename T>
struct PredictorWeights {
    int layers = 0;
    int groups = 1;
    std::vector<KernelPredictor<T>> high;  // [layers]; channels==0 marks an absent branch
    std::vector<KernelPredictor<T>> low;

    // layer_channels: total width consumed by each generator layer.
    static PredictorWeights make(const std::vector<int>& layer_channels, double alpha, int groups,
                                 int descriptor_channels, Rng& rng) {
        PredictorWeights w;
        w.layers = static_cast<int>(layer_channels.size());
        w.groups = groups;
        for (int c : layer_channels) {
            auto [ch, cl] = split_alpha(c, alpha);
            w.high.push_back(ch > 0 ? KernelPredictor<T>::make(ch, groups, descriptor_channels, rng)
                                    : KernelPredictor<T>{});
            w.low.push_back(cl > 0 ? KernelPredictor<T>::make(cl, groups, descriptor_channels, rng)
                                   : KernelPredictor<T>{});
        }
        return w;
    }

    template <typename Fn>
    void visit_params(const std::string& prefix, Fn&& fn) {
        for (int l = 0; l < layers; ++l) {
            const std::string lp = prefix + ".layer" + std::to_string(l + 1);
            if (high[static_cast<size_t>(l)].channels > 0) high[static_cast<size_t>(l)].visit_params(lp + ".high", fn);
            if (low[static_cast<size_t>(l)].channels > 0) low[static_cast<size_t>(l)].visit_params(lp + ".low", fn);
        }
    }
};

// Kernels and biases for generator layer `layer` (1-based) and one branch.
template <typename T>
AestheticKernelSet<T> predict_kernels(const AestheticDescriptor<T>& w, int layer, Frequency freq,
                                      const PredictorWeights<T>& weights) {
    if (layer < 1 || layer > weights.layers)
        throw InvalidArgument("predict_kernels: layer must lie in 1.." + std::to_string(weights.layers) + ", got " +
                              std::to_string(layer));
    const auto& bank = (freq == Frequency::High) ? weights.high : weights.low;
    const auto& pred = bank[static_cast<size_t>(layer - 1)];
    if (pred.channels == 0) {
        AestheticKernelSet<T> empty;
        empty.groups = weights.groups;
        const Var<T>& d = (freq == Frequency::High) ? w.w_high : w.w_low;
        const int B = d.value().dim(0);
        empty.spatial = constant(Tensor<T>(Shape{B, 0, 0, 3, 3}));
        empty.pointwise = constant(Tensor<T>(Shape{B, 0, 0, 1, 1}));
        empty.bias = constant(Tensor<T>(Shape{B, 0}));
        return empty;
    }
    return pred.predict((freq == Frequency::High) ? w.w_high : w.w_low);
}

// All kernel sets in generator order: [(1,H),(1,L),(2,H),(2,L),...].
template <typename T>
std::vector<AestheticKernelSet<T>> predict_all(const AestheticDescriptor<T>& w, const PredictorWeights<T>& weights) {
    std::vector<AestheticKernelSet<T>> out;
    out.reserve(static_cast<size_t>(2 * weights.layers));
    for (int l = 1; l <= weights.layers; ++l) {
        out.push_back(predict_kernels(w, l, Frequency::High, weights));
        out.push_back(predict_kernels(w, l, Frequency::Low, weights));
    }
    return out;
}

}  // namespace aesfa
