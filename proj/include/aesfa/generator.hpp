#pragma once

#include <string>
#include <vector>

#include "aesfa/kernel_prediction.hpp"

namespace aesfa {

// Decoder weights: an entry 1x1 octave conv lifting the content code to the
// first layer width, one style-independent 3x3 octave conv per layer (the
// mixing block after each predicted-kernel stage), and per-branch 3x3
// to-RGB convolutions ahead of the frequency merge.
template <typename T>
struct GeneratorWeights {
    double alpha = 0.5;
    int n_g = 1;
    std::vector<int> widths;  // entry output followed by each mix output (totals)

    OctConvParams<T> entry;
    std::vector<OctConvParams<T>> mixes;
    Var<T> rgb_w_high, rgb_b_high, rgb_w_low, rgb_b_low;

    int layer_count() const { return static_cast<int>(mixes.size()); }

    static GeneratorWeights make(int content_channels, double alpha, int n_g, const std::vector<int>& widths,
                                 Rng& rng) {
        if (widths.size() < 2) throw InvalidArgument("generator: need an entry width and at least one layer");
        GeneratorWeights g;
        g.alpha = alpha;
        g.n_g = n_g;
        g.widths = widths;
        auto [in_h, in_l] = split_alpha(content_channels, alpha);
        auto [h, l] = split_alpha(widths[0], alpha);
        g.entry = detail::make_octconv<T>(in_h, in_l, h, l, 1, 1, rng);
        for (size_t i = 1; i < widths.size(); ++i) {
            auto [nh, nl] = split_alpha(widths[i], alpha);
            g.mixes.push_back(detail::make_octconv<T>(h, l, nh, nl, 3, 1, rng));
            h = nh;
            l = nl;
        }
        if (h > 0) {
            g.rgb_w_high = detail::init_conv_weight<T>(Shape{3, h, 3, 3}, rng, 1.0);
            g.rgb_b_high = detail::init_zero_bias<T>(3);
        }
        if (l > 0) {
            g.rgb_w_low = detail::init_conv_weight<T>(Shape{3, l, 3, 3}, rng, 1.0);
            g.rgb_b_low = detail::init_zero_bias<T>(3);
        }
        return g;
    }

    template <typename Fn>
    void visit_params(const std::string& prefix, Fn&& fn) {
        detail::visit_octconv(entry, prefix + ".entry", fn);
        for (size_t i = 0; i < mixes.size(); ++i)
            detail::visit_octconv(mixes[i], prefix + ".mix" + std::to_string(i + 1), fn);
        if (rgb_w_high.defined()) fn(prefix + ".to_rgb.w_high", rgb_w_high);
        if (rgb_b_high.defined()) fn(prefix + ".to_rgb.b_high", rgb_b_high);
        if (rgb_w_low.defined()) fn(prefix + ".to_rgb.w_low", rgb_w_low);
        if (rgb_b_low.defined()) fn(prefix + ".to_rgb.b_low", rgb_b_low);
    }
};

namespace detail {

// Predicted stage of one branch: grouped 3x3 conv with the style's spatial
// kernels, then grouped 1x1 conv with its pointwise kernels plus bias.
template <typename T>
Var<T> predicted_stage(const Var<T>& x, const AestheticKernelSet<T>& k) {
    if (x.value().dim(1) != k.channels())
        throw InvalidArgument("adaoct: kernel set expects " + std::to_string(k.channels()) + " channels, got " +
                              std::to_string(x.value().dim(1)));
    if (x.value().dim(0) != k.batch()) throw InvalidArgument("adaoct: batch mismatch between content and kernels");
    Var<T> empty2;
    Var<T> h = conv2d_per_sample(x, k.spatial, empty2, 1, k.groups);
    return conv2d_per_sample(h, k.pointwise, k.bias, 0, k.groups);
}

}  // namespace detail

// Adaptive octave stage: per-branch predicted-kernel convolutions followed by
// a standard octave conv that exchanges information across frequencies.
template <typename T>
OctavePair<T> adaoct_apply(const OctavePair<T>& x, const AestheticKernelSet<T>& k_high,
                           const AestheticKernelSet<T>& k_low, const OctConvParams<T>& mix) {
    x.validate("adaoct input");
    if (k_high.groups != k_low.groups) throw InvalidArgument("adaoct: group count differs between branches");
    OctavePair<T> styled;
    styled.high = x.high_channels() > 0 ? detail::predicted_stage(x.high, k_high) : x.high;
    styled.low = x.low_channels() > 0 ? detail::predicted_stage(x.low, k_low) : x.low;
    return octconv(styled, mix);
}

// Upsample-and-add frequency merge; the low branch carries the base image,
// the high branch the detail. Output is clamped to [0,1].
template <typename T>
Var<T> merge_frequencies(const Var<T>& rgb_high, const Var<T>& rgb_low) {
    check_4d(rgb_high.value(), "merge_frequencies high");
    check_4d(rgb_low.value(), "merge_frequencies low");
    const auto& hs = rgb_high.value().shape;
    const auto& ls = rgb_low.value().shape;
    if (hs[0] != ls[0] || hs[1] != ls[1] || hs[2] != ls[2] * 2 || hs[3] != ls[3] * 2)
        throw InvalidArgument("merge_frequencies: expected 2:1 spatial ratio, got " + shape_str(hs) + " vs " +
                              shape_str(ls));
    return clamp01(add(rgb_high, upsample2(rgb_low)));
}

// Full decoder: entry projection, layer_count x (predicted stage -> octave
// mix -> x2 upsample), per-branch to-RGB, frequency merge. Output spatial
// dims equal the content image's dims.
template <typename T>
Var<T> generate(const OctavePair<T>& content, const std::vector<AestheticKernelSet<T>>& kernels,
                const GeneratorWeights<T>& weights) {
    content.validate("generator input");
    const int layers = weights.layer_count();
    if (static_cast<int>(kernels.size()) != 2 * layers)
        throw InvalidArgument("generate: expected " + std::to_string(2 * layers) + " kernel sets, got " +
                              std::to_string(kernels.size()));
    for (const auto& k : kernels)
        if (k.channels() > 0 && k.batch() != content.batch())
            throw InvalidArgument("generate: batch mismatch between content and kernels");

    OctavePair<T> x = octconv(content, weights.entry);
    if (x.high_channels() > 0) x.high = leaky_relu(x.high, kLeakySlope<T>);
    if (x.low_channels() > 0) x.low = leaky_relu(x.low, kLeakySlope<T>);
    for (int l = 0; l < layers; ++l) {
        x = adaoct_apply(x, kernels[static_cast<size_t>(2 * l)], kernels[static_cast<size_t>(2 * l + 1)],
                         weights.mixes[static_cast<size_t>(l)]);
        if (x.high_channels() > 0) x.high = leaky_relu(x.high, kLeakySlope<T>);
        if (x.low_channels() > 0) x.low = leaky_relu(x.low, kLeakySlope<T>);
        x.high = upsample2(x.high);
        x.low = upsample2(x.low);
    }

    Var<T> empty_bias;
    Var<T> rgb_high, rgb_low;
    if (x.high_channels() > 0) {
        rgb_high = conv2d(x.high, weights.rgb_w_high, weights.rgb_b_high, 1, 1, 1);
    } else {
        const auto& s = x.high.value().shape;
        rgb_high = constant(Tensor<T>(Shape{s[0], 3, s[2], s[3]}));
    }
    if (x.low_channels() > 0) {
        rgb_low = conv2d(x.low, weights.rgb_w_low, weights.rgb_b_low, 1, 1, 1);
    } else {
        const auto& s = x.low.value().shape;
        rgb_low = constant(Tensor<T>(Shape{s[0], 3, s[2], s[3]}));
    }
    return merge_frequencies(rgb_high, rgb_low);
}

}  // namespace aesfa
