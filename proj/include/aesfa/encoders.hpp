#pragma once

#include <string>
#include <vector>

#include "aesfa/freq_ops.hpp"

namespace aesfa {

template <typename T>
constexpr T kLeakySlope = T(0.2);

// Per-frequency style code produced by the aesthetic encoder: one
// descriptor_channels x 3 x 3 map per branch (batch leading).
template <typename T>
struct AestheticDescriptor {
    Var<T> w_high;
    Var<T> w_low;
};

namespace detail {

// Gain that keeps signal variance steady through a conv followed by the
// leaky nonlinearity.
inline double leaky_gain() { return std::sqrt(2.0 / (1.0 + 0.2 * 0.2)); }

// Fan-in-scaled uniform: U(-g*sqrt(3/fan_in), +g*sqrt(3/fan_in)).
template <typename T>
Var<T> init_conv_weight(Shape s, Rng& rng, double gain = leaky_gain()) {
    const int fan_in = s[1] * s[2] * s[3];
    const double bound = fan_in > 0 ? gain * std::sqrt(3.0 / static_cast<double>(fan_in)) : 0.0;
    return Var<T>(Tensor<T>::random_uniform(std::move(s), rng, static_cast<T>(-bound), static_cast<T>(bound)), true);
}

template <typename T>
Var<T> init_linear_weight(Shape s, Rng& rng, double gain = 1.0) {
    const int fan_in = s[1];
    const double bound = fan_in > 0 ? gain * std::sqrt(3.0 / static_cast<double>(fan_in)) : 0.0;
    return Var<T>(Tensor<T>::random_uniform(std::move(s), rng, static_cast<T>(-bound), static_cast<T>(bound)), true);
}

template <typename T>
Var<T> init_zero_bias(int n) {
    return Var<T>(Tensor<T>::zeros(Shape{n}), true);
}

// Builds a four-path octave conv for (in_h,in_l) -> (out_h,out_l) channels.
template <typename T>
OctConvParams<T> make_octconv(int in_h, int in_l, int out_h, int out_l, int ksize, int stride, Rng& rng) {
    OctConvParams<T> p;
    p.stride = stride;
    p.pad = (ksize - 1) / 2;
    if (in_h > 0 && out_h > 0) p.w_hh = init_conv_weight<T>(Shape{out_h, in_h, ksize, ksize}, rng);
    if (in_l > 0 && out_h > 0) p.w_lh = init_conv_weight<T>(Shape{out_h, in_l, ksize, ksize}, rng);
    if (in_l > 0 && out_l > 0) p.w_ll = init_conv_weight<T>(Shape{out_l, in_l, ksize, ksize}, rng);
    if (in_h > 0 && out_l > 0) p.w_hl = init_conv_weight<T>(Shape{out_l, in_h, ksize, ksize}, rng);
    if (out_h > 0) p.b_h = init_zero_bias<T>(out_h);
    if (out_l > 0) p.b_l = init_zero_bias<T>(out_l);
    return p;
}

template <typename T, typename Fn>
void visit_octconv(OctConvParams<T>& p, const std::string& prefix, Fn&& fn) {
    if (p.w_hh.defined()) fn(prefix + ".w_hh", p.w_hh);
    if (p.w_lh.defined()) fn(prefix + ".w_lh", p.w_lh);
    if (p.w_ll.defined()) fn(prefix + ".w_ll", p.w_ll);
    if (p.w_hl.defined()) fn(prefix + ".w_hl", p.w_hl);
    if (p.b_h.defined()) fn(prefix + ".b_h", p.b_h);
    if (p.b_l.defined()) fn(prefix + ".b_l", p.b_l);
}

}  // namespace detail

// Octave-convolution backbone shared by the content and aesthetic encoders:
// a 3x3 stem followed by depthwise-separable blocks (3x3 depthwise per
// branch, stride 2, then a 1x1 octave conv for channel/frequency mixing).
// The aesthetic variant adds a descriptor head per branch.
template <typename T>
struct EncoderWeights {
    struct Block {
        Var<T> dw_high, dw_low;  // [C_b, 1, 3, 3]
        OctConvParams<T> pw;
    };

    double alpha = 0.5;
    int in_channels = 3;
    std::vector<int> widths;  // stem output followed by each block output (totals)
    int min_style_hw = 48;

    OctConvParams<T> stem;
    std::vector<Block> blocks;

    bool has_head = false;
    int descriptor_channels = 0;
    Var<T> head_w_high, head_b_high, head_w_low, head_b_low;

    int block_count() const { return static_cast<int>(blocks.size()); }
    // Every block halves both branches once; the stem already puts the low
    // branch at half resolution.
    int spatial_divisor() const { return 1 << (block_count() + 1); }

    static EncoderWeights make(double alpha, int in_channels, const std::vector<int>& widths, bool aesthetic,
                               int descriptor_channels, int min_style_hw, Rng& rng) {
        if (widths.size() < 2) throw InvalidArgument("encoder: need a stem width and at least one block");
        EncoderWeights w;
        w.alpha = alpha;
        w.in_channels = in_channels;
        w.widths = widths;
        w.min_style_hw = min_style_hw;

        auto [h0, l0] = split_alpha(widths[0], alpha);
        w.stem = detail::make_octconv<T>(in_channels, 0, h0, l0, 3, 1, rng);
        int ch = h0, cl = l0;
        for (size_t i = 1; i < widths.size(); ++i) {
            Block b;
            if (ch > 0) b.dw_high = detail::init_conv_weight<T>(Shape{ch, 1, 3, 3}, rng);
            if (cl > 0) b.dw_low = detail::init_conv_weight<T>(Shape{cl, 1, 3, 3}, rng);
            auto [nh, nl] = split_alpha(widths[i], alpha);
            b.pw = detail::make_octconv<T>(ch, cl, nh, nl, 1, 1, rng);
            w.blocks.push_back(std::move(b));
            ch = nh;
            cl = nl;
        }
        if (aesthetic) {
            w.has_head = true;
            w.descriptor_channels = descriptor_channels;
            if (ch > 0) {
                w.head_w_high = detail::init_conv_weight<T>(Shape{descriptor_channels, ch, 1, 1}, rng, 1.0);
                w.head_b_high = detail::init_zero_bias<T>(descriptor_channels);
            }
            if (cl > 0) {
                w.head_w_low = detail::init_conv_weight<T>(Shape{descriptor_channels, cl, 1, 1}, rng, 1.0);
                w.head_b_low = detail::init_zero_bias<T>(descriptor_channels);
            }
        }
        return w;
    }

    template <typename Fn>
    void visit_params(const std::string& prefix, Fn&& fn) {
        detail::visit_octconv(stem, prefix + ".stem", fn);
        for (size_t i = 0; i < blocks.size(); ++i) {
            const std::string bp = prefix + ".block" + std::to_string(i + 1);
            if (blocks[i].dw_high.defined()) fn(bp + ".dw_high", blocks[i].dw_high);
            if (blocks[i].dw_low.defined()) fn(bp + ".dw_low", blocks[i].dw_low);
            detail::visit_octconv(blocks[i].pw, bp + ".pw", fn);
        }
        if (has_head) {
            if (head_w_high.defined()) fn(prefix + ".head.w_high", head_w_high);
            if (head_b_high.defined()) fn(prefix + ".head.b_high", head_b_high);
            if (head_w_low.defined()) fn(prefix + ".head.w_low", head_w_low);
            if (head_b_low.defined()) fn(prefix + ".head.b_low", head_b_low);
        }
    }
};

namespace detail {

template <typename T>
void check_encoder_input(const EncoderWeights<T>& w, const Var<T>& image) {
    check_4d(image.value(), "encoder input");
    if (image.value().dim(1) != w.in_channels)
        throw InvalidArgument("encoder: expected " + std::to_string(w.in_channels) + "-channel input, got " +
                              shape_str(image.value().shape));
    const int d = w.spatial_divisor();
    if (image.value().dim(2) % d != 0 || image.value().dim(3) % d != 0)
        throw InvalidArgument("encoder: input dims must be divisible by " + std::to_string(d) + ", got " +
                              shape_str(image.value().shape));
}

// Depthwise 3x3 per branch (stride 2), then the 1x1 octave mixing conv.
template <typename T>
OctavePair<T> block_forward(const typename EncoderWeights<T>::Block& b, const OctavePair<T>& x) {
    Var<T> empty_bias;
    OctavePair<T> mid;
    if (x.high_channels() > 0)
        mid.high = conv2d(x.high, b.dw_high, empty_bias, 2, 1, x.high_channels());
    else {
        const auto& s = x.high.value().shape;
        mid.high = constant(Tensor<T>(Shape{s[0], 0, s[2] / 2, s[3] / 2}));
    }
    if (x.low_channels() > 0)
        mid.low = conv2d(x.low, b.dw_low, empty_bias, 2, 1, x.low_channels());
    else {
        const auto& s = x.low.value().shape;
        mid.low = constant(Tensor<T>(Shape{s[0], 0, s[2] / 2, s[3] / 2}));
    }
    return octconv(mid, b.pw);
}

}  // namespace detail

// Activations after the stem and after every block, post-nonlinearity,
// in forward order.
template <typename T>
std::vector<OctavePair<T>> encoder_features(const EncoderWeights<T>& w, const Var<T>& image) {
    detail::check_encoder_input(w, image);
    std::vector<OctavePair<T>> feats;
    feats.reserve(w.blocks.size() + 1);
    OctavePair<T> x = image_as_octave(image);
    x = octconv(x, w.stem);
    x.high = leaky_relu(x.high, kLeakySlope<T>);
    if (x.low_channels() > 0) x.low = leaky_relu(x.low, kLeakySlope<T>);
    feats.push_back(x);
    for (const auto& b : w.blocks) {
        x = detail::block_forward<T>(b, x);
        if (x.high_channels() > 0) x.high = leaky_relu(x.high, kLeakySlope<T>);
        if (x.low_channels() > 0) x.low = leaky_relu(x.low, kLeakySlope<T>);
        feats.push_back(x);
    }
    return feats;
}

// Frequency-decomposed content code: the last block's activations.
template <typename T>
OctavePair<T> encode_content(const EncoderWeights<T>& w, const Var<T>& image) {
    auto feats = encoder_features(w, image);
    return feats.back();
}

// Style code: adaptive 3x3 pooling of each final branch followed by a 1x1
// projection to descriptor_channels, giving a fixed-size code for any
// admissible style resolution.
template <typename T>
AestheticDescriptor<T> encode_style(const EncoderWeights<T>& w, const Var<T>& image) {
    if (!w.has_head) throw InvalidArgument("encode_style: encoder has no descriptor head");
    detail::check_encoder_input(w, image);
    if (image.value().dim(2) < w.min_style_hw || image.value().dim(3) < w.min_style_hw)
        throw InvalidArgument("encode_style: input must be at least " + std::to_string(w.min_style_hw) +
                              " pixels per side, got " + shape_str(image.value().shape));
    OctavePair<T> x = encode_content(w, image);
    Var<T> empty_bias;
    AestheticDescriptor<T> d;
    if (x.high_channels() > 0) {
        Var<T> pooled = adaptive_avg_pool(x.high, 3, 3);
        d.w_high = conv2d(pooled, w.head_w_high, w.head_b_high, 1, 0, 1);
    } else {
        d.w_high = constant(Tensor<T>(Shape{x.batch(), w.descriptor_channels, 3, 3}));
    }
    if (x.low_channels() > 0) {
        Var<T> pooled = adaptive_avg_pool(x.low, 3, 3);
        d.w_low = conv2d(pooled, w.head_w_low, w.head_b_low, 1, 0, 1);
    } else {
        d.w_low = constant(Tensor<T>(Shape{x.batch(), w.descriptor_channels, 3, 3}));
    }
    return d;
}

}  // namespace aesfa
