#pragma once

#include <array>
#include <string>
#include <vector>

#include "aesfa/encoders.hpp"
#include "aesfa/nn_ops.hpp"

namespace aesfa {

// Frozen four-stage feature pyramid used for the perceptual losses and for
// negative selection. Production weights follow the VGG-19 layout up to its
// fourth stage head; tests use a seeded surrogate with the same stage
// geometry (each stage at half the previous stage's resolution). ReLU
// follows every convolution; stages 2..4 start with a 2x2 max pool.
template <typename T>
struct PerceptualExtractor {
    struct Item {
        bool is_pool = false;
        std::string name;  // convs only; used as the checkpoint key
        Var<T> w, b;
    };

    std::vector<std::vector<Item>> stages;
    bool normalize = false;
    std::array<T, 3> mean{T(0), T(0), T(0)};
    std::array<T, 3> stdev{T(1), T(1), T(1)};

    int stage_count() const { return static_cast<int>(stages.size()); }

    // Stage layout of VGG-19 up to conv4_1; weights come from a checkpoint
    // container (see the conversion note in the README).
    static PerceptualExtractor vgg19_structure() {
        PerceptualExtractor e;
        e.normalize = true;
        e.mean = {T(0.485), T(0.456), T(0.406)};
        e.stdev = {T(0.229), T(0.224), T(0.225)};
        auto conv = [](const std::string& name, int in, int out) {
            Item it;
            it.name = name;
            it.w = Var<T>(Tensor<T>(Shape{out, in, 3, 3}), false);
            it.b = Var<T>(Tensor<T>(Shape{out}), false);
            return it;
        };
        Item pool;
        pool.is_pool = true;
        e.stages = {
            {conv("conv1_1", 3, 64)},
            {conv("conv1_2", 64, 64), pool, conv("conv2_1", 64, 128)},
            {conv("conv2_2", 128, 128), pool, conv("conv3_1", 128, 256)},
            {conv("conv3_2", 256, 256), conv("conv3_3", 256, 256), conv("conv3_4", 256, 256), pool,
             conv("conv4_1", 256, 512)},
        };
        return e;
    }

    static PerceptualExtractor surrogate(uint64_t seed, const std::vector<int>& widths = {8, 16, 24, 32}) {
        if (widths.size() != 4) throw InvalidArgument("surrogate extractor: need 4 stage widths");
        PerceptualExtractor e;
        Rng rng(hash_seed({seed, 0x766767ULL}));
        auto conv = [&rng](const std::string& name, int in, int out) {
            Item it;
            it.name = name;
            const double bound = 1.0 / std::sqrt(static_cast<double>(in) * 9.0);
            it.w = Var<T>(Tensor<T>::random_uniform(Shape{out, in, 3, 3}, rng, static_cast<T>(-bound),
                                                    static_cast<T>(bound)),
                          false);
            it.b = Var<T>(Tensor<T>::random_uniform(Shape{out}, rng, static_cast<T>(-0.05), static_cast<T>(0.05)),
                          false);
            return it;
        };
        Item pool;
        pool.is_pool = true;
        e.stages = {{conv("s1", 3, widths[0])},
                    {pool, conv("s2", widths[0], widths[1])},
                    {pool, conv("s3", widths[1], widths[2])},
                    {pool, conv("s4", widths[2], widths[3])}};
        return e;
    }

    // f_1..f_upto, post-ReLU.
    std::vector<Var<T>> features(const Var<T>& image, int upto = 4) const {
        check_4d(image.value(), "perceptual input");
        if (upto < 1 || upto > stage_count()) throw InvalidArgument("perceptual features: bad stage index");
        Var<T> x = image;
        if (normalize) {
            Tensor<T> n = x.value();
            const int N = n.dim(0), C = n.dim(1), H = n.dim(2), W = n.dim(3);
            if (C != 3) throw InvalidArgument("perceptual input must be RGB");
            for (int nn = 0; nn < N; ++nn)
                for (int c = 0; c < 3; ++c) {
                    T* p = n.ptr() + (static_cast<int64_t>(nn) * C + c) * H * W;
                    for (int64_t i = 0; i < static_cast<int64_t>(H) * W; ++i) p[i] = (p[i] - mean[c]) / stdev[c];
                }
            // The normalization is affine with constant coefficients, so the
            // gradient w.r.t. the image is a per-channel scale.
            auto xn = x.node();
            auto stdv = stdev;
            x = Var<T>::from_op(std::move(n), {x}, [xn, stdv, C, H, W, N](VarNode<T>& self) {
                if (!xn->requires_grad) return;
                Tensor<T>& g = xn->ensure_grad();
                for (int nn = 0; nn < N; ++nn)
                    for (int c = 0; c < 3; ++c) {
                        T* gp = g.ptr() + (static_cast<int64_t>(nn) * C + c) * H * W;
                        const T* sp = self.grad.ptr() + (static_cast<int64_t>(nn) * C + c) * H * W;
                        for (int64_t i = 0; i < static_cast<int64_t>(H) * W; ++i) gp[i] += sp[i] / stdv[c];
                    }
            });
        }
        std::vector<Var<T>> feats;
        feats.reserve(static_cast<size_t>(upto));
        for (int s = 0; s < upto; ++s) {
            for (const auto& item : stages[static_cast<size_t>(s)]) {
                if (item.is_pool) {
                    x = max_pool2(x);
                } else {
                    x = conv2d(x, item.w, item.b, 1, 1, 1);
                    x = relu(x);
                }
            }
            feats.push_back(x);
        }
        return feats;
    }

    std::vector<Var<T>> features(const Tensor<T>& image, int upto = 4) const {
        return features(constant(image), upto);
    }

    template <typename Fn>
    void visit_params(const std::string& prefix, Fn&& fn) {
        for (auto& stage : stages)
            for (auto& item : stage)
                if (!item.is_pool) {
                    fn(prefix + "." + item.name + ".weight", item.w);
                    fn(prefix + "." + item.name + ".bias", item.b);
                }
    }
};

}  // namespace aesfa
