#include <doctest.h>

#include "aesfa/model.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

using namespace aesfa;

namespace {

AestheticKernelSet<float> random_kernel_set(int batch, int channels, int groups, uint64_t seed, bool zero = false) {
    AestheticKernelSet<float> k;
    k.groups = groups;
    const Shape sp{batch, channels, channels / groups, 3, 3};
    const Shape pw{batch, channels, channels / groups, 1, 1};
    const Shape bs{batch, channels};
    k.spatial = constant(zero ? Tensor<float>(sp) : fixtures::random_tensor<float>(sp, seed, -0.3f, 0.3f));
    k.pointwise = constant(zero ? Tensor<float>(pw) : fixtures::random_tensor<float>(pw, seed + 1, -0.3f, 0.3f));
    k.bias = constant(zero ? Tensor<float>(bs) : fixtures::random_tensor<float>(bs, seed + 2, -0.1f, 0.1f));
    return k;
}

OctavePair<float> random_pair(int batch, int ch, int cl, int h, int w, uint64_t seed) {
    OctavePair<float> p;
    p.high = constant(fixtures::random_tensor<float>(Shape{batch, ch, h, w}, seed));
    p.low = constant(fixtures::random_tensor<float>(Shape{batch, cl, h / 2, w / 2}, seed + 1));
    return p;
}

}  // namespace

TEST_CASE("adaoct with zero kernels, biases, and mix yields zero output") {
    auto x = random_pair(1, 8, 8, 8, 8, 1);
    auto kh = random_kernel_set(1, 8, 2, 2, true);
    auto kl = random_kernel_set(1, 8, 2, 3, true);
    OctConvParams<float> mix;
    mix.pad = 1;
    mix.w_hh = constant(Tensor<float>(Shape{4, 8, 3, 3}));
    mix.w_lh = constant(Tensor<float>(Shape{4, 8, 3, 3}));
    mix.w_ll = constant(Tensor<float>(Shape{4, 8, 3, 3}));
    mix.w_hl = constant(Tensor<float>(Shape{4, 8, 3, 3}));
    OctavePair<float> y = adaoct_apply(x, kh, kl, mix);
    for (float v : y.high.value().data) CHECK(v == 0.0f);
    for (float v : y.low.value().data) CHECK(v == 0.0f);
}

TEST_CASE("predicted stage matches the block-diagonal dense oracle") {
    // Grouped spatial conv then grouped pointwise conv with bias, replayed
    // densely with block-diagonal layouts.
    for (uint64_t seed = 0; seed < 4; ++seed) {
        const int C = 8, g = 4;
        auto x = fixtures::random_tensor<float>(Shape{1, C, 8, 8}, seed * 17 + 1);
        auto kh = random_kernel_set(1, C, g, seed * 17 + 2);

        Tensor<float> ws(Shape{C, C / g, 3, 3});
        std::copy_n(kh.spatial.value().ptr(), ws.numel(), ws.ptr());
        Tensor<float> wp(Shape{C, C / g, 1, 1});
        std::copy_n(kh.pointwise.value().ptr(), wp.numel(), wp.ptr());
        Tensor<float> bias(Shape{C});
        std::copy_n(kh.bias.value().ptr(), C, bias.ptr());

        Tensor<float> stage1 = oracle::conv2d<float>(x, oracle::block_diagonal_weights(ws, g, C), nullptr, 1, 1, 1);
        Tensor<float> want = oracle::conv2d<float>(stage1, oracle::block_diagonal_weights(wp, g, C), &bias, 1, 0, 1);

        Var<float> h = conv2d_per_sample(constant(x), kh.spatial, Var<float>(), 1, g);
        Var<float> got = conv2d_per_sample(h, kh.pointwise, kh.bias, 0, g);
        CHECK(oracle::max_rel_err(got.value(), want) < 1e-5);
    }
}

TEST_CASE("layer-1 stage geometry: 256-channel branches mix down and upsample") {
    Rng rng(hash_seed({77}));
    auto mix = detail::make_octconv<float>(256, 256, 128, 128, 3, 1, rng);
    auto x = random_pair(1, 256, 256, 32, 32, 5);
    auto kh = random_kernel_set(1, 256, 8, 6);
    auto kl = random_kernel_set(1, 256, 8, 7);
    OctavePair<float> y = adaoct_apply(x, kh, kl, mix);
    CHECK(y.high.shape() == Shape{1, 128, 32, 32});
    CHECK(y.low.shape() == Shape{1, 128, 16, 16});
    Var<float> up = upsample2(y.high);
    CHECK(up.shape() == Shape{1, 128, 64, 64});
}

TEST_CASE("adaoct validates groups and channels") {
    auto x = random_pair(1, 8, 8, 8, 8, 8);
    auto kh = random_kernel_set(1, 8, 2, 9);
    auto kl = random_kernel_set(1, 8, 4, 10);  // group mismatch
    OctConvParams<float> mix;
    mix.pad = 1;
    mix.w_hh = constant(fixtures::random_tensor<float>(Shape{4, 8, 3, 3}, 11));
    mix.w_lh = constant(fixtures::random_tensor<float>(Shape{4, 8, 3, 3}, 12));
    mix.w_ll = constant(fixtures::random_tensor<float>(Shape{4, 8, 3, 3}, 13));
    mix.w_hl = constant(fixtures::random_tensor<float>(Shape{4, 8, 3, 3}, 14));
    CHECK_THROWS_AS((void)adaoct_apply(x, kh, kl, mix), InvalidArgument);

    auto k_wrong = random_kernel_set(1, 4, 2, 15);  // channel mismatch
    CHECK_THROWS_AS((void)adaoct_apply(x, k_wrong, k_wrong, mix), InvalidArgument);
}

TEST_CASE("merge_frequencies: degenerate cases and elementwise oracle") {
    Tensor<float> high(Shape{1, 3, 8, 8}, 0.4f);
    Tensor<float> low0(Shape{1, 3, 4, 4});
    Var<float> merged = merge_frequencies(constant(high), constant(low0));
    for (float v : merged.value().data) CHECK(v == doctest::Approx(0.4f));

    Tensor<float> low(Shape{1, 3, 4, 4}, 0.35f);
    Var<float> merged2 = merge_frequencies(constant(high), constant(low));
    for (float v : merged2.value().data) CHECK(v == doctest::Approx(0.75f));

    auto rh = fixtures::random_tensor<float>(Shape{1, 3, 8, 8}, 16, 0.0f, 0.5f);
    auto rl = fixtures::random_tensor<float>(Shape{1, 3, 4, 4}, 17, 0.0f, 0.5f);
    Var<float> merged3 = merge_frequencies(constant(rh), constant(rl));
    Tensor<float> up = oracle::nearest_upsample2(rl);
    for (size_t i = 0; i < up.data.size(); ++i) {
        const float want = std::min(1.0f, std::max(0.0f, rh.data[i] + up.data[i]));
        CHECK(std::fabs(merged3.value().data[i] - want) < 1e-6);
    }

    Tensor<float> bad(Shape{1, 3, 3, 3});
    CHECK_THROWS_AS((void)merge_frequencies(constant(high), constant(bad)), InvalidArgument);
}

TEST_CASE("full model: output matches content dims and repeats bitwise") {
    auto model = AesfaModel<float>::make(ModelConfig(), 0);
    auto content = fixtures::synthetic_image<float>(256, 256, 20);
    auto style = fixtures::synthetic_image<float>(256, 256, 21);
    Tensor<float> out = model.stylize(content, style);
    CHECK(out.shape == Shape{1, 3, 256, 256});
    CHECK(out.all_finite());
    for (float v : out.data) {
        CHECK(v >= 0.0f);
        CHECK(v <= 1.0f);
    }
    Tensor<float> out2 = model.stylize(content, style);
    CHECK(out.data == out2.data);
}

TEST_CASE("blending with the same style equals plain stylization bitwise") {
    auto model = AesfaModel<float>::make(ModelConfig::micro(), 3);
    auto content = fixtures::synthetic_image<float>(16, 16, 22);
    auto style = fixtures::synthetic_image<float>(16, 16, 23);
    Tensor<float> plain = model.stylize(content, style);
    Tensor<float> blended = model.stylize_blend(content, style, style);
    CHECK(plain.data == blended.data);
}

TEST_CASE("two different styles move at least 1% of pixels by more than 1/255") {
    auto model = AesfaModel<float>::make(ModelConfig(), 4);
    auto content = fixtures::synthetic_image<float>(64, 64, 24);
    auto s1 = fixtures::synthetic_image<float>(64, 64, 25);
    auto s2 = fixtures::synthetic_image<float>(64, 64, 26);
    Tensor<float> o1 = model.stylize(content, s1);
    Tensor<float> o2 = model.stylize(content, s2);
    int64_t moved = 0;
    for (size_t i = 0; i < o1.data.size(); ++i)
        if (std::fabs(o1.data[i] - o2.data[i]) > 1.0f / 255.0f) ++moved;
    CHECK(moved * 100 >= o1.numel());
}

TEST_CASE("generate rejects mismatched kernel batch") {
    auto model = AesfaModel<float>::make(ModelConfig::micro(), 5);
    GradGuard guard(false);
    auto content = fixtures::image_batch<float>(2, 16, 16, 27);
    auto style = fixtures::synthetic_image<float>(16, 16, 28);
    OctavePair<float> code = encode_content(model.content_encoder, constant(content));
    auto d = encode_style(model.aesthetic_encoder, constant(style));  // batch 1
    auto kernels = predict_all(d, model.predictors);
    CHECK_THROWS_AS((void)generate(code, kernels, model.generator), InvalidArgument);
}
