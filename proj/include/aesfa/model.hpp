#pragma once

#include <string>
#include <utility>
#include <vector>

#include "aesfa/generator.hpp"
#include "aesfa/image_ops.hpp"

#include <json.hpp>

namespace aesfa {

// Architecture hyperparameters. Widths are total channel counts that the
// alpha split divides across the two frequency branches; every branch width
// must be a multiple of n_g so the predicted grouped convolutions are well
// formed.
struct ModelConfig {
    double alpha = 0.5;
    int n_g = 8;
    std::vector<int> encoder_widths{64, 128, 256, 256};
    std::vector<int> generator_widths{512, 256, 128, 64};
    int descriptor_channels = 256;
    int min_style_hw = 48;
    int image_channels = 3;

    int encoder_blocks() const { return static_cast<int>(encoder_widths.size()) - 1; }
    int generator_layers() const { return static_cast<int>(generator_widths.size()) - 1; }
    int spatial_divisor() const { return 1 << (encoder_blocks() + 1); }

    void validate() const {
        if (!(alpha >= 0.0 && alpha <= 1.0)) throw InvalidArgument("model config: alpha must lie in [0,1]");
        if (n_g < 1) throw InvalidArgument("model config: n_g must be positive");
        if (encoder_widths.size() < 2) throw InvalidArgument("model config: encoder needs stem + blocks");
        if (generator_widths.size() < 2) throw InvalidArgument("model config: generator needs entry + layers");
        if (generator_layers() != encoder_blocks())
            throw InvalidArgument("model config: generator layer count must equal encoder block count");
        for (size_t i = 0; i + 1 < generator_widths.size(); ++i) {
            auto [h, l] = split_alpha(generator_widths[i], alpha);
            if ((h > 0 && h % n_g != 0) || (l > 0 && l % n_g != 0))
                throw InvalidArgument("model config: n_g must divide every generator branch width (layer " +
                                      std::to_string(i + 1) + " splits to " + std::to_string(h) + "/" +
                                      std::to_string(l) + ")");
        }
        for (int w : encoder_widths)
            if (w < 1) throw InvalidArgument("model config: encoder widths must be positive");
        for (int w : generator_widths)
            if (w < 1) throw InvalidArgument("model config: generator widths must be positive");
        if (descriptor_channels < 1) throw InvalidArgument("model config: descriptor channels must be positive");
    }

    // Small configuration for double-precision gradient checks: 8x8 inputs
    // flow end-to-end and the parameter count stays in the low thousands.
    static ModelConfig micro() {
        ModelConfig c;
        c.alpha = 0.5;
        c.n_g = 2;
        c.encoder_widths = {4, 4, 4};
        c.generator_widths = {8, 8, 4};
        c.descriptor_channels = 4;
        c.min_style_hw = 8;
        return c;
    }

    nlohmann::json to_json() const {
        return nlohmann::json{{"alpha", alpha},
                              {"n_g", n_g},
                              {"encoder_widths", encoder_widths},
                              {"generator_widths", generator_widths},
                              {"descriptor_channels", descriptor_channels},
                              {"min_style_hw", min_style_hw},
                              {"image_channels", image_channels}};
    }

    static ModelConfig from_json(const nlohmann::json& j) {
        ModelConfig c;
        c.alpha = j.at("alpha").get<double>();
        c.n_g = j.at("n_g").get<int>();
        c.encoder_widths = j.at("encoder_widths").get<std::vector<int>>();
        c.generator_widths = j.at("generator_widths").get<std::vector<int>>();
        c.descriptor_channels = j.at("descriptor_channels").get<int>();
        c.min_style_hw = j.at("min_style_hw").get<int>();
        c.image_channels = j.at("image_channels").get<int>();
        c.validate();
        return c;
    }
};

// The full stylization network: content encoder, aesthetic encoder with
// descriptor head, kernel predictors, and the generator. The two encoders
// share an architecture but never weights.
template <typename T>
struct AesfaModel {
    ModelConfig cfg;
    EncoderWeights<T> content_encoder;
    EncoderWeights<T> aesthetic_encoder;
    PredictorWeights<T> predictors;
    GeneratorWeights<T> generator;

    static AesfaModel make(const ModelConfig& cfg, uint64_t seed) {
        cfg.validate();
        AesfaModel m;
        m.cfg = cfg;
        Rng rng(hash_seed({seed, 0x6d6f64656cULL}));
        m.content_encoder = EncoderWeights<T>::make(cfg.alpha, cfg.image_channels, cfg.encoder_widths, false, 0,
                                                    cfg.min_style_hw, rng);
        m.aesthetic_encoder = EncoderWeights<T>::make(cfg.alpha, cfg.image_channels, cfg.encoder_widths, true,
                                                      cfg.descriptor_channels, cfg.min_style_hw, rng);
        std::vector<int> layer_widths(cfg.generator_widths.begin(), cfg.generator_widths.end() - 1);
        m.predictors = PredictorWeights<T>::make(layer_widths, cfg.alpha, cfg.n_g, cfg.descriptor_channels, rng);
        m.generator = GeneratorWeights<T>::make(cfg.encoder_widths.back(), cfg.alpha, cfg.n_g, cfg.generator_widths,
                                                rng);
        return m;
    }

    // Stable enumeration used by the optimizer and the checkpoint writer.
    std::vector<std::pair<std::string, Var<T>*>> named_parameters() {
        std::vector<std::pair<std::string, Var<T>*>> out;
        auto collect = [&out](const std::string& name, Var<T>& v) { out.emplace_back(name, &v); };
        content_encoder.visit_params("content_encoder", collect);
        aesthetic_encoder.visit_params("aesthetic_encoder", collect);
        predictors.visit_params("predictor", collect);
        generator.visit_params("generator", collect);
        return out;
    }

    int64_t parameter_count() {
        int64_t n = 0;
        for (auto& [name, v] : named_parameters()) n += v->numel();
        return n;
    }

    // Forward pass with separate descriptors per frequency so style blending
    // reuses the production path; plain stylization passes the same image
    // twice and is bitwise identical by construction.
    Var<T> forward(const Var<T>& content, const Var<T>& style_for_high, const Var<T>& style_for_low) const {
        OctavePair<T> code = encode_content(content_encoder, content);
        AestheticDescriptor<T> d;
        if (style_for_high.node() == style_for_low.node()) {
            d = encode_style(aesthetic_encoder, style_for_high);
        } else {
            d.w_high = encode_style(aesthetic_encoder, style_for_high).w_high;
            d.w_low = encode_style(aesthetic_encoder, style_for_low).w_low;
        }
        auto kernels = predict_all(d, predictors);
        return generate(code, kernels, generator);
    }

    Tensor<T> stylize(const Tensor<T>& content, const Tensor<T>& style) const {
        GradGuard guard(false);
        Var<T> c = constant(content);
        Var<T> s = constant(style);
        return forward(c, s, s).value();
    }

    Tensor<T> stylize_blend(const Tensor<T>& content, const Tensor<T>& style_high, const Tensor<T>& style_low) const {
        GradGuard guard(false);
        return forward(constant(content), constant(style_high), constant(style_low)).value();
    }

    // Arbitrary input dims: reflect-pads the content to the encoder's divisor
    // (and styles additionally up to the style-size minimum), runs the
    // network, and crops back to the content's dims.
    Tensor<T> stylize_any(const Tensor<T>& content, const Tensor<T>& style_high, const Tensor<T>& style_low) const {
        const int d = cfg.spatial_divisor();
        const int H = content.dim(2), W = content.dim(3);
        Tensor<T> padded = reflect_pad_to_multiple(content, d);
        auto pad_style = [&](const Tensor<T>& s) {
            Tensor<T> p = reflect_pad_to_multiple(s, d);
            if (p.dim(2) < cfg.min_style_hw || p.dim(3) < cfg.min_style_hw)
                p = reflect_pad_to_multiple(p, cfg.min_style_hw);
            return p;
        };
        Tensor<T> out = stylize_blend(padded, pad_style(style_high), pad_style(style_low));
        return crop_to(out, H, W);
    }
};

}  // namespace aesfa
