#pragma once

#include <algorithm>
#include <numeric>
#include <vector>

#include "aesfa/encoders.hpp"
#include "aesfa/perceptual.hpp"

namespace aesfa {

template <typename T>
struct LossWeights {
    T lambda_c = T(1);
    T lambda_s = T(10);
    T lambda_aes = T(5);
};

template <typename T>
struct ContrastiveConfig {
    int k = 1;
    const PerceptualExtractor<T>* selection_extractor = nullptr;
};

inline constexpr double kDenominatorEpsilon = 1e-8;

// ---------------------------------------------------------------------------
// Perceptual content / style losses.
// ---------------------------------------------------------------------------

// ||f_3(out) - f_3(content)||_2.
template <typename T>
Var<T> content_loss(const Var<T>& out, const Var<T>& content, const PerceptualExtractor<T>& ext) {
    if (!same_shape(out.value(), content.value())) throw InvalidArgument("content_loss: image dims differ");
    Var<T> fo = ext.features(out, 3).back();
    Var<T> fc = ext.features(content, 3).back();
    return l2_distance(fo, fc);
}

// Sum over stages of the distance between out's features and their
// distribution-matched version against the style's features.
template <typename T>
Var<T> style_distance_from_features(const std::vector<Var<T>>& f_out, const std::vector<Var<T>>& f_style) {
    if (f_out.size() != f_style.size()) throw InvalidArgument("style distance: stage count mismatch");
    Var<T> total;
    for (size_t n = 0; n < f_out.size(); ++n) {
        Var<T> matched = efdm_match(f_out[n], f_style[n]);
        Var<T> term = l2_distance(f_out[n], matched);
        total = total.defined() ? add(total, term) : term;
    }
    return total;
}

template <typename T>
Var<T> style_loss(const Var<T>& out, const Var<T>& style, const PerceptualExtractor<T>& ext) {
    return style_distance_from_features(ext.features(out, 4), ext.features(style, 4));
}

template <typename T>
T content_loss(const Tensor<T>& out, const Tensor<T>& content, const PerceptualExtractor<T>& ext) {
    GradGuard guard(false);
    return scalar_value(content_loss(constant(out), constant(content), ext));
}

template <typename T>
T style_loss(const Tensor<T>& out, const Tensor<T>& style, const PerceptualExtractor<T>& ext) {
    GradGuard guard(false);
    return scalar_value(style_loss(constant(out), constant(style), ext));
}

// ---------------------------------------------------------------------------
// k-nearest negative selection. The candidate pool for sample i is every
// style j != i; the distance is the style perceptual loss between output i
// and style j under the selection extractor. Ties break toward the lower
// index; the stable sort keeps candidates in index order.
// ---------------------------------------------------------------------------

template <typename T>
std::vector<std::vector<int>> select_negatives(const Tensor<T>& outputs, const Tensor<T>& styles,
                                               const ContrastiveConfig<T>& cfg) {
    check_4d(outputs, "select_negatives outputs");
    check_4d(styles, "select_negatives styles");
    const int B = outputs.dim(0);
    if (styles.dim(0) != B) throw InvalidArgument("select_negatives: batch mismatch");
    if (B < 2) throw InvalidArgument("select_negatives: contrastive loss requires negatives (batch >= 2)");
    if (cfg.k < 1 || cfg.k > B - 1) throw InvalidArgument("select_negatives: k must lie in 1..batch-1");
    if (!cfg.selection_extractor) throw InvalidArgument("select_negatives: no selection extractor");

    GradGuard guard(false);
    std::vector<std::vector<Var<T>>> out_feats(static_cast<size_t>(B));
    std::vector<std::vector<Var<T>>> style_feats(static_cast<size_t>(B));
    {
        Var<T> ov = constant(outputs);
        Var<T> sv = constant(styles);
        for (int i = 0; i < B; ++i) {
            out_feats[static_cast<size_t>(i)] = cfg.selection_extractor->features(slice_batch(ov, i), 4);
            style_feats[static_cast<size_t>(i)] = cfg.selection_extractor->features(slice_batch(sv, i), 4);
        }
    }

    std::vector<std::vector<int>> selected(static_cast<size_t>(B));
    for (int i = 0; i < B; ++i) {
        std::vector<std::pair<double, int>> dist;
        dist.reserve(static_cast<size_t>(B - 1));
        for (int j = 0; j < B; ++j) {
            if (j == i) continue;
            Var<T> d = style_distance_from_features(out_feats[static_cast<size_t>(i)],
                                                    style_feats[static_cast<size_t>(j)]);
            dist.emplace_back(static_cast<double>(scalar_value(d)), j);
        }
        std::stable_sort(dist.begin(), dist.end(),
                         [](const auto& a, const auto& b) { return a.first < b.first; });
        auto& sel = selected[static_cast<size_t>(i)];
        for (int r = 0; r < cfg.k; ++r) sel.push_back(dist[static_cast<size_t>(r)].second);
    }
    return selected;
}

// ---------------------------------------------------------------------------
// Aesthetic feature contrastive loss. For every aesthetic-encoder layer and
// both frequency branches, each sample contributes the ratio of its
// distance-to-matched-positive over the summed distances to its k selected
// negatives. Distances use the same matched-target form as the style loss.
// ---------------------------------------------------------------------------

template <typename T>
Var<T> aesthetic_contrastive_loss(const Var<T>& outputs, const Var<T>& styles,
                                  const EncoderWeights<T>& aesthetic_encoder, const ContrastiveConfig<T>& cfg,
                                  const std::vector<std::vector<int>>* precomputed_negatives = nullptr) {
    const int B = outputs.value().dim(0);
    if (B < 2) throw InvalidArgument("aesthetic_contrastive_loss: contrastive loss requires negatives (batch >= 2)");
    std::vector<std::vector<int>> negatives;
    if (precomputed_negatives) {
        negatives = *precomputed_negatives;
    } else {
        negatives = select_negatives(outputs.value(), styles.value(), cfg);
    }

    auto out_feats = encoder_features(aesthetic_encoder, outputs);
    auto style_feats = encoder_features(aesthetic_encoder, styles);

    Var<T> total;
    auto accumulate_branch = [&](const Var<T>& fo, const Var<T>& fs) {
        if (fo.value().dim(1) == 0) return;  // branch absent at this alpha
        for (int i = 0; i < B; ++i) {
            Var<T> xi = slice_batch(fo, i);
            Var<T> pos = slice_batch(fs, i);
            Var<T> num = l2_distance(xi, efdm_match(xi, pos));
            Var<T> den;
            for (int j : negatives[static_cast<size_t>(i)]) {
                Var<T> neg = slice_batch(fs, j);
                Var<T> term = l2_distance(xi, efdm_match(xi, neg));
                den = den.defined() ? add(den, term) : term;
            }
            den = add_scalar(den, static_cast<T>(kDenominatorEpsilon));
            Var<T> ratio = div_scalars(num, den);
            total = total.defined() ? add(total, ratio) : ratio;
        }
    };
    for (size_t l = 0; l < out_feats.size(); ++l) accumulate_branch(out_feats[l].high, style_feats[l].high);
    for (size_t l = 0; l < out_feats.size(); ++l) accumulate_branch(out_feats[l].low, style_feats[l].low);
    if (!total.defined()) throw InvalidArgument("aesthetic_contrastive_loss: no active branches");
    return total;
}

template <typename T>
T aesthetic_contrastive_loss(const Tensor<T>& outputs, const Tensor<T>& styles,
                             const EncoderWeights<T>& aesthetic_encoder, const ContrastiveConfig<T>& cfg) {
    GradGuard guard(false);
    return scalar_value(aesthetic_contrastive_loss(constant(outputs), constant(styles), aesthetic_encoder, cfg));
}

// ---------------------------------------------------------------------------
// Weighted total.
// ---------------------------------------------------------------------------

template <typename T>
T total_loss(T lc, T ls, T laes, const LossWeights<T>& w) {
    return w.lambda_c * lc + w.lambda_s * ls + w.lambda_aes * laes;
}

template <typename T>
Var<T> total_loss(const Var<T>& lc, const Var<T>& ls, const Var<T>& laes, const LossWeights<T>& w) {
    return add(add(scale(lc, w.lambda_c), scale(ls, w.lambda_s)), scale(laes, w.lambda_aes));
}

}  // namespace aesfa
