#pragma once

#include <algorithm>
#include <cctype>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "aesfa/checkpoint.hpp"
#include "aesfa/image_io.hpp"
#include "aesfa/image_ops.hpp"
#include "aesfa/losses.hpp"
#include "aesfa/model.hpp"
#include "aesfa/optimizer.hpp"

namespace aesfa {

struct TrainConfig {
    std::string content_dir;
    std::string style_dir;
    std::string out_dir = "runs";
    int64_t iterations = 160000;
    int batch = 8;
    double lr = 1e-4;
    double alpha = 0.5;
    int n_g = 8;
    int k = 1;
    double lambda_c = 1.0;
    double lambda_s = 10.0;
    double lambda_aes = 5.0;
    uint64_t seed = 0;
    int64_t checkpoint_every = 10000;
    int rescale_short = 512;
    int crop = 256;
    std::string resume;      // checkpoint path; empty starts fresh
    std::string vgg_path;    // perceptual weights container; empty selects the seeded surrogate
    ModelConfig model;       // alpha and n_g above override the matching fields

    void validate() const {
        if (!(alpha >= 0.0 && alpha <= 1.0)) throw InvalidArgument("train config: alpha must lie in [0,1]");
        if (iterations < 1) throw InvalidArgument("train config: iterations must be positive");
        if (batch < 2) throw InvalidArgument("train config: batch must be >= 2 (contrastive loss needs negatives)");
        if (k < 1 || k >= batch) throw InvalidArgument("train config: k must lie in 1..batch-1");
        if (lr <= 0) throw InvalidArgument("train config: lr must be positive");
        if (checkpoint_every < 1) throw InvalidArgument("train config: checkpoint_every must be positive");
        if (crop < 1 || rescale_short < crop) throw InvalidArgument("train config: need rescale_short >= crop >= 1");
        if (lambda_c < 0 || lambda_s < 0 || lambda_aes < 0) throw InvalidArgument("train config: negative loss weight");
    }

    ModelConfig model_config() const {
        ModelConfig m = model;
        m.alpha = alpha;
        m.n_g = n_g;
        return m;
    }

    nlohmann::json to_json() const {
        return nlohmann::json{{"content_dir", content_dir},
                              {"style_dir", style_dir},
                              {"out_dir", out_dir},
                              {"iterations", iterations},
                              {"batch", batch},
                              {"lr", lr},
                              {"alpha", alpha},
                              {"n_g", n_g},
                              {"k", k},
                              {"lambda_c", lambda_c},
                              {"lambda_s", lambda_s},
                              {"lambda_aes", lambda_aes},
                              {"seed", seed},
                              {"checkpoint_every", checkpoint_every},
                              {"rescale_short", rescale_short},
                              {"crop", crop},
                              {"model", model_config().to_json()}};
    }
};

struct LossReport {
    int64_t iteration = 0;
    double loss_content = 0;
    double loss_style = 0;
    double loss_aes = 0;
    double loss_total = 0;
    double wall_seconds = 0;
};

// ---------------------------------------------------------------------------
// Data pipeline. Files are discovered recursively and sorted by relative
// path before any shuffling, so a directory scan is reproducible across
// machines. Epoch orders and crop offsets derive from (seed, epoch) and
// (seed, iteration, slot): resuming at iteration i replays the exact batch
// stream an uninterrupted run would have seen.
// ---------------------------------------------------------------------------

inline std::vector<std::string> list_images(const std::string& dir) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(dir)) throw ConfigError("not a directory: " + dir);
    std::vector<std::pair<std::string, std::string>> found;  // (relative key, full path)
    for (const auto& entry : fs::recursive_directory_iterator(dir)) {
        if (!entry.is_regular_file()) continue;
        std::string ext = entry.path().extension().string();
        std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
        if (ext == ".png" || ext == ".jpg" || ext == ".jpeg")
            found.emplace_back(fs::relative(entry.path(), dir).string(), entry.path().string());
    }
    std::sort(found.begin(), found.end());
    std::vector<std::string> out;
    out.reserve(found.size());
    for (auto& [key, path] : found) out.push_back(std::move(path));
    return out;
}

inline std::vector<int> epoch_order(uint64_t seed, uint64_t stream, uint64_t epoch, int n) {
    std::vector<int> idx(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) idx[static_cast<size_t>(i)] = i;
    Rng rng(hash_seed({seed, 0x65706f6368ULL, stream, epoch}));
    for (int i = n - 1; i > 0; --i) {
        const int j = static_cast<int>(rng.next_below(static_cast<uint64_t>(i + 1)));
        std::swap(idx[static_cast<size_t>(i)], idx[static_cast<size_t>(j)]);
    }
    return idx;
}

inline int dataset_pick(uint64_t seed, uint64_t stream, int64_t global_slot, int n) {
    const uint64_t epoch = static_cast<uint64_t>(global_slot / n);
    const int pos = static_cast<int>(global_slot % n);
    return epoch_order(seed, stream, epoch, n)[static_cast<size_t>(pos)];
}

// Aspect-preserving resize putting the shorter side at `target`; the longer
// side floors.
inline Tensor<float> rescale_shorter_side(const Tensor<float>& image, int target) {
    check_4d(image, "rescale_shorter_side");
    const int H = image.dim(2), W = image.dim(3);
    int nh, nw;
    if (H <= W) {
        nh = target;
        nw = static_cast<int>(static_cast<int64_t>(W) * target / H);
    } else {
        nw = target;
        nh = static_cast<int>(static_cast<int64_t>(H) * target / W);
    }
    return resize_bilinear(image, nh, nw);
}

// Rescales the shorter side to `rescale_short` (bilinear, aspect preserved)
// and takes a uniformly random crop x crop window. Smaller images are
// upscaled first so the crop is always valid.
inline Tensor<float> augment(const Tensor<float>& image, Rng& rng, int rescale_short = 512, int crop = 256) {
    check_4d(image, "augment");
    const int H = image.dim(2), W = image.dim(3);
    if (H < 16 || W < 16) throw InvalidArgument("augment: image smaller than 16x16");
    Tensor<float> scaled = rescale_shorter_side(image, rescale_short);
    const int y0 = static_cast<int>(rng.next_below(static_cast<uint64_t>(scaled.dim(2) - crop + 1)));
    const int x0 = static_cast<int>(rng.next_below(static_cast<uint64_t>(scaled.dim(3) - crop + 1)));
    return crop_region(scaled, y0, x0, crop, crop);
}

// ---------------------------------------------------------------------------
// One optimization step: forward through the full pipeline, the three loss
// terms, backward, Adam update. The extractor is frozen; only model
// parameters move.
// ---------------------------------------------------------------------------

template <typename T>
struct TrainState {
    AesfaModel<T> model;
    Adam<T> opt;
    PerceptualExtractor<T> extractor;
    LossWeights<T> loss_weights;
    int k = 1;
    int64_t iteration = 0;  // completed iterations
};

template <typename T>
LossReport train_step(TrainState<T>& st, const Tensor<T>& content_batch, const Tensor<T>& style_batch) {
    const auto t0 = std::chrono::steady_clock::now();
    if (content_batch.dim(0) != style_batch.dim(0)) throw InvalidArgument("train_step: batch sizes differ");
    if (content_batch.dim(0) < 2) throw InvalidArgument("train_step: batch must be >= 2");

    auto params = st.model.named_parameters();
    st.opt.zero_grad(params);

    GradGuard guard(true);
    Var<T> content = constant(content_batch);
    Var<T> styles = constant(style_batch);
    Var<T> out = st.model.forward(content, styles, styles);

    Var<T> lc = content_loss(out, content, st.extractor);
    Var<T> ls = style_loss(out, styles, st.extractor);
    ContrastiveConfig<T> ccfg{st.k, &st.extractor};
    Var<T> laes = aesthetic_contrastive_loss(out, styles, st.model.aesthetic_encoder, ccfg);
    Var<T> ltotal = total_loss(lc, ls, laes, st.loss_weights);

    LossReport rep;
    rep.loss_content = static_cast<double>(scalar_value(lc));
    rep.loss_style = static_cast<double>(scalar_value(ls));
    rep.loss_aes = static_cast<double>(scalar_value(laes));
    rep.loss_total = static_cast<double>(scalar_value(ltotal));
    if (!std::isfinite(rep.loss_content)) throw std::runtime_error("train_step: content loss is not finite");
    if (!std::isfinite(rep.loss_style)) throw std::runtime_error("train_step: style loss is not finite");
    if (!std::isfinite(rep.loss_aes)) throw std::runtime_error("train_step: aesthetic contrastive loss is not finite");

    backward(ltotal);
    st.opt.step(params);
    ++st.iteration;
    rep.iteration = st.iteration;
    rep.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return rep;
}

// ---------------------------------------------------------------------------
// Checkpoint adapters.
// ---------------------------------------------------------------------------

template <typename T>
CheckpointFile make_train_checkpoint(TrainState<T>& st, const nlohmann::json& config_snapshot) {
    CheckpointFile ckpt;
    ckpt.meta["kind"] = "aesfa-train";
    ckpt.meta["iteration"] = st.iteration;
    ckpt.meta["adam_step"] = st.opt.step_count();
    ckpt.meta["model_config"] = st.model.cfg.to_json();
    ckpt.meta["config"] = config_snapshot;
    auto params = st.model.named_parameters();
    for (auto& [name, p] : params) ckpt.params.push_back(tensor_to_param("model." + name, p->value()));
    auto& m1 = st.opt.moment1();
    auto& m2 = st.opt.moment2();
    if (m1.size() != params.size()) throw CheckpointError("optimizer state does not cover the parameter registry");
    for (size_t i = 0; i < params.size(); ++i)
        ckpt.params.push_back(tensor_to_param("opt.m." + params[i].first, m1[i]));
    for (size_t i = 0; i < params.size(); ++i)
        ckpt.params.push_back(tensor_to_param("opt.v." + params[i].first, m2[i]));
    return ckpt;
}

// Weights-only container (no optimizer state); enough to stylize or assess.
template <typename T>
CheckpointFile make_model_checkpoint(AesfaModel<T>& model) {
    CheckpointFile ckpt;
    ckpt.meta["kind"] = "aesfa-model";
    ckpt.meta["iteration"] = 0;
    ckpt.meta["model_config"] = model.cfg.to_json();
    for (auto& [name, p] : model.named_parameters()) ckpt.params.push_back(tensor_to_param("model." + name, p->value()));
    return ckpt;
}

template <typename T>
void load_model_params(AesfaModel<T>& model, const CheckpointFile& ckpt, const std::string& prefix) {
    for (auto& [name, p] : model.named_parameters()) {
        const CheckpointParam* cp = ckpt.find(prefix + name);
        if (!cp) throw CheckpointError("checkpoint is missing parameter '" + prefix + name + "'");
        Tensor<T> t = param_to_tensor<T>(*cp);
        if (t.shape != p->shape())
            throw CheckpointError("parameter '" + prefix + name + "' has shape " + shape_str(t.shape) +
                                  ", model expects " + shape_str(p->shape()));
        p->mutable_value() = std::move(t);
    }
}

// Builds a model from a checkpoint's embedded config and loads its weights.
template <typename T>
AesfaModel<T> model_from_checkpoint(const CheckpointFile& ckpt) {
    if (!ckpt.meta.contains("model_config")) throw CheckpointError("checkpoint has no model_config metadata");
    ModelConfig cfg = ModelConfig::from_json(ckpt.meta.at("model_config"));
    AesfaModel<T> model = AesfaModel<T>::make(cfg, 0);
    load_model_params(model, ckpt, "model.");
    return model;
}

template <typename T>
void load_train_state(TrainState<T>& st, const CheckpointFile& ckpt) {
    load_model_params(st.model, ckpt, "model.");
    auto params = st.model.named_parameters();
    st.opt.attach(params);
    auto& m1 = st.opt.moment1();
    auto& m2 = st.opt.moment2();
    for (size_t i = 0; i < params.size(); ++i) {
        const CheckpointParam* mp = ckpt.find("opt.m." + params[i].first);
        const CheckpointParam* vp = ckpt.find("opt.v." + params[i].first);
        if (!mp || !vp) throw CheckpointError("checkpoint is missing optimizer state for '" + params[i].first + "'");
        m1[i] = param_to_tensor<T>(*mp);
        m2[i] = param_to_tensor<T>(*vp);
    }
    st.opt.set_step_count(ckpt.meta.at("adam_step").get<int64_t>());
    st.iteration = ckpt.meta.at("iteration").get<int64_t>();
}

// ---------------------------------------------------------------------------
// Full loop. Writes a checkpoint every checkpoint_every iterations plus a
// `final.aesfa` alias at completion, and one JSONL loss record per
// iteration to train_log.jsonl.
// ---------------------------------------------------------------------------

struct TrainLoopResult {
    std::string final_checkpoint;
    std::vector<LossReport> reports;
};

template <typename T>
PerceptualExtractor<T> build_extractor(const TrainConfig& cfg);

template <typename T>
TrainLoopResult train_loop(const TrainConfig& cfg) {
    cfg.validate();
    const std::vector<std::string> contents = list_images(cfg.content_dir);
    const std::vector<std::string> styles = list_images(cfg.style_dir);
    if (contents.empty()) throw ConfigError("no images found under content dir: " + cfg.content_dir);
    if (styles.empty()) throw ConfigError("no images found under style dir: " + cfg.style_dir);
    std::filesystem::create_directories(cfg.out_dir);

    TrainState<T> st;
    st.loss_weights = LossWeights<T>{static_cast<T>(cfg.lambda_c), static_cast<T>(cfg.lambda_s),
                                     static_cast<T>(cfg.lambda_aes)};
    st.k = cfg.k;
    st.extractor = build_extractor<T>(cfg);
    st.model = AesfaModel<T>::make(cfg.model_config(), cfg.seed);
    st.opt = Adam<T>(cfg.lr);
    st.opt.attach(st.model.named_parameters());
    if (!cfg.resume.empty()) {
        CheckpointFile ckpt = load_checkpoint_file(cfg.resume);
        load_train_state(st, ckpt);
    }

    const std::string log_path = cfg.out_dir + "/train_log.jsonl";
    std::ofstream log(log_path, st.iteration > 0 ? std::ios::app : std::ios::trunc);
    if (!log) throw IoError("cannot open training log: " + log_path);

    auto load_slot = [&](const std::vector<std::string>& files, uint64_t stream, int64_t iter, int slot) {
        const int64_t global_slot = iter * cfg.batch + slot;
        const int idx = dataset_pick(cfg.seed, stream, global_slot, static_cast<int>(files.size()));
        Tensor<float> img = load_image(files[static_cast<size_t>(idx)]);
        Rng aug_rng(hash_seed({cfg.seed, 0x617567ULL, stream, static_cast<uint64_t>(iter), static_cast<uint64_t>(slot)}));
        return augment(img, aug_rng, cfg.rescale_short, cfg.crop);
    };

    TrainLoopResult result;
    while (st.iteration < cfg.iterations) {
        const int64_t iter = st.iteration;  // zero-based index of the step being taken
        Tensor<T> content_batch(Shape{cfg.batch, 3, cfg.crop, cfg.crop});
        Tensor<T> style_batch(Shape{cfg.batch, 3, cfg.crop, cfg.crop});
        for (int slot = 0; slot < cfg.batch; ++slot) {
            Tensor<float> c = load_slot(contents, 0, iter, slot);
            Tensor<float> s = load_slot(styles, 1, iter, slot);
            const int64_t per = c.numel();
            for (int64_t i = 0; i < per; ++i)
                content_batch.data[static_cast<size_t>(slot * per + i)] = static_cast<T>(c.data[static_cast<size_t>(i)]);
            for (int64_t i = 0; i < per; ++i)
                style_batch.data[static_cast<size_t>(slot * per + i)] = static_cast<T>(s.data[static_cast<size_t>(i)]);
        }
        LossReport rep = train_step(st, content_batch, style_batch);
        result.reports.push_back(rep);
        log << nlohmann::json{{"iteration", rep.iteration},
                              {"loss_content", rep.loss_content},
                              {"loss_style", rep.loss_style},
                              {"loss_aes", rep.loss_aes},
                              {"loss_total", rep.loss_total},
                              {"wall_seconds", rep.wall_seconds}}
                   .dump()
            << "\n";
        log.flush();

        if (st.iteration % cfg.checkpoint_every == 0 || st.iteration == cfg.iterations) {
            char buf[32];
            std::snprintf(buf, sizeof(buf), "ckpt_%08lld.aesfa", static_cast<long long>(st.iteration));
            save_checkpoint_file(cfg.out_dir + "/" + buf, make_train_checkpoint(st, cfg.to_json()));
        }
    }
    result.final_checkpoint = cfg.out_dir + "/final.aesfa";
    save_checkpoint_file(result.final_checkpoint, make_train_checkpoint(st, cfg.to_json()));
    return result;
}

template <typename T>
PerceptualExtractor<T> build_extractor(const TrainConfig& cfg) {
    if (cfg.vgg_path.empty()) return PerceptualExtractor<T>::surrogate(cfg.seed);
    CheckpointFile ckpt = load_checkpoint_file(cfg.vgg_path);
    PerceptualExtractor<T> ext = PerceptualExtractor<T>::vgg19_structure();
    ext.visit_params("vgg19", [&](const std::string& name, Var<T>& v) {
        const CheckpointParam* p = ckpt.find(name);
        if (!p) throw CheckpointError("perceptual weights are missing '" + name + "'");
        Tensor<T> t = param_to_tensor<T>(*p);
        if (t.shape != v.shape())
            throw CheckpointError("perceptual parameter '" + name + "' has shape " + shape_str(t.shape) +
                                  ", expected " + shape_str(v.shape()));
        v.mutable_value() = std::move(t);
    });
    return ext;
}

}  // namespace aesfa
