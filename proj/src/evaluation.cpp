#include "aliaug/evaluation.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <stdexcept>

#include "aliaug/training.hpp"

namespace fs = std::filesystem;

namespace aliaug {

namespace {

using Mat = Eigen::Matrix<real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Mat cov_matrix(const FeatureStats& s) {
    Mat m(s.d, s.d);
    for (int i = 0; i < s.d; ++i)
        for (int j = 0; j < s.d; ++j) m(i, j) = s.cov[i * s.d + j];
    return m;
}

// Symmetrize, shrink rank-deficient estimates toward a scaled identity, and
// add the standard stability jitter.
Mat conditioned_cov(const FeatureStats& s) {
    Mat m = cov_matrix(s);
    m = ((m + m.transpose()) / 2).eval();
    if (s.n > 0 && s.n < s.d + 1) {
        const real gamma = real(1e-2);
        const real scale = m.trace() / s.d;
        m = (1 - gamma) * m + gamma * scale * Mat::Identity(s.d, s.d);
    }
    m += real(1e-6) * Mat::Identity(s.d, s.d);
    return m;
}

Mat psd_sqrt(const Mat& m) {
    Eigen::SelfAdjointEigenSolver<Mat> es(m);
    Eigen::Matrix<real, Eigen::Dynamic, 1> lam = es.eigenvalues();
    for (int i = 0; i < lam.size(); ++i) lam[i] = lam[i] > 0 ? std::sqrt(lam[i]) : 0;
    return es.eigenvectors() * lam.asDiagonal() * es.eigenvectors().transpose();
}

// The evaluation-time image of a record: the edited/defect image when
// present, else the input.
ImageBuf record_image(const DatasetManifest& m, const SampleRecord& rec) {
    const std::string& rel = rec.target_path.empty() ? rec.input_path : rec.target_path;
    if (rel.empty()) throw std::runtime_error("record " + rec.id + " has no image to evaluate");
    return load_image_png(m.resolve(rel));
}

TensorPtr mask_target_tensor(const MaskBuf& mask) {
    auto t = make_tensor({1, mask.h, mask.w}, false);
    for (size_t i = 0; i < mask.px.size(); ++i) t->v[i] = mask.px[i] ? real(1) : real(0);
    return t;
}

}  // namespace

void FeatureExtractor::init(uint64_t seed) {
    ps_ = ParamStore{};
    Rng rng(seed);
    net_.init(ps_, rng);
}

void FeatureExtractor::init_from_trunk(const DownstreamModel& model) {
    init();
    net_.c1.w->v = model.c1.w->v;
    net_.c1.b->v = model.c1.b->v;
    net_.c2.w->v = model.c2.w->v;
    net_.c2.b->v = model.c2.b->v;
    net_.c3.w->v = model.c3.w->v;
    net_.c3.b->v = model.c3.b->v;
}

std::vector<real> FeatureExtractor::features(const ImageBuf& image) const {
    auto levels = net_.features(image_to_tensor(image));
    auto pooled = global_avg_pool(levels.back());
    return pooled->v;
}

FeatureStats compute_stats(const std::vector<std::vector<real>>& features) {
    if (features.size() < 2) throw std::runtime_error("need at least 2 feature vectors");
    const int d = static_cast<int>(features.front().size());
    FeatureStats s;
    s.d = d;
    s.n = static_cast<long>(features.size());
    s.mean.assign(d, 0);
    s.cov.assign(static_cast<size_t>(d) * d, 0);
    for (const auto& f : features) {
        if (static_cast<int>(f.size()) != d)
            throw std::runtime_error("inconsistent feature dimensions");
        for (int i = 0; i < d; ++i) s.mean[i] += f[i];
    }
    for (int i = 0; i < d; ++i) s.mean[i] /= s.n;
    for (const auto& f : features)
        for (int i = 0; i < d; ++i)
            for (int j = 0; j < d; ++j)
                s.cov[i * d + j] += (f[i] - s.mean[i]) * (f[j] - s.mean[j]);
    for (auto& c : s.cov) c /= (s.n - 1);  // unbiased
    return s;
}

FeatureStats extract_features(const std::vector<ImageBuf>& images, const FeatureExtractor& ext) {
    if (images.size() < 2) throw std::runtime_error("need at least 2 images for feature stats");
    std::vector<std::vector<real>> feats;
    feats.reserve(images.size());
    for (const auto& img : images) feats.push_back(ext.features(img));
    return compute_stats(feats);
}

real frechet_distance(const FeatureStats& a, const FeatureStats& b) {
    if (a.d != b.d) throw std::runtime_error("frechet_distance dimension mismatch");
    for (const auto* s : {&a, &b}) {
        for (real v : s->mean)
            if (!std::isfinite(v)) throw std::runtime_error("non-finite feature mean");
        for (real v : s->cov)
            if (!std::isfinite(v)) throw std::runtime_error("non-finite feature covariance");
    }
    Mat sa = conditioned_cov(a), sb = conditioned_cov(b);
    Mat ra = psd_sqrt(sa);
    Mat prod = ra * sb * ra;
    prod = ((prod + prod.transpose()) / 2).eval();
    Eigen::SelfAdjointEigenSolver<Mat> es(prod);
    real tr_sqrt = 0;
    for (int i = 0; i < a.d; ++i) {
        const real lam = es.eigenvalues()[i];
        if (lam > 0) tr_sqrt += std::sqrt(lam);
    }
    real mean_sq = 0;
    for (int i = 0; i < a.d; ++i) {
        const real dmu = a.mean[i] - b.mean[i];
        mean_sq += dmu * dmu;
    }
    const real fid = mean_sq + sa.trace() + sb.trace() - 2 * tr_sqrt;
    return fid < 0 ? real(0) : fid;
}

FidResult compute_fid(const DatasetManifest& real_set, const DatasetManifest& generated_set,
                      const FeatureExtractor& ext) {
    std::vector<ImageBuf> real_imgs, gen_imgs;
    for (const auto& rec : real_set.records) real_imgs.push_back(record_image(real_set, rec));
    for (const auto& rec : generated_set.records)
        gen_imgs.push_back(record_image(generated_set, rec));
    FidResult out;
    out.n_real = static_cast<long>(real_imgs.size());
    out.n_generated = static_cast<long>(gen_imgs.size());
    out.fid = frechet_distance(extract_features(real_imgs, ext), extract_features(gen_imgs, ext));
    return out;
}

BuildResult build_cas(const DatasetManifest& real_train, const GeneratorModel& gen,
                      int n_per_record, const std::string& out_dir, uint64_t seed) {
    if (n_per_record < 1) throw std::runtime_error("n_per_record must be positive");
    fs::create_directories(fs::path(out_dir) / "images");
    fs::create_directories(fs::path(out_dir) / "masks");

    BuildResult out;
    out.manifest.dir = out_dir;
    out.manifest.split = DatasetManifest::Split::train;
    out.manifest.seed = seed;

    GeneratorConfig gcfg;
    gcfg.mode = GeneratorConfig::Mode::eval;

    for (size_t i = 0; i < real_train.records.size(); ++i) {
        const auto& rec = real_train.records[i];
        LoadedSample src;
        try {
            src = load_sample(real_train, rec);
        } catch (const std::exception& e) {
            std::cerr << "build_cas: skipping " << rec.id << ": " << e.what() << "\n";
            ++out.n_failed;
            continue;
        }
        // Condition on the clean input when the record has one: the editor
        // paints the defect onto an augmented copy of the real image, and only
        // the generated result enters the output set. Records without an input
        // fall back to mask+prompt-only generation.
        const ImageBuf* cond_img = src.input ? &*src.input : nullptr;
        for (int j = 0; j < n_per_record; ++j) {
            const uint64_t copy_seed = Rng::derive(seed, i * 1000003ull + j);
            try {
                auto [aug_img, aug_mask] =
                    basic_augment(cond_img ? *cond_img : *src.target, src.mask, copy_seed);
                LoadedSample cond;
                if (cond_img) cond.input = aug_img;
                cond.mask = aug_mask;
                cond.prompt = src.prompt;
                cond.label = src.label;
                cond.pairing = cond_img ? Pairing::paired : Pairing::mask_only;
                ImageBuf synth = gen.generate(cond, gcfg, copy_seed);

                SampleRecord sr;
                sr.id = rec.id + "_cas" + std::to_string(j);
                sr.mask_path = "masks/" + sr.id + ".png";
                sr.target_path = "images/" + sr.id + ".png";
                sr.prompt = rec.prompt;
                sr.label = rec.label;
                sr.pairing = Pairing::mask_only;
                sr.provenance = "synthetic";
                save_mask_png(out.manifest.resolve(sr.mask_path), aug_mask);
                save_image_png(out.manifest.resolve(sr.target_path), synth);
                out.manifest.records.push_back(std::move(sr));
            } catch (const std::exception& e) {
                std::cerr << "build_cas: generation failed for " << rec.id << " copy " << j
                          << ": " << e.what() << "\n";
                ++out.n_failed;
            }
        }
    }
    if (out.manifest.records.empty()) throw std::runtime_error("build_cas produced no records");
    return out;
}

BuildResult build_nas(const DatasetManifest& real_train, const GeneratorModel& gen,
                      int n_per_record, const std::string& out_dir, uint64_t seed) {
    BuildResult cas = build_cas(real_train, gen, n_per_record, out_dir, seed);
    BuildResult out;
    out.n_failed = cas.n_failed;
    out.manifest.dir = out_dir;
    out.manifest.split = DatasetManifest::Split::train;
    out.manifest.seed = seed;
    // Real records first, re-rooted to absolute paths so the union manifest
    // can live in out_dir without copying pixels.
    for (const auto& rec : real_train.records) {
        SampleRecord r = rec;
        auto abs = [&](std::string& p) {
            if (!p.empty()) p = fs::absolute(real_train.resolve(p)).string();
        };
        abs(r.input_path);
        abs(r.mask_path);
        abs(r.target_path);
        if (r.provenance.empty()) r.provenance = "real";
        out.manifest.records.push_back(std::move(r));
    }
    for (const auto& rec : cas.manifest.records) out.manifest.records.push_back(rec);
    return out;
}

void DownstreamModel::build(uint64_t seed) {
    params = ParamStore{};
    Rng rng(seed);
    c1.init(params, "ds.c1", 3, 16, 3, 2, 1, rng);
    c2.init(params, "ds.c2", 16, 32, 3, 2, 1, rng);
    c3.init(params, "ds.c3", 32, 64, 3, 2, 1, rng);
    cls.init(params, "ds.cls", 64, 1, rng);
    s1.init(params, "ds.s1", 64, 32, 3, 1, 1, rng);
    s2.init(params, "ds.s2", 32, 16, 3, 1, 1, rng);
    s3.init(params, "ds.s3", 16, 8, 3, 1, 1, rng);
    s4.init(params, "ds.s4", 8, 1, 1, 1, 0, rng);
}

std::pair<TensorPtr, TensorPtr> DownstreamModel::forward(const TensorPtr& image) const {
    auto f1 = relu(c1.forward(image));
    auto f2 = relu(c2.forward(f1));
    auto f3 = relu(c3.forward(f2));
    auto pooled = reshape(global_avg_pool(f3), {1, 64});
    auto logit = cls.forward(pooled);  // {1,1}
    auto h = upsample_nearest2x(relu(s1.forward(f3)));
    h = upsample_nearest2x(relu(s2.forward(h)));
    h = upsample_nearest2x(relu(s3.forward(h)));
    auto seg = s4.forward(h);  // {1,H,W}
    return {reshape(logit, {1}), seg};
}

DownstreamModel train_downstream(const DatasetManifest& manifest, uint64_t seed,
                                 const DownstreamConfig& cfg) {
    if (manifest.records.empty()) throw std::runtime_error("empty downstream training manifest");
    int n_defect = 0, n_good = 0;
    for (const auto& rec : manifest.records) (rec.label == "good" ? n_good : n_defect)++;
    if (n_defect == 0 || n_good == 0)
        throw std::runtime_error("downstream classifier needs at least 2 classes");

    struct Prepared {
        TensorPtr image, mask;
        real label;
    };
    std::vector<Prepared> data;
    data.reserve(manifest.records.size());
    for (const auto& rec : manifest.records) {
        LoadedSample s = load_sample(manifest, rec);
        const ImageBuf& img = s.target ? *s.target : *s.input;
        data.push_back({image_to_tensor(img), mask_target_tensor(s.mask),
                        rec.label == "good" ? real(0) : real(1)});
    }

    DownstreamModel model;
    model.build(Rng::derive(seed, 0xD5));

    TrainConfig opt_cfg;  // default Adam moments / decay / clip
    AdamW opt;
    opt.init(model.params.trainable(), opt_cfg);

    Rng pick(Rng::derive(seed, 0xD5EE));
    for (int step = 0; step < cfg.steps; ++step) {
        const auto& d = data[pick.below(static_cast<uint64_t>(data.size()))];
        Tape tape;
        TapeScope scope(tape);
        auto [logit, seg] = model.forward(d.image);
        auto target = make_tensor({1}, false);
        target->v[0] = d.label;
        auto loss = add(bce_with_logits_t(logit, target), bce_with_logits_t(seg, d.mask));
        if (!std::isfinite(loss->v[0]))
            throw std::runtime_error("downstream training diverged at step " +
                                     std::to_string(step));
        opt.zero_grad();
        tape.backward(loss);
        opt.step(cfg.learning_rate);
    }
    return model;
}

DownstreamMetrics classification_metrics(const std::vector<int>& predicted,
                                         const std::vector<int>& actual) {
    if (predicted.size() != actual.size())
        throw std::runtime_error("classification_metrics size mismatch");
    long tp = 0, fp = 0, tn = 0, fn = 0;
    for (size_t i = 0; i < predicted.size(); ++i) {
        if (predicted[i] && actual[i]) ++tp;
        else if (predicted[i] && !actual[i]) ++fp;
        else if (!predicted[i] && !actual[i]) ++tn;
        else ++fn;
    }
    DownstreamMetrics m;
    m.n = static_cast<long>(predicted.size());
    m.precision = (tp + fp) ? real(tp) / (tp + fp) : real(0);
    m.recall = (tp + fn) ? real(tp) / (tp + fn) : real(0);
    m.accuracy = m.n ? real(tp + tn) / m.n : real(0);
    return m;
}

DownstreamMetrics eval_downstream(const DownstreamModel& model, const DatasetManifest& test_set) {
    if (test_set.records.empty()) throw std::runtime_error("empty test set");
    std::vector<int> pred, actual;
    real iou_sum = 0;
    long iou_n = 0;
    for (const auto& rec : test_set.records) {
        LoadedSample s = load_sample(test_set, rec);
        const ImageBuf& img = s.target ? *s.target : *s.input;
        auto [logit, seg] = model.forward(image_to_tensor(img));
        (void)logit;
        // Detector-style decision: an image counts as defective when the
        // predicted mask has non-trivial support. Local per-pixel evidence
        // transfers across domains better than the global image logit.
        long area = 0;
        for (real v : seg->v) area += v > 0;
        const long min_area = std::max<long>(4, seg->numel() / 512);
        pred.push_back(area >= min_area ? 1 : 0);
        actual.push_back(rec.label == "good" ? 0 : 1);
        if (s.mask.count_nonzero() > 0) {
            long inter = 0, uni = 0;
            for (size_t i = 0; i < s.mask.px.size(); ++i) {
                const bool p = seg->v[i] > 0, g = s.mask.px[i] != 0;
                inter += (p && g);
                uni += (p || g);
            }
            iou_sum += uni ? real(inter) / uni : real(1);
            ++iou_n;
        }
    }
    DownstreamMetrics m = classification_metrics(pred, actual);
    m.iou = iou_n ? iou_sum / iou_n : real(1);
    return m;
}

}  // namespace aliaug
