#pragma once

#include "aliaug/generator.hpp"
#include "aliaug/losses.hpp"

#include <string>
#include <vector>

namespace aliaug {

// Gaussian fit of a feature distribution: mean, unbiased covariance, count.
// When n < d+1 the covariance is shrunk toward a scaled identity so the
// Frechet computation stays well conditioned.
struct FeatureStats {
    int d = 0;
    long n = 0;
    std::vector<real> mean;  // d
    std::vector<real> cov;   // d*d row-major, symmetric
};

struct DownstreamModel;

// Frozen seeded conv pyramid (3->16->32->64, stride 2 each) with a global
// average pool over the deepest level; a desk-scale stand-in for the usual
// Inception features. d = 64.
class FeatureExtractor {
public:
    static constexpr uint64_t kDefaultSeed = 0x9e3779b97f4a7c15ull;

    void init(uint64_t seed = kDefaultSeed);
    // Alternative extractor sharing the downstream trunk weights.
    void init_from_trunk(const DownstreamModel& model);

    std::vector<real> features(const ImageBuf& image) const;
    int dim() const { return 64; }

private:
    ParamStore ps_;
    PerceptualNet net_;
};

FeatureStats compute_stats(const std::vector<std::vector<real>>& features);

// Runs the extractor over every image and fits the Gaussian. Throws with
// fewer than 2 images.
FeatureStats extract_features(const std::vector<ImageBuf>& images, const FeatureExtractor& ext);

// ||mu_a - mu_b||^2 + Tr(Sa + Sb - 2 (Sa Sb)^{1/2}), matrix square root via
// eigendecomposition after symmetrization and 1e-6 jitter; tiny negative
// eigenvalues are clamped to zero.
real frechet_distance(const FeatureStats& a, const FeatureStats& b);

struct FidResult {
    real fid = 0;
    long n_real = 0, n_generated = 0;
};

// Loads the evaluation image of each record (target when present, else
// input), extracts features on both sets, and reports the Frechet distance.
FidResult compute_fid(const DatasetManifest& real_set, const DatasetManifest& generated_set,
                      const FeatureExtractor& ext);

// All-synthetic training set: every record is a generated image conditioned
// on an augmented copy of a real record's mask and prompt (mask-as-label).
// Images and masks are written under out_dir. Failed generations are
// reported on stderr, skipped, and counted in n_failed.
struct BuildResult {
    DatasetManifest manifest;
    int n_failed = 0;
};
BuildResult build_cas(const DatasetManifest& real_train, const GeneratorModel& gen,
                      int n_per_record, const std::string& out_dir, uint64_t seed);

// Union of the unmodified real train records and the CAS-style synthetic
// records, with a provenance flag on every record.
BuildResult build_nas(const DatasetManifest& real_train, const GeneratorModel& gen,
                      int n_per_record, const std::string& out_dir, uint64_t seed);

// Small two-head reference network: shared conv trunk, an image-level defect
// logit off a global average pool, and a per-pixel mask logit head decoded
// back to full resolution.
struct DownstreamModel {
    ParamStore params;
    PlainConv c1, c2, c3;              // trunk 3->16->32->64, stride 2 each
    PlainLinear cls;                   // 64 -> 1 defect logit
    PlainConv s1, s2, s3, s4;          // mask head, upsampled back to HxW

    void build(uint64_t seed);
    // Returns {cls logit {1}, mask logits {1,H,W}}.
    std::pair<TensorPtr, TensorPtr> forward(const TensorPtr& image) const;
};

struct DownstreamConfig {
    int steps = 1500;
    real learning_rate = real(1e-3);
};

// Fixed-budget training, deterministic in seed. Throws when the manifest has
// a single class only.
DownstreamModel train_downstream(const DatasetManifest& manifest, uint64_t seed,
                                 const DownstreamConfig& cfg = {});

struct DownstreamMetrics {
    real precision = 0, recall = 0, accuracy = 0, iou = 0;
    long n = 0;
};

// Image-level precision/recall/accuracy over 0/1 predictions. Precision and
// recall fall back to 0 when undefined (no predicted / no actual positives).
DownstreamMetrics classification_metrics(const std::vector<int>& predicted,
                                         const std::vector<int>& actual);

// Defect detection + localization metrics on real test images. IoU averages
// over records with a nonempty ground-truth mask.
DownstreamMetrics eval_downstream(const DownstreamModel& model, const DatasetManifest& test_set);

}  // namespace aliaug
