#pragma once

#include "aliaug/generator.hpp"
#include "aliaug/losses.hpp"
#include "aliaug/manifest.hpp"

#include <functional>
#include <string>
#include <vector>

namespace aliaug {

// Linear warmup to the base rate, constant afterwards.
real lr_at(const TrainConfig& cfg, long step);

// Decoupled-weight-decay Adam with global-norm gradient clipping.
class AdamW {
public:
    void init(std::vector<TensorPtr> params, const TrainConfig& cfg);
    // Clips the global gradient norm across all managed params to
    // max_grad_norm, then applies one update. Returns the pre-clip norm.
    real step(real lr);
    void zero_grad();

    long t() const { return t_; }
    const std::vector<TensorPtr>& params() const { return params_; }
    std::vector<std::vector<real>>& moments_m() { return m_; }
    std::vector<std::vector<real>>& moments_v() { return v_; }
    void set_t(long t) { t_ = t; }

private:
    std::vector<TensorPtr> params_;
    std::vector<std::vector<real>> m_, v_;
    real beta1_ = real(0.9), beta2_ = real(0.999), eps_ = real(1e-8);
    real weight_decay_ = real(1e-2), max_grad_norm_ = real(1.0);
    long t_ = 0;
};

// Everything a training run owns: the generator stack, discriminator,
// frozen perceptual net, both optimizers, and the step counter.
struct Trainer {
    TrainConfig cfg;
    GeneratorModel gen;
    ParamStore aux;  // discriminator + perceptual extractor
    Discriminator disc;
    PerceptualNet phi;
    AdamW opt_g, opt_d;
    long step = 0;
    uint64_t frozen_hash0 = 0;

    void build(const TrainConfig& cfg_, const std::vector<std::string>& vocab);

    LossWeights loss_weights() const;

    // One alternating update: discriminator on real-vs-detached-fake, then
    // generator on the composite objective. Deterministic in (state, sample,
    // step).
    LossBreakdown train_step(const LoadedSample& sample);

    // Trainable-parameter bookkeeping (the audit invariant).
    int trainable_param_count() const;
    int expected_trainable_count() const;
};

using EvalHook = std::function<void(long step, const Trainer&)>;

// Seeded-shuffle iteration with classical augmentation, periodic eval/viz
// hooks, and cadenced checkpointing. Returns the final checkpoint path.
std::string train_loop(const DatasetManifest& train_manifest, Trainer& trainer,
                       const std::string& out_dir, const EvalHook& eval_hook = nullptr);

void save_checkpoint(const Trainer& trainer, const std::string& path);
// Rebuilds a trainer from the archive (config snapshot, vocabulary, all
// tensors, optimizer state, step counter). Verifies version and checksum.
Trainer load_checkpoint(const std::string& path);

// Side-by-side sample grid (inputs | masks | outputs | targets).
void write_sample_grid(const std::string& path, const std::vector<std::vector<ImageBuf>>& rows);

}  // namespace aliaug
