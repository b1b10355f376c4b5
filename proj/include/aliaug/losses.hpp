#pragma once

#include "aliaug/nn.hpp"

#include <optional>
#include <vector>

namespace aliaug {

enum class AdvRole { disc, gen };

// Three-level conv feature pyramid with a 1-channel logit head per level
// (strides 2, 4, 8). Fully trainable.
struct Discriminator {
    PlainConv c1, c2, c3;
    PlainConv h1, h2, h3;

    void init(ParamStore& ps, Rng& rng);
    // image in model range, at least 16x16 -> 3 spatial logit maps.
    std::vector<TensorPtr> forward(const TensorPtr& image) const;
};

// Frozen, seeded 3-level feature pyramid for the perceptual loss. Never
// trained; a trained extractor is a config option elsewhere, not here.
struct PerceptualNet {
    PlainConv c1, c2, c3;

    void init(ParamStore& ps, Rng& rng);
    std::vector<TensorPtr> features(const TensorPtr& image) const;
};

// Sigmoid BCE per level, averaged over levels. role=disc scores real vs
// detached fake; role=gen is the non-saturating generator objective.
TensorPtr adversarial_loss(const Discriminator& d, const TensorPtr& real_img,
                           const TensorPtr& fake_img, AdvRole role);

// Mean squared error over all pixels and channels.
TensorPtr reconstruction_loss(const TensorPtr& output, const TensorPtr& target);

// Per level: channel-unit-normalized features, mean squared difference,
// summed over levels.
TensorPtr perceptual_loss(const PerceptualNet& phi, const TensorPtr& output,
                          const TensorPtr& target);

struct LossWeights {
    real lambda_adv = real(2.5);
    real lambda_rec = real(10.0);
    real lambda_lpips = real(10.0);
    real lambda_promptsim = real(5.0);
    bool promptsim_enabled = false;
};

struct LossBreakdown {
    real adv = 0, rec = 0, lpips = 0, total = 0;
    std::optional<real> promptsim;
    LossWeights weights;
};

// Weighted sum; graph tensor plus the recorded scalar breakdown. Throws on
// non-finite parts (training divergence).
struct TotalLoss {
    TensorPtr value;
    LossBreakdown breakdown;
};
TotalLoss total_loss(const TensorPtr& adv, const TensorPtr& rec, const TensorPtr& lpips,
                     const TensorPtr& promptsim, const LossWeights& w);

}  // namespace aliaug
