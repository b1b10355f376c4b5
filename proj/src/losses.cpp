#include "aliaug/losses.hpp"

#include <cmath>
#include <stdexcept>

namespace aliaug {

void Discriminator::init(ParamStore& ps, Rng& rng) {
    c1.init(ps, "disc.c1", 3, 32, 3, 2, 1, rng);
    h1.init(ps, "disc.h1", 32, 1, 1, 1, 0, rng);
    c2.init(ps, "disc.c2", 32, 64, 3, 2, 1, rng);
    h2.init(ps, "disc.h2", 64, 1, 1, 1, 0, rng);
    c3.init(ps, "disc.c3", 64, 128, 3, 2, 1, rng);
    h3.init(ps, "disc.h3", 128, 1, 1, 1, 0, rng);
}

std::vector<TensorPtr> Discriminator::forward(const TensorPtr& image) const {
    if (image->shape.size() != 3 || image->dim(0) != 3)
        throw std::runtime_error("discriminator expects a {3,H,W} tensor");
    if (image->dim(1) < 16 || image->dim(2) < 16)
        throw std::runtime_error("discriminator input below the 16x16 minimum");
    auto f1 = leaky_relu(c1.forward(image));  // stride 2
    auto f2 = leaky_relu(c2.forward(f1));     // stride 4
    auto f3 = leaky_relu(c3.forward(f2));     // stride 8
    return {h1.forward(f1), h2.forward(f2), h3.forward(f3)};
}

void PerceptualNet::init(ParamStore& ps, Rng& rng) {
    c1.init(ps, "phi.c1", 3, 16, 3, 2, 1, rng, /*trainable=*/false);
    c2.init(ps, "phi.c2", 16, 32, 3, 2, 1, rng, /*trainable=*/false);
    c3.init(ps, "phi.c3", 32, 64, 3, 2, 1, rng, /*trainable=*/false);
}

std::vector<TensorPtr> PerceptualNet::features(const TensorPtr& image) const {
    auto f1 = relu(c1.forward(image));
    auto f2 = relu(c2.forward(f1));
    auto f3 = relu(c3.forward(f2));
    return {f1, f2, f3};
}

TensorPtr adversarial_loss(const Discriminator& d, const TensorPtr& real_img,
                           const TensorPtr& fake_img, AdvRole role) {
    if (real_img && fake_img && real_img->shape != fake_img->shape)
        throw std::runtime_error("adversarial_loss shape mismatch");
    if (role == AdvRole::disc) {
        auto real_logits = d.forward(real_img);
        auto fake_logits = d.forward(fake_img);
        TensorPtr acc;
        for (size_t i = 0; i < real_logits.size(); ++i) {
            auto lvl = add(bce_with_logits(real_logits[i], real(1)),
                           bce_with_logits(fake_logits[i], real(0)));
            acc = acc ? add(acc, lvl) : lvl;
        }
        return scale(acc, real(1) / real_logits.size());
    }
    // Non-saturating generator objective.
    auto fake_logits = d.forward(fake_img);
    TensorPtr acc;
    for (auto& l : fake_logits) {
        auto lvl = bce_with_logits(l, real(1));
        acc = acc ? add(acc, lvl) : lvl;
    }
    return scale(acc, real(1) / fake_logits.size());
}

TensorPtr reconstruction_loss(const TensorPtr& output, const TensorPtr& target) {
    if (output->shape != target->shape)
        throw std::runtime_error("reconstruction_loss shape mismatch");
    return mse(output, target);
}

TensorPtr perceptual_loss(const PerceptualNet& phi, const TensorPtr& output,
                          const TensorPtr& target) {
    if (output->shape != target->shape)
        throw std::runtime_error("perceptual_loss shape mismatch");
    auto fo = phi.features(output);
    auto ft = phi.features(target);
    TensorPtr acc;
    for (size_t i = 0; i < fo.size(); ++i) {
        auto lvl = mse(channel_unit_normalize(fo[i]), channel_unit_normalize(ft[i]));
        acc = acc ? add(acc, lvl) : lvl;
    }
    return acc;
}

TotalLoss total_loss(const TensorPtr& adv, const TensorPtr& rec, const TensorPtr& lpips,
                     const TensorPtr& promptsim, const LossWeights& w) {
    for (const auto& part : {adv, rec, lpips}) {
        if (!part) throw std::runtime_error("total_loss missing a component");
        if (!std::isfinite(part->v[0]))
            throw std::runtime_error("non-finite loss component (diverged)");
    }
    auto total = add(add(scale(adv, w.lambda_adv), scale(rec, w.lambda_rec)),
                     scale(lpips, w.lambda_lpips));
    TotalLoss out;
    out.breakdown.adv = adv->v[0];
    out.breakdown.rec = rec->v[0];
    out.breakdown.lpips = lpips->v[0];
    out.breakdown.weights = w;
    if (w.promptsim_enabled && promptsim) {
        if (!std::isfinite(promptsim->v[0]))
            throw std::runtime_error("non-finite promptsim component");
        total = add(total, scale(promptsim, w.lambda_promptsim));
        out.breakdown.promptsim = promptsim->v[0];
    }
    out.value = total;
    out.breakdown.total = total->v[0];
    return out;
}

}  // namespace aliaug
