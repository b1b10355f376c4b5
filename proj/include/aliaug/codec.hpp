#pragma once

#include "aliaug/nn.hpp"

#include <array>
#include <utility>
#include <vector>

namespace aliaug {

// Shared encoder / skip-connected decoder pair. Factor-8 spatial compression
// to 4 latent channels; three stride-2 blocks (32 -> 64 -> 128) with the
// post-activation output of each block captured as a skip tap. The base
// weights are frozen; adaptation happens through the LoRA deltas and the
// per-tap zero convolutions owned by the caller.
struct Codec {
    static constexpr int kLatentChannels = 4;
    static constexpr int kNumTaps = 3;
    static constexpr std::array<int, 3> kChannels = {32, 64, 128};

    LoraConv enc1, enc2, enc3, enc_proj;
    LoraConv dec_proj, dec_up1, dec_up2, dec_up3, dec_out;

    void init(ParamStore& ps, int rank, real alpha, Rng& rng);

    // x: {3,H,W} in model range, H and W multiples of 8. Returns the latent
    // {4,H/8,W/8} and the three taps in encoder order (shallow to deep).
    std::pair<TensorPtr, std::vector<TensorPtr>> encode(const TensorPtr& x) const;

    // Upsampling block k receives ZeroConv_k(tap) with taps consumed deepest
    // first. Output is tanh-bounded {3,H,W}.
    TensorPtr decode(const TensorPtr& latent, const std::vector<TensorPtr>& taps,
                     const std::vector<const ZeroConv*>& zero_convs) const;

    // Zero tensors shaped like the taps of a given input size (dropped-input
    // path).
    static std::vector<TensorPtr> zero_taps(int h, int w);

    int lora_param_count() const;
};

}  // namespace aliaug
