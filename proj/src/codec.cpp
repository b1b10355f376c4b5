#include "aliaug/codec.hpp"

#include <algorithm>
#include <stdexcept>

namespace aliaug {

void Codec::init(ParamStore& ps, int rank, real alpha, Rng& rng) {
    // Projections to 3 or 4 channels cannot host the full rank; clamp.
    const int rank_lat = std::min(rank, kLatentChannels);
    const int rank_rgb = std::min(rank, 3);
    enc1.init(ps, "codec.enc1", 3, kChannels[0], 3, 2, 1, rank, alpha, rng);
    enc2.init(ps, "codec.enc2", kChannels[0], kChannels[1], 3, 2, 1, rank, alpha, rng);
    enc3.init(ps, "codec.enc3", kChannels[1], kChannels[2], 3, 2, 1, rank, alpha, rng);
    enc_proj.init(ps, "codec.enc_proj", kChannels[2], kLatentChannels, 1, 1, 0, rank_lat, alpha, rng);

    dec_proj.init(ps, "codec.dec_proj", kLatentChannels, kChannels[2], 1, 1, 0, rank_lat, alpha, rng);
    dec_up1.init(ps, "codec.dec_up1", kChannels[2], kChannels[1], 3, 1, 1, rank, alpha, rng);
    dec_up2.init(ps, "codec.dec_up2", kChannels[1], kChannels[0], 3, 1, 1, rank, alpha, rng);
    dec_up3.init(ps, "codec.dec_up3", kChannels[0], kChannels[0], 3, 1, 1, rank, alpha, rng);
    dec_out.init(ps, "codec.dec_out", kChannels[0], 3, 3, 1, 1, rank_rgb, alpha, rng);
}

std::pair<TensorPtr, std::vector<TensorPtr>> Codec::encode(const TensorPtr& x) const {
    if (x->shape.size() != 3 || x->dim(0) != 3)
        throw std::runtime_error("encode expects a {3,H,W} tensor");
    if (x->dim(1) % 8 != 0 || x->dim(2) % 8 != 0)
        throw std::runtime_error("encode input dimensions must be multiples of 8");
    std::vector<TensorPtr> taps;
    auto h = silu(enc1.forward(x));
    taps.push_back(h);
    h = silu(enc2.forward(h));
    taps.push_back(h);
    h = silu(enc3.forward(h));
    taps.push_back(h);
    auto latent = enc_proj.forward(h);
    return {latent, taps};
}

TensorPtr Codec::decode(const TensorPtr& latent, const std::vector<TensorPtr>& taps,
                        const std::vector<const ZeroConv*>& zero_convs) const {
    if (latent->shape.size() != 3 || latent->dim(0) != kLatentChannels)
        throw std::runtime_error("decode expects a {4,h,w} latent");
    if (taps.size() != kNumTaps || zero_convs.size() != kNumTaps)
        throw std::runtime_error("decode expects one zero conv per tap");
    const int lh = latent->dim(1), lw = latent->dim(2);
    const int expected[3][3] = {{kChannels[0], 4 * lh, 4 * lw},
                                {kChannels[1], 2 * lh, 2 * lw},
                                {kChannels[2], lh, lw}};
    for (int i = 0; i < kNumTaps; ++i)
        if (taps[i]->dim(0) != expected[i][0] || taps[i]->dim(1) != expected[i][1] ||
            taps[i]->dim(2) != expected[i][2])
            throw std::runtime_error("tap shape does not match the decoder ladder");

    auto h = dec_proj.forward(latent);
    h = add(h, zero_convs[2]->forward(taps[2]));
    h = silu(h);
    h = dec_up1.forward(upsample_nearest2x(h));
    h = add(h, zero_convs[1]->forward(taps[1]));
    h = silu(h);
    h = dec_up2.forward(upsample_nearest2x(h));
    h = add(h, zero_convs[0]->forward(taps[0]));
    h = silu(h);
    h = silu(dec_up3.forward(upsample_nearest2x(h)));
    return tanh_act(dec_out.forward(h));
}

std::vector<TensorPtr> Codec::zero_taps(int h, int w) {
    return {make_tensor({kChannels[0], h / 2, w / 2}),
            make_tensor({kChannels[1], h / 4, w / 4}),
            make_tensor({kChannels[2], h / 8, w / 8})};
}

int Codec::lora_param_count() const {
    return enc1.lora_param_count() + enc2.lora_param_count() + enc3.lora_param_count() +
           enc_proj.lora_param_count() + dec_proj.lora_param_count() + dec_up1.lora_param_count() +
           dec_up2.lora_param_count() + dec_up3.lora_param_count() + dec_out.lora_param_count();
}

}  // namespace aliaug
