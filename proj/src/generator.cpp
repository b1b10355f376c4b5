#include "aliaug/generator.hpp"

#include <algorithm>
#include <stdexcept>

namespace aliaug {

TensorPtr fuse_features(const TensorPtr& f_mask, const TensorPtr& f_input, const ZeroConv& zc) {
    if (f_mask->shape != f_input->shape)
        throw std::runtime_error("fuse_features shape mismatch");
    return add(f_mask, zc.forward(f_input));
}

bool apply_input_dropout(Pairing pairing, real drop_prob, uint64_t seed,
                         GeneratorConfig::Mode mode) {
    if (pairing == Pairing::mask_only) return true;
    if (mode == GeneratorConfig::Mode::eval) return false;
    Rng rng(seed);
    return rng.bernoulli(drop_prob);
}

void GeneratorModel::build(const TrainConfig& cfg, const std::vector<std::string>& vocabulary,
                           uint64_t init_seed) {
    vocab = vocabulary;
    image_size = cfg.image_size;
    Rng rng(init_seed);
    codec.init(params, cfg.lora_rank_vae, cfg.lora_alpha, rng);
    UNetConfig ucfg;
    ucfg.timestep = cfg.timestep;
    unet.init(params, ucfg, cfg.lora_rank_unet, cfg.lora_alpha, rng);
    embedder.init(params, static_cast<int>(vocab.size()), ucfg.seq_len, ucfg.d_ctx, rng);
    zc_fuse.init(params, "gen.zc_fuse", Codec::kLatentChannels, Codec::kLatentChannels);
    for (int i = 0; i < Codec::kNumTaps; ++i)
        zc_taps[i].init(params, "gen.zc_tap" + std::to_string(i), Codec::kChannels[i],
                        Codec::kChannels[i]);
}

int GeneratorModel::prompt_id(const std::string& text) const {
    for (size_t i = 0; i < vocab.size(); ++i)
        if (vocab[i] == text) return static_cast<int>(i);
    throw std::runtime_error("unknown prompt: '" + text + "'");
}

std::vector<const ZeroConv*> GeneratorModel::tap_convs() const {
    return {&zc_taps[0], &zc_taps[1], &zc_taps[2]};
}

TensorPtr GeneratorModel::forward(const TensorPtr& input, const TensorPtr& mask, int prompt_id,
                                  bool drop_input, int timestep) const {
    const int h = mask->dim(1), w = mask->dim(2);
    auto [f_mask, mask_taps] = codec.encode(mask);
    (void)mask_taps;  // mask taps are discarded

    TensorPtr f_input;
    std::vector<TensorPtr> taps;
    if (drop_input || !input) {
        // Zero image through the shared encoder, zeroed skip taps.
        auto zero_img = make_tensor({3, h, w});
        f_input = codec.encode(zero_img).first;
        taps = Codec::zero_taps(h, w);
    } else {
        if (input->dim(1) != h || input->dim(2) != w)
            throw std::runtime_error("input/mask shape mismatch");
        // Blank the edit region before encoding so the in-mask content must
        // come from the mask/prompt pathway, not copied from the input.
        auto gate = make_tensor(input->shape);
        for (size_t i = 0; i < gate->v.size(); ++i)
            gate->v[i] = mask->v[i] > real(0) ? real(0) : real(1);
        auto enc = codec.encode(mul(input, gate));
        f_input = enc.first;
        taps = enc.second;
    }

    auto fused = fuse_features(f_mask, f_input, zc_fuse);
    auto ctx = embedder.forward(prompt_id);
    auto t_emb = time_embed(timestep, unet.cfg.d_t);
    ++unet_calls;
    auto z = unet.forward(fused, t_emb, ctx);
    return codec.decode(z, taps, tap_convs());
}

ImageBuf GeneratorModel::generate(const LoadedSample& s, const GeneratorConfig& cfg,
                                  uint64_t seed) const {
    if (s.mask.h == 0) throw std::runtime_error("generate requires a mask");
    const int pid = prompt_id(s.prompt);
    const bool drop = apply_input_dropout(s.pairing, cfg.drop_prob, seed, cfg.mode) || !s.input;
    TensorPtr input_t = s.input ? image_to_tensor(*s.input) : nullptr;
    auto out = forward(input_t, mask_to_tensor(s.mask), pid, drop, cfg.timestep);
    return tensor_to_image(*out);
}

int GeneratorModel::lora_param_count() const {
    return codec.lora_param_count() + unet.lora_param_count();
}

int GeneratorModel::zero_conv_param_count() const {
    int n = zc_fuse.param_count();
    for (const auto& z : zc_taps) n += z.param_count();
    return n;
}

}  // namespace aliaug
