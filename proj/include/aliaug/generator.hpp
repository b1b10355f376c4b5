#pragma once

#include "aliaug/backbone.hpp"
#include "aliaug/codec.hpp"
#include "aliaug/config.hpp"
#include "aliaug/manifest.hpp"

#include <array>
#include <string>
#include <vector>

namespace aliaug {

struct GeneratorConfig {
    enum class Mode { train, eval };
    real drop_prob = real(0.25);
    int timestep = 999;
    Mode mode = Mode::eval;
};

// Latent fusion F = F_M + ZeroConv(F_I); exactly F_M while the zero conv is
// at initialization.
TensorPtr fuse_features(const TensorPtr& f_mask, const TensorPtr& f_input, const ZeroConv& zc);

// Input-dropout decision. Train mode: seeded Bernoulli(drop_prob), except
// mask_only records which always drop. Eval mode: drop only for mask_only.
bool apply_input_dropout(Pairing pairing, real drop_prob, uint64_t seed,
                         GeneratorConfig::Mode mode);

// The end-to-end single-step editor G(I, M, T): shared codec, fusion zero
// conv, prompt/time-conditioned backbone, skip-tap decoding.
struct GeneratorModel {
    ParamStore params;
    Codec codec;
    UNet unet;
    PromptEmbedder embedder;
    ZeroConv zc_fuse;
    std::array<ZeroConv, Codec::kNumTaps> zc_taps;
    std::vector<std::string> vocab;
    int image_size = 64;
    mutable long unet_calls = 0;

    void build(const TrainConfig& cfg, const std::vector<std::string>& vocabulary,
               uint64_t init_seed);

    // Strict vocabulary lookup; throws on unknown prompt text.
    int prompt_id(const std::string& text) const;

    // Full pipeline on tensors. `input` may be null (treated as dropped).
    // Exactly one backbone pass per call.
    TensorPtr forward(const TensorPtr& input, const TensorPtr& mask, int prompt_id,
                      bool drop_input, int timestep) const;

    // Record-level convenience entry: runs forward without a tape and converts
    // back to a storage image.
    ImageBuf generate(const LoadedSample& s, const GeneratorConfig& cfg, uint64_t seed) const;

    std::vector<const ZeroConv*> tap_convs() const;
    int lora_param_count() const;
    int zero_conv_param_count() const;
    uint64_t frozen_hash() const { return hash_tensors(params.frozen()); }
};

}  // namespace aliaug
