#pragma once

#include "aliaug/nn.hpp"

#include <string>
#include <vector>

namespace aliaug {

// Learned lookup over the closed prompt vocabulary: per-id rows plus learned
// positional offsets. Fully trainable (this replaces a frozen text encoder).
struct PromptEmbedder {
    int vocab_size = 0, seq_len = 4, d_ctx = 64;
    bool strict = true;  // unknown ids error; lenient mode maps them to row 0
    TensorPtr table;     // {V, L*d_ctx}
    TensorPtr pos;       // {L, d_ctx}

    void init(ParamStore& ps, int vocab, int seq_len_, int d_ctx_, Rng& rng);
    // -> {L, d_ctx}
    TensorPtr forward(int prompt_id) const;
    int param_count() const { return table->numel() + pos->numel(); }
};

// Standard sinusoidal positional encoding of a timestep index, dim d_t.
TensorPtr time_embed(int t, int d_t = 64);

// Residual block: x + conv(silu(conv(silu(x)) + affine(t))). The time affine
// is a frozen projection; with a fixed operating timestep it contributes a
// constant per-channel bias.
struct ResBlock {
    int channels = 0;
    LoraConv conv1, conv2;
    TensorPtr t_w, t_b;  // frozen {C,d_t}, {C}

    void init(ParamStore& ps, const std::string& name, int channels_, int d_t, int rank, real alpha,
              Rng& rng);
    TensorPtr forward(const TensorPtr& x, const TensorPtr& t_emb) const;
};

// Multi-head cross attention: queries from spatial tokens, keys/values from
// the prompt context. All four projections are LoRA-wrapped.
struct CrossAttention {
    int channels = 0, d_ctx = 0, heads = 4;
    LoraLinear wq, wk, wv, wo;

    void init(ParamStore& ps, const std::string& name, int channels_, int d_ctx_, int heads_,
              int rank, real alpha, Rng& rng);
    TensorPtr forward(const TensorPtr& x, const TensorPtr& ctx) const;
};

struct UNetConfig {
    int latent_channels = 4;
    int c1 = 64, c2 = 128;
    int d_ctx = 64, seq_len = 4;
    int d_t = 64;
    int heads = 4;
    int timestep = 999;  // fixed operating timestep for single-step editing
};

// Desk-scale denoiser: 2 downsampling levels, attention-equipped middle block,
// 2 upsampling levels with additive encoder-decoder skips. Shape-preserving
// on the latent.
struct UNet {
    UNetConfig cfg;
    LoraConv conv_in, down1, down2, up1, up2, conv_out;
    ResBlock rb1, rb2, rb_mid1, rb_mid2, rb3, rb4;
    CrossAttention attn;

    void init(ParamStore& ps, const UNetConfig& cfg_, int rank, real alpha, Rng& rng);
    TensorPtr forward(const TensorPtr& latent, const TensorPtr& t_emb, const TensorPtr& ctx) const;
    int lora_param_count() const;
};

}  // namespace aliaug
