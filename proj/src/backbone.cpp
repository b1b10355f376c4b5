#include "aliaug/backbone.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace aliaug {

void PromptEmbedder::init(ParamStore& ps, int vocab, int seq_len_, int d_ctx_, Rng& rng) {
    vocab_size = vocab;
    seq_len = seq_len_;
    d_ctx = d_ctx_;
    table = ps.add("embedder.table", {vocab, seq_len * d_ctx}, true);
    pos = ps.add("embedder.pos", {seq_len, d_ctx}, true);
    for (auto& v : table->v) v = rng.normal(0.0, 0.5);
    for (auto& v : pos->v) v = rng.normal(0.0, 0.1);
}

TensorPtr PromptEmbedder::forward(int prompt_id) const {
    if (prompt_id < 0 || prompt_id >= vocab_size) {
        if (strict) throw std::runtime_error("unknown prompt id: " + std::to_string(prompt_id));
        prompt_id = 0;
    }
    // One-hot row selection keeps the lookup differentiable w.r.t. the table.
    auto onehot = make_tensor({1, vocab_size});
    onehot->v[prompt_id] = real(1);
    auto row = matmul(onehot, table);                 // {1, L*d}
    return add(reshape(row, {seq_len, d_ctx}), pos);  // {L, d}
}

TensorPtr time_embed(int t, int d_t) {
    if (t < 0 || t >= 1000) throw std::runtime_error("timestep out of range [0,1000)");
    auto e = make_tensor({1, d_t});
    const int half = d_t / 2;
    for (int i = 0; i < half; ++i) {
        const real freq = std::pow(real(10000), -static_cast<real>(i) / half);
        e->v[i] = std::sin(t * freq);
        e->v[half + i] = std::cos(t * freq);
    }
    return e;
}

void ResBlock::init(ParamStore& ps, const std::string& name, int channels_, int d_t, int rank,
                    real alpha, Rng& rng) {
    channels = channels_;
    conv1.init(ps, name + ".conv1", channels, channels, 3, 1, 1, rank, alpha, rng);
    conv2.init(ps, name + ".conv2", channels, channels, 3, 1, 1, rank, alpha, rng);
    t_w = ps.add(name + ".t_w", {channels, d_t}, false);
    t_b = ps.add(name + ".t_b", {channels}, false);
    he_init(*t_w, d_t, rng);
    // Modest scale so the time bias does not dominate the frozen features.
    for (auto& v : t_w->v) v *= real(0.1);
}

TensorPtr ResBlock::forward(const TensorPtr& x, const TensorPtr& t_emb) const {
    auto h = conv1.forward(silu(x));
    auto tb = linear(t_emb, t_w, t_b);  // {1,C}
    h = add_channel_bias(h, reshape(tb, {channels}));
    h = conv2.forward(silu(h));
    return add(x, h);
}

void CrossAttention::init(ParamStore& ps, const std::string& name, int channels_, int d_ctx_,
                          int heads_, int rank, real alpha, Rng& rng) {
    channels = channels_;
    d_ctx = d_ctx_;
    heads = heads_;
    if (channels % heads != 0) throw std::runtime_error("channels not divisible by heads");
    wq.init(ps, name + ".wq", channels, channels, rank, alpha, rng);
    wk.init(ps, name + ".wk", d_ctx, channels, rank, alpha, rng);
    wv.init(ps, name + ".wv", d_ctx, channels, rank, alpha, rng);
    wo.init(ps, name + ".wo", channels, channels, rank, alpha, rng);
}

TensorPtr CrossAttention::forward(const TensorPtr& x, const TensorPtr& ctx) const {
    const int c = x->dim(0), h = x->dim(1), w = x->dim(2);
    const int tokens = h * w;
    auto xt = transpose2d(reshape(x, {c, tokens}));  // {tokens, C}
    auto q = wq.forward(xt);                         // {tokens, C}
    auto k = wk.forward(ctx);                        // {L, C}
    auto v = wv.forward(ctx);                        // {L, C}
    const int dh = c / heads;
    const real inv_sqrt = real(1) / std::sqrt(static_cast<real>(dh));
    std::vector<TensorPtr> head_outs;
    head_outs.reserve(heads);
    for (int hd = 0; hd < heads; ++hd) {
        auto qh = slice_cols(q, hd * dh, dh);
        auto kh = slice_cols(k, hd * dh, dh);
        auto vh = slice_cols(v, hd * dh, dh);
        auto att = softmax_rows(scale(matmul(qh, transpose2d(kh)), inv_sqrt));  // {tokens, L}
        head_outs.push_back(matmul(att, vh));                                   // {tokens, dh}
    }
    auto o = wo.forward(concat_cols(head_outs));  // {tokens, C}
    return add(x, reshape(transpose2d(o), {c, h, w}));
}

void UNet::init(ParamStore& ps, const UNetConfig& cfg_, int rank, real alpha, Rng& rng) {
    cfg = cfg_;
    const int rank_lat = std::min(rank, cfg.latent_channels);
    conv_in.init(ps, "unet.conv_in", cfg.latent_channels, cfg.c1, 3, 1, 1, rank, alpha, rng);
    rb1.init(ps, "unet.rb1", cfg.c1, cfg.d_t, rank, alpha, rng);
    down1.init(ps, "unet.down1", cfg.c1, cfg.c1, 3, 2, 1, rank, alpha, rng);
    rb2.init(ps, "unet.rb2", cfg.c1, cfg.d_t, rank, alpha, rng);
    down2.init(ps, "unet.down2", cfg.c1, cfg.c2, 3, 2, 1, rank, alpha, rng);
    rb_mid1.init(ps, "unet.rb_mid1", cfg.c2, cfg.d_t, rank, alpha, rng);
    attn.init(ps, "unet.attn", cfg.c2, cfg.d_ctx, cfg.heads, rank, alpha, rng);
    rb_mid2.init(ps, "unet.rb_mid2", cfg.c2, cfg.d_t, rank, alpha, rng);
    up1.init(ps, "unet.up1", cfg.c2, cfg.c1, 3, 1, 1, rank, alpha, rng);
    rb3.init(ps, "unet.rb3", cfg.c1, cfg.d_t, rank, alpha, rng);
    up2.init(ps, "unet.up2", cfg.c1, cfg.c1, 3, 1, 1, rank, alpha, rng);
    rb4.init(ps, "unet.rb4", cfg.c1, cfg.d_t, rank, alpha, rng);
    conv_out.init(ps, "unet.conv_out", cfg.c1, cfg.latent_channels, 3, 1, 1, rank_lat, alpha, rng);
}

TensorPtr UNet::forward(const TensorPtr& latent, const TensorPtr& t_emb,
                        const TensorPtr& ctx) const {
    if (latent->shape.size() != 3 || latent->dim(0) != cfg.latent_channels)
        throw std::runtime_error("unet_forward latent shape mismatch");
    if (latent->dim(1) % 4 != 0 || latent->dim(2) % 4 != 0)
        throw std::runtime_error("unet_forward latent dims must be divisible by 4");

    auto h0 = rb1.forward(conv_in.forward(latent), t_emb);  // full res, c1
    auto h1 = rb2.forward(down1.forward(h0), t_emb);        // /2, c1
    auto m = down2.forward(h1);                             // /4, c2
    m = rb_mid1.forward(m, t_emb);
    m = attn.forward(m, ctx);
    m = rb_mid2.forward(m, t_emb);
    auto u1 = up1.forward(upsample_nearest2x(m));  // /2, c1
    u1 = rb3.forward(add(u1, h1), t_emb);
    auto u2 = up2.forward(upsample_nearest2x(u1));  // full, c1
    u2 = rb4.forward(add(u2, h0), t_emb);
    return conv_out.forward(u2);
}

int UNet::lora_param_count() const {
    int n = conv_in.lora_param_count() + down1.lora_param_count() + down2.lora_param_count() +
            up1.lora_param_count() + up2.lora_param_count() + conv_out.lora_param_count();
    for (const auto* rb : {&rb1, &rb2, &rb_mid1, &rb_mid2, &rb3, &rb4})
        n += rb->conv1.lora_param_count() + rb->conv2.lora_param_count();
    for (const auto* l : {&attn.wq, &attn.wk, &attn.wv, &attn.wo}) n += l->lora_param_count();
    return n;
}

}  // namespace aliaug
