#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "aliaug/backbone.hpp"
#include "test_util.hpp"

#include <cmath>

using namespace aliaug;

TEST_CASE("prompt embedder") {
    ParamStore ps;
    Rng rng(1);
    PromptEmbedder emb;
    emb.init(ps, 5, 4, 64, rng);

    SUBCASE("shape and determinism") {
        auto a = emb.forward(2);
        CHECK(a->shape == std::vector<int>{4, 64});
        auto b = emb.forward(2);
        CHECK(a->v == b->v);
    }

    SUBCASE("distinct prompts embed distinctly") {
        auto a = emb.forward(0);
        auto b = emb.forward(3);
        real diff = 0;
        for (size_t i = 0; i < a->v.size(); ++i) diff += std::abs(a->v[i] - b->v[i]);
        CHECK(diff > real(1e-3));
    }

    SUBCASE("strict mode rejects unknown ids") {
        CHECK_THROWS_AS(emb.forward(5), std::runtime_error);
        CHECK_THROWS_AS(emb.forward(-1), std::runtime_error);
        emb.strict = false;
        auto fallback = emb.forward(99);
        CHECK(fallback->v == emb.forward(0)->v);
    }

    SUBCASE("fully trainable") {
        CHECK(ps.trainable_count() == emb.param_count());
    }
}

TEST_CASE("time embedding") {
    SUBCASE("t = 0 gives sin 0 / cos 1") {
        auto e = time_embed(0, 64);
        REQUIRE(e->numel() == 64);
        for (int i = 0; i < 32; ++i) {
            CHECK(e->v[i] == real(0));
            CHECK(e->v[32 + i] == real(1));
        }
    }
    SUBCASE("values bounded, timesteps distinct") {
        auto a = time_embed(999, 64);
        auto b = time_embed(500, 64);
        for (real v : a->v) CHECK(std::abs(v) <= real(1));
        CHECK(a->v != b->v);
    }
    SUBCASE("range enforced") {
        CHECK_THROWS_AS(time_embed(-1, 64), std::runtime_error);
        CHECK_THROWS_AS(time_embed(1000, 64), std::runtime_error);
    }
}

namespace {

// Central-difference gradient check of mean(unet-ish output) w.r.t. a
// parameter tensor.
void grad_check_param(const std::function<TensorPtr()>& forward, const TensorPtr& p,
                      int n_probe = 4) {
    Tape tape;
    {
        TapeScope scope(tape);
        auto loss = mean_all(forward());
        for (const auto& t : {p}) t->zero_grad();
        tape.backward(loss);
    }
    Rng rng(13);
    for (int probe = 0; probe < n_probe; ++probe) {
        const int i = static_cast<int>(rng.below(p->numel()));
        const real h = real(1e-5);
        const real keep = p->v[i];
        p->v[i] = keep + h;
        const real up = mean_all(forward())->v[0];
        p->v[i] = keep - h;
        const real dn = mean_all(forward())->v[0];
        p->v[i] = keep;
        const real fd = (up - dn) / (2 * h);
        const real an = p->g[i];
        CHECK(std::abs(fd - an) <= real(1e-6) + real(1e-3) * std::max(std::abs(fd), std::abs(an)));
    }
}

}  // namespace

TEST_CASE("cross attention") {
    ParamStore ps;
    Rng rng(3);
    CrossAttention attn;
    attn.init(ps, "attn", 8, 16, /*heads=*/4, /*rank=*/2, real(2), rng);

    auto x = make_tensor({8, 2, 2});
    auto ctx = make_tensor({4, 16});
    Rng data(7);
    for (auto& v : x->v) v = data.normal();
    for (auto& v : ctx->v) v = data.normal();

    SUBCASE("shape-preserving residual") {
        auto y = attn.forward(x, ctx);
        CHECK(y->shape == x->shape);
    }

    SUBCASE("gradients through the attention projections") {
        // Move the B factors off their zero init so every path carries signal.
        Rng pert(19);
        for (auto* l : {&attn.wq, &attn.wk, &attn.wv, &attn.wo})
            for (auto& v : l->B->v) v = real(0.05) * pert.normal();
        grad_check_param([&] { return attn.forward(x, ctx); }, attn.wq.A);
        grad_check_param([&] { return attn.forward(x, ctx); }, attn.wk.B);
        grad_check_param([&] { return attn.forward(x, ctx); }, attn.wo.A);
    }

    SUBCASE("context dependence") {
        // LoRA B is zero at init, so perturb it to make wk/wv active.
        for (auto& v : attn.wv.B->v) v = real(0.1);
        auto y1 = attn.forward(x, ctx);
        auto ctx2 = make_tensor({4, 16});
        for (auto& v : ctx2->v) v = data.normal();
        auto y2 = attn.forward(x, ctx2);
        CHECK(y1->v != y2->v);
    }
}

TEST_CASE("unet") {
    ParamStore ps;
    Rng rng(5);
    UNet unet;
    UNetConfig cfg;
    unet.init(ps, cfg, /*rank=*/4, real(4), rng);

    auto latent = make_tensor({4, 8, 8});
    Rng data(11);
    for (auto& v : latent->v) v = data.normal();
    auto t_emb = time_embed(cfg.timestep, cfg.d_t);
    auto ctx = make_tensor({cfg.seq_len, cfg.d_ctx});
    for (auto& v : ctx->v) v = data.normal();

    SUBCASE("shape-preserving on the latent") {
        auto y = unet.forward(latent, t_emb, ctx);
        CHECK(y->shape == latent->shape);
    }

    SUBCASE("bad latent shapes rejected") {
        auto wrong = make_tensor({3, 8, 8});
        CHECK_THROWS_AS(unet.forward(wrong, t_emb, ctx), std::runtime_error);
        auto odd = make_tensor({4, 6, 6});
        CHECK_THROWS_AS(unet.forward(odd, t_emb, ctx), std::runtime_error);
    }

    SUBCASE("context reaches the output through the frozen attention base") {
        auto y1 = unet.forward(latent, t_emb, ctx);
        auto ctx2 = make_tensor({cfg.seq_len, cfg.d_ctx});
        for (auto& v : ctx2->v) v = data.normal();
        auto y2 = unet.forward(latent, t_emb, ctx2);
        CHECK(y1->v != y2->v);
    }

    SUBCASE("only LoRA tensors are trainable") {
        CHECK(ps.trainable_count() == unet.lora_param_count());
        const uint64_t before = hash_tensors(ps.frozen());
        auto y = unet.forward(latent, t_emb, ctx);
        CHECK(hash_tensors(ps.frozen()) == before);
    }
}
