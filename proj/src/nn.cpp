#include "aliaug/nn.hpp"

#include <cmath>
#include <cstring>
#include <stdexcept>

namespace aliaug {

void he_init(Tensor& t, int fan_in, Rng& rng) {
    const real std = std::sqrt(real(2) / fan_in);
    for (auto& v : t.v) v = rng.normal(0.0, std);
}

uint64_t hash_tensors(const std::vector<TensorPtr>& ts) {
    uint64_t h = 0xcbf29ce484222325ULL;
    auto mix = [&](const void* data, size_t n) {
        const auto* p = static_cast<const unsigned char*>(data);
        for (size_t i = 0; i < n; ++i) {
            h ^= p[i];
            h *= 0x100000001b3ULL;
        }
    };
    for (const auto& t : ts) mix(t->v.data(), t->v.size() * sizeof(real));
    return h;
}

void LoraConv::init(ParamStore& ps, const std::string& name, int cin_, int cout_, int k_,
                    int stride_, int pad_, int rank_, real alpha_, Rng& rng) {
    cin = cin_;
    cout = cout_;
    k = k_;
    stride = stride_;
    pad = pad_;
    rank = rank_;
    alpha = alpha_;
    const int fan_in = cin * k * k;
    if (rank < 1 || rank > std::min(fan_in, cout))
        throw std::runtime_error("lora rank out of range for layer " + name);
    w = ps.add(name + ".w", {cout, fan_in}, false);
    b = ps.add(name + ".b", {cout}, false);
    he_init(*w, fan_in, rng);
    A = ps.add(name + ".lora_A", {rank, fan_in}, true);
    B = ps.add(name + ".lora_B", {cout, rank}, true);
    const real a_std = real(1) / std::sqrt(static_cast<real>(fan_in));
    for (auto& v : A->v) v = rng.normal(0.0, a_std);
    // B stays zero: wrapped forward == base forward at init.
}

TensorPtr LoraConv::effective_weight() const {
    return add(w, scale(matmul(B, A), alpha / rank));
}

TensorPtr LoraConv::forward(const TensorPtr& x) const {
    return conv2d(x, effective_weight(), b, cin, k, stride, pad);
}

TensorPtr LoraConv::base_forward(const TensorPtr& x) const {
    return conv2d(x, w, b, cin, k, stride, pad);
}

void LoraLinear::init(ParamStore& ps, const std::string& name, int din_, int dout_, int rank_,
                      real alpha_, Rng& rng) {
    din = din_;
    dout = dout_;
    rank = rank_;
    alpha = alpha_;
    if (rank < 1 || rank > std::min(din, dout))
        throw std::runtime_error("lora rank out of range for layer " + name);
    w = ps.add(name + ".w", {dout, din}, false);
    b = ps.add(name + ".b", {dout}, false);
    he_init(*w, din, rng);
    A = ps.add(name + ".lora_A", {rank, din}, true);
    B = ps.add(name + ".lora_B", {dout, rank}, true);
    const real a_std = real(1) / std::sqrt(static_cast<real>(din));
    for (auto& v : A->v) v = rng.normal(0.0, a_std);
}

TensorPtr LoraLinear::forward(const TensorPtr& x) const {
    auto w_eff = add(w, scale(matmul(B, A), alpha / rank));
    return linear(x, w_eff, b);
}

TensorPtr LoraLinear::base_forward(const TensorPtr& x) const { return linear(x, w, b); }

void ZeroConv::init(ParamStore& ps, const std::string& name, int cin_, int cout_) {
    cin = cin_;
    cout = cout_;
    w = ps.add(name + ".w", {cout, cin}, true);
    b = ps.add(name + ".b", {cout}, true);
}

TensorPtr ZeroConv::forward(const TensorPtr& x) const { return conv2d(x, w, b, cin, 1, 1, 0); }

void PlainConv::init(ParamStore& ps, const std::string& name, int cin_, int cout_, int k_,
                     int stride_, int pad_, Rng& rng, bool trainable) {
    cin = cin_;
    cout = cout_;
    k = k_;
    stride = stride_;
    pad = pad_;
    w = ps.add(name + ".w", {cout, cin * k * k}, trainable);
    b = ps.add(name + ".b", {cout}, trainable);
    he_init(*w, cin * k * k, rng);
}

TensorPtr PlainConv::forward(const TensorPtr& x) const {
    return conv2d(x, w, b, cin, k, stride, pad);
}

void PlainLinear::init(ParamStore& ps, const std::string& name, int din_, int dout_, Rng& rng,
                       bool trainable) {
    din = din_;
    dout = dout_;
    w = ps.add(name + ".w", {dout, din}, trainable);
    b = ps.add(name + ".b", {dout}, trainable);
    he_init(*w, din, rng);
}

TensorPtr PlainLinear::forward(const TensorPtr& x) const { return linear(x, w, b); }

}  // namespace aliaug
