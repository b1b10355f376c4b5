#pragma once

#include "aliaug/ops.hpp"
#include "aliaug/rng.hpp"

#include <string>
#include <vector>

namespace aliaug {

// Named parameter registry. Frozen base weights and trainable adapters live
// side by side; trainability is just requires_grad on the tensor.
struct ParamStore {
    struct Entry {
        std::string name;
        TensorPtr t;
        bool trainable;
    };
    std::vector<Entry> entries;

    TensorPtr add(const std::string& name, std::vector<int> shape, bool trainable) {
        auto t = make_tensor(std::move(shape), trainable);
        entries.push_back({name, t, trainable});
        return t;
    }
    std::vector<TensorPtr> trainable() const {
        std::vector<TensorPtr> out;
        for (const auto& e : entries)
            if (e.trainable) out.push_back(e.t);
        return out;
    }
    std::vector<TensorPtr> frozen() const {
        std::vector<TensorPtr> out;
        for (const auto& e : entries)
            if (!e.trainable) out.push_back(e.t);
        return out;
    }
    TensorPtr find(const std::string& name) const {
        for (const auto& e : entries)
            if (e.name == name) return e.t;
        return nullptr;
    }
    int trainable_count() const {
        int n = 0;
        for (const auto& e : entries)
            if (e.trainable) n += e.t->numel();
        return n;
    }
};

void he_init(Tensor& t, int fan_in, Rng& rng);

// FNV-1a over the raw bytes of the given tensors, in registry order. Used for
// the frozen-weight conservation checks and checkpoint integrity.
uint64_t hash_tensors(const std::vector<TensorPtr>& ts);

// Convolution with a frozen base kernel and a trainable low-rank delta:
// W_eff = W + (alpha/r) * B * A with A:{r, cin*k*k}, B:{cout, r}. B starts at
// zero so the wrapped layer is exactly the base layer at initialization.
// Bias is frozen along with the base weight.
struct LoraConv {
    int cin = 0, cout = 0, k = 3, stride = 1, pad = 1, rank = 0;
    real alpha = 0;
    TensorPtr w, b;  // frozen
    TensorPtr A, B;  // trainable

    void init(ParamStore& ps, const std::string& name, int cin_, int cout_, int k_, int stride_,
              int pad_, int rank_, real alpha_, Rng& rng);
    TensorPtr effective_weight() const;
    TensorPtr forward(const TensorPtr& x) const;
    TensorPtr base_forward(const TensorPtr& x) const;
    int lora_param_count() const { return rank * (cin * k * k + cout); }
};

// Same scheme for dense projections (attention q/k/v/out).
struct LoraLinear {
    int din = 0, dout = 0, rank = 0;
    real alpha = 0;
    TensorPtr w, b;
    TensorPtr A, B;

    void init(ParamStore& ps, const std::string& name, int din_, int dout_, int rank_, real alpha_,
              Rng& rng);
    TensorPtr forward(const TensorPtr& x) const;
    TensorPtr base_forward(const TensorPtr& x) const;
    int lora_param_count() const { return rank * (din + dout); }
};

// 1x1 convolution with weight and bias zero-initialized, fully trainable.
// Output is identically zero until training moves it.
struct ZeroConv {
    int cin = 0, cout = 0;
    TensorPtr w, b;

    void init(ParamStore& ps, const std::string& name, int cin_, int cout_);
    TensorPtr forward(const TensorPtr& x) const;
    int param_count() const { return cout * cin + cout; }
};

// Ordinary trainable convolution (discriminator / downstream nets).
struct PlainConv {
    int cin = 0, cout = 0, k = 3, stride = 1, pad = 1;
    TensorPtr w, b;

    void init(ParamStore& ps, const std::string& name, int cin_, int cout_, int k_, int stride_,
              int pad_, Rng& rng, bool trainable = true);
    TensorPtr forward(const TensorPtr& x) const;
};

// Trainable dense layer.
struct PlainLinear {
    int din = 0, dout = 0;
    TensorPtr w, b;

    void init(ParamStore& ps, const std::string& name, int din_, int dout_, Rng& rng,
              bool trainable = true);
    TensorPtr forward(const TensorPtr& x) const;
};

}  // namespace aliaug
