#pragma once

#include <cassert>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <string>
#include <vector>

namespace aliaug {

using real = double;

// Dense tensor with a value buffer and a lazily meaningful gradient buffer.
// Shapes are small (images and conv weights), so plain vectors suffice.
struct Tensor {
    std::vector<int> shape;
    std::vector<real> v;
    std::vector<real> g;
    bool requires_grad = false;

    Tensor() = default;
    explicit Tensor(std::vector<int> s, bool rg = false) : shape(std::move(s)), requires_grad(rg) {
        v.assign(numel(), real(0));
        g.assign(numel(), real(0));
    }

    int numel() const {
        int n = 1;
        for (int d : shape) n *= d;
        return n;
    }
    int dim(int i) const { return shape[static_cast<size_t>(i)]; }
    void zero_grad() { std::fill(g.begin(), g.end(), real(0)); }
};

using TensorPtr = std::shared_ptr<Tensor>;

inline TensorPtr make_tensor(std::vector<int> shape, bool requires_grad = false) {
    return std::make_shared<Tensor>(std::move(shape), requires_grad);
}

// Reverse-mode tape. Ops push closures during the forward pass; backward()
// seeds the loss gradient and replays them in reverse.
class Tape {
public:
    void record(std::function<void()> fn) { ops_.push_back(std::move(fn)); }
    void backward(const TensorPtr& loss) {
        assert(loss->numel() == 1);
        loss->g[0] = real(1);
        for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) (*it)();
    }
    void clear() { ops_.clear(); }
    size_t size() const { return ops_.size(); }

private:
    std::vector<std::function<void()>> ops_;
};

Tape* active_tape();

// RAII activation of a tape for the enclosing scope. Ops executed with no
// active tape run inference-only (no closures recorded, no grad tracking).
class TapeScope {
public:
    explicit TapeScope(Tape& t);
    ~TapeScope();
    TapeScope(const TapeScope&) = delete;
    TapeScope& operator=(const TapeScope&) = delete;

private:
    Tape* prev_;
};

}  // namespace aliaug
