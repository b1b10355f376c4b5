#include "aliaug/ops.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>

namespace aliaug {

namespace {
thread_local Tape* g_tape = nullptr;

using EMat = Eigen::Matrix<real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using CMap = Eigen::Map<const EMat>;
using MMap = Eigen::Map<EMat>;

bool tracked(const TensorPtr& t) { return g_tape != nullptr && t->requires_grad; }

TensorPtr out_like(std::vector<int> shape, bool any_tracked) {
    return make_tensor(std::move(shape), g_tape != nullptr && any_tracked);
}

void record(std::function<void()> fn) {
    if (g_tape) g_tape->record(std::move(fn));
}
}  // namespace

Tape* active_tape() { return g_tape; }

TapeScope::TapeScope(Tape& t) : prev_(g_tape) { g_tape = &t; }
TapeScope::~TapeScope() { g_tape = prev_; }

TensorPtr add(const TensorPtr& a, const TensorPtr& b) {
    assert(a->numel() == b->numel());
    auto out = out_like(a->shape, a->requires_grad || b->requires_grad);
    const int n = a->numel();
    for (int i = 0; i < n; ++i) out->v[i] = a->v[i] + b->v[i];
    if (out->requires_grad)
        record([a, b, out] {
            const int n = out->numel();
            if (a->requires_grad)
                for (int i = 0; i < n; ++i) a->g[i] += out->g[i];
            if (b->requires_grad)
                for (int i = 0; i < n; ++i) b->g[i] += out->g[i];
        });
    return out;
}

TensorPtr sub(const TensorPtr& a, const TensorPtr& b) {
    assert(a->numel() == b->numel());
    auto out = out_like(a->shape, a->requires_grad || b->requires_grad);
    const int n = a->numel();
    for (int i = 0; i < n; ++i) out->v[i] = a->v[i] - b->v[i];
    if (out->requires_grad)
        record([a, b, out] {
            const int n = out->numel();
            if (a->requires_grad)
                for (int i = 0; i < n; ++i) a->g[i] += out->g[i];
            if (b->requires_grad)
                for (int i = 0; i < n; ++i) b->g[i] -= out->g[i];
        });
    return out;
}

TensorPtr mul(const TensorPtr& a, const TensorPtr& b) {
    assert(a->numel() == b->numel());
    auto out = out_like(a->shape, a->requires_grad || b->requires_grad);
    const int n = a->numel();
    for (int i = 0; i < n; ++i) out->v[i] = a->v[i] * b->v[i];
    if (out->requires_grad)
        record([a, b, out] {
            const int n = out->numel();
            if (a->requires_grad)
                for (int i = 0; i < n; ++i) a->g[i] += out->g[i] * b->v[i];
            if (b->requires_grad)
                for (int i = 0; i < n; ++i) b->g[i] += out->g[i] * a->v[i];
        });
    return out;
}

TensorPtr scale(const TensorPtr& a, real s) {
    auto out = out_like(a->shape, a->requires_grad);
    const int n = a->numel();
    for (int i = 0; i < n; ++i) out->v[i] = a->v[i] * s;
    if (out->requires_grad)
        record([a, out, s] {
            const int n = out->numel();
            for (int i = 0; i < n; ++i) a->g[i] += out->g[i] * s;
        });
    return out;
}

TensorPtr reshape(const TensorPtr& a, std::vector<int> shape) {
    auto out = out_like(std::move(shape), a->requires_grad);
    assert(out->numel() == a->numel());
    out->v = a->v;
    if (out->requires_grad)
        record([a, out] {
            const int n = out->numel();
            for (int i = 0; i < n; ++i) a->g[i] += out->g[i];
        });
    return out;
}

TensorPtr transpose2d(const TensorPtr& a) {
    assert(a->shape.size() == 2);
    const int m = a->dim(0), n = a->dim(1);
    auto out = out_like({n, m}, a->requires_grad);
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) out->v[j * m + i] = a->v[i * n + j];
    if (out->requires_grad)
        record([a, out, m, n] {
            for (int i = 0; i < m; ++i)
                for (int j = 0; j < n; ++j) a->g[i * n + j] += out->g[j * m + i];
        });
    return out;
}

TensorPtr slice_cols(const TensorPtr& a, int c0, int width) {
    assert(a->shape.size() == 2);
    const int m = a->dim(0), n = a->dim(1);
    assert(c0 >= 0 && c0 + width <= n);
    auto out = out_like({m, width}, a->requires_grad);
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < width; ++j) out->v[i * width + j] = a->v[i * n + c0 + j];
    if (out->requires_grad)
        record([a, out, m, n, c0, width] {
            for (int i = 0; i < m; ++i)
                for (int j = 0; j < width; ++j) a->g[i * n + c0 + j] += out->g[i * width + j];
        });
    return out;
}

TensorPtr concat_cols(const std::vector<TensorPtr>& parts) {
    assert(!parts.empty());
    const int m = parts[0]->dim(0);
    int n = 0;
    bool any = false;
    for (const auto& p : parts) {
        assert(p->dim(0) == m);
        n += p->dim(1);
        any = any || p->requires_grad;
    }
    auto out = out_like({m, n}, any);
    int off = 0;
    for (const auto& p : parts) {
        const int w = p->dim(1);
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < w; ++j) out->v[i * n + off + j] = p->v[i * w + j];
        off += w;
    }
    if (out->requires_grad)
        record([parts, out, m, n] {
            int off = 0;
            for (const auto& p : parts) {
                const int w = p->dim(1);
                if (p->requires_grad)
                    for (int i = 0; i < m; ++i)
                        for (int j = 0; j < w; ++j) p->g[i * w + j] += out->g[i * n + off + j];
                off += w;
            }
        });
    return out;
}

namespace {
template <typename F, typename DF>
TensorPtr unary(const TensorPtr& a, F f, DF df) {
    auto out = out_like(a->shape, a->requires_grad);
    const int n = a->numel();
    for (int i = 0; i < n; ++i) out->v[i] = f(a->v[i]);
    if (out->requires_grad)
        record([a, out, df] {
            const int n = out->numel();
            for (int i = 0; i < n; ++i) a->g[i] += out->g[i] * df(a->v[i], out->v[i]);
        });
    return out;
}
}  // namespace

TensorPtr relu(const TensorPtr& a) {
    return unary(
        a, [](real x) { return x > 0 ? x : real(0); },
        [](real x, real) { return x > 0 ? real(1) : real(0); });
}

TensorPtr leaky_relu(const TensorPtr& a, real slope) {
    return unary(
        a, [slope](real x) { return x > 0 ? x : slope * x; },
        [slope](real x, real) { return x > 0 ? real(1) : slope; });
}

TensorPtr silu(const TensorPtr& a) {
    return unary(
        a,
        [](real x) {
            const real s = real(1) / (real(1) + std::exp(-x));
            return x * s;
        },
        [](real x, real) {
            const real s = real(1) / (real(1) + std::exp(-x));
            return s * (real(1) + x * (real(1) - s));
        });
}

TensorPtr tanh_act(const TensorPtr& a) {
    return unary(
        a, [](real x) { return std::tanh(x); }, [](real, real y) { return real(1) - y * y; });
}

TensorPtr sigmoid_act(const TensorPtr& a) {
    return unary(
        a, [](real x) { return real(1) / (real(1) + std::exp(-x)); },
        [](real, real y) { return y * (real(1) - y); });
}

TensorPtr matmul(const TensorPtr& a, const TensorPtr& b) {
    assert(a->shape.size() == 2 && b->shape.size() == 2);
    const int m = a->dim(0), k = a->dim(1), n = b->dim(1);
    assert(b->dim(0) == k);
    auto out = out_like({m, n}, a->requires_grad || b->requires_grad);
    CMap A(a->v.data(), m, k), B(b->v.data(), k, n);
    MMap(out->v.data(), m, n).noalias() = A * B;
    if (out->requires_grad)
        record([a, b, out, m, k, n] {
            CMap dY(out->g.data(), m, n);
            if (a->requires_grad) {
                CMap B(b->v.data(), k, n);
                MMap(a->g.data(), m, k).noalias() += dY * B.transpose();
            }
            if (b->requires_grad) {
                CMap A(a->v.data(), m, k);
                MMap(b->g.data(), k, n).noalias() += A.transpose() * dY;
            }
        });
    return out;
}

TensorPtr linear(const TensorPtr& x, const TensorPtr& w, const TensorPtr& b) {
    assert(x->shape.size() == 2 && w->shape.size() == 2);
    const int N = x->dim(0), din = x->dim(1), dout = w->dim(0);
    assert(w->dim(1) == din);
    const bool any = x->requires_grad || w->requires_grad || (b && b->requires_grad);
    auto out = out_like({N, dout}, any);
    CMap X(x->v.data(), N, din), W(w->v.data(), dout, din);
    MMap Y(out->v.data(), N, dout);
    Y.noalias() = X * W.transpose();
    if (b) {
        assert(b->numel() == dout);
        for (int i = 0; i < N; ++i)
            for (int j = 0; j < dout; ++j) out->v[i * dout + j] += b->v[j];
    }
    if (out->requires_grad)
        record([x, w, b, out, N, din, dout] {
            CMap dY(out->g.data(), N, dout);
            if (x->requires_grad) {
                CMap W(w->v.data(), dout, din);
                MMap(x->g.data(), N, din).noalias() += dY * W;
            }
            if (w->requires_grad) {
                CMap X(x->v.data(), N, din);
                MMap(w->g.data(), dout, din).noalias() += dY.transpose() * X;
            }
            if (b && b->requires_grad)
                for (int i = 0; i < N; ++i)
                    for (int j = 0; j < dout; ++j) b->g[j] += out->g[i * dout + j];
        });
    return out;
}

TensorPtr softmax_rows(const TensorPtr& a) {
    assert(a->shape.size() == 2);
    const int m = a->dim(0), n = a->dim(1);
    auto out = out_like(a->shape, a->requires_grad);
    for (int i = 0; i < m; ++i) {
        real mx = a->v[i * n];
        for (int j = 1; j < n; ++j) mx = std::max(mx, a->v[i * n + j]);
        real z = 0;
        for (int j = 0; j < n; ++j) {
            out->v[i * n + j] = std::exp(a->v[i * n + j] - mx);
            z += out->v[i * n + j];
        }
        for (int j = 0; j < n; ++j) out->v[i * n + j] /= z;
    }
    if (out->requires_grad)
        record([a, out, m, n] {
            for (int i = 0; i < m; ++i) {
                real dot = 0;
                for (int j = 0; j < n; ++j) dot += out->g[i * n + j] * out->v[i * n + j];
                for (int j = 0; j < n; ++j)
                    a->g[i * n + j] += out->v[i * n + j] * (out->g[i * n + j] - dot);
            }
        });
    return out;
}

namespace {
// im2col buffer: rows = cin*k*k, cols = ho*wo.
std::shared_ptr<std::vector<real>> im2col(const TensorPtr& x, int cin, int h, int w, int k,
                                          int stride, int pad, int ho, int wo) {
    auto col = std::make_shared<std::vector<real>>(static_cast<size_t>(cin * k * k) * ho * wo,
                                                   real(0));
    const int cols = ho * wo;
    for (int c = 0; c < cin; ++c)
        for (int ky = 0; ky < k; ++ky)
            for (int kx = 0; kx < k; ++kx) {
                const int row = (c * k + ky) * k + kx;
                real* dst = col->data() + static_cast<size_t>(row) * cols;
                for (int oy = 0; oy < ho; ++oy) {
                    const int iy = oy * stride + ky - pad;
                    if (iy < 0 || iy >= h) continue;
                    const real* src = x->v.data() + (c * h + iy) * w;
                    for (int ox = 0; ox < wo; ++ox) {
                        const int ix = ox * stride + kx - pad;
                        if (ix >= 0 && ix < w) dst[oy * wo + ox] = src[ix];
                    }
                }
            }
    return col;
}

void col2im_add(const std::vector<real>& dcol, std::vector<real>& dx, int cin, int h, int w, int k,
                int stride, int pad, int ho, int wo) {
    const int cols = ho * wo;
    for (int c = 0; c < cin; ++c)
        for (int ky = 0; ky < k; ++ky)
            for (int kx = 0; kx < k; ++kx) {
                const int row = (c * k + ky) * k + kx;
                const real* src = dcol.data() + static_cast<size_t>(row) * cols;
                for (int oy = 0; oy < ho; ++oy) {
                    const int iy = oy * stride + ky - pad;
                    if (iy < 0 || iy >= h) continue;
                    real* dst = dx.data() + (c * h + iy) * w;
                    for (int ox = 0; ox < wo; ++ox) {
                        const int ix = ox * stride + kx - pad;
                        if (ix >= 0 && ix < w) dst[ix] += src[oy * wo + ox];
                    }
                }
            }
}
}  // namespace

TensorPtr conv2d(const TensorPtr& x, const TensorPtr& w_flat, const TensorPtr& b, int cin, int k,
                 int stride, int pad) {
    assert(x->shape.size() == 3 && x->dim(0) == cin);
    const int h = x->dim(1), w = x->dim(2);
    const int cout = w_flat->dim(0);
    assert(w_flat->dim(1) == cin * k * k);
    const int ho = (h + 2 * pad - k) / stride + 1;
    const int wo = (w + 2 * pad - k) / stride + 1;
    const bool any = x->requires_grad || w_flat->requires_grad || (b && b->requires_grad);
    auto out = out_like({cout, ho, wo}, any);

    auto col = im2col(x, cin, h, w, k, stride, pad, ho, wo);
    const int ckk = cin * k * k, cols = ho * wo;
    CMap W(w_flat->v.data(), cout, ckk), C(col->data(), ckk, cols);
    MMap(out->v.data(), cout, cols).noalias() = W * C;
    if (b) {
        assert(b->numel() == cout);
        for (int c = 0; c < cout; ++c)
            for (int i = 0; i < cols; ++i) out->v[c * cols + i] += b->v[c];
    }
    if (out->requires_grad)
        record([x, w_flat, b, out, col, cin, h, w, k, stride, pad, ho, wo, cout, ckk, cols] {
            CMap dY(out->g.data(), cout, cols);
            if (w_flat->requires_grad) {
                CMap C(col->data(), ckk, cols);
                MMap(w_flat->g.data(), cout, ckk).noalias() += dY * C.transpose();
            }
            if (b && b->requires_grad)
                for (int c = 0; c < cout; ++c)
                    for (int i = 0; i < cols; ++i) b->g[c] += out->g[c * cols + i];
            if (x->requires_grad) {
                std::vector<real> dcol(static_cast<size_t>(ckk) * cols);
                CMap W(w_flat->v.data(), cout, ckk);
                MMap(dcol.data(), ckk, cols).noalias() = W.transpose() * dY;
                col2im_add(dcol, x->g, cin, h, w, k, stride, pad, ho, wo);
            }
        });
    return out;
}

TensorPtr upsample_nearest2x(const TensorPtr& x) {
    assert(x->shape.size() == 3);
    const int c = x->dim(0), h = x->dim(1), w = x->dim(2);
    auto out = out_like({c, 2 * h, 2 * w}, x->requires_grad);
    for (int ci = 0; ci < c; ++ci)
        for (int y = 0; y < 2 * h; ++y)
            for (int xx = 0; xx < 2 * w; ++xx)
                out->v[(ci * 2 * h + y) * 2 * w + xx] = x->v[(ci * h + y / 2) * w + xx / 2];
    if (out->requires_grad)
        record([x, out, c, h, w] {
            for (int ci = 0; ci < c; ++ci)
                for (int y = 0; y < 2 * h; ++y)
                    for (int xx = 0; xx < 2 * w; ++xx)
                        x->g[(ci * h + y / 2) * w + xx / 2] += out->g[(ci * 2 * h + y) * 2 * w + xx];
        });
    return out;
}

TensorPtr global_avg_pool(const TensorPtr& x) {
    assert(x->shape.size() == 3);
    const int c = x->dim(0), hw = x->dim(1) * x->dim(2);
    auto out = out_like({c}, x->requires_grad);
    for (int ci = 0; ci < c; ++ci) {
        real s = 0;
        for (int i = 0; i < hw; ++i) s += x->v[ci * hw + i];
        out->v[ci] = s / hw;
    }
    if (out->requires_grad)
        record([x, out, c, hw] {
            for (int ci = 0; ci < c; ++ci)
                for (int i = 0; i < hw; ++i) x->g[ci * hw + i] += out->g[ci] / hw;
        });
    return out;
}

TensorPtr add_channel_bias(const TensorPtr& x, const TensorPtr& b) {
    assert(x->shape.size() == 3 && b->numel() == x->dim(0));
    const int c = x->dim(0), hw = x->dim(1) * x->dim(2);
    auto out = out_like(x->shape, x->requires_grad || b->requires_grad);
    for (int ci = 0; ci < c; ++ci)
        for (int i = 0; i < hw; ++i) out->v[ci * hw + i] = x->v[ci * hw + i] + b->v[ci];
    if (out->requires_grad)
        record([x, b, out, c, hw] {
            if (x->requires_grad) {
                const int n = out->numel();
                for (int i = 0; i < n; ++i) x->g[i] += out->g[i];
            }
            if (b->requires_grad)
                for (int ci = 0; ci < c; ++ci)
                    for (int i = 0; i < hw; ++i) b->g[ci] += out->g[ci * hw + i];
        });
    return out;
}

TensorPtr channel_unit_normalize(const TensorPtr& x, real eps) {
    assert(x->shape.size() == 3);
    const int c = x->dim(0), hw = x->dim(1) * x->dim(2);
    auto out = out_like(x->shape, x->requires_grad);
    auto norms = std::make_shared<std::vector<real>>(hw);
    for (int i = 0; i < hw; ++i) {
        real s = 0;
        for (int ci = 0; ci < c; ++ci) s += x->v[ci * hw + i] * x->v[ci * hw + i];
        const real nrm = std::sqrt(s) + eps;
        (*norms)[i] = nrm;
        for (int ci = 0; ci < c; ++ci) out->v[ci * hw + i] = x->v[ci * hw + i] / nrm;
    }
    if (out->requires_grad)
        record([x, out, norms, c, hw] {
            for (int i = 0; i < hw; ++i) {
                const real nrm = (*norms)[i];
                real dot = 0;
                for (int ci = 0; ci < c; ++ci) dot += out->g[ci * hw + i] * out->v[ci * hw + i];
                for (int ci = 0; ci < c; ++ci)
                    x->g[ci * hw + i] += (out->g[ci * hw + i] - out->v[ci * hw + i] * dot) / nrm;
            }
        });
    return out;
}

TensorPtr mean_all(const TensorPtr& a) {
    const int n = a->numel();
    auto out = out_like({1}, a->requires_grad);
    real s = 0;
    for (int i = 0; i < n; ++i) s += a->v[i];
    out->v[0] = s / n;
    if (out->requires_grad)
        record([a, out, n] {
            for (int i = 0; i < n; ++i) a->g[i] += out->g[0] / n;
        });
    return out;
}

TensorPtr sum_all(const TensorPtr& a) {
    const int n = a->numel();
    auto out = out_like({1}, a->requires_grad);
    real s = 0;
    for (int i = 0; i < n; ++i) s += a->v[i];
    out->v[0] = s;
    if (out->requires_grad)
        record([a, out, n] {
            for (int i = 0; i < n; ++i) a->g[i] += out->g[0];
        });
    return out;
}

TensorPtr mse(const TensorPtr& a, const TensorPtr& b) {
    assert(a->numel() == b->numel());
    const int n = a->numel();
    auto out = out_like({1}, a->requires_grad || b->requires_grad);
    real s = 0;
    for (int i = 0; i < n; ++i) {
        const real d = a->v[i] - b->v[i];
        s += d * d;
    }
    out->v[0] = s / n;
    if (out->requires_grad)
        record([a, b, out, n] {
            const real k = real(2) * out->g[0] / n;
            for (int i = 0; i < n; ++i) {
                const real d = a->v[i] - b->v[i];
                if (a->requires_grad) a->g[i] += k * d;
                if (b->requires_grad) b->g[i] -= k * d;
            }
        });
    return out;
}

TensorPtr bce_with_logits(const TensorPtr& logits, real target) {
    const int n = logits->numel();
    auto out = out_like({1}, logits->requires_grad);
    real s = 0;
    for (int i = 0; i < n; ++i) {
        const real z = logits->v[i];
        s += std::max(z, real(0)) - z * target + std::log1p(std::exp(-std::abs(z)));
    }
    out->v[0] = s / n;
    if (out->requires_grad)
        record([logits, out, n, target] {
            const real k = out->g[0] / n;
            for (int i = 0; i < n; ++i) {
                const real sig = real(1) / (real(1) + std::exp(-logits->v[i]));
                logits->g[i] += k * (sig - target);
            }
        });
    return out;
}

TensorPtr bce_with_logits_t(const TensorPtr& logits, const TensorPtr& targets) {
    assert(logits->numel() == targets->numel());
    const int n = logits->numel();
    auto out = out_like({1}, logits->requires_grad);
    real s = 0;
    for (int i = 0; i < n; ++i) {
        const real z = logits->v[i];
        s += std::max(z, real(0)) - z * targets->v[i] + std::log1p(std::exp(-std::abs(z)));
    }
    out->v[0] = s / n;
    if (out->requires_grad)
        record([logits, targets, out, n] {
            const real k = out->g[0] / n;
            for (int i = 0; i < n; ++i) {
                const real sig = real(1) / (real(1) + std::exp(-logits->v[i]));
                logits->g[i] += k * (sig - targets->v[i]);
            }
        });
    return out;
}

}  // namespace aliaug
