#pragma once

#include "aliaug/tensor.hpp"

namespace aliaug {

// Elementwise and shape ops. All ops record backward closures on the active
// tape when any input requires grad; with no active tape they are pure
// inference.
TensorPtr add(const TensorPtr& a, const TensorPtr& b);
TensorPtr sub(const TensorPtr& a, const TensorPtr& b);
TensorPtr mul(const TensorPtr& a, const TensorPtr& b);
TensorPtr scale(const TensorPtr& a, real s);
TensorPtr reshape(const TensorPtr& a, std::vector<int> shape);
TensorPtr transpose2d(const TensorPtr& a);
TensorPtr slice_cols(const TensorPtr& a, int c0, int width);
TensorPtr concat_cols(const std::vector<TensorPtr>& parts);

// Activations.
TensorPtr relu(const TensorPtr& a);
TensorPtr leaky_relu(const TensorPtr& a, real slope = real(0.2));
TensorPtr silu(const TensorPtr& a);
TensorPtr tanh_act(const TensorPtr& a);
TensorPtr sigmoid_act(const TensorPtr& a);

// Linear algebra. linear() computes y = x * w^T + b with x:{N,Din},
// w:{Dout,Din}, b:{Dout} (b may be null).
TensorPtr matmul(const TensorPtr& a, const TensorPtr& b);
TensorPtr linear(const TensorPtr& x, const TensorPtr& w, const TensorPtr& b);
TensorPtr softmax_rows(const TensorPtr& a);

// Spatial ops on {C,H,W} tensors. conv2d takes the kernel flattened to
// {Cout, Cin*k*k} so low-rank deltas can be added in matrix form before the
// convolution.
TensorPtr conv2d(const TensorPtr& x, const TensorPtr& w_flat, const TensorPtr& b, int cin, int k,
                 int stride, int pad);
TensorPtr upsample_nearest2x(const TensorPtr& x);
TensorPtr global_avg_pool(const TensorPtr& x);
TensorPtr add_channel_bias(const TensorPtr& x, const TensorPtr& b);
// Per-pixel unit normalization across channels (feature comparison in the
// perceptual loss).
TensorPtr channel_unit_normalize(const TensorPtr& x, real eps = real(1e-8));

// Reductions / losses, all returning {1} tensors.
TensorPtr mean_all(const TensorPtr& a);
TensorPtr sum_all(const TensorPtr& a);
TensorPtr mse(const TensorPtr& a, const TensorPtr& b);
// Numerically stable mean BCE-with-logits against a constant 0/1 target.
TensorPtr bce_with_logits(const TensorPtr& logits, real target);
// Same, against a per-element target tensor (no grad to targets).
TensorPtr bce_with_logits_t(const TensorPtr& logits, const TensorPtr& targets);

}  // namespace aliaug
