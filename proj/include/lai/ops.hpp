#pragma once

#include <vector>

#include "lai/tensor.hpp"

namespace lai {

// Differentiable op set. Exactly what the model and losses need: every op
// records a tape entry when recording is on and any input requires grad.
// Images are [N,C,H,W] row-major; conv is cross-correlation (no kernel flip).

// x [N,Cin,H,W], w [Cout,Cin,kH,kW], b [Cout] -> [N,Cout,H',W']
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b,
                 int stride = 1, int pad = 0);

// k x k max windows; H,W must divide by k. Ties route the gradient to the
// first (row-major) max position.
template <typename T>
Tensor<T> max_pool2d(const Tensor<T>& x, int k);

// each pixel becomes a 2x2 block
template <typename T>
Tensor<T> upsample_nearest2x(const Tensor<T>& x);

template <typename T>
Tensor<T> relu(const Tensor<T>& x);

// x [N,Din], w [Dout,Din], b [Dout] -> [N,Dout]
template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b);

// channel-axis concat; all N,H,W must agree
template <typename T>
Tensor<T> concat_channels(const std::vector<Tensor<T>>& xs);

// v [N,C] -> [N,C,H,W], every value replicated over the spatial grid
template <typename T>
Tensor<T> broadcast_spatial(const Tensor<T>& v, int height, int width);

// elementwise, identical shapes
template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T factor);

// full reduction to a scalar (shape [1])
template <typename T>
Tensor<T> sum(const Tensor<T>& x);

}  // namespace lai
