#pragma once

// Differentiable primitives. Each forward op has a matching backward that
// ACCUMULATES (+=) into the gradient buffers it is handed, so callers can
// sum contributions from several uses of the same weights or activations.

#include <cstdint>
#include <span>
#include <vector>

#include "qtitle/rng.hpp"
#include "qtitle/tensor.hpp"

namespace qtitle {

using Mask = std::vector<std::uint8_t>;

// y = W x + b
Vec affine(std::span<const double> x, const Tensor& W, std::span<const double> b);
void affine_backward(std::span<const double> x, const Tensor& W, std::span<const double> dy,
                     std::span<double> dx, Tensor& dW, std::span<double> db);

// y = W x (no bias)
Vec matvec(const Tensor& W, std::span<const double> x);
void matvec_backward(std::span<const double> x, const Tensor& W, std::span<const double> dy,
                     std::span<double> dx, Tensor& dW);

double dot(std::span<const double> a, std::span<const double> b);
double sigmoid(double x);
Vec concat(std::span<const double> a, std::span<const double> b);
Vec concat(std::span<const double> a, std::span<const double> b, std::span<const double> c);
void add_into(std::span<double> dst, std::span<const double> src, double scale = 1.0);

/// Softmax over unmasked positions; masked positions are exactly 0.
/// Throws ShapeError if the mask has no live position.
Vec softmax_masked(std::span<const double> logits, const Mask& mask);
/// d logits given the softmax output y and dL/dy.
void softmax_backward(std::span<const double> y, std::span<const double> dy,
                      std::span<double> dlogits);

Vec softmax(std::span<const double> logits);
Vec log_softmax(std::span<const double> logits);

std::span<const double> embedding_lookup(const Tensor& table, std::int64_t id);
void embedding_backward(Tensor& dtable, std::int64_t id, std::span<const double> dy);

/// Gate weights of one LSTM cell; rows are stacked as [input; forget; output; candidate].
struct LstmWeights {
    Parameter wx;  // 4h x n
    Parameter wh;  // 4h x h
    Parameter b;   // 4h

    LstmWeights() = default;
    LstmWeights(const std::string& prefix, std::size_t input_dim, std::size_t hidden_dim);

    std::size_t input_dim() const { return wx.value.cols(); }
    std::size_t hidden_dim() const { return wh.value.cols(); }
};

struct LstmCache {
    Vec x, h_prev, c_prev;
    Vec i, f, o, g;  // post-activation gates
    Vec c, tanh_c, h;
};

LstmCache lstm_cell(const LstmWeights& w, std::span<const double> x,
                    std::span<const double> h_prev, std::span<const double> c_prev);

void lstm_cell_backward(LstmWeights& w, const LstmCache& cache, std::span<const double> dh,
                        std::span<const double> dc, std::span<double> dx,
                        std::span<double> dh_prev, std::span<double> dc_prev);

/// Inverted-dropout mask: each entry is 0 with probability `rate`, else 1/(1-rate).
Vec dropout_mask(std::size_t n, double rate, Rng& rng);
void apply_mask(std::span<double> x, std::span<const double> mask);

}  // namespace qtitle
