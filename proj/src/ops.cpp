#include "qtitle/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <fmt/format.h>

namespace qtitle {

namespace {

void check_matvec(const Tensor& W, std::size_t n, const char* op) {
    if (W.rank() != 2 || W.cols() != n)
        throw ShapeError(fmt::format("{}: weight shape {} does not accept input shape [{}]", op,
                                     shape_string(W.shape()), n));
}

}  // namespace

Vec matvec(const Tensor& W, std::span<const double> x) {
    check_matvec(W, x.size(), "matvec");
    const std::size_t m = W.rows(), n = W.cols();
    Vec y(m, 0.0);
    const double* w = W.data();
    for (std::size_t r = 0; r < m; ++r) {
        const double* row = w + r * n;
        double acc = 0.0;
        for (std::size_t c = 0; c < n; ++c) acc += row[c] * x[c];
        y[r] = acc;
    }
    return y;
}

void matvec_backward(std::span<const double> x, const Tensor& W, std::span<const double> dy,
                     std::span<double> dx, Tensor& dW) {
    const std::size_t m = W.rows(), n = W.cols();
    const double* w = W.data();
    double* gw = dW.data();
    for (std::size_t r = 0; r < m; ++r) {
        const double g = dy[r];
        if (g == 0.0) continue;
        const double* row = w + r * n;
        double* grow = gw + r * n;
        for (std::size_t c = 0; c < n; ++c) {
            grow[c] += g * x[c];
            if (!dx.empty()) dx[c] += g * row[c];
        }
    }
}

Vec affine(std::span<const double> x, const Tensor& W, std::span<const double> b) {
    check_matvec(W, x.size(), "affine");
    if (b.size() != W.rows())
        throw ShapeError(fmt::format("affine: weight shape {} does not match bias shape [{}]",
                                     shape_string(W.shape()), b.size()));
    Vec y = matvec(W, x);
    for (std::size_t r = 0; r < y.size(); ++r) y[r] += b[r];
    require_finite(y, "affine");
    return y;
}

void affine_backward(std::span<const double> x, const Tensor& W, std::span<const double> dy,
                     std::span<double> dx, Tensor& dW, std::span<double> db) {
    matvec_backward(x, W, dy, dx, dW);
    for (std::size_t r = 0; r < dy.size(); ++r) db[r] += dy[r];
}

double dot(std::span<const double> a, std::span<const double> b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
    return acc;
}

double sigmoid(double x) {
    if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

Vec concat(std::span<const double> a, std::span<const double> b) {
    Vec out;
    out.reserve(a.size() + b.size());
    out.insert(out.end(), a.begin(), a.end());
    out.insert(out.end(), b.begin(), b.end());
    return out;
}

Vec concat(std::span<const double> a, std::span<const double> b, std::span<const double> c) {
    Vec out = concat(a, b);
    out.insert(out.end(), c.begin(), c.end());
    return out;
}

void add_into(std::span<double> dst, std::span<const double> src, double scale) {
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += scale * src[i];
}

Vec softmax_masked(std::span<const double> logits, const Mask& mask) {
    if (mask.size() != logits.size())
        throw ShapeError(fmt::format("softmax_masked: {} logits but {} mask entries", logits.size(),
                                     mask.size()));
    double mx = -std::numeric_limits<double>::infinity();
    bool any = false;
    for (std::size_t i = 0; i < logits.size(); ++i)
        if (mask[i]) {
            mx = std::max(mx, logits[i]);
            any = true;
        }
    if (!any) throw ShapeError("softmax_masked: mask has no live position");
    Vec y(logits.size(), 0.0);
    double z = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i)
        if (mask[i]) z += (y[i] = std::exp(logits[i] - mx));
    for (std::size_t i = 0; i < logits.size(); ++i)
        if (mask[i]) y[i] /= z;
    return y;
}

Vec softmax(std::span<const double> logits) {
    return softmax_masked(logits, Mask(logits.size(), 1));
}

void softmax_backward(std::span<const double> y, std::span<const double> dy,
                      std::span<double> dlogits) {
    const double s = dot(y, dy);
    for (std::size_t i = 0; i < y.size(); ++i) dlogits[i] += y[i] * (dy[i] - s);
}

Vec log_softmax(std::span<const double> logits) {
    const double mx = *std::max_element(logits.begin(), logits.end());
    double z = 0.0;
    for (double v : logits) z += std::exp(v - mx);
    const double lz = mx + std::log(z);
    Vec out(logits.size());
    for (std::size_t i = 0; i < logits.size(); ++i) out[i] = logits[i] - lz;
    return out;
}

std::span<const double> embedding_lookup(const Tensor& table, std::int64_t id) {
    if (id < 0 || static_cast<std::size_t>(id) >= table.rows())
        throw std::out_of_range(fmt::format("embedding id {} outside [0, {})", id, table.rows()));
    return table.row(static_cast<std::size_t>(id));
}

void embedding_backward(Tensor& dtable, std::int64_t id, std::span<const double> dy) {
    if (id < 0 || static_cast<std::size_t>(id) >= dtable.rows())
        throw std::out_of_range(fmt::format("embedding id {} outside [0, {})", id, dtable.rows()));
    add_into(dtable.row(static_cast<std::size_t>(id)), dy);
}

LstmWeights::LstmWeights(const std::string& prefix, std::size_t input_dim, std::size_t hidden_dim)
    : wx(prefix + ".wx", {4 * hidden_dim, input_dim}),
      wh(prefix + ".wh", {4 * hidden_dim, hidden_dim}),
      b(prefix + ".b", {4 * hidden_dim}) {}

LstmCache lstm_cell(const LstmWeights& w, std::span<const double> x,
                    std::span<const double> h_prev, std::span<const double> c_prev) {
    const std::size_t h = w.hidden_dim();
    check_matvec(w.wx.value, x.size(), "lstm_cell input");
    if (h_prev.size() != h || c_prev.size() != h)
        throw ShapeError(fmt::format("lstm_cell: hidden size {} but state shapes [{}], [{}]", h,
                                     h_prev.size(), c_prev.size()));
    Vec pre = affine(x, w.wx.value, w.b.value.span());
    const Vec rec = matvec(w.wh.value, h_prev);
    add_into(pre, rec);

    LstmCache k;
    k.x.assign(x.begin(), x.end());
    k.h_prev.assign(h_prev.begin(), h_prev.end());
    k.c_prev.assign(c_prev.begin(), c_prev.end());
    k.i.resize(h);
    k.f.resize(h);
    k.o.resize(h);
    k.g.resize(h);
    k.c.resize(h);
    k.tanh_c.resize(h);
    k.h.resize(h);
    for (std::size_t j = 0; j < h; ++j) {
        k.i[j] = sigmoid(pre[j]);
        k.f[j] = sigmoid(pre[h + j]);
        k.o[j] = sigmoid(pre[2 * h + j]);
        k.g[j] = std::tanh(pre[3 * h + j]);
        k.c[j] = k.f[j] * c_prev[j] + k.i[j] * k.g[j];
        k.tanh_c[j] = std::tanh(k.c[j]);
        k.h[j] = k.o[j] * k.tanh_c[j];
    }
    require_finite(k.c, "lstm_cell");
    return k;
}

void lstm_cell_backward(LstmWeights& w, const LstmCache& k, std::span<const double> dh,
                        std::span<const double> dc, std::span<double> dx,
                        std::span<double> dh_prev, std::span<double> dc_prev) {
    const std::size_t h = w.hidden_dim();
    Vec dpre(4 * h, 0.0);
    for (std::size_t j = 0; j < h; ++j) {
        const double dcj = dc[j] + dh[j] * k.o[j] * (1.0 - k.tanh_c[j] * k.tanh_c[j]);
        const double d_o = dh[j] * k.tanh_c[j];
        const double d_i = dcj * k.g[j];
        const double d_f = dcj * k.c_prev[j];
        const double d_g = dcj * k.i[j];
        dpre[j] = d_i * k.i[j] * (1.0 - k.i[j]);
        dpre[h + j] = d_f * k.f[j] * (1.0 - k.f[j]);
        dpre[2 * h + j] = d_o * k.o[j] * (1.0 - k.o[j]);
        dpre[3 * h + j] = d_g * (1.0 - k.g[j] * k.g[j]);
        dc_prev[j] += dcj * k.f[j];
    }
    affine_backward(k.x, w.wx.value, dpre, dx, w.wx.grad, w.b.grad.span());
    matvec_backward(k.h_prev, w.wh.value, dpre, dh_prev, w.wh.grad);
}

Vec dropout_mask(std::size_t n, double rate, Rng& rng) {
    Vec m(n, 1.0);
    if (rate <= 0.0) return m;
    const double keep = 1.0 / (1.0 - rate);
    for (auto& v : m) v = rng.uniform() < rate ? 0.0 : keep;
    return m;
}

void apply_mask(std::span<double> x, std::span<const double> mask) {
    for (std::size_t i = 0; i < x.size(); ++i) x[i] *= mask[i];
}

}  // namespace qtitle
