// Copyright (c) 2026 the lma authors
// SPDX-License-Identifier: Apache-2.0

#include "lma/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

#include "lma/kernels.hpp"

namespace lma::autograd {

namespace {

void require(bool ok, const std::string& msg) {
    if (!ok)
        throw std::invalid_argument(msg);
}

/// cols[(ic*k + ky)*k + kx, oy*wo + ox] for one image with zero padding.
/// cols must hold c1*k*k * ho*wo doubles.
void im2col(const double* x, double* cols, int c1, int h, int w, int k, int stride, int pad,
            int ho, int wo) {
    const long hw = static_cast<long>(h) * w;
    const long howo = static_cast<long>(ho) * wo;
    for (int ic = 0; ic < c1; ++ic)
        for (int ky = 0; ky < k; ++ky)
            for (int kx = 0; kx < k; ++kx) {
                double* row = cols + ((static_cast<long>(ic) * k + ky) * k + kx) * howo;
                const double* plane = x + static_cast<long>(ic) * hw;
                for (int oy = 0; oy < ho; ++oy) {
                    const int iy = oy * stride + ky - pad;
                    double* out = row + static_cast<long>(oy) * wo;
                    if (iy < 0 || iy >= h) {
                        for (int ox = 0; ox < wo; ++ox)
                            out[ox] = 0.0;
                        continue;
                    }
                    const double* in = plane + static_cast<long>(iy) * w;
                    for (int ox = 0; ox < wo; ++ox) {
                        const int ix = ox * stride + kx - pad;
                        out[ox] = (ix < 0 || ix >= w) ? 0.0 : in[ix];
                    }
                }
            }
}

/// Scatter-add transpose of im2col: dx_img += fold(dcols).
void col2im_acc(const double* dcols, double* dx, int c1, int h, int w, int k, int stride, int pad,
                int ho, int wo) {
    const long hw = static_cast<long>(h) * w;
    const long howo = static_cast<long>(ho) * wo;
    for (int ic = 0; ic < c1; ++ic)
        for (int ky = 0; ky < k; ++ky)
            for (int kx = 0; kx < k; ++kx) {
                const double* row = dcols + ((static_cast<long>(ic) * k + ky) * k + kx) * howo;
                double* plane = dx + static_cast<long>(ic) * hw;
                for (int oy = 0; oy < ho; ++oy) {
                    const int iy = oy * stride + ky - pad;
                    if (iy < 0 || iy >= h)
                        continue;
                    const double* in = row + static_cast<long>(oy) * wo;
                    double* out = plane + static_cast<long>(iy) * w;
                    for (int ox = 0; ox < wo; ++ox) {
                        const int ix = ox * stride + kx - pad;
                        if (ix >= 0 && ix < w)
                            out[ix] += in[ox];
                    }
                }
            }
}

} // namespace

VarPtr Tape::make_node(Tensor value, bool needs_grad) {
    auto v = std::make_shared<Var>();
    v->value = std::move(value);
    v->requires_grad = false;
    v->needs_grad = needs_grad;
    if (needs_grad)
        v->value.ensure_grad();
    return v;
}

VarPtr make_leaf(Tensor value, bool requires_grad) {
    auto v = std::make_shared<Var>();
    v->value = std::move(value);
    v->requires_grad = requires_grad;
    v->needs_grad = requires_grad;
    if (requires_grad)
        v->value.ensure_grad();
    return v;
}

VarPtr Tape::leaf(Tensor value, bool requires_grad) {
    return make_leaf(std::move(value), requires_grad);
}

VarPtr Tape::add(const VarPtr& a, const VarPtr& b) {
    require(a->value.shape() == b->value.shape(),
            "add: shape mismatch " + shape_str(a->value.shape()) + " vs " +
                shape_str(b->value.shape()));
    Tensor out(a->value.shape());
    kernels::active().add(a->value.data(), b->value.data(), out.data(), out.numel());
    VarPtr o = make_node(std::move(out), a->needs_grad || b->needs_grad);
    if (o->needs_grad)
        steps_.push_back({o, [a, b, o]() {
                              const auto& g = o->grad();
                              if (a->needs_grad)
                                  kernels::active().axpy(1.0, g.data(), a->grad().data(), g.size());
                              if (b->needs_grad)
                                  kernels::active().axpy(1.0, g.data(), b->grad().data(), g.size());
                          }});
    return o;
}

VarPtr Tape::mul(const VarPtr& a, const VarPtr& b) {
    require(a->value.shape() == b->value.shape(),
            "mul: shape mismatch " + shape_str(a->value.shape()) + " vs " +
                shape_str(b->value.shape()));
    Tensor out(a->value.shape());
    kernels::active().mul(a->value.data(), b->value.data(), out.data(), out.numel());
    VarPtr o = make_node(std::move(out), a->needs_grad || b->needs_grad);
    if (o->needs_grad)
        steps_.push_back({o, [a, b, o]() {
                              const auto& g = o->grad();
                              const std::size_t n = g.size();
                              if (a->needs_grad) {
                                  auto& da = a->grad();
                                  for (std::size_t i = 0; i < n; ++i)
                                      da[i] += g[i] * b->value[i];
                              }
                              if (b->needs_grad) {
                                  auto& db = b->grad();
                                  for (std::size_t i = 0; i < n; ++i)
                                      db[i] += g[i] * a->value[i];
                              }
                          }});
    return o;
}

VarPtr Tape::col_scale(const VarPtr& m, const VarPtr& s) {
    require(m->value.ndim() == 2, "col_scale: matrix must be rank 2");
    require(s->value.ndim() == 1, "col_scale: scale must be rank 1");
    const int rows = m->value.dim(0);
    const int cols = m->value.dim(1);
    require(cols == s->value.dim(0), "col_scale: column count " + std::to_string(cols) +
                                         " vs scale length " + std::to_string(s->value.dim(0)));
    Tensor out({rows, cols});
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j)
            out[static_cast<std::size_t>(i) * cols + j] =
                m->value[static_cast<std::size_t>(i) * cols + j] * s->value[j];
    VarPtr o = make_node(std::move(out), m->needs_grad || s->needs_grad);
    if (o->needs_grad)
        steps_.push_back({o, [m, s, o, rows, cols]() {
                              const auto& g = o->grad();
                              if (m->needs_grad) {
                                  auto& dm = m->grad();
                                  for (int i = 0; i < rows; ++i)
                                      for (int j = 0; j < cols; ++j)
                                          dm[static_cast<std::size_t>(i) * cols + j] +=
                                              g[static_cast<std::size_t>(i) * cols + j] *
                                              s->value[j];
                              }
                              if (s->needs_grad) {
                                  auto& ds = s->grad();
                                  for (int i = 0; i < rows; ++i)
                                      for (int j = 0; j < cols; ++j)
                                          ds[j] += g[static_cast<std::size_t>(i) * cols + j] *
                                                   m->value[static_cast<std::size_t>(i) * cols + j];
                              }
                          }});
    return o;
}

VarPtr Tape::matmul(const VarPtr& a, const VarPtr& b) {
    require(a->value.ndim() == 2 && b->value.ndim() == 2, "matmul: operands must be rank 2");
    const int m = a->value.dim(0), k = a->value.dim(1), n = b->value.dim(1);
    require(b->value.dim(0) == k, "matmul: inner dims " + std::to_string(k) + " vs " +
                                      std::to_string(b->value.dim(0)));
    Tensor out({m, n});
    kernels::active().matmul_nn(a->value.data(), b->value.data(), out.data(), m, k, n, false);
    VarPtr o = make_node(std::move(out), a->needs_grad || b->needs_grad);
    if (o->needs_grad)
        steps_.push_back({o, [a, b, o, m, k, n]() {
                              const auto& k_ = kernels::active();
                              const double* g = o->grad().data();
                              if (a->needs_grad) {
                                  // dA += dY * B^T
                                  std::vector<double> bt(static_cast<std::size_t>(k) * n);
                                  kernels::transpose(b->value.data(), bt.data(), k, n);
                                  k_.matmul_nn(g, bt.data(), a->grad().data(), m, n, k, true);
                              }
                              if (b->needs_grad) {
                                  // dB += A^T * dY
                                  std::vector<double> at(static_cast<std::size_t>(m) * k);
                                  kernels::transpose(a->value.data(), at.data(), m, k);
                                  k_.matmul_nn(at.data(), g, b->grad().data(), k, m, n, true);
                              }
                          }});
    return o;
}

VarPtr Tape::reshape(const VarPtr& a, Shape shape) {
    Tensor out = a->value.reshaped(std::move(shape));
    VarPtr o = make_node(std::move(out), a->needs_grad);
    if (o->needs_grad)
        steps_.push_back({o, [a, o]() {
                              const auto& g = o->grad();
                              kernels::active().axpy(1.0, g.data(), a->grad().data(), g.size());
                          }});
    return o;
}

VarPtr Tape::to_conv_kernel(const VarPtr& m, int c2, int c1, int k) {
    require(m->value.ndim() == 2, "to_conv_kernel: input must be rank 2");
    require(m->value.dim(0) == c2 * k && m->value.dim(1) == c1 * k,
            "to_conv_kernel: input " + shape_str(m->value.shape()) + " does not match [" +
                std::to_string(c2 * k) + ", " + std::to_string(c1 * k) + "]");
    const int rowlen = c1 * k;
    Tensor out({c2, c1, k, k});
    for (int oc = 0; oc < c2; ++oc)
        for (int ic = 0; ic < c1; ++ic)
            for (int ky = 0; ky < k; ++ky)
                for (int kx = 0; kx < k; ++kx)
                    out[((static_cast<std::size_t>(oc) * c1 + ic) * k + ky) * k + kx] =
                        m->value[(static_cast<std::size_t>(oc) * k + ky) * rowlen + ic * k + kx];
    VarPtr o = make_node(std::move(out), m->needs_grad);
    if (o->needs_grad)
        steps_.push_back({o, [m, o, c2, c1, k, rowlen]() {
                              const auto& g = o->grad();
                              auto& dm = m->grad();
                              for (int oc = 0; oc < c2; ++oc)
                                  for (int ic = 0; ic < c1; ++ic)
                                      for (int ky = 0; ky < k; ++ky)
                                          for (int kx = 0; kx < k; ++kx)
                                              dm[(static_cast<std::size_t>(oc) * k + ky) * rowlen +
                                                 ic * k + kx] +=
                                                  g[((static_cast<std::size_t>(oc) * c1 + ic) * k +
                                                     ky) *
                                                        k +
                                                    kx];
                          }});
    return o;
}

VarPtr Tape::conv2d(const VarPtr& x, const VarPtr& kernel, const VarPtr& bias, int stride,
                    int pad) {
    require(x->value.ndim() == 4, "conv2d: input must be [n, c, h, w]");
    require(kernel->value.ndim() == 4, "conv2d: kernel must be [c2, c1, k, k]");
    const int n = x->value.dim(0), c1 = x->value.dim(1), h = x->value.dim(2), w = x->value.dim(3);
    const int c2 = kernel->value.dim(0), k = kernel->value.dim(2);
    require(kernel->value.dim(1) == c1, "conv2d: kernel expects " +
                                            std::to_string(kernel->value.dim(1)) +
                                            " input channels, got " + std::to_string(c1));
    require(kernel->value.dim(3) == k, "conv2d: kernel must be square");
    require(stride >= 1, "conv2d: stride must be >= 1");
    if (pad < 0)
        pad = (k - 1) / 2;
    const int ho = (h + 2 * pad - k) / stride + 1;
    const int wo = (w + 2 * pad - k) / stride + 1;
    require(h + 2 * pad >= k && w + 2 * pad >= k, "conv2d: kernel larger than padded input");
    if (bias)
        require(bias->value.ndim() == 1 && bias->value.dim(0) == c2,
                "conv2d: bias must be [c2]");

    const long hw = static_cast<long>(h) * w;
    const long howo = static_cast<long>(ho) * wo;
    const int ckk = c1 * k * k;
    Tensor out({n, c2, ho, wo});
    std::vector<double> cols(static_cast<std::size_t>(ckk) * howo);
    for (int img = 0; img < n; ++img) {
        const double* ximg = x->value.data() + static_cast<long>(img) * c1 * hw;
        double* yimg = out.data() + static_cast<long>(img) * c2 * howo;
        im2col(ximg, cols.data(), c1, h, w, k, stride, pad, ho, wo);
        kernels::active().matmul_nn(kernel->value.data(), cols.data(), yimg, c2, ckk,
                                    static_cast<int>(howo), false);
        if (bias)
            for (int oc = 0; oc < c2; ++oc) {
                const double b = bias->value[oc];
                double* row = yimg + static_cast<long>(oc) * howo;
                for (long p = 0; p < howo; ++p)
                    row[p] += b;
            }
    }

    const bool needs = x->needs_grad || kernel->needs_grad || (bias && bias->needs_grad);
    VarPtr o = make_node(std::move(out), needs);
    if (needs)
        steps_.push_back(
            {o, [x, kernel, bias, o, n, c1, c2, h, w, k, stride, pad, ho, wo, hw, howo, ckk]() {
                 const auto& k_ = kernels::active();
                 std::vector<double> cols;
                 std::vector<double> colst;
                 std::vector<double> kt;
                 std::vector<double> dcols;
                 if (kernel->needs_grad) {
                     cols.resize(static_cast<std::size_t>(ckk) * howo);
                     colst.resize(static_cast<std::size_t>(ckk) * howo);
                 }
                 if (x->needs_grad) {
                     dcols.resize(static_cast<std::size_t>(ckk) * howo);
                     kt.resize(static_cast<std::size_t>(ckk) * c2);
                     kernels::transpose(kernel->value.data(), kt.data(), c2, ckk);
                 }
                 for (int img = 0; img < n; ++img) {
                     const double* gimg = o->grad().data() + static_cast<long>(img) * c2 * howo;
                     if (kernel->needs_grad) {
                         const double* ximg = x->value.data() + static_cast<long>(img) * c1 * hw;
                         im2col(ximg, cols.data(), c1, h, w, k, stride, pad, ho, wo);
                         kernels::transpose(cols.data(), colst.data(), ckk,
                                            static_cast<int>(howo));
                         k_.matmul_nn(gimg, colst.data(), kernel->grad().data(), c2,
                                      static_cast<int>(howo), ckk, true);
                     }
                     if (x->needs_grad) {
                         k_.matmul_nn(kt.data(), gimg, dcols.data(), ckk, c2,
                                      static_cast<int>(howo), false);
                         col2im_acc(dcols.data(),
                                    x->grad().data() + static_cast<long>(img) * c1 * hw, c1, h, w,
                                    k, stride, pad, ho, wo);
                     }
                     if (bias && bias->needs_grad) {
                         auto& db = bias->grad();
                         for (int oc = 0; oc < c2; ++oc) {
                             const double* row = gimg + static_cast<long>(oc) * howo;
                             double acc = 0.0;
                             for (long p = 0; p < howo; ++p)
                                 acc += row[p];
                             db[oc] += acc;
                         }
                     }
                 }
             }});
    return o;
}

VarPtr Tape::linear(const VarPtr& x, const VarPtr& w, const VarPtr& bias) {
    require(x->value.ndim() == 2, "linear: input must be [n, c_in]");
    require(w->value.ndim() == 2, "linear: weight must be [c_out, c_in]");
    const int n = x->value.dim(0), cin = x->value.dim(1), cout = w->value.dim(0);
    require(w->value.dim(1) == cin, "linear: weight expects " + std::to_string(w->value.dim(1)) +
                                        " inputs, got " + std::to_string(cin));
    if (bias)
        require(bias->value.ndim() == 1 && bias->value.dim(0) == cout,
                "linear: bias must be [c_out]");

    Tensor out({n, cout});
    std::vector<double> wt(static_cast<std::size_t>(cin) * cout);
    kernels::transpose(w->value.data(), wt.data(), cout, cin);
    kernels::active().matmul_nn(x->value.data(), wt.data(), out.data(), n, cin, cout, false);
    if (bias)
        for (int i = 0; i < n; ++i)
            for (int c = 0; c < cout; ++c)
                out[static_cast<std::size_t>(i) * cout + c] += bias->value[c];

    const bool needs = x->needs_grad || w->needs_grad || (bias && bias->needs_grad);
    VarPtr o = make_node(std::move(out), needs);
    if (needs)
        steps_.push_back({o, [x, w, bias, o, n, cin, cout]() {
                              const auto& k_ = kernels::active();
                              const double* g = o->grad().data();
                              if (x->needs_grad)
                                  k_.matmul_nn(g, w->value.data(), x->grad().data(), n, cout, cin,
                                               true);
                              if (w->needs_grad) {
                                  std::vector<double> gt(static_cast<std::size_t>(cout) * n);
                                  kernels::transpose(g, gt.data(), n, cout);
                                  k_.matmul_nn(gt.data(), x->value.data(), w->grad().data(), cout,
                                               n, cin, true);
                              }
                              if (bias && bias->needs_grad) {
                                  auto& db = bias->grad();
                                  for (int i = 0; i < n; ++i)
                                      for (int c = 0; c < cout; ++c)
                                          db[c] += g[static_cast<std::size_t>(i) * cout + c];
                              }
                          }});
    return o;
}

VarPtr Tape::relu(const VarPtr& x) {
    Tensor out(x->value.shape());
    kernels::active().relu_fwd(x->value.data(), out.data(), out.numel());
    VarPtr o = make_node(std::move(out), x->needs_grad);
    if (o->needs_grad)
        steps_.push_back({o, [x, o]() {
                              const auto& g = o->grad();
                              kernels::active().relu_bwd(x->value.data(), g.data(),
                                                         x->grad().data(), g.size());
                          }});
    return o;
}

VarPtr Tape::avg_pool_global(const VarPtr& x) {
    require(x->value.ndim() == 4, "avg_pool_global: input must be [n, c, h, w]");
    const int n = x->value.dim(0), c = x->value.dim(1), h = x->value.dim(2), w = x->value.dim(3);
    const long hw = static_cast<long>(h) * w;
    const double inv = 1.0 / static_cast<double>(hw);
    Tensor out({n, c});
    for (int i = 0; i < n; ++i)
        for (int ch = 0; ch < c; ++ch) {
            const double* plane = x->value.data() + (static_cast<long>(i) * c + ch) * hw;
            double acc = 0.0;
            for (long p = 0; p < hw; ++p)
                acc += plane[p];
            out[static_cast<std::size_t>(i) * c + ch] = acc * inv;
        }
    VarPtr o = make_node(std::move(out), x->needs_grad);
    if (o->needs_grad)
        steps_.push_back({o, [x, o, n, c, hw, inv]() {
                              const auto& g = o->grad();
                              auto& dx = x->grad();
                              for (int i = 0; i < n; ++i)
                                  for (int ch = 0; ch < c; ++ch) {
                                      const double gv =
                                          g[static_cast<std::size_t>(i) * c + ch] * inv;
                                      double* plane =
                                          dx.data() + (static_cast<long>(i) * c + ch) * hw;
                                      for (long p = 0; p < hw; ++p)
                                          plane[p] += gv;
                                  }
                          }});
    return o;
}

VarPtr Tape::cross_entropy(const VarPtr& logits, const std::vector<int>& labels) {
    require(logits->value.ndim() == 2, "cross_entropy: logits must be [n, classes]");
    const int n = logits->value.dim(0), classes = logits->value.dim(1);
    require(static_cast<int>(labels.size()) == n, "cross_entropy: " + std::to_string(labels.size()) +
                                                      " labels for " + std::to_string(n) + " rows");
    for (int lab : labels)
        require(lab >= 0 && lab < classes, "cross_entropy: label out of range");

    double total = 0.0;
    for (int i = 0; i < n; ++i) {
        const double* row = logits->value.data() + static_cast<std::size_t>(i) * classes;
        double mx = row[0];
        for (int c = 1; c < classes; ++c)
            mx = std::max(mx, row[c]);
        double se = 0.0;
        for (int c = 0; c < classes; ++c)
            se += std::exp(row[c] - mx);
        total += mx + std::log(se) - row[labels[i]];
    }
    Tensor out = Tensor::scalar(total / n);
    VarPtr o = make_node(std::move(out), logits->needs_grad);
    if (o->needs_grad)
        steps_.push_back({o, [logits, o, labels, n, classes]() {
                              const double g = o->grad()[0] / static_cast<double>(n);
                              auto& dz = logits->grad();
                              for (int i = 0; i < n; ++i) {
                                  const double* row =
                                      logits->value.data() + static_cast<std::size_t>(i) * classes;
                                  double mx = row[0];
                                  for (int c = 1; c < classes; ++c)
                                      mx = std::max(mx, row[c]);
                                  double se = 0.0;
                                  for (int c = 0; c < classes; ++c)
                                      se += std::exp(row[c] - mx);
                                  for (int c = 0; c < classes; ++c) {
                                      const double p = std::exp(row[c] - mx) / se;
                                      dz[static_cast<std::size_t>(i) * classes + c] +=
                                          g * (p - (c == labels[i] ? 1.0 : 0.0));
                                  }
                              }
                          }});
    return o;
}

VarPtr Tape::sum(const VarPtr& x) {
    double total = 0.0;
    for (std::size_t i = 0; i < x->value.numel(); ++i)
        total += x->value[i];
    VarPtr o = make_node(Tensor::scalar(total), x->needs_grad);
    if (o->needs_grad)
        steps_.push_back({o, [x, o]() {
                              const double g = o->grad()[0];
                              auto& dx = x->grad();
                              for (auto& v : dx)
                                  v += g;
                          }});
    return o;
}

void Tape::backward(const VarPtr& root) {
    require(root->value.numel() == 1, "backward: root must be rank-0");
    if (!root->needs_grad)
        throw std::logic_error("backward: no gradient flows into the root");
    root->grad()[0] += 1.0;
    for (auto it = steps_.rbegin(); it != steps_.rend(); ++it)
        it->back();
}

void Tape::clear() { steps_.clear(); }

std::vector<GradCheckEntry> finite_diff_check(
    const std::function<double(bool with_grad)>& loss,
    const std::vector<std::pair<std::string, VarPtr>>& params, int max_entries, double step,
    Rng& rng) {
    for (const auto& [name, p] : params) {
        p->value.ensure_grad();
        p->value.zero_grad();
    }
    loss(true);

    std::vector<std::vector<double>> analytic;
    analytic.reserve(params.size());
    for (const auto& [name, p] : params)
        analytic.push_back(p->grad());

    std::vector<GradCheckEntry> out;
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        const auto& name = params[pi].first;
        auto& t = params[pi].second->value;
        const std::size_t total = t.numel();

        std::vector<std::size_t> idx;
        if (max_entries <= 0 || static_cast<std::size_t>(max_entries) >= total) {
            idx.resize(total);
            for (std::size_t i = 0; i < total; ++i)
                idx[i] = i;
        } else {
            std::set<std::size_t> chosen;
            while (chosen.size() < static_cast<std::size_t>(max_entries))
                chosen.insert(static_cast<std::size_t>(rng.below(total)));
            idx.assign(chosen.begin(), chosen.end());
        }

        GradCheckEntry e;
        e.name = name;
        for (std::size_t i : idx) {
            const double orig = t[i];
            t[i] = orig + step;
            const double lp = loss(false);
            t[i] = orig - step;
            const double lm = loss(false);
            t[i] = orig;
            const double fd = (lp - lm) / (2.0 * step);
            const double ad = analytic[pi][i];
            const double rel =
                std::abs(ad - fd) / std::max({std::abs(ad), std::abs(fd), 1e-8});
            ++e.checked;
            if (rel >= e.max_rel_err) {
                e.max_rel_err = rel;
                e.ad_at_worst = ad;
                e.fd_at_worst = fd;
            }
        }
        out.push_back(std::move(e));
    }
    return out;
}

} // namespace lma::autograd
