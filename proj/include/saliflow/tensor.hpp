#pragma once

// Minimal define-by-run autodiff over dense double tensors (NCHW layout for
// feature maps). Each op builds the forward value eagerly and records a
// closure that scatters gradients to its parents; backward() walks the graph
// in reverse topological order. Single-threaded and deterministic: identical
// inputs give bit-identical outputs and gradients.

#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <string>
#include <unordered_set>
#include <vector>

#include "saliflow/error.hpp"
#include "saliflow/rng.hpp"

namespace saliflow {

class Tensor {
public:
    struct Node {
        std::vector<double> data;
        std::vector<double> grad;  // lazily sized
        std::vector<int> shape;
        bool requires_grad = false;
        std::vector<std::shared_ptr<Node>> parents;
        std::function<void(Node&)> backward_fn;
    };

    Tensor() = default;
    explicit Tensor(std::shared_ptr<Node> n) : n_(std::move(n)) {}

    static Tensor zeros(std::vector<int> shape, bool requires_grad = false) {
        auto n = std::make_shared<Node>();
        n->shape = std::move(shape);
        n->data.assign(numel_of(n->shape), 0.0);
        n->requires_grad = requires_grad;
        return Tensor(std::move(n));
    }

    static Tensor full(std::vector<int> shape, double value, bool requires_grad = false) {
        Tensor t = zeros(std::move(shape), requires_grad);
        for (auto& v : t.n_->data) v = value;
        return t;
    }

    static Tensor from_vector(std::vector<int> shape, std::vector<double> data,
                              bool requires_grad = false) {
        if (numel_of(shape) != data.size())
            throw DimensionError("tensor: data size does not match shape");
        auto n = std::make_shared<Node>();
        n->shape = std::move(shape);
        n->data = std::move(data);
        n->requires_grad = requires_grad;
        return Tensor(std::move(n));
    }

    // He-style init for conv/linear weights.
    static Tensor randn(std::vector<int> shape, Rng& rng, double stddev) {
        Tensor t = zeros(std::move(shape), true);
        for (auto& v : t.n_->data) v = rng.next_gaussian() * stddev;
        return t;
    }

    bool defined() const { return static_cast<bool>(n_); }
    const std::vector<int>& shape() const { return n_->shape; }
    int dim(int i) const { return n_->shape[static_cast<std::size_t>(i)]; }
    int ndim() const { return static_cast<int>(n_->shape.size()); }
    std::size_t numel() const { return n_->data.size(); }

    std::vector<double>& data() { return n_->data; }
    const std::vector<double>& data() const { return n_->data; }
    double value() const {
        if (numel() != 1) throw ValueError("tensor: value() requires a scalar");
        return n_->data[0];
    }

    bool requires_grad() const { return n_->requires_grad; }
    std::vector<double>& grad() {
        ensure_grad(*n_);
        return n_->grad;
    }

    void zero_grad() { n_->grad.assign(n_->data.size(), 0.0); }

    std::shared_ptr<Node> node() const { return n_; }

    // Reverse-mode sweep from a scalar.
    void backward() {
        if (numel() != 1) throw ValueError("tensor: backward() requires a scalar loss");
        std::vector<Node*> order;
        std::unordered_set<Node*> seen;
        topo(n_.get(), seen, order);
        ensure_grad(*n_);
        n_->grad[0] = 1.0;
        for (auto it = order.rbegin(); it != order.rend(); ++it)
            if ((*it)->backward_fn) (*it)->backward_fn(**it);
    }

    static void ensure_grad(Node& n) {
        if (n.grad.size() != n.data.size()) n.grad.assign(n.data.size(), 0.0);
    }

    static std::size_t numel_of(const std::vector<int>& shape) {
        std::size_t n = 1;
        for (int d : shape) {
            if (d <= 0) throw DimensionError("tensor: shape entries must be positive");
            n *= static_cast<std::size_t>(d);
        }
        return n;
    }

private:
    static void topo(Node* n, std::unordered_set<Node*>& seen, std::vector<Node*>& order) {
        if (!n || seen.count(n)) return;
        seen.insert(n);
        for (auto& p : n->parents) topo(p.get(), seen, order);
        order.push_back(n);
    }

    std::shared_ptr<Node> n_;
};

namespace ops {

namespace detail {

inline Tensor make_result(std::vector<int> shape, std::vector<Tensor> parents) {
    auto n = std::make_shared<Tensor::Node>();
    n->shape = std::move(shape);
    n->data.assign(Tensor::numel_of(n->shape), 0.0);
    for (auto& p : parents)
        if (p.node()->requires_grad) n->requires_grad = true;
    if (n->requires_grad)
        for (auto& p : parents) n->parents.push_back(p.node());
    return Tensor(std::move(n));
}

inline void check_4d(const Tensor& t, const char* who) {
    if (t.ndim() != 4) throw DimensionError(std::string(who) + ": expected NCHW tensor");
}

}  // namespace detail

inline Tensor add(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) throw DimensionError("add: shape mismatch");
    Tensor out = detail::make_result(a.shape(), {a, b});
    auto& y = out.data();
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = a.data()[i] + b.data()[i];
    if (out.requires_grad()) {
        auto an = a.node(), bn = b.node();
        out.node()->backward_fn = [an, bn](Tensor::Node& self) {
            if (an->requires_grad) {
                Tensor::ensure_grad(*an);
                for (std::size_t i = 0; i < self.grad.size(); ++i) an->grad[i] += self.grad[i];
            }
            if (bn->requires_grad) {
                Tensor::ensure_grad(*bn);
                for (std::size_t i = 0; i < self.grad.size(); ++i) bn->grad[i] += self.grad[i];
            }
        };
    }
    return out;
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) throw DimensionError("mul: shape mismatch");
    Tensor out = detail::make_result(a.shape(), {a, b});
    for (std::size_t i = 0; i < out.data().size(); ++i)
        out.data()[i] = a.data()[i] * b.data()[i];
    if (out.requires_grad()) {
        auto an = a.node(), bn = b.node();
        out.node()->backward_fn = [an, bn](Tensor::Node& self) {
            if (an->requires_grad) {
                Tensor::ensure_grad(*an);
                for (std::size_t i = 0; i < self.grad.size(); ++i)
                    an->grad[i] += self.grad[i] * bn->data[i];
            }
            if (bn->requires_grad) {
                Tensor::ensure_grad(*bn);
                for (std::size_t i = 0; i < self.grad.size(); ++i)
                    bn->grad[i] += self.grad[i] * an->data[i];
            }
        };
    }
    return out;
}

inline Tensor sum(const Tensor& a) {
    Tensor out = detail::make_result({1}, {a});
    double acc = 0.0;
    for (double v : a.data()) acc += v;
    out.data()[0] = acc;
    if (out.requires_grad()) {
        auto an = a.node();
        out.node()->backward_fn = [an](Tensor::Node& self) {
            Tensor::ensure_grad(*an);
            for (std::size_t i = 0; i < an->grad.size(); ++i) an->grad[i] += self.grad[0];
        };
    }
    return out;
}

inline Tensor scale(const Tensor& a, double s) {
    Tensor out = detail::make_result(a.shape(), {a});
    for (std::size_t i = 0; i < out.data().size(); ++i) out.data()[i] = a.data()[i] * s;
    if (out.requires_grad()) {
        auto an = a.node();
        out.node()->backward_fn = [an, s](Tensor::Node& self) {
            Tensor::ensure_grad(*an);
            for (std::size_t i = 0; i < self.grad.size(); ++i) an->grad[i] += self.grad[i] * s;
        };
    }
    return out;
}

inline Tensor relu(const Tensor& a) {
    Tensor out = detail::make_result(a.shape(), {a});
    for (std::size_t i = 0; i < out.data().size(); ++i)
        out.data()[i] = a.data()[i] > 0.0 ? a.data()[i] : 0.0;
    if (out.requires_grad()) {
        auto an = a.node();
        out.node()->backward_fn = [an](Tensor::Node& self) {
            Tensor::ensure_grad(*an);
            for (std::size_t i = 0; i < self.grad.size(); ++i)
                if (an->data[i] > 0.0) an->grad[i] += self.grad[i];
        };
    }
    return out;
}

inline Tensor sigmoid(const Tensor& a) {
    Tensor out = detail::make_result(a.shape(), {a});
    for (std::size_t i = 0; i < out.data().size(); ++i)
        out.data()[i] = 1.0 / (1.0 + std::exp(-a.data()[i]));
    if (out.requires_grad()) {
        auto an = a.node();
        out.node()->backward_fn = [an](Tensor::Node& self) {
            Tensor::ensure_grad(*an);
            for (std::size_t i = 0; i < self.grad.size(); ++i) {
                double y = self.data[i];
                an->grad[i] += self.grad[i] * y * (1.0 - y);
            }
        };
    }
    return out;
}

// x: [N,Cin,H,W], w: [Cout,Cin,kh,kw], b: [Cout] (may be undefined for
// bias-free convolutions). Zero padding, square stride.
inline Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int pad) {
    detail::check_4d(x, "conv2d");
    if (w.ndim() != 4) throw DimensionError("conv2d: weight must be 4d");
    const int n = x.dim(0), cin = x.dim(1), h = x.dim(2), wd = x.dim(3);
    const int cout = w.dim(0), kh = w.dim(2), kw = w.dim(3);
    if (w.dim(1) != cin) throw DimensionError("conv2d: channel mismatch");
    if (b.defined() && (b.ndim() != 1 || b.dim(0) != cout))
        throw DimensionError("conv2d: bias shape mismatch");
    const int oh = (h + 2 * pad - kh) / stride + 1;
    const int ow = (wd + 2 * pad - kw) / stride + 1;
    if (oh <= 0 || ow <= 0) throw DimensionError("conv2d: output would be empty");

    std::vector<Tensor> parents = {x, w};
    if (b.defined()) parents.push_back(b);
    Tensor out = detail::make_result({n, cout, oh, ow}, parents);

    const double* xd = x.data().data();
    const double* wdp = w.data().data();
    double* yd = out.data().data();
    auto xi = [=](int nn, int c, int yy, int xx) {
        return ((static_cast<std::size_t>(nn) * cin + c) * h + yy) * wd + xx;
    };
    auto wi = [=](int co, int ci, int ky, int kx) {
        return ((static_cast<std::size_t>(co) * cin + ci) * kh + ky) * kw + kx;
    };
    auto yi = [=](int nn, int co, int yy, int xx) {
        return ((static_cast<std::size_t>(nn) * cout + co) * oh + yy) * ow + xx;
    };

    for (int nn = 0; nn < n; ++nn)
        for (int co = 0; co < cout; ++co) {
            const double bias = b.defined() ? b.data()[static_cast<std::size_t>(co)] : 0.0;
            for (int oy = 0; oy < oh; ++oy)
                for (int ox = 0; ox < ow; ++ox) {
                    double acc = bias;
                    for (int ci = 0; ci < cin; ++ci)
                        for (int ky = 0; ky < kh; ++ky) {
                            const int sy = oy * stride - pad + ky;
                            if (sy < 0 || sy >= h) continue;
                            for (int kx = 0; kx < kw; ++kx) {
                                const int sx = ox * stride - pad + kx;
                                if (sx < 0 || sx >= wd) continue;
                                acc += xd[xi(nn, ci, sy, sx)] * wdp[wi(co, ci, ky, kx)];
                            }
                        }
                    yd[yi(nn, co, oy, ox)] = acc;
                }
        }

    if (out.requires_grad()) {
        auto xn = x.node(), wn = w.node();
        auto bn = b.defined() ? b.node() : nullptr;
        out.node()->backward_fn = [=](Tensor::Node& self) {
            const double* gy = self.grad.data();
            if (xn->requires_grad) Tensor::ensure_grad(*xn);
            if (wn->requires_grad) Tensor::ensure_grad(*wn);
            if (bn && bn->requires_grad) Tensor::ensure_grad(*bn);
            for (int nn = 0; nn < n; ++nn)
                for (int co = 0; co < cout; ++co)
                    for (int oy = 0; oy < oh; ++oy)
                        for (int ox = 0; ox < ow; ++ox) {
                            const double g = gy[yi(nn, co, oy, ox)];
                            if (g == 0.0) continue;
                            if (bn && bn->requires_grad)
                                bn->grad[static_cast<std::size_t>(co)] += g;
                            for (int ci = 0; ci < cin; ++ci)
                                for (int ky = 0; ky < kh; ++ky) {
                                    const int sy = oy * stride - pad + ky;
                                    if (sy < 0 || sy >= h) continue;
                                    for (int kx = 0; kx < kw; ++kx) {
                                        const int sx = ox * stride - pad + kx;
                                        if (sx < 0 || sx >= wd) continue;
                                        if (wn->requires_grad)
                                            wn->grad[wi(co, ci, ky, kx)] +=
                                                g * xn->data[xi(nn, ci, sy, sx)];
                                        if (xn->requires_grad)
                                            xn->grad[xi(nn, ci, sy, sx)] +=
                                                g * wn->data[wi(co, ci, ky, kx)];
                                    }
                                }
                        }
        };
    }
    return out;
}

// x: [N,F], w: [G,F], b: [G] (optional).
inline Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
    if (x.ndim() != 2 || w.ndim() != 2) throw DimensionError("linear: expected 2d tensors");
    const int n = x.dim(0), f = x.dim(1), g = w.dim(0);
    if (w.dim(1) != f) throw DimensionError("linear: feature mismatch");
    if (b.defined() && (b.ndim() != 1 || b.dim(0) != g))
        throw DimensionError("linear: bias shape mismatch");
    std::vector<Tensor> parents = {x, w};
    if (b.defined()) parents.push_back(b);
    Tensor out = detail::make_result({n, g}, parents);
    for (int nn = 0; nn < n; ++nn)
        for (int gg = 0; gg < g; ++gg) {
            double acc = b.defined() ? b.data()[static_cast<std::size_t>(gg)] : 0.0;
            for (int ff = 0; ff < f; ++ff)
                acc += x.data()[static_cast<std::size_t>(nn) * f + ff] *
                       w.data()[static_cast<std::size_t>(gg) * f + ff];
            out.data()[static_cast<std::size_t>(nn) * g + gg] = acc;
        }
    if (out.requires_grad()) {
        auto xn = x.node(), wn = w.node();
        auto bn = b.defined() ? b.node() : nullptr;
        out.node()->backward_fn = [=](Tensor::Node& self) {
            if (xn->requires_grad) Tensor::ensure_grad(*xn);
            if (wn->requires_grad) Tensor::ensure_grad(*wn);
            if (bn && bn->requires_grad) Tensor::ensure_grad(*bn);
            for (int nn = 0; nn < n; ++nn)
                for (int gg = 0; gg < g; ++gg) {
                    const double gd = self.grad[static_cast<std::size_t>(nn) * g + gg];
                    if (gd == 0.0) continue;
                    if (bn && bn->requires_grad) bn->grad[static_cast<std::size_t>(gg)] += gd;
                    for (int ff = 0; ff < f; ++ff) {
                        if (wn->requires_grad)
                            wn->grad[static_cast<std::size_t>(gg) * f + ff] +=
                                gd * xn->data[static_cast<std::size_t>(nn) * f + ff];
                        if (xn->requires_grad)
                            xn->grad[static_cast<std::size_t>(nn) * f + ff] +=
                                gd * wn->data[static_cast<std::size_t>(gg) * f + ff];
                    }
                }
        };
    }
    return out;
}

inline Tensor concat_channels(const Tensor& a, const Tensor& b) {
    detail::check_4d(a, "concat");
    detail::check_4d(b, "concat");
    if (a.dim(0) != b.dim(0) || a.dim(2) != b.dim(2) || a.dim(3) != b.dim(3))
        throw DimensionError("concat: non-channel dims must match");
    const int n = a.dim(0), ca = a.dim(1), cb = b.dim(1), h = a.dim(2), w = a.dim(3);
    Tensor out = detail::make_result({n, ca + cb, h, w}, {a, b});
    const std::size_t plane = static_cast<std::size_t>(h) * w;
    for (int nn = 0; nn < n; ++nn) {
        std::copy_n(a.data().begin() + static_cast<std::ptrdiff_t>(nn * ca * plane), ca * plane,
                    out.data().begin() + static_cast<std::ptrdiff_t>(nn * (ca + cb) * plane));
        std::copy_n(b.data().begin() + static_cast<std::ptrdiff_t>(nn * cb * plane), cb * plane,
                    out.data().begin() +
                        static_cast<std::ptrdiff_t>((nn * (ca + cb) + ca) * plane));
    }
    if (out.requires_grad()) {
        auto an = a.node(), bn = b.node();
        out.node()->backward_fn = [=](Tensor::Node& self) {
            if (an->requires_grad) Tensor::ensure_grad(*an);
            if (bn->requires_grad) Tensor::ensure_grad(*bn);
            for (int nn = 0; nn < n; ++nn) {
                if (an->requires_grad)
                    for (std::size_t i = 0; i < ca * plane; ++i)
                        an->grad[nn * ca * plane + i] += self.grad[nn * (ca + cb) * plane + i];
                if (bn->requires_grad)
                    for (std::size_t i = 0; i < cb * plane; ++i)
                        bn->grad[nn * cb * plane + i] +=
                            self.grad[(nn * (ca + cb) + ca) * plane + i];
            }
        };
    }
    return out;
}

inline Tensor global_avg_pool(const Tensor& x) {
    detail::check_4d(x, "global_avg_pool");
    const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    const std::size_t plane = static_cast<std::size_t>(h) * w;
    Tensor out = detail::make_result({n, c}, {x});
    for (int nn = 0; nn < n; ++nn)
        for (int cc = 0; cc < c; ++cc) {
            double acc = 0.0;
            for (std::size_t i = 0; i < plane; ++i)
                acc += x.data()[(static_cast<std::size_t>(nn) * c + cc) * plane + i];
            out.data()[static_cast<std::size_t>(nn) * c + cc] = acc / static_cast<double>(plane);
        }
    if (out.requires_grad()) {
        auto xn = x.node();
        out.node()->backward_fn = [=](Tensor::Node& self) {
            Tensor::ensure_grad(*xn);
            for (int nn = 0; nn < n; ++nn)
                for (int cc = 0; cc < c; ++cc) {
                    const double g = self.grad[static_cast<std::size_t>(nn) * c + cc] /
                                     static_cast<double>(plane);
                    for (std::size_t i = 0; i < plane; ++i)
                        xn->grad[(static_cast<std::size_t>(nn) * c + cc) * plane + i] += g;
                }
        };
    }
    return out;
}

inline Tensor global_max_pool(const Tensor& x) {
    detail::check_4d(x, "global_max_pool");
    const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    const std::size_t plane = static_cast<std::size_t>(h) * w;
    Tensor out = detail::make_result({n, c}, {x});
    auto argmax = std::make_shared<std::vector<std::size_t>>(
        static_cast<std::size_t>(n) * c, 0);
    for (int nn = 0; nn < n; ++nn)
        for (int cc = 0; cc < c; ++cc) {
            const std::size_t base = (static_cast<std::size_t>(nn) * c + cc) * plane;
            std::size_t best = 0;
            double bv = x.data()[base];
            for (std::size_t i = 1; i < plane; ++i)
                if (x.data()[base + i] > bv) {
                    bv = x.data()[base + i];
                    best = i;
                }
            (*argmax)[static_cast<std::size_t>(nn) * c + cc] = base + best;
            out.data()[static_cast<std::size_t>(nn) * c + cc] = bv;
        }
    if (out.requires_grad()) {
        auto xn = x.node();
        out.node()->backward_fn = [=](Tensor::Node& self) {
            Tensor::ensure_grad(*xn);
            for (std::size_t i = 0; i < self.grad.size(); ++i)
                xn->grad[(*argmax)[i]] += self.grad[i];
        };
    }
    return out;
}

// x: [N,C,H,W] scaled per-channel by g: [N,C].
inline Tensor mul_channel(const Tensor& x, const Tensor& g) {
    detail::check_4d(x, "mul_channel");
    if (g.ndim() != 2 || g.dim(0) != x.dim(0) || g.dim(1) != x.dim(1))
        throw DimensionError("mul_channel: gate shape mismatch");
    const int n = x.dim(0), c = x.dim(1);
    const std::size_t plane = static_cast<std::size_t>(x.dim(2)) * x.dim(3);
    Tensor out = detail::make_result(x.shape(), {x, g});
    for (int nn = 0; nn < n; ++nn)
        for (int cc = 0; cc < c; ++cc) {
            const double gv = g.data()[static_cast<std::size_t>(nn) * c + cc];
            const std::size_t base = (static_cast<std::size_t>(nn) * c + cc) * plane;
            for (std::size_t i = 0; i < plane; ++i)
                out.data()[base + i] = x.data()[base + i] * gv;
        }
    if (out.requires_grad()) {
        auto xn = x.node(), gn = g.node();
        out.node()->backward_fn = [=](Tensor::Node& self) {
            if (xn->requires_grad) Tensor::ensure_grad(*xn);
            if (gn->requires_grad) Tensor::ensure_grad(*gn);
            for (int nn = 0; nn < n; ++nn)
                for (int cc = 0; cc < c; ++cc) {
                    const std::size_t gi = static_cast<std::size_t>(nn) * c + cc;
                    const std::size_t base = gi * plane;
                    for (std::size_t i = 0; i < plane; ++i) {
                        if (xn->requires_grad)
                            xn->grad[base + i] += self.grad[base + i] * gn->data[gi];
                        if (gn->requires_grad)
                            gn->grad[gi] += self.grad[base + i] * xn->data[base + i];
                    }
                }
        };
    }
    return out;
}

// x: [N,C,H,W] scaled per-pixel by g: [N,1,H,W].
inline Tensor mul_spatial(const Tensor& x, const Tensor& g) {
    detail::check_4d(x, "mul_spatial");
    detail::check_4d(g, "mul_spatial");
    if (g.dim(0) != x.dim(0) || g.dim(1) != 1 || g.dim(2) != x.dim(2) || g.dim(3) != x.dim(3))
        throw DimensionError("mul_spatial: gate shape mismatch");
    const int n = x.dim(0), c = x.dim(1);
    const std::size_t plane = static_cast<std::size_t>(x.dim(2)) * x.dim(3);
    Tensor out = detail::make_result(x.shape(), {x, g});
    for (int nn = 0; nn < n; ++nn)
        for (int cc = 0; cc < c; ++cc) {
            const std::size_t base = (static_cast<std::size_t>(nn) * c + cc) * plane;
            const std::size_t gbase = static_cast<std::size_t>(nn) * plane;
            for (std::size_t i = 0; i < plane; ++i)
                out.data()[base + i] = x.data()[base + i] * g.data()[gbase + i];
        }
    if (out.requires_grad()) {
        auto xn = x.node(), gn = g.node();
        out.node()->backward_fn = [=](Tensor::Node& self) {
            if (xn->requires_grad) Tensor::ensure_grad(*xn);
            if (gn->requires_grad) Tensor::ensure_grad(*gn);
            for (int nn = 0; nn < n; ++nn)
                for (int cc = 0; cc < c; ++cc) {
                    const std::size_t base = (static_cast<std::size_t>(nn) * c + cc) * plane;
                    const std::size_t gbase = static_cast<std::size_t>(nn) * plane;
                    for (std::size_t i = 0; i < plane; ++i) {
                        if (xn->requires_grad)
                            xn->grad[base + i] += self.grad[base + i] * gn->data[gbase + i];
                        if (gn->requires_grad)
                            gn->grad[gbase + i] += self.grad[base + i] * xn->data[base + i];
                    }
                }
        };
    }
    return out;
}

inline Tensor channel_mean_map(const Tensor& x) {
    detail::check_4d(x, "channel_mean_map");
    const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    const std::size_t plane = static_cast<std::size_t>(h) * w;
    Tensor out = detail::make_result({n, 1, h, w}, {x});
    for (int nn = 0; nn < n; ++nn)
        for (std::size_t i = 0; i < plane; ++i) {
            double acc = 0.0;
            for (int cc = 0; cc < c; ++cc)
                acc += x.data()[(static_cast<std::size_t>(nn) * c + cc) * plane + i];
            out.data()[static_cast<std::size_t>(nn) * plane + i] = acc / c;
        }
    if (out.requires_grad()) {
        auto xn = x.node();
        out.node()->backward_fn = [=](Tensor::Node& self) {
            Tensor::ensure_grad(*xn);
            for (int nn = 0; nn < n; ++nn)
                for (std::size_t i = 0; i < plane; ++i) {
                    const double g = self.grad[static_cast<std::size_t>(nn) * plane + i] / c;
                    for (int cc = 0; cc < c; ++cc)
                        xn->grad[(static_cast<std::size_t>(nn) * c + cc) * plane + i] += g;
                }
        };
    }
    return out;
}

inline Tensor channel_max_map(const Tensor& x) {
    detail::check_4d(x, "channel_max_map");
    const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    const std::size_t plane = static_cast<std::size_t>(h) * w;
    Tensor out = detail::make_result({n, 1, h, w}, {x});
    auto argmax = std::make_shared<std::vector<std::size_t>>(
        static_cast<std::size_t>(n) * plane, 0);
    for (int nn = 0; nn < n; ++nn)
        for (std::size_t i = 0; i < plane; ++i) {
            std::size_t best = (static_cast<std::size_t>(nn) * c) * plane + i;
            double bv = x.data()[best];
            for (int cc = 1; cc < c; ++cc) {
                std::size_t idx = (static_cast<std::size_t>(nn) * c + cc) * plane + i;
                if (x.data()[idx] > bv) {
                    bv = x.data()[idx];
                    best = idx;
                }
            }
            (*argmax)[static_cast<std::size_t>(nn) * plane + i] = best;
            out.data()[static_cast<std::size_t>(nn) * plane + i] = bv;
        }
    if (out.requires_grad()) {
        auto xn = x.node();
        out.node()->backward_fn = [=](Tensor::Node& self) {
            Tensor::ensure_grad(*xn);
            for (std::size_t i = 0; i < self.grad.size(); ++i)
                xn->grad[(*argmax)[i]] += self.grad[i];
        };
    }
    return out;
}

// Bilinear interpolation to (oh, ow); half-pixel-centered sampling with
// border clamping, matching the raster resize used elsewhere.
inline Tensor upsample_bilinear(const Tensor& x, int oh, int ow) {
    detail::check_4d(x, "upsample_bilinear");
    const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    if (oh == h && ow == w) return x;
    Tensor out = detail::make_result({n, c, oh, ow}, {x});
    struct Tap {
        int y0, x0, y1, x1;
        double w00, w01, w10, w11;
    };
    auto taps = std::make_shared<std::vector<Tap>>();
    taps->reserve(static_cast<std::size_t>(oh) * ow);
    const double sy = static_cast<double>(h) / oh, sx = static_cast<double>(w) / ow;
    for (int y = 0; y < oh; ++y) {
        double yy = (y + 0.5) * sy - 0.5;
        int y0 = static_cast<int>(std::floor(yy));
        double fy = yy - y0;
        int y0c = std::clamp(y0, 0, h - 1), y1c = std::clamp(y0 + 1, 0, h - 1);
        for (int x2 = 0; x2 < ow; ++x2) {
            double xx = (x2 + 0.5) * sx - 0.5;
            int x0 = static_cast<int>(std::floor(xx));
            double fx = xx - x0;
            int x0c = std::clamp(x0, 0, w - 1), x1c = std::clamp(x0 + 1, 0, w - 1);
            taps->push_back(Tap{y0c, x0c, y1c, x1c, (1 - fy) * (1 - fx), (1 - fy) * fx,
                                fy * (1 - fx), fy * fx});
        }
    }
    const std::size_t iplane = static_cast<std::size_t>(h) * w;
    const std::size_t oplane = static_cast<std::size_t>(oh) * ow;
    for (int nn = 0; nn < n; ++nn)
        for (int cc = 0; cc < c; ++cc) {
            const std::size_t ib = (static_cast<std::size_t>(nn) * c + cc) * iplane;
            const std::size_t ob = (static_cast<std::size_t>(nn) * c + cc) * oplane;
            for (std::size_t i = 0; i < oplane; ++i) {
                const Tap& t = (*taps)[i];
                out.data()[ob + i] = t.w00 * x.data()[ib + t.y0 * w + t.x0] +
                                     t.w01 * x.data()[ib + t.y0 * w + t.x1] +
                                     t.w10 * x.data()[ib + t.y1 * w + t.x0] +
                                     t.w11 * x.data()[ib + t.y1 * w + t.x1];
            }
        }
    if (out.requires_grad()) {
        auto xn = x.node();
        out.node()->backward_fn = [=](Tensor::Node& self) {
            Tensor::ensure_grad(*xn);
            for (int nn = 0; nn < n; ++nn)
                for (int cc = 0; cc < c; ++cc) {
                    const std::size_t ib = (static_cast<std::size_t>(nn) * c + cc) * iplane;
                    const std::size_t ob = (static_cast<std::size_t>(nn) * c + cc) * oplane;
                    for (std::size_t i = 0; i < oplane; ++i) {
                        const Tap& t = (*taps)[i];
                        const double g = self.grad[ob + i];
                        xn->grad[ib + t.y0 * w + t.x0] += g * t.w00;
                        xn->grad[ib + t.y0 * w + t.x1] += g * t.w01;
                        xn->grad[ib + t.y1 * w + t.x0] += g * t.w10;
                        xn->grad[ib + t.y1 * w + t.x1] += g * t.w11;
                    }
                }
        };
    }
    return out;
}

// Numerically stable mean binary cross-entropy from logits:
// max(x,0) - x*y + log(1 + exp(-|x|)), averaged over all elements.
inline Tensor bce_with_logits_mean(const Tensor& logits, const Tensor& targets) {
    if (logits.shape() != targets.shape())
        throw DimensionError("bce_with_logits: shape mismatch");
    Tensor out = detail::make_result({1}, {logits, targets});
    const std::size_t n = logits.numel();
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double x = logits.data()[i];
        const double y = targets.data()[i];
        acc += std::max(x, 0.0) - x * y + std::log1p(std::exp(-std::fabs(x)));
    }
    out.data()[0] = acc / static_cast<double>(n);
    if (out.requires_grad()) {
        auto ln = logits.node();
        out.node()->backward_fn = [=](Tensor::Node& self) {
            if (!ln->requires_grad) return;
            Tensor::ensure_grad(*ln);
            const double g = self.grad[0] / static_cast<double>(n);
            auto tn = self.parents[1];
            for (std::size_t i = 0; i < n; ++i) {
                const double p = 1.0 / (1.0 + std::exp(-ln->data[i]));
                ln->grad[i] += g * (p - tn->data[i]);
            }
        };
    }
    return out;
}

}  // namespace ops

}  // namespace saliflow
