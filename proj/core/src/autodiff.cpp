#include "visage/autodiff.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "visage/errors.hpp"

namespace visage::nn {

using RMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapR = Eigen::Map<RMat>;
using CMapR = Eigen::Map<const RMat>;

void Node::ensure_grad() {
    if (!has_grad()) grad = Tensor::zeros(value.shape);
}

void Node::zero_grad() {
    if (has_grad())
        std::fill(grad.data.begin(), grad.data.end(), 0.0);
}

namespace {

thread_local int g_no_grad_depth = 0;

// Wires up a graph node; drops the backward machinery when grad mode is off
// or no parent can receive a gradient.
Var make_node(Tensor value, std::vector<Var> parents, std::function<void(Node&)> fn) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    if (g_no_grad_depth == 0) {
        bool any = false;
        for (const auto& p : parents)
            if (p && p->requires_grad) any = true;
        if (any) {
            n->requires_grad = true;
            n->parents = std::move(parents);
            n->backward_fn = std::move(fn);
        }
    }
    return n;
}

void check_same_shape(const Var& a, const Var& b, const char* op) {
    if (!a->value.same_shape(b->value))
        throw InvalidArgument(std::string(op) + ": shape mismatch " + a->value.shape_str() +
                              " vs " + b->value.shape_str());
}

void accumulate(const Var& p, const Tensor& g) {
    if (!p->requires_grad) return;
    p->ensure_grad();
    for (std::size_t i = 0; i < g.data.size(); ++i) p->grad.data[i] += g.data[i];
}

}  // namespace

bool grad_enabled() { return g_no_grad_depth == 0; }
NoGradGuard::NoGradGuard() { ++g_no_grad_depth; }
NoGradGuard::~NoGradGuard() { --g_no_grad_depth; }

Var constant(Tensor value) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    return n;
}

Var leaf(Tensor value, bool trainable) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    n->requires_grad = true;
    n->trainable = trainable;
    return n;
}

void backward(const Var& root) {
    if (!root) throw InvalidArgument("backward: null root");
    if (root->value.numel() != 1)
        throw InvalidArgument("backward: root must be scalar, got " + root->value.shape_str());
    if (!root->requires_grad) throw InvalidState("backward: root does not require grad");

    // Iterative post-order DFS for a topological ordering.
    std::vector<Node*> topo;
    std::unordered_set<Node*> visited;
    std::vector<std::pair<Node*, std::size_t>> stack{{root.get(), 0}};
    visited.insert(root.get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            Node* p = node->parents[next++].get();
            if (p && p->requires_grad && !visited.count(p)) {
                visited.insert(p);
                stack.emplace_back(p, 0);
            }
        } else {
            topo.push_back(node);
            stack.pop_back();
        }
    }

    for (Node* n : topo) n->ensure_grad();
    root->grad.data[0] += 1.0;
    for (auto it = topo.rbegin(); it != topo.rend(); ++it)
        if ((*it)->backward_fn) (*it)->backward_fn(**it);
}

// ---------------------------------------------------------------------------
// Elementwise ops
// ---------------------------------------------------------------------------

Var add(const Var& a, const Var& b) {
    check_same_shape(a, b, "add");
    Tensor out = a->value;
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += b->value.data[i];
    return make_node(std::move(out), {a, b}, [a, b](Node& o) {
        accumulate(a, o.grad);
        accumulate(b, o.grad);
    });
}

Var sub(const Var& a, const Var& b) {
    check_same_shape(a, b, "sub");
    Tensor out = a->value;
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] -= b->value.data[i];
    return make_node(std::move(out), {a, b}, [a, b](Node& o) {
        accumulate(a, o.grad);
        if (b->requires_grad) {
            b->ensure_grad();
            for (std::size_t i = 0; i < o.grad.data.size(); ++i)
                b->grad.data[i] -= o.grad.data[i];
        }
    });
}

Var mul(const Var& a, const Var& b) {
    check_same_shape(a, b, "mul");
    Tensor out = a->value;
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] *= b->value.data[i];
    return make_node(std::move(out), {a, b}, [a, b](Node& o) {
        if (a->requires_grad) {
            a->ensure_grad();
            for (std::size_t i = 0; i < o.grad.data.size(); ++i)
                a->grad.data[i] += o.grad.data[i] * b->value.data[i];
        }
        if (b->requires_grad) {
            b->ensure_grad();
            for (std::size_t i = 0; i < o.grad.data.size(); ++i)
                b->grad.data[i] += o.grad.data[i] * a->value.data[i];
        }
    });
}

Var scale(const Var& a, double s) {
    Tensor out = a->value;
    for (double& v : out.data) v *= s;
    return make_node(std::move(out), {a}, [a, s](Node& o) {
        if (!a->requires_grad) return;
        a->ensure_grad();
        for (std::size_t i = 0; i < o.grad.data.size(); ++i)
            a->grad.data[i] += s * o.grad.data[i];
    });
}

Var add_scalar(const Var& a, double s) {
    Tensor out = a->value;
    for (double& v : out.data) v += s;
    return make_node(std::move(out), {a}, [a](Node& o) { accumulate(a, o.grad); });
}

Var silu(const Var& a) {
    Tensor out = a->value;
    for (double& v : out.data) v = v / (1.0 + std::exp(-v));
    return make_node(std::move(out), {a}, [a](Node& o) {
        if (!a->requires_grad) return;
        a->ensure_grad();
        for (std::size_t i = 0; i < o.grad.data.size(); ++i) {
            double x = a->value.data[i];
            double sig = 1.0 / (1.0 + std::exp(-x));
            a->grad.data[i] += o.grad.data[i] * sig * (1.0 + x * (1.0 - sig));
        }
    });
}

// ---------------------------------------------------------------------------
// Convolution (im2col + GEMM)
// ---------------------------------------------------------------------------

namespace {

struct ConvGeom {
    int ci, h, w, co, k, stride, pad, ho, wo;
};

ConvGeom conv_geometry(const Tensor& x, const Tensor& w, int stride, int pad) {
    if (x.rank() != 3 || w.rank() != 4)
        throw InvalidArgument("conv2d: expected x [C,H,W] and w [Co,Ci,K,K]");
    ConvGeom g;
    g.ci = x.shape[0];
    g.h = x.shape[1];
    g.w = x.shape[2];
    g.co = w.shape[0];
    g.k = w.shape[2];
    g.stride = stride;
    g.pad = pad;
    if (w.shape[1] != g.ci) throw InvalidArgument("conv2d: channel mismatch");
    if (w.shape[3] != g.k) throw InvalidArgument("conv2d: kernel must be square");
    if (stride < 1) throw InvalidArgument("conv2d: stride must be >= 1");
    g.ho = (g.h + 2 * pad - g.k) / stride + 1;
    g.wo = (g.w + 2 * pad - g.k) / stride + 1;
    if (g.ho < 1 || g.wo < 1) throw InvalidArgument("conv2d: kernel larger than padded input");
    return g;
}

RMat im2col(const Tensor& x, const ConvGeom& g) {
    RMat cols(g.ci * g.k * g.k, g.ho * g.wo);
    for (int ci = 0; ci < g.ci; ++ci)
        for (int ky = 0; ky < g.k; ++ky)
            for (int kx = 0; kx < g.k; ++kx) {
                int row = (ci * g.k + ky) * g.k + kx;
                for (int oy = 0; oy < g.ho; ++oy) {
                    int iy = oy * g.stride + ky - g.pad;
                    for (int ox = 0; ox < g.wo; ++ox) {
                        int ix = ox * g.stride + kx - g.pad;
                        cols(row, oy * g.wo + ox) =
                            (iy >= 0 && iy < g.h && ix >= 0 && ix < g.w) ? x.at(ci, iy, ix) : 0.0;
                    }
                }
            }
    return cols;
}

void col2im_add(const RMat& dcols, const ConvGeom& g, Tensor& dx) {
    for (int ci = 0; ci < g.ci; ++ci)
        for (int ky = 0; ky < g.k; ++ky)
            for (int kx = 0; kx < g.k; ++kx) {
                int row = (ci * g.k + ky) * g.k + kx;
                for (int oy = 0; oy < g.ho; ++oy) {
                    int iy = oy * g.stride + ky - g.pad;
                    if (iy < 0 || iy >= g.h) continue;
                    for (int ox = 0; ox < g.wo; ++ox) {
                        int ix = ox * g.stride + kx - g.pad;
                        if (ix < 0 || ix >= g.w) continue;
                        dx.at(ci, iy, ix) += dcols(row, oy * g.wo + ox);
                    }
                }
            }
}

}  // namespace

Var conv2d(const Var& x, const Var& w, const Var& b, int stride, int pad) {
    ConvGeom g = conv_geometry(x->value, w->value, stride, pad);
    if (b && b->value.numel() > 0 && (b->value.rank() != 1 || b->value.shape[0] != g.co))
        throw InvalidArgument("conv2d: bias must be [Co]");

    auto cols = std::make_shared<RMat>(im2col(x->value, g));
    Tensor out({g.co, g.ho, g.wo});
    {
        CMapR wm(w->value.data.data(), g.co, g.ci * g.k * g.k);
        MapR ym(out.data.data(), g.co, g.ho * g.wo);
        ym.noalias() = wm * (*cols);
        if (b && b->value.numel() > 0)
            for (int co = 0; co < g.co; ++co) ym.row(co).array() += b->value.data[co];
    }

    std::vector<Var> parents = b ? std::vector<Var>{x, w, b} : std::vector<Var>{x, w};
    return make_node(std::move(out), std::move(parents), [x, w, b, g, cols](Node& o) {
        CMapR dym(o.grad.data.data(), g.co, g.ho * g.wo);
        if (w->requires_grad) {
            w->ensure_grad();
            MapR dwm(w->grad.data.data(), g.co, g.ci * g.k * g.k);
            dwm.noalias() += dym * cols->transpose();
        }
        if (b && b->requires_grad) {
            b->ensure_grad();
            for (int co = 0; co < g.co; ++co) b->grad.data[co] += dym.row(co).sum();
        }
        if (x->requires_grad) {
            x->ensure_grad();
            RMat dcols = CMapR(w->value.data.data(), g.co, g.ci * g.k * g.k).transpose() * dym;
            col2im_add(dcols, g, x->grad);
        }
    });
}

// ---------------------------------------------------------------------------
// Dense / attention primitives
// ---------------------------------------------------------------------------

Var linear(const Var& x, const Var& w, const Var& b) {
    if (w->value.rank() != 2) throw InvalidArgument("linear: w must be [N,M]");
    const int n = w->value.shape[0];
    const int m = w->value.shape[1];
    const bool vector_in = x->value.rank() == 1;
    if (!vector_in && x->value.rank() != 2)
        throw InvalidArgument("linear: x must be [M] or [L,M]");
    const int l = vector_in ? 1 : x->value.shape[0];
    const int xm = vector_in ? x->value.shape[0] : x->value.shape[1];
    if (xm != m) throw InvalidArgument("linear: inner dimension mismatch");
    if (b && b->value.numel() > 0 && (b->value.rank() != 1 || b->value.shape[0] != n))
        throw InvalidArgument("linear: bias must be [N]");

    Tensor out(vector_in ? std::vector<int>{n} : std::vector<int>{l, n});
    {
        CMapR xmat(x->value.data.data(), l, m);
        CMapR wmat(w->value.data.data(), n, m);
        MapR ymat(out.data.data(), l, n);
        ymat.noalias() = xmat * wmat.transpose();
        if (b && b->value.numel() > 0)
            for (int r = 0; r < l; ++r)
                for (int c = 0; c < n; ++c) ymat(r, c) += b->value.data[c];
    }

    std::vector<Var> parents = b ? std::vector<Var>{x, w, b} : std::vector<Var>{x, w};
    return make_node(std::move(out), std::move(parents), [x, w, b, l, m, n](Node& o) {
        CMapR dy(o.grad.data.data(), l, n);
        if (x->requires_grad) {
            x->ensure_grad();
            MapR dx(x->grad.data.data(), l, m);
            dx.noalias() += dy * CMapR(w->value.data.data(), n, m);
        }
        if (w->requires_grad) {
            w->ensure_grad();
            MapR dw(w->grad.data.data(), n, m);
            dw.noalias() += dy.transpose() * CMapR(x->value.data.data(), l, m);
        }
        if (b && b->requires_grad) {
            b->ensure_grad();
            for (int r = 0; r < l; ++r)
                for (int c = 0; c < n; ++c) b->grad.data[c] += dy(r, c);
        }
    });
}

Var matmul(const Var& a, const Var& b) {
    if (a->value.rank() != 2 || b->value.rank() != 2)
        throw InvalidArgument("matmul: both operands must be rank 2");
    const int m = a->value.shape[0], k = a->value.shape[1];
    const int k2 = b->value.shape[0], n = b->value.shape[1];
    if (k != k2) throw InvalidArgument("matmul: inner dimension mismatch");

    Tensor out({m, n});
    MapR(out.data.data(), m, n).noalias() =
        CMapR(a->value.data.data(), m, k) * CMapR(b->value.data.data(), k, n);
    return make_node(std::move(out), {a, b}, [a, b, m, k, n](Node& o) {
        CMapR dy(o.grad.data.data(), m, n);
        if (a->requires_grad) {
            a->ensure_grad();
            MapR(a->grad.data.data(), m, k).noalias() +=
                dy * CMapR(b->value.data.data(), k, n).transpose();
        }
        if (b->requires_grad) {
            b->ensure_grad();
            MapR(b->grad.data.data(), k, n).noalias() +=
                CMapR(a->value.data.data(), m, k).transpose() * dy;
        }
    });
}

Var transpose(const Var& a) {
    if (a->value.rank() != 2) throw InvalidArgument("transpose: operand must be rank 2");
    const int m = a->value.shape[0], n = a->value.shape[1];
    Tensor out({n, m});
    for (int r = 0; r < m; ++r)
        for (int c = 0; c < n; ++c) out.at(c, r) = a->value.at(r, c);
    return make_node(std::move(out), {a}, [a, m, n](Node& o) {
        if (!a->requires_grad) return;
        a->ensure_grad();
        for (int r = 0; r < m; ++r)
            for (int c = 0; c < n; ++c) a->grad.at(r, c) += o.grad.at(c, r);
    });
}

Var softmax_rows(const Var& a) {
    if (a->value.rank() != 2) throw InvalidArgument("softmax_rows: operand must be rank 2");
    const int l = a->value.shape[0], c = a->value.shape[1];
    Tensor out({l, c});
    for (int r = 0; r < l; ++r) {
        double mx = a->value.at(r, 0);
        for (int j = 1; j < c; ++j) mx = std::max(mx, a->value.at(r, j));
        double z = 0.0;
        for (int j = 0; j < c; ++j) z += std::exp(a->value.at(r, j) - mx);
        for (int j = 0; j < c; ++j) out.at(r, j) = std::exp(a->value.at(r, j) - mx) / z;
    }
    auto y = std::make_shared<Tensor>(out);
    return make_node(std::move(out), {a}, [a, y, l, c](Node& o) {
        if (!a->requires_grad) return;
        a->ensure_grad();
        for (int r = 0; r < l; ++r) {
            double dot = 0.0;
            for (int j = 0; j < c; ++j) dot += o.grad.at(r, j) * y->at(r, j);
            for (int j = 0; j < c; ++j)
                a->grad.at(r, j) += y->at(r, j) * (o.grad.at(r, j) - dot);
        }
    });
}

// ---------------------------------------------------------------------------
// Normalization and channel-wise modulation
// ---------------------------------------------------------------------------

Var group_norm(const Var& x, const Var& gamma, const Var& beta, int groups, double eps) {
    if (x->value.rank() != 3) throw InvalidArgument("group_norm: x must be [C,H,W]");
    const int c = x->value.shape[0], h = x->value.shape[1], w = x->value.shape[2];
    if (groups < 1 || c % groups != 0)
        throw InvalidArgument("group_norm: groups must divide channel count");
    if (gamma->value.rank() != 1 || gamma->value.shape[0] != c || !gamma->value.same_shape(beta->value))
        throw InvalidArgument("group_norm: gamma/beta must be [C]");

    const int cpg = c / groups;
    const std::size_t hw = static_cast<std::size_t>(h) * w;
    const double n = static_cast<double>(cpg) * static_cast<double>(hw);

    auto xhat = std::make_shared<Tensor>(Tensor::zeros({c, h, w}));
    auto inv_std = std::make_shared<std::vector<double>>(groups);
    Tensor out({c, h, w});
    for (int g = 0; g < groups; ++g) {
        const std::size_t base = static_cast<std::size_t>(g) * cpg * hw;
        double mean = 0.0;
        for (std::size_t i = 0; i < cpg * hw; ++i) mean += x->value.data[base + i];
        mean /= n;
        double var = 0.0;
        for (std::size_t i = 0; i < cpg * hw; ++i) {
            double d = x->value.data[base + i] - mean;
            var += d * d;
        }
        var /= n;
        const double inv = 1.0 / std::sqrt(var + eps);
        (*inv_std)[g] = inv;
        for (int cc = 0; cc < cpg; ++cc) {
            const int ch = g * cpg + cc;
            for (std::size_t i = 0; i < hw; ++i) {
                const std::size_t idx = base + cc * hw + i;
                const double xh = (x->value.data[idx] - mean) * inv;
                xhat->data[idx] = xh;
                out.data[idx] = gamma->value.data[ch] * xh + beta->value.data[ch];
            }
        }
    }

    return make_node(std::move(out), {x, gamma, beta},
                     [x, gamma, beta, xhat, inv_std, groups, cpg, hw, n](Node& o) {
        for (int g = 0; g < groups; ++g) {
            const std::size_t base = static_cast<std::size_t>(g) * cpg * hw;
            double m1 = 0.0, m2 = 0.0;  // group means of dxhat and dxhat*xhat
            for (int cc = 0; cc < cpg; ++cc) {
                const int ch = g * cpg + cc;
                const double gm = gamma->value.data[ch];
                double dgamma = 0.0, dbeta = 0.0;
                for (std::size_t i = 0; i < hw; ++i) {
                    const std::size_t idx = base + cc * hw + i;
                    const double dy = o.grad.data[idx];
                    dgamma += dy * xhat->data[idx];
                    dbeta += dy;
                    m1 += dy * gm;
                    m2 += dy * gm * xhat->data[idx];
                }
                if (gamma->requires_grad) {
                    gamma->ensure_grad();
                    gamma->grad.data[ch] += dgamma;
                }
                if (beta->requires_grad) {
                    beta->ensure_grad();
                    beta->grad.data[ch] += dbeta;
                }
            }
            if (!x->requires_grad) continue;
            x->ensure_grad();
            m1 /= n;
            m2 /= n;
            const double inv = (*inv_std)[g];
            for (int cc = 0; cc < cpg; ++cc) {
                const int ch = g * cpg + cc;
                const double gm = gamma->value.data[ch];
                for (std::size_t i = 0; i < hw; ++i) {
                    const std::size_t idx = base + cc * hw + i;
                    const double dxhat = o.grad.data[idx] * gm;
                    x->grad.data[idx] += inv * (dxhat - m1 - xhat->data[idx] * m2);
                }
            }
        }
    });
}

Var channel_scale(const Var& x, const Var& s) {
    if (x->value.rank() != 3 || s->value.rank() != 1 || s->value.shape[0] != x->value.shape[0])
        throw InvalidArgument("channel_scale: expected x [C,H,W] and s [C]");
    const int c = x->value.shape[0];
    const std::size_t hw = x->value.data.size() / c;
    Tensor out = x->value;
    for (int ch = 0; ch < c; ++ch)
        for (std::size_t i = 0; i < hw; ++i) out.data[ch * hw + i] *= s->value.data[ch];
    return make_node(std::move(out), {x, s}, [x, s, c, hw](Node& o) {
        if (x->requires_grad) {
            x->ensure_grad();
            for (int ch = 0; ch < c; ++ch)
                for (std::size_t i = 0; i < hw; ++i)
                    x->grad.data[ch * hw + i] += o.grad.data[ch * hw + i] * s->value.data[ch];
        }
        if (s->requires_grad) {
            s->ensure_grad();
            for (int ch = 0; ch < c; ++ch) {
                double acc = 0.0;
                for (std::size_t i = 0; i < hw; ++i)
                    acc += o.grad.data[ch * hw + i] * x->value.data[ch * hw + i];
                s->grad.data[ch] += acc;
            }
        }
    });
}

Var channel_bias(const Var& x, const Var& b) {
    if (x->value.rank() != 3 || b->value.rank() != 1 || b->value.shape[0] != x->value.shape[0])
        throw InvalidArgument("channel_bias: expected x [C,H,W] and b [C]");
    const int c = x->value.shape[0];
    const std::size_t hw = x->value.data.size() / c;
    Tensor out = x->value;
    for (int ch = 0; ch < c; ++ch)
        for (std::size_t i = 0; i < hw; ++i) out.data[ch * hw + i] += b->value.data[ch];
    return make_node(std::move(out), {x, b}, [x, b, c, hw](Node& o) {
        accumulate(x, o.grad);
        if (b->requires_grad) {
            b->ensure_grad();
            for (int ch = 0; ch < c; ++ch) {
                double acc = 0.0;
                for (std::size_t i = 0; i < hw; ++i) acc += o.grad.data[ch * hw + i];
                b->grad.data[ch] += acc;
            }
        }
    });
}

Var concat_channels(const Var& a, const Var& b) {
    if (a->value.rank() != 3 || b->value.rank() != 3 || a->value.shape[1] != b->value.shape[1] ||
        a->value.shape[2] != b->value.shape[2])
        throw InvalidArgument("concat_channels: spatial shapes must agree");
    const int ca = a->value.shape[0], cb = b->value.shape[0];
    Tensor out({ca + cb, a->value.shape[1], a->value.shape[2]});
    std::copy(a->value.data.begin(), a->value.data.end(), out.data.begin());
    std::copy(b->value.data.begin(), b->value.data.end(), out.data.begin() + a->value.data.size());
    const std::size_t na = a->value.data.size();
    return make_node(std::move(out), {a, b}, [a, b, na](Node& o) {
        if (a->requires_grad) {
            a->ensure_grad();
            for (std::size_t i = 0; i < na; ++i) a->grad.data[i] += o.grad.data[i];
        }
        if (b->requires_grad) {
            b->ensure_grad();
            for (std::size_t i = 0; i < b->grad.data.size(); ++i)
                b->grad.data[i] += o.grad.data[na + i];
        }
    });
}

Var upsample_nearest2(const Var& x) {
    if (x->value.rank() != 3) throw InvalidArgument("upsample_nearest2: x must be [C,H,W]");
    const int c = x->value.shape[0], h = x->value.shape[1], w = x->value.shape[2];
    Tensor out({c, 2 * h, 2 * w});
    for (int ch = 0; ch < c; ++ch)
        for (int y = 0; y < h; ++y)
            for (int xx = 0; xx < w; ++xx) {
                const double v = x->value.at(ch, y, xx);
                out.at(ch, 2 * y, 2 * xx) = v;
                out.at(ch, 2 * y, 2 * xx + 1) = v;
                out.at(ch, 2 * y + 1, 2 * xx) = v;
                out.at(ch, 2 * y + 1, 2 * xx + 1) = v;
            }
    return make_node(std::move(out), {x}, [x, c, h, w](Node& o) {
        if (!x->requires_grad) return;
        x->ensure_grad();
        for (int ch = 0; ch < c; ++ch)
            for (int y = 0; y < h; ++y)
                for (int xx = 0; xx < w; ++xx)
                    x->grad.at(ch, y, xx) += o.grad.at(ch, 2 * y, 2 * xx) +
                                             o.grad.at(ch, 2 * y, 2 * xx + 1) +
                                             o.grad.at(ch, 2 * y + 1, 2 * xx) +
                                             o.grad.at(ch, 2 * y + 1, 2 * xx + 1);
    });
}

Var chw_to_tokens(const Var& x) {
    if (x->value.rank() != 3) throw InvalidArgument("chw_to_tokens: x must be [C,H,W]");
    const int c = x->value.shape[0], h = x->value.shape[1], w = x->value.shape[2];
    Tensor out({h * w, c});
    for (int ch = 0; ch < c; ++ch)
        for (int y = 0; y < h; ++y)
            for (int xx = 0; xx < w; ++xx) out.at(y * w + xx, ch) = x->value.at(ch, y, xx);
    return make_node(std::move(out), {x}, [x, c, h, w](Node& o) {
        if (!x->requires_grad) return;
        x->ensure_grad();
        for (int ch = 0; ch < c; ++ch)
            for (int y = 0; y < h; ++y)
                for (int xx = 0; xx < w; ++xx)
                    x->grad.at(ch, y, xx) += o.grad.at(y * w + xx, ch);
    });
}

Var tokens_to_chw(const Var& x, int h, int w) {
    if (x->value.rank() != 2 || x->value.shape[0] != h * w)
        throw InvalidArgument("tokens_to_chw: x must be [H*W,C]");
    const int c = x->value.shape[1];
    Tensor out({c, h, w});
    for (int ch = 0; ch < c; ++ch)
        for (int y = 0; y < h; ++y)
            for (int xx = 0; xx < w; ++xx) out.at(ch, y, xx) = x->value.at(y * w + xx, ch);
    return make_node(std::move(out), {x}, [x, c, h, w](Node& o) {
        if (!x->requires_grad) return;
        x->ensure_grad();
        for (int ch = 0; ch < c; ++ch)
            for (int y = 0; y < h; ++y)
                for (int xx = 0; xx < w; ++xx)
                    x->grad.at(y * w + xx, ch) += o.grad.at(ch, y, xx);
    });
}

Var reshape(const Var& x, std::vector<int> shape) {
    if (shape_numel(shape) != x->value.numel())
        throw InvalidArgument("reshape: element count mismatch");
    Tensor out(std::move(shape), x->value.data);
    return make_node(std::move(out), {x}, [x](Node& o) {
        if (!x->requires_grad) return;
        x->ensure_grad();
        for (std::size_t i = 0; i < o.grad.data.size(); ++i) x->grad.data[i] += o.grad.data[i];
    });
}

// ---------------------------------------------------------------------------
// Reductions
// ---------------------------------------------------------------------------

Var mean_all(const Var& x) {
    const double n = static_cast<double>(x->value.numel());
    double acc = 0.0;
    for (double v : x->value.data) acc += v;
    return make_node(Tensor::scalar(acc / n), {x}, [x, n](Node& o) {
        if (!x->requires_grad) return;
        x->ensure_grad();
        const double g = o.grad.data[0] / n;
        for (double& v : x->grad.data) v += g;
    });
}

Var mean_rows(const Var& x) {
    if (x->value.rank() != 2) throw InvalidArgument("mean_rows: expected 2-D input");
    const int rows = x->value.shape[0];
    const int cols = x->value.shape[1];
    Tensor out = Tensor::zeros({cols});
    for (int i = 0; i < rows; ++i) {
        for (int j = 0; j < cols; ++j) out.data[j] += x->value.data[i * cols + j];
    }
    for (double& v : out.data) v /= rows;
    return make_node(std::move(out), {x}, [x, rows, cols](Node& o) {
        if (!x->requires_grad) return;
        x->ensure_grad();
        for (int i = 0; i < rows; ++i) {
            for (int j = 0; j < cols; ++j) {
                x->grad.data[i * cols + j] += o.grad.data[j] / rows;
            }
        }
    });
}

Var mse(const Var& a, const Var& b) {
    check_same_shape(a, b, "mse");
    const double n = static_cast<double>(a->value.numel());
    double acc = 0.0;
    for (std::size_t i = 0; i < a->value.data.size(); ++i) {
        const double d = a->value.data[i] - b->value.data[i];
        acc += d * d;
    }
    return make_node(Tensor::scalar(acc / n), {a, b}, [a, b, n](Node& o) {
        const double g = 2.0 * o.grad.data[0] / n;
        if (a->requires_grad) {
            a->ensure_grad();
            for (std::size_t i = 0; i < a->grad.data.size(); ++i)
                a->grad.data[i] += g * (a->value.data[i] - b->value.data[i]);
        }
        if (b->requires_grad) {
            b->ensure_grad();
            for (std::size_t i = 0; i < b->grad.data.size(); ++i)
                b->grad.data[i] -= g * (a->value.data[i] - b->value.data[i]);
        }
    });
}

Var sum(const std::vector<Var>& xs) {
    if (xs.empty()) throw InvalidArgument("sum: empty operand list");
    Tensor out = xs[0]->value;
    for (std::size_t k = 1; k < xs.size(); ++k) {
        check_same_shape(xs[0], xs[k], "sum");
        for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += xs[k]->value.data[i];
    }
    std::vector<Var> parents(xs.begin(), xs.end());
    return make_node(std::move(out), std::move(parents), [xs](Node& o) {
        for (const auto& x : xs) accumulate(x, o.grad);
    });
}

// ---------------------------------------------------------------------------
// Parameter registry
// ---------------------------------------------------------------------------

Var ParamRegistry::add(const std::string& name, Tensor init, bool trainable) {
    if (name.empty()) throw InvalidArgument("ParamRegistry: empty parameter name");
    if (by_name_.count(name)) throw InvalidArgument("ParamRegistry: duplicate parameter " + name);
    Var v = leaf(std::move(init), trainable);
    v->name = name;
    ordered_.push_back(v);
    by_name_.emplace(name, v);
    return v;
}

Var ParamRegistry::find(const std::string& name) const {
    auto it = by_name_.find(name);
    if (it == by_name_.end()) throw NotFound("ParamRegistry: no parameter named " + name);
    return it->second;
}

bool ParamRegistry::contains(const std::string& name) const { return by_name_.count(name) > 0; }

std::vector<Var> ParamRegistry::with_prefix(const std::string& prefix) const {
    std::vector<Var> out;
    for (const auto& v : ordered_)
        if (v->name.rfind(prefix, 0) == 0) out.push_back(v);
    return out;
}

void ParamRegistry::set_trainable(const std::string& prefix, bool trainable) {
    bool any = false;
    for (const auto& v : ordered_)
        if (v->name.rfind(prefix, 0) == 0) {
            v->trainable = trainable;
            any = true;
        }
    if (!any) throw NotFound("ParamRegistry: no parameters with prefix " + prefix);
}

void ParamRegistry::zero_grad() {
    for (const auto& v : ordered_) v->zero_grad();
}

std::size_t ParamRegistry::total_elements(const std::string& prefix) const {
    std::size_t n = 0;
    for (const auto& v : ordered_)
        if (prefix.empty() || v->name.rfind(prefix, 0) == 0) n += v->value.numel();
    return n;
}

Tensor init_conv_weight(int cout, int cin, int k, Rng& rng) {
    const double stddev = 1.0 / std::sqrt(static_cast<double>(cin) * k * k);
    return Tensor::randn({cout, cin, k, k}, rng, stddev);
}

Tensor init_linear_weight(int n, int m, Rng& rng) {
    const double stddev = 1.0 / std::sqrt(static_cast<double>(m));
    return Tensor::randn({n, m}, rng, stddev);
}

}  // namespace visage::nn
