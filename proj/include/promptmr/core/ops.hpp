// Copyright (c) 2026 promptmr authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "promptmr/core/graph.hpp"

namespace promptmr::ad {

namespace detail {

inline void check_same_graph(Var a, Var b) {
    if (a.g != b.g) throw std::logic_error("ops: operands from different graphs");
}

inline void accumulate(Tensor& dst, const Tensor& src) {
    for (std::size_t i = 0; i < src.size(); ++i) dst.data[i] += src.data[i];
}

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

} // namespace detail

// ---------------------------------------------------------------------------
// elementwise
// ---------------------------------------------------------------------------

inline Var add(Var a, Var b) {
    detail::check_same_graph(a, b);
    Graph& g = *a.g;
    const Tensor& av = g.val(a.id);
    const Tensor& bv = g.val(b.id);
    if (!av.same_shape(bv)) throw std::invalid_argument("add: shape mismatch " + av.shape_str() + " vs " + bv.shape_str());
    Tensor out = av;
    detail::accumulate(out, bv);
    bool ng = g.needs_grad(a.id) || g.needs_grad(b.id);
    int id = g.add(std::move(out), ng);
    if (ng) {
        int ai = a.id, bi = b.id;
        g.set_backward(id, [id, ai, bi](Graph& gr) {
            const Tensor& dy = gr.grad(id);
            if (gr.needs_grad(ai)) detail::accumulate(gr.grad(ai), dy);
            if (gr.needs_grad(bi)) detail::accumulate(gr.grad(bi), dy);
        });
    }
    return g.var(id);
}

inline Var sub(Var a, Var b) {
    detail::check_same_graph(a, b);
    Graph& g = *a.g;
    const Tensor& av = g.val(a.id);
    const Tensor& bv = g.val(b.id);
    if (!av.same_shape(bv)) throw std::invalid_argument("sub: shape mismatch");
    Tensor out = av;
    for (std::size_t i = 0; i < out.size(); ++i) out.data[i] -= bv.data[i];
    bool ng = g.needs_grad(a.id) || g.needs_grad(b.id);
    int id = g.add(std::move(out), ng);
    if (ng) {
        int ai = a.id, bi = b.id;
        g.set_backward(id, [id, ai, bi](Graph& gr) {
            const Tensor& dy = gr.grad(id);
            if (gr.needs_grad(ai)) detail::accumulate(gr.grad(ai), dy);
            if (gr.needs_grad(bi)) {
                Tensor& db = gr.grad(bi);
                for (std::size_t i = 0; i < dy.size(); ++i) db.data[i] -= dy.data[i];
            }
        });
    }
    return g.var(id);
}

inline Var scale(Var a, double c) {
    Graph& g = *a.g;
    Tensor out = g.val(a.id);
    for (double& v : out.data) v *= c;
    bool ng = g.needs_grad(a.id);
    int id = g.add(std::move(out), ng);
    if (ng) {
        int ai = a.id;
        g.set_backward(id, [id, ai, c](Graph& gr) {
            const Tensor& dy = gr.grad(id);
            Tensor& da = gr.grad(ai);
            for (std::size_t i = 0; i < dy.size(); ++i) da.data[i] += c * dy.data[i];
        });
    }
    return g.var(id);
}

inline Var hadamard(Var a, Var b) {
    detail::check_same_graph(a, b);
    Graph& g = *a.g;
    const Tensor& av = g.val(a.id);
    const Tensor& bv = g.val(b.id);
    if (!av.same_shape(bv)) throw std::invalid_argument("hadamard: shape mismatch");
    Tensor out = av;
    for (std::size_t i = 0; i < out.size(); ++i) out.data[i] *= bv.data[i];
    bool ng = g.needs_grad(a.id) || g.needs_grad(b.id);
    int id = g.add(std::move(out), ng);
    if (ng) {
        int ai = a.id, bi = b.id;
        g.set_backward(id, [id, ai, bi](Graph& gr) {
            const Tensor& dy = gr.grad(id);
            const Tensor& av2 = gr.val(ai);
            const Tensor& bv2 = gr.val(bi);
            if (gr.needs_grad(ai)) {
                Tensor& da = gr.grad(ai);
                for (std::size_t i = 0; i < dy.size(); ++i) da.data[i] += dy.data[i] * bv2.data[i];
            }
            if (gr.needs_grad(bi)) {
                Tensor& db = gr.grad(bi);
                for (std::size_t i = 0; i < dy.size(); ++i) db.data[i] += dy.data[i] * av2.data[i];
            }
        });
    }
    return g.var(id);
}

inline Var relu(Var a) {
    Graph& g = *a.g;
    Tensor out = g.val(a.id);
    for (double& v : out.data) v = v > 0.0 ? v : 0.0;
    bool ng = g.needs_grad(a.id);
    int id = g.add(std::move(out), ng);
    if (ng) {
        int ai = a.id;
        g.set_backward(id, [id, ai](Graph& gr) {
            const Tensor& dy = gr.grad(id);
            const Tensor& x = gr.val(ai);
            Tensor& da = gr.grad(ai);
            for (std::size_t i = 0; i < dy.size(); ++i)
                if (x.data[i] > 0.0) da.data[i] += dy.data[i];
        });
    }
    return g.var(id);
}

/// Exact GELU: 0.5 x (1 + erf(x/sqrt(2))).
inline Var gelu(Var a) {
    Graph& g = *a.g;
    Tensor out = g.val(a.id);
    for (double& v : out.data) v = 0.5 * v * (1.0 + std::erf(v * detail::kInvSqrt2));
    bool ng = g.needs_grad(a.id);
    int id = g.add(std::move(out), ng);
    if (ng) {
        int ai = a.id;
        g.set_backward(id, [id, ai](Graph& gr) {
            const Tensor& dy = gr.grad(id);
            const Tensor& x = gr.val(ai);
            Tensor& da = gr.grad(ai);
            for (std::size_t i = 0; i < dy.size(); ++i) {
                const double xv = x.data[i];
                const double cdf = 0.5 * (1.0 + std::erf(xv * detail::kInvSqrt2));
                const double pdf = detail::kInvSqrt2Pi * std::exp(-0.5 * xv * xv);
                da.data[i] += dy.data[i] * (cdf + xv * pdf);
            }
        });
    }
    return g.var(id);
}

// ---------------------------------------------------------------------------
// linear algebra
// ---------------------------------------------------------------------------

inline Var matmul(Var a, Var b) {
    detail::check_same_graph(a, b);
    Graph& g = *a.g;
    const Tensor& av = g.val(a.id);
    const Tensor& bv = g.val(b.id);
    if (av.cols() != bv.rows())
        throw std::invalid_argument("matmul: inner dims " + av.shape_str() + " x " + bv.shape_str());
    Tensor out = Tensor::zeros({av.rows(), bv.cols()});
    as_matrix(out) = as_matrix(av) * as_matrix(bv);
    bool ng = g.needs_grad(a.id) || g.needs_grad(b.id);
    int id = g.add(std::move(out), ng);
    if (ng) {
        int ai = a.id, bi = b.id;
        g.set_backward(id, [id, ai, bi](Graph& gr) {
            const Tensor& dy = gr.grad(id);
            if (gr.needs_grad(ai))
                as_matrix(gr.grad(ai)) += as_matrix(dy) * as_matrix(gr.val(bi)).transpose();
            if (gr.needs_grad(bi))
                as_matrix(gr.grad(bi)) += as_matrix(gr.val(ai)).transpose() * as_matrix(dy);
        });
    }
    return g.var(id);
}

/// A @ B^T without materializing the transpose.
inline Var matmul_nt(Var a, Var b) {
    detail::check_same_graph(a, b);
    Graph& g = *a.g;
    const Tensor& av = g.val(a.id);
    const Tensor& bv = g.val(b.id);
    if (av.cols() != bv.cols())
        throw std::invalid_argument("matmul_nt: inner dims " + av.shape_str() + " x " + bv.shape_str() + "^T");
    Tensor out = Tensor::zeros({av.rows(), bv.rows()});
    as_matrix(out) = as_matrix(av) * as_matrix(bv).transpose();
    bool ng = g.needs_grad(a.id) || g.needs_grad(b.id);
    int id = g.add(std::move(out), ng);
    if (ng) {
        int ai = a.id, bi = b.id;
        g.set_backward(id, [id, ai, bi](Graph& gr) {
            const Tensor& dy = gr.grad(id);
            if (gr.needs_grad(ai))
                as_matrix(gr.grad(ai)) += as_matrix(dy) * as_matrix(gr.val(bi));
            if (gr.needs_grad(bi))
                as_matrix(gr.grad(bi)) += as_matrix(dy).transpose() * as_matrix(gr.val(ai));
        });
    }
    return g.var(id);
}

/// Broadcast-add a row vector [1,n] to every row of A [m,n].
inline Var add_rowvec(Var a, Var b) {
    detail::check_same_graph(a, b);
    Graph& g = *a.g;
    const Tensor& av = g.val(a.id);
    const Tensor& bv = g.val(b.id);
    if (bv.size() != av.cols()) throw std::invalid_argument("add_rowvec: width mismatch");
    Tensor out = av;
    const std::size_t m = av.rows(), n = av.cols();
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out.data[i * n + j] += bv.data[j];
    bool ng = g.needs_grad(a.id) || g.needs_grad(b.id);
    int id = g.add(std::move(out), ng);
    if (ng) {
        int ai = a.id, bi = b.id;
        g.set_backward(id, [id, ai, bi, m, n](Graph& gr) {
            const Tensor& dy = gr.grad(id);
            if (gr.needs_grad(ai)) detail::accumulate(gr.grad(ai), dy);
            if (gr.needs_grad(bi)) {
                Tensor& db = gr.grad(bi);
                for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t j = 0; j < n; ++j) db.data[j] += dy.data[i * n + j];
            }
        });
    }
    return g.var(id);
}

// ---------------------------------------------------------------------------
// shape plumbing
// ---------------------------------------------------------------------------

inline Var concat_rows(const std::vector<Var>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat_rows: empty");
    Graph& g = *parts[0].g;
    const std::size_t n = g.val(parts[0].id).cols();
    std::size_t m = 0;
    bool ng = false;
    for (Var p : parts) {
        detail::check_same_graph(parts[0], p);
        if (g.val(p.id).cols() != n) throw std::invalid_argument("concat_rows: width mismatch");
        m += g.val(p.id).rows();
        ng = ng || g.needs_grad(p.id);
    }
    Tensor out = Tensor::zeros({m, n});
    std::size_t r = 0;
    std::vector<int> ids;
    std::vector<std::size_t> offsets;
    for (Var p : parts) {
        const Tensor& pv = g.val(p.id);
        std::copy(pv.data.begin(), pv.data.end(), out.data.begin() + static_cast<std::ptrdiff_t>(r * n));
        ids.push_back(p.id);
        offsets.push_back(r);
        r += pv.rows();
    }
    int id = g.add(std::move(out), ng);
    if (ng) {
        g.set_backward(id, [id, ids, offsets, n](Graph& gr) {
            const Tensor& dy = gr.grad(id);
            for (std::size_t k = 0; k < ids.size(); ++k) {
                if (!gr.needs_grad(ids[k])) continue;
                Tensor& dp = gr.grad(ids[k]);
                const std::size_t rows = dp.rows() ? dp.rows() : gr.val(ids[k]).rows();
                const double* src = dy.data.data() + offsets[k] * n;
                for (std::size_t i = 0; i < rows * n; ++i) dp.data[i] += src[i];
            }
        });
    }
    return g.var(id);
}

inline Var concat_cols(const std::vector<Var>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat_cols: empty");
    Graph& g = *parts[0].g;
    const std::size_t m = g.val(parts[0].id).rows();
    std::size_t n = 0;
    bool ng = false;
    for (Var p : parts) {
        detail::check_same_graph(parts[0], p);
        if (g.val(p.id).rows() != m) throw std::invalid_argument("concat_cols: height mismatch");
        n += g.val(p.id).cols();
        ng = ng || g.needs_grad(p.id);
    }
    Tensor out = Tensor::zeros({m, n});
    std::vector<int> ids;
    std::vector<std::size_t> offsets, widths;
    std::size_t c = 0;
    for (Var p : parts) {
        const Tensor& pv = g.val(p.id);
        const std::size_t w = pv.cols();
        for (std::size_t i = 0; i < m; ++i)
            std::copy(pv.data.begin() + static_cast<std::ptrdiff_t>(i * w),
                      pv.data.begin() + static_cast<std::ptrdiff_t>((i + 1) * w),
                      out.data.begin() + static_cast<std::ptrdiff_t>(i * n + c));
        ids.push_back(p.id);
        offsets.push_back(c);
        widths.push_back(w);
        c += w;
    }
    int id = g.add(std::move(out), ng);
    if (ng) {
        g.set_backward(id, [id, ids, offsets, widths, m, n](Graph& gr) {
            const Tensor& dy = gr.grad(id);
            for (std::size_t k = 0; k < ids.size(); ++k) {
                if (!gr.needs_grad(ids[k])) continue;
                Tensor& dp = gr.grad(ids[k]);
                const std::size_t w = widths[k];
                for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t j = 0; j < w; ++j) dp.data[i * w + j] += dy.data[i * n + offsets[k] + j];
            }
        });
    }
    return g.var(id);
}

inline Var slice_cols(Var a, std::size_t c0, std::size_t c1) {
    Graph& g = *a.g;
    const Tensor& av = g.val(a.id);
    const std::size_t m = av.rows(), n = av.cols();
    if (c0 >= c1 || c1 > n) throw std::invalid_argument("slice_cols: bad range");
    const std::size_t w = c1 - c0;
    Tensor out = Tensor::zeros({m, w});
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < w; ++j) out.data[i * w + j] = av.data[i * n + c0 + j];
    bool ng = g.needs_grad(a.id);
    int id = g.add(std::move(out), ng);
    if (ng) {
        int ai = a.id;
        g.set_backward(id, [id, ai, c0, w, m, n](Graph& gr) {
            const Tensor& dy = gr.grad(id);
            Tensor& da = gr.grad(ai);
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < w; ++j) da.data[i * n + c0 + j] += dy.data[i * w + j];
        });
    }
    return g.var(id);
}

/// Row gather: out[r,:] = a[idx[r],:]. Backward scatter-adds. Also serves as
/// the token-embedding lookup.
inline Var gather_rows(Var a, std::vector<std::size_t> idx) {
    Graph& g = *a.g;
    const Tensor& av = g.val(a.id);
    const std::size_t n = av.cols();
    for (std::size_t i : idx)
        if (i >= av.rows()) throw std::invalid_argument("gather_rows: index out of range");
    Tensor out = Tensor::zeros({idx.size(), n});
    for (std::size_t r = 0; r < idx.size(); ++r)
        std::copy(av.data.begin() + static_cast<std::ptrdiff_t>(idx[r] * n),
                  av.data.begin() + static_cast<std::ptrdiff_t>((idx[r] + 1) * n),
                  out.data.begin() + static_cast<std::ptrdiff_t>(r * n));
    bool ng = g.needs_grad(a.id);
    int id = g.add(std::move(out), ng);
    if (ng) {
        int ai = a.id;
        g.set_backward(id, [id, ai, idx = std::move(idx), n](Graph& gr) {
            const Tensor& dy = gr.grad(id);
            Tensor& da = gr.grad(ai);
            for (std::size_t r = 0; r < idx.size(); ++r)
                for (std::size_t j = 0; j < n; ++j) da.data[idx[r] * n + j] += dy.data[r * n + j];
        });
    }
    return g.var(id);
}

// ---------------------------------------------------------------------------
// normalization / attention
// ---------------------------------------------------------------------------

inline Var layernorm(Var x, Var gamma, Var beta, double eps = 1e-5) {
    detail::check_same_graph(x, gamma);
    detail::check_same_graph(x, beta);
    Graph& g = *x.g;
    const Tensor& xv = g.val(x.id);
    const Tensor& gv = g.val(gamma.id);
    const Tensor& bv = g.val(beta.id);
    const std::size_t m = xv.rows(), n = xv.cols();
    if (gv.size() != n || bv.size() != n) throw std::invalid_argument("layernorm: param width mismatch");
    Tensor out = Tensor::zeros({m, n});
    std::vector<double> mu(m), sig(m);
    for (std::size_t i = 0; i < m; ++i) {
        double s = 0;
        for (std::size_t j = 0; j < n; ++j) s += xv.data[i * n + j];
        mu[i] = s / static_cast<double>(n);
        double v = 0;
        for (std::size_t j = 0; j < n; ++j) {
            const double d = xv.data[i * n + j] - mu[i];
            v += d * d;
        }
        sig[i] = std::sqrt(v / static_cast<double>(n) + eps);
        for (std::size_t j = 0; j < n; ++j)
            out.data[i * n + j] = (xv.data[i * n + j] - mu[i]) / sig[i] * gv.data[j] + bv.data[j];
    }
    bool ng = g.needs_grad(x.id) || g.needs_grad(gamma.id) || g.needs_grad(beta.id);
    int id = g.add(std::move(out), ng);
    if (ng) {
        int xi = x.id, gi = gamma.id, bi = beta.id;
        g.set_backward(id, [id, xi, gi, bi, mu = std::move(mu), sig = std::move(sig), m, n](Graph& gr) {
            const Tensor& dy = gr.grad(id);
            const Tensor& xv2 = gr.val(xi);
            const Tensor& gv2 = gr.val(gi);
            for (std::size_t i = 0; i < m; ++i) {
                // xhat and dxhat for this row
                double mean_dxhat = 0, mean_dxhat_xhat = 0;
                for (std::size_t j = 0; j < n; ++j) {
                    const double xhat = (xv2.data[i * n + j] - mu[i]) / sig[i];
                    const double dxhat = dy.data[i * n + j] * gv2.data[j];
                    mean_dxhat += dxhat;
                    mean_dxhat_xhat += dxhat * xhat;
                }
                mean_dxhat /= static_cast<double>(n);
                mean_dxhat_xhat /= static_cast<double>(n);
                if (gr.needs_grad(xi)) {
                    Tensor& dx = gr.grad(xi);
                    for (std::size_t j = 0; j < n; ++j) {
                        const double xhat = (xv2.data[i * n + j] - mu[i]) / sig[i];
                        const double dxhat = dy.data[i * n + j] * gv2.data[j];
                        dx.data[i * n + j] += (dxhat - mean_dxhat - xhat * mean_dxhat_xhat) / sig[i];
                    }
                }
                if (gr.needs_grad(gi)) {
                    Tensor& dg = gr.grad(gi);
                    for (std::size_t j = 0; j < n; ++j) {
                        const double xhat = (xv2.data[i * n + j] - mu[i]) / sig[i];
                        dg.data[j] += dy.data[i * n + j] * xhat;
                    }
                }
                if (gr.needs_grad(bi)) {
                    Tensor& db = gr.grad(bi);
                    for (std::size_t j = 0; j < n; ++j) db.data[j] += dy.data[i * n + j];
                }
            }
        });
    }
    return g.var(id);
}

/// Row softmax of (scale * x), optionally with a causal mask (entries j > i
/// excluded). Masked probabilities are exactly zero.
inline Var softmax_rows(Var x, double sc = 1.0, bool causal = false) {
    Graph& g = *x.g;
    const Tensor& xv = g.val(x.id);
    const std::size_t m = xv.rows(), n = xv.cols();
    if (causal && m != n) throw std::invalid_argument("softmax_rows: causal mask needs square input");
    Tensor out = Tensor::zeros({m, n});
    for (std::size_t i = 0; i < m; ++i) {
        const std::size_t lim = causal ? i + 1 : n;
        double mx = -1e300;
        for (std::size_t j = 0; j < lim; ++j) mx = std::max(mx, sc * xv.data[i * n + j]);
        double sum = 0;
        for (std::size_t j = 0; j < lim; ++j) {
            const double e = std::exp(sc * xv.data[i * n + j] - mx);
            out.data[i * n + j] = e;
            sum += e;
        }
        for (std::size_t j = 0; j < lim; ++j) out.data[i * n + j] /= sum;
    }
    bool ng = g.needs_grad(x.id);
    int id = g.add(std::move(out), ng);
    if (ng) {
        int xi = x.id;
        g.set_backward(id, [id, xi, sc, causal, m, n](Graph& gr) {
            const Tensor& dy = gr.grad(id);
            const Tensor& p = gr.val(id);
            Tensor& dx = gr.grad(xi);
            for (std::size_t i = 0; i < m; ++i) {
                const std::size_t lim = causal ? i + 1 : n;
                double dot = 0;
                for (std::size_t j = 0; j < lim; ++j) dot += dy.data[i * n + j] * p.data[i * n + j];
                for (std::size_t j = 0; j < lim; ++j)
                    dx.data[i * n + j] += sc * p.data[i * n + j] * (dy.data[i * n + j] - dot);
            }
        });
    }
    return g.var(id);
}

/// Rows scaled to unit L2 norm.
inline Var l2norm_rows(Var x) {
    Graph& g = *x.g;
    const Tensor& xv = g.val(x.id);
    const std::size_t m = xv.rows(), n = xv.cols();
    Tensor out = Tensor::zeros({m, n});
    std::vector<double> norms(m);
    for (std::size_t i = 0; i < m; ++i) {
        double s = 0;
        for (std::size_t j = 0; j < n; ++j) s += xv.data[i * n + j] * xv.data[i * n + j];
        norms[i] = std::sqrt(s);
        if (norms[i] == 0.0) throw std::invalid_argument("l2norm_rows: zero-norm row");
        for (std::size_t j = 0; j < n; ++j) out.data[i * n + j] = xv.data[i * n + j] / norms[i];
    }
    bool ng = g.needs_grad(x.id);
    int id = g.add(std::move(out), ng);
    if (ng) {
        int xi = x.id;
        g.set_backward(id, [id, xi, norms = std::move(norms), m, n](Graph& gr) {
            const Tensor& dy = gr.grad(id);
            const Tensor& y = gr.val(id);
            Tensor& dx = gr.grad(xi);
            for (std::size_t i = 0; i < m; ++i) {
                double dot = 0;
                for (std::size_t j = 0; j < n; ++j) dot += dy.data[i * n + j] * y.data[i * n + j];
                for (std::size_t j = 0; j < n; ++j)
                    dx.data[i * n + j] += (dy.data[i * n + j] - y.data[i * n + j] * dot) / norms[i];
            }
        });
    }
    return g.var(id);
}

// ---------------------------------------------------------------------------
// 3D convolution (3x3x3, stride 1, zero padding 1; spatial dims preserved)
// ---------------------------------------------------------------------------

struct Dims3 {
    std::size_t x = 0, y = 0, z = 0;
    std::size_t count() const { return x * y * z; }
    bool operator==(const Dims3&) const = default;
};

namespace detail {

/// col[v, k*inC + c] = x[neighbor(v, k), c], zero outside the grid.
/// Neighbor order: k = (dz+1)*9 + (dy+1)*3 + (dx+1).
inline void im2col3(const Tensor& x, Dims3 d, std::size_t in_c, Tensor& col) {
    const std::size_t vox = d.count();
    col = Tensor::zeros({vox, 27 * in_c});
    for (std::size_t z = 0; z < d.z; ++z)
        for (std::size_t y = 0; y < d.y; ++y)
            for (std::size_t x0 = 0; x0 < d.x; ++x0) {
                const std::size_t v = x0 + d.x * (y + d.y * z);
                double* row = col.data.data() + v * 27 * in_c;
                for (int dz = -1; dz <= 1; ++dz)
                    for (int dyy = -1; dyy <= 1; ++dyy)
                        for (int dx = -1; dx <= 1; ++dx) {
                            const long nx = static_cast<long>(x0) + dx;
                            const long ny = static_cast<long>(y) + dyy;
                            const long nz = static_cast<long>(z) + dz;
                            if (nx < 0 || ny < 0 || nz < 0 || nx >= static_cast<long>(d.x) ||
                                ny >= static_cast<long>(d.y) || nz >= static_cast<long>(d.z))
                                continue;
                            const std::size_t nv = static_cast<std::size_t>(nx) +
                                                   d.x * (static_cast<std::size_t>(ny) + d.y * static_cast<std::size_t>(nz));
                            const std::size_t k = static_cast<std::size_t>((dz + 1) * 9 + (dyy + 1) * 3 + (dx + 1));
                            const double* src = x.data.data() + nv * in_c;
                            std::copy(src, src + in_c, row + k * in_c);
                        }
            }
}

inline void col2im3_accumulate(const Tensor& dcol, Dims3 d, std::size_t in_c, Tensor& dx) {
    for (std::size_t z = 0; z < d.z; ++z)
        for (std::size_t y = 0; y < d.y; ++y)
            for (std::size_t x0 = 0; x0 < d.x; ++x0) {
                const std::size_t v = x0 + d.x * (y + d.y * z);
                const double* row = dcol.data.data() + v * 27 * in_c;
                for (int oz = -1; oz <= 1; ++oz)
                    for (int oy = -1; oy <= 1; ++oy)
                        for (int ox = -1; ox <= 1; ++ox) {
                            const long nx = static_cast<long>(x0) + ox;
                            const long ny = static_cast<long>(y) + oy;
                            const long nz = static_cast<long>(z) + oz;
                            if (nx < 0 || ny < 0 || nz < 0 || nx >= static_cast<long>(d.x) ||
                                ny >= static_cast<long>(d.y) || nz >= static_cast<long>(d.z))
                                continue;
                            const std::size_t nv = static_cast<std::size_t>(nx) +
                                                   d.x * (static_cast<std::size_t>(ny) + d.y * static_cast<std::size_t>(nz));
                            const std::size_t k = static_cast<std::size_t>((oz + 1) * 9 + (oy + 1) * 3 + (ox + 1));
                            double* dst = dx.data.data() + nv * in_c;
                            const double* src = row + k * in_c;
                            for (std::size_t c = 0; c < in_c; ++c) dst[c] += src[c];
                        }
            }
}

} // namespace detail

/// 3x3x3 convolution over a [voxels, in_c] grid with spatial dims `d`.
/// Weight is [27*in_c, out_c], bias [out_c]. The im2col buffer is recomputed
/// in the backward pass instead of cached, trading ~30% extra flops for a
/// flat memory profile across deep stacks.
inline Var conv3d(Var x, Var w, Var b, Dims3 d) {
    detail::check_same_graph(x, w);
    detail::check_same_graph(x, b);
    Graph& g = *x.g;
    const Tensor& xv = g.val(x.id);
    const Tensor& wv = g.val(w.id);
    const Tensor& bv = g.val(b.id);
    if (xv.rows() != d.count()) throw std::invalid_argument("conv3d: voxel count mismatch");
    const std::size_t in_c = xv.cols();
    if (wv.rows() != 27 * in_c) throw std::invalid_argument("conv3d: weight rows != 27*in_c");
    const std::size_t out_c = wv.cols();
    if (bv.size() != out_c) throw std::invalid_argument("conv3d: bias size mismatch");

    Tensor col;
    detail::im2col3(xv, d, in_c, col);
    Tensor out = Tensor::zeros({d.count(), out_c});
    as_matrix(out) = as_matrix(col) * as_matrix(wv);
    for (std::size_t v = 0; v < d.count(); ++v)
        for (std::size_t c = 0; c < out_c; ++c) out.data[v * out_c + c] += bv.data[c];

    bool ng = g.needs_grad(x.id) || g.needs_grad(w.id) || g.needs_grad(b.id);
    int id = g.add(std::move(out), ng);
    if (ng) {
        int xi = x.id, wi = w.id, bi = b.id;
        g.set_backward(id, [id, xi, wi, bi, d, in_c, out_c](Graph& gr) {
            const Tensor& dy = gr.grad(id);
            if (gr.needs_grad(bi)) {
                Tensor& db = gr.grad(bi);
                for (std::size_t v = 0; v < d.count(); ++v)
                    for (std::size_t c = 0; c < out_c; ++c) db.data[c] += dy.data[v * out_c + c];
            }
            if (gr.needs_grad(wi)) {
                Tensor col2;
                detail::im2col3(gr.val(xi), d, in_c, col2);
                as_matrix(gr.grad(wi)) += as_matrix(col2).transpose() * as_matrix(dy);
            }
            if (gr.needs_grad(xi)) {
                Tensor dcol = Tensor::zeros({d.count(), 27 * in_c});
                as_matrix(dcol) = as_matrix(dy) * as_matrix(gr.val(wi)).transpose();
                detail::col2im3_accumulate(dcol, d, in_c, gr.grad(xi));
            }
        });
    }
    return g.var(id);
}

// ---------------------------------------------------------------------------
// losses
// ---------------------------------------------------------------------------

/// Mean absolute error against a constant target.
inline Var mean_abs_error(Var pred, Tensor target) {
    Graph& g = *pred.g;
    const Tensor& pv = g.val(pred.id);
    if (pv.size() != target.size()) throw std::invalid_argument("mean_abs_error: size mismatch");
    const std::size_t q = pv.size();
    double s = 0;
    for (std::size_t i = 0; i < q; ++i) s += std::abs(pv.data[i] - target.data[i]);
    Tensor out({1}, {s / static_cast<double>(q)});
    bool ng = g.needs_grad(pred.id);
    int id = g.add(std::move(out), ng);
    if (ng) {
        int pi = pred.id;
        g.set_backward(id, [id, pi, target = std::move(target), q](Graph& gr) {
            const double up = gr.grad(id).data[0];
            const Tensor& pv2 = gr.val(pi);
            Tensor& dp = gr.grad(pi);
            for (std::size_t i = 0; i < q; ++i) {
                const double diff = pv2.data[i] - target.data[i];
                const double sgn = diff > 0.0 ? 1.0 : (diff < 0.0 ? -1.0 : 0.0);
                dp.data[i] += up * sgn / static_cast<double>(q);
            }
        });
    }
    return g.var(id);
}

/// Symmetric InfoNCE over a square cosine-similarity matrix S [N,N]:
///   L = (1/2N) sum_i [ -log softmax_row(S/tau)(i,i) - log softmax_col(S/tau)(i,i) ].
inline Var info_nce(Var s, double tau) {
    Graph& g = *s.g;
    const Tensor& sv = g.val(s.id);
    const std::size_t n = sv.rows();
    if (n == 0 || sv.cols() != n) throw std::invalid_argument("info_nce: square matrix required");
    if (!(tau > 0.0)) throw std::invalid_argument("info_nce: tau must be positive");
    for (double v : sv.data)
        if (!std::isfinite(v)) throw std::invalid_argument("info_nce: non-finite similarity");

    // Row- and column-softmax of S/tau, max-shifted.
    Tensor pr = Tensor::zeros({n, n}), pc = Tensor::zeros({n, n});
    for (std::size_t i = 0; i < n; ++i) {
        double mx = -1e300;
        for (std::size_t j = 0; j < n; ++j) mx = std::max(mx, sv.data[i * n + j] / tau);
        double sum = 0;
        for (std::size_t j = 0; j < n; ++j) {
            pr.data[i * n + j] = std::exp(sv.data[i * n + j] / tau - mx);
            sum += pr.data[i * n + j];
        }
        for (std::size_t j = 0; j < n; ++j) pr.data[i * n + j] /= sum;
    }
    for (std::size_t j = 0; j < n; ++j) {
        double mx = -1e300;
        for (std::size_t i = 0; i < n; ++i) mx = std::max(mx, sv.data[i * n + j] / tau);
        double sum = 0;
        for (std::size_t i = 0; i < n; ++i) {
            pc.data[i * n + j] = std::exp(sv.data[i * n + j] / tau - mx);
            sum += pc.data[i * n + j];
        }
        for (std::size_t i = 0; i < n; ++i) pc.data[i * n + j] /= sum;
    }
    double loss = 0;
    for (std::size_t i = 0; i < n; ++i) loss += -std::log(pr.data[i * n + i]) - std::log(pc.data[i * n + i]);
    loss /= 2.0 * static_cast<double>(n);

    bool ng = g.needs_grad(s.id);
    int id = g.add(Tensor({1}, {loss}), ng);
    if (ng) {
        int si = s.id;
        g.set_backward(id, [id, si, pr = std::move(pr), pc = std::move(pc), n, tau](Graph& gr) {
            const double up = gr.grad(id).data[0];
            Tensor& ds = gr.grad(si);
            const double f = up / (2.0 * static_cast<double>(n) * tau);
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < n; ++j) {
                    double v = pr.data[i * n + j] + pc.data[i * n + j];
                    if (i == j) v -= 2.0;
                    ds.data[i * n + j] += f * v;
                }
        });
    }
    return g.var(id);
}

} // namespace promptmr::ad
