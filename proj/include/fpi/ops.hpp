#pragma once

#include "fpi/tensor.hpp"

#include <Eigen/Core>

#include <cmath>
#include <vector>

namespace fpi::ops {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;

// ---------------------------------------------------------------------------
// Elementwise
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
    check_same_shape(a, b, "add");
    std::vector<T> out(a.numel());
    auto av = a.value(), bv = b.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
    auto an = a.node(), bn = b.node();
    return Tensor<T>::make_op(a.shape(), std::move(out), {a, b}, [an, bn](TensorNode<T>& o) {
        if (an->requires_grad) {
            an->ensure_grad();
            for (std::size_t i = 0; i < o.grad.size(); ++i) an->grad[i] += o.grad[i];
        }
        if (bn->requires_grad) {
            bn->ensure_grad();
            for (std::size_t i = 0; i < o.grad.size(); ++i) bn->grad[i] += o.grad[i];
        }
    });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
    check_same_shape(a, b, "mul");
    std::vector<T> out(a.numel());
    auto av = a.value(), bv = b.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
    auto an = a.node(), bn = b.node();
    return Tensor<T>::make_op(a.shape(), std::move(out), {a, b}, [an, bn](TensorNode<T>& o) {
        if (an->requires_grad) {
            an->ensure_grad();
            for (std::size_t i = 0; i < o.grad.size(); ++i) an->grad[i] += o.grad[i] * bn->value[i];
        }
        if (bn->requires_grad) {
            bn->ensure_grad();
            for (std::size_t i = 0; i < o.grad.size(); ++i) bn->grad[i] += o.grad[i] * an->value[i];
        }
    });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, double c) {
    std::vector<T> out(a.numel());
    auto av = a.value();
    const T cc = static_cast<T>(c);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * cc;
    auto an = a.node();
    return Tensor<T>::make_op(a.shape(), std::move(out), {a}, [an, cc](TensorNode<T>& o) {
        an->ensure_grad();
        for (std::size_t i = 0; i < o.grad.size(); ++i) an->grad[i] += o.grad[i] * cc;
    });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
    return add(a, scale(b, -1.0));
}

/// Elementwise multiply by a constant buffer (no gradient for the constant).
template <typename T>
Tensor<T> cmul(const Tensor<T>& a, std::vector<T> weights) {
    if (weights.size() != a.numel()) throw ShapeError("cmul: weight length mismatch");
    std::vector<T> out(a.numel());
    auto av = a.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * weights[i];
    auto an = a.node();
    auto w = std::make_shared<std::vector<T>>(std::move(weights));
    return Tensor<T>::make_op(a.shape(), std::move(out), {a}, [an, w](TensorNode<T>& o) {
        an->ensure_grad();
        for (std::size_t i = 0; i < o.grad.size(); ++i) an->grad[i] += o.grad[i] * (*w)[i];
    });
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& a) {
    std::vector<T> out(a.numel());
    auto av = a.value();
    for (std::size_t i = 0; i < out.size(); ++i) {
        T x = av[i];
        out[i] = x >= 0 ? T(1) / (T(1) + std::exp(-x))
                        : std::exp(x) / (T(1) + std::exp(x));
    }
    auto an = a.node();
    auto saved = std::make_shared<std::vector<T>>(out);
    return Tensor<T>::make_op(a.shape(), std::move(out), {a}, [an, saved](TensorNode<T>& o) {
        an->ensure_grad();
        for (std::size_t i = 0; i < o.grad.size(); ++i) {
            T s = (*saved)[i];
            an->grad[i] += o.grad[i] * s * (T(1) - s);
        }
    });
}

inline constexpr double kInvSqrt2 = 0.70710678118654752440;
inline constexpr double kInvSqrt2Pi = 0.39894228040143267794;

/// Exact GELU: x * Phi(x) with the Gaussian CDF.
template <typename T>
Tensor<T> gelu(const Tensor<T>& a) {
    std::vector<T> out(a.numel());
    auto av = a.value();
    for (std::size_t i = 0; i < out.size(); ++i) {
        double x = av[i];
        out[i] = static_cast<T>(x * 0.5 * (1.0 + std::erf(x * kInvSqrt2)));
    }
    auto an = a.node();
    return Tensor<T>::make_op(a.shape(), std::move(out), {a}, [an](TensorNode<T>& o) {
        an->ensure_grad();
        for (std::size_t i = 0; i < o.grad.size(); ++i) {
            double x = an->value[i];
            double cdf = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
            double pdf = kInvSqrt2Pi * std::exp(-0.5 * x * x);
            an->grad[i] += o.grad[i] * static_cast<T>(cdf + x * pdf);
        }
    });
}

/// log(max(x, eps)); gradient is zero in the clamped region.
template <typename T>
Tensor<T> log_clamped(const Tensor<T>& a, double eps) {
    std::vector<T> out(a.numel());
    auto av = a.value();
    const T e = static_cast<T>(eps);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::log(std::max(av[i], e));
    auto an = a.node();
    return Tensor<T>::make_op(a.shape(), std::move(out), {a}, [an, e](TensorNode<T>& o) {
        an->ensure_grad();
        for (std::size_t i = 0; i < o.grad.size(); ++i) {
            T x = an->value[i];
            if (x > e) an->grad[i] += o.grad[i] / x;
        }
    });
}

// ---------------------------------------------------------------------------
// Reductions / structure
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> sum(const Tensor<T>& a) {
    T acc = 0;
    for (T v : a.value()) acc += v;
    auto an = a.node();
    return Tensor<T>::make_op({1}, {acc}, {a}, [an](TensorNode<T>& o) {
        an->ensure_grad();
        T g = o.grad[0];
        for (auto& gv : an->grad) gv += g;
    });
}

template <typename T>
Tensor<T> add_n(const std::vector<Tensor<T>>& xs) {
    if (xs.empty()) throw ShapeError("add_n: empty input");
    std::vector<T> out(xs[0].numel(), T(0));
    for (const auto& x : xs) {
        check_same_shape(xs[0], x, "add_n");
        auto xv = x.value();
        for (std::size_t i = 0; i < out.size(); ++i) out[i] += xv[i];
    }
    std::vector<std::shared_ptr<TensorNode<T>>> nodes;
    for (const auto& x : xs) nodes.push_back(x.node());
    return Tensor<T>::make_op(xs[0].shape(), std::move(out), xs, [nodes](TensorNode<T>& o) {
        for (auto& n : nodes) {
            if (!n->requires_grad) continue;
            n->ensure_grad();
            for (std::size_t i = 0; i < o.grad.size(); ++i) n->grad[i] += o.grad[i];
        }
    });
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& a, Shape new_shape) {
    if (shape_numel(new_shape) != a.numel())
        throw ShapeError("reshape: element count mismatch " + shape_str(a.shape()) + " -> " + shape_str(new_shape));
    std::vector<T> out(a.value().begin(), a.value().end());
    auto an = a.node();
    return Tensor<T>::make_op(std::move(new_shape), std::move(out), {a}, [an](TensorNode<T>& o) {
        an->ensure_grad();
        for (std::size_t i = 0; i < o.grad.size(); ++i) an->grad[i] += o.grad[i];
    });
}

template <typename T>
Tensor<T> transpose(const Tensor<T>& a) {
    if (a.ndim() != 2) throw ShapeError("transpose expects a 2-d tensor");
    int m = a.dim(0), n = a.dim(1);
    std::vector<T> out(a.numel());
    auto av = a.value();
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) out[static_cast<std::size_t>(j) * m + i] = av[static_cast<std::size_t>(i) * n + j];
    auto an = a.node();
    return Tensor<T>::make_op({n, m}, std::move(out), {a}, [an, m, n](TensorNode<T>& o) {
        an->ensure_grad();
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < n; ++j)
                an->grad[static_cast<std::size_t>(i) * n + j] += o.grad[static_cast<std::size_t>(j) * m + i];
    });
}

template <typename T>
Tensor<T> slice_cols(const Tensor<T>& a, int c0, int w) {
    if (a.ndim() != 2) throw ShapeError("slice_cols expects a 2-d tensor");
    int m = a.dim(0), n = a.dim(1);
    if (c0 < 0 || w <= 0 || c0 + w > n) throw ShapeError("slice_cols: range out of bounds");
    std::vector<T> out(static_cast<std::size_t>(m) * w);
    auto av = a.value();
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < w; ++j) out[static_cast<std::size_t>(i) * w + j] = av[static_cast<std::size_t>(i) * n + c0 + j];
    auto an = a.node();
    return Tensor<T>::make_op({m, w}, std::move(out), {a}, [an, m, n, c0, w](TensorNode<T>& o) {
        an->ensure_grad();
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < w; ++j)
                an->grad[static_cast<std::size_t>(i) * n + c0 + j] += o.grad[static_cast<std::size_t>(i) * w + j];
    });
}

template <typename T>
Tensor<T> concat_cols(const std::vector<Tensor<T>>& xs) {
    if (xs.empty()) throw ShapeError("concat_cols: empty input");
    int m = xs[0].dim(0);
    int total = 0;
    for (const auto& x : xs) {
        if (x.ndim() != 2 || x.dim(0) != m) throw ShapeError("concat_cols: row mismatch");
        total += x.dim(1);
    }
    std::vector<T> out(static_cast<std::size_t>(m) * total);
    int off = 0;
    std::vector<int> offsets, widths;
    for (const auto& x : xs) {
        int w = x.dim(1);
        auto xv = x.value();
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < w; ++j) out[static_cast<std::size_t>(i) * total + off + j] = xv[static_cast<std::size_t>(i) * w + j];
        offsets.push_back(off);
        widths.push_back(w);
        off += w;
    }
    std::vector<std::shared_ptr<TensorNode<T>>> nodes;
    for (const auto& x : xs) nodes.push_back(x.node());
    return Tensor<T>::make_op({m, total}, std::move(out), xs,
                              [nodes, offsets, widths, m, total](TensorNode<T>& o) {
        for (std::size_t k = 0; k < nodes.size(); ++k) {
            auto& n = nodes[k];
            if (!n->requires_grad) continue;
            n->ensure_grad();
            int w = widths[k], off = offsets[k];
            for (int i = 0; i < m; ++i)
                for (int j = 0; j < w; ++j)
                    n->grad[static_cast<std::size_t>(i) * w + j] += o.grad[static_cast<std::size_t>(i) * total + off + j];
        }
    });
}

// ---------------------------------------------------------------------------
// Linear algebra
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.ndim() != 2 || b.ndim() != 2)
        throw ShapeError("matmul expects 2-d tensors, got " + shape_str(a.shape()) + " and " + shape_str(b.shape()));
    int m = a.dim(0), k = a.dim(1), k2 = b.dim(0), n = b.dim(1);
    if (k != k2)
        throw ShapeError("matmul: inner dimensions disagree " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
    std::vector<T> out(static_cast<std::size_t>(m) * n);
    {
        ConstMatMap<T> A(a.value().data(), m, k), B(b.value().data(), k, n);
        MatMap<T> C(out.data(), m, n);
        C.noalias() = A * B;
    }
    auto an = a.node(), bn = b.node();
    return Tensor<T>::make_op({m, n}, std::move(out), {a, b}, [an, bn, m, k, n](TensorNode<T>& o) {
        ConstMatMap<T> dC(o.grad.data(), m, n);
        if (an->requires_grad) {
            an->ensure_grad();
            ConstMatMap<T> B(bn->value.data(), k, n);
            MatMap<T> dA(an->grad.data(), m, k);
            dA.noalias() += dC * B.transpose();
        }
        if (bn->requires_grad) {
            bn->ensure_grad();
            ConstMatMap<T> A(an->value.data(), m, k);
            MatMap<T> dB(bn->grad.data(), k, n);
            dB.noalias() += A.transpose() * dC;
        }
    });
}

/// x[m,n] + row-broadcast bias[n].
template <typename T>
Tensor<T> add_bias(const Tensor<T>& x, const Tensor<T>& b) {
    if (x.ndim() != 2 || b.ndim() != 1 || b.dim(0) != x.dim(1))
        throw ShapeError("add_bias: want [m,n] + [n]");
    int m = x.dim(0), n = x.dim(1);
    std::vector<T> out(x.numel());
    auto xv = x.value(), bv = b.value();
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) out[static_cast<std::size_t>(i) * n + j] = xv[static_cast<std::size_t>(i) * n + j] + bv[j];
    auto xn = x.node(), bn = b.node();
    return Tensor<T>::make_op({m, n}, std::move(out), {x, b}, [xn, bn, m, n](TensorNode<T>& o) {
        if (xn->requires_grad) {
            xn->ensure_grad();
            for (std::size_t i = 0; i < o.grad.size(); ++i) xn->grad[i] += o.grad[i];
        }
        if (bn->requires_grad) {
            bn->ensure_grad();
            for (int i = 0; i < m; ++i)
                for (int j = 0; j < n; ++j) bn->grad[j] += o.grad[static_cast<std::size_t>(i) * n + j];
        }
    });
}

/// linear(x, w, b) = x[m,k] * w[k,n] + b[n]
template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b) {
    return add_bias(matmul(x, w), b);
}

// ---------------------------------------------------------------------------
// Normalization / attention pieces
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> softmax_rows(const Tensor<T>& x) {
    if (x.ndim() != 2) throw ShapeError("softmax_rows expects a 2-d tensor");
    int m = x.dim(0), n = x.dim(1);
    std::vector<T> out(x.numel());
    auto xv = x.value();
    for (int i = 0; i < m; ++i) {
        const T* row = xv.data() + static_cast<std::size_t>(i) * n;
        T* orow = out.data() + static_cast<std::size_t>(i) * n;
        T mx = row[0];
        for (int j = 1; j < n; ++j) mx = std::max(mx, row[j]);
        T s = 0;
        for (int j = 0; j < n; ++j) {
            orow[j] = std::exp(row[j] - mx);
            s += orow[j];
        }
        for (int j = 0; j < n; ++j) orow[j] /= s;
    }
    auto xn = x.node();
    auto saved = std::make_shared<std::vector<T>>(out);
    return Tensor<T>::make_op({m, n}, std::move(out), {x}, [xn, saved, m, n](TensorNode<T>& o) {
        xn->ensure_grad();
        for (int i = 0; i < m; ++i) {
            const T* y = saved->data() + static_cast<std::size_t>(i) * n;
            const T* dy = o.grad.data() + static_cast<std::size_t>(i) * n;
            T dot = 0;
            for (int j = 0; j < n; ++j) dot += dy[j] * y[j];
            T* dx = xn->grad.data() + static_cast<std::size_t>(i) * n;
            for (int j = 0; j < n; ++j) dx[j] += y[j] * (dy[j] - dot);
        }
    });
}

/// Per-row layer normalization with learned gain/shift.
template <typename T>
Tensor<T> layernorm_rows(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                         double eps = 1e-5) {
    if (x.ndim() != 2) throw ShapeError("layernorm_rows expects a 2-d tensor");
    int m = x.dim(0), n = x.dim(1);
    if (gamma.ndim() != 1 || gamma.dim(0) != n || beta.ndim() != 1 || beta.dim(0) != n)
        throw ShapeError("layernorm_rows: gamma/beta must be [n]");
    std::vector<T> out(x.numel());
    auto xhat = std::make_shared<std::vector<T>>(x.numel());
    auto inv_sigma = std::make_shared<std::vector<T>>(m);
    auto xv = x.value();
    auto gv = gamma.value(), bv = beta.value();
    for (int i = 0; i < m; ++i) {
        const T* row = xv.data() + static_cast<std::size_t>(i) * n;
        T mean = 0;
        for (int j = 0; j < n; ++j) mean += row[j];
        mean /= n;
        T var = 0;
        for (int j = 0; j < n; ++j) var += (row[j] - mean) * (row[j] - mean);
        var /= n;
        T isg = T(1) / std::sqrt(var + static_cast<T>(eps));
        (*inv_sigma)[i] = isg;
        for (int j = 0; j < n; ++j) {
            T xh = (row[j] - mean) * isg;
            (*xhat)[static_cast<std::size_t>(i) * n + j] = xh;
            out[static_cast<std::size_t>(i) * n + j] = gv[j] * xh + bv[j];
        }
    }
    auto xn = x.node(), gn = gamma.node(), bn = beta.node();
    return Tensor<T>::make_op({m, n}, std::move(out), {x, gamma, beta},
                              [xn, gn, bn, xhat, inv_sigma, m, n](TensorNode<T>& o) {
        for (int i = 0; i < m; ++i) {
            const T* dy = o.grad.data() + static_cast<std::size_t>(i) * n;
            const T* xh = xhat->data() + static_cast<std::size_t>(i) * n;
            if (xn->requires_grad) {
                xn->ensure_grad();
                T mean_g = 0, mean_gx = 0;
                for (int j = 0; j < n; ++j) {
                    T g = dy[j] * gn->value[j];
                    mean_g += g;
                    mean_gx += g * xh[j];
                }
                mean_g /= n;
                mean_gx /= n;
                T* dx = xn->grad.data() + static_cast<std::size_t>(i) * n;
                T isg = (*inv_sigma)[i];
                for (int j = 0; j < n; ++j) {
                    T g = dy[j] * gn->value[j];
                    dx[j] += (g - mean_g - xh[j] * mean_gx) * isg;
                }
            }
            if (gn->requires_grad) {
                gn->ensure_grad();
                for (int j = 0; j < n; ++j) gn->grad[j] += dy[j] * xh[j];
            }
            if (bn->requires_grad) {
                bn->ensure_grad();
                for (int j = 0; j < n; ++j) bn->grad[j] += dy[j];
            }
        }
    });
}

// ---------------------------------------------------------------------------
// Spatial ops
// ---------------------------------------------------------------------------

/// Zero padding around a [C,H,W] map.
template <typename T>
Tensor<T> pad2d(const Tensor<T>& x, int top, int bottom, int left, int right) {
    if (x.ndim() != 3) throw ShapeError("pad2d expects [C,H,W]");
    if (top < 0 || bottom < 0 || left < 0 || right < 0) throw ShapeError("pad2d: negative padding");
    int c = x.dim(0), h = x.dim(1), w = x.dim(2);
    int oh = h + top + bottom, ow = w + left + right;
    std::vector<T> out(static_cast<std::size_t>(c) * oh * ow, T(0));
    auto xv = x.value();
    for (int ch = 0; ch < c; ++ch)
        for (int y = 0; y < h; ++y) {
            const T* src = xv.data() + (static_cast<std::size_t>(ch) * h + y) * w;
            T* dst = out.data() + (static_cast<std::size_t>(ch) * oh + y + top) * ow + left;
            std::copy(src, src + w, dst);
        }
    auto xn = x.node();
    return Tensor<T>::make_op({c, oh, ow}, std::move(out), {x},
                              [xn, c, h, w, oh, ow, top, left](TensorNode<T>& o) {
        xn->ensure_grad();
        for (int ch = 0; ch < c; ++ch)
            for (int y = 0; y < h; ++y) {
                const T* src = o.grad.data() + (static_cast<std::size_t>(ch) * oh + y + top) * ow + left;
                T* dst = xn->grad.data() + (static_cast<std::size_t>(ch) * h + y) * w;
                for (int xcol = 0; xcol < w; ++xcol) dst[xcol] += src[xcol];
            }
    });
}

namespace detail {

// Gather conv patches: cols is [cin_g*kh*kw, ho*wo] row-major for one group.
template <typename T>
void im2col(const T* input, int cin_g, int h, int w, int kh, int kw, int stride, int pad,
            int ho, int wo, T* cols) {
    for (int c = 0; c < cin_g; ++c)
        for (int ki = 0; ki < kh; ++ki)
            for (int kj = 0; kj < kw; ++kj) {
                T* row = cols + ((static_cast<std::size_t>(c) * kh + ki) * kw + kj) * (static_cast<std::size_t>(ho) * wo);
                for (int oy = 0; oy < ho; ++oy) {
                    int y = oy * stride - pad + ki;
                    for (int ox = 0; ox < wo; ++ox) {
                        int x = ox * stride - pad + kj;
                        row[static_cast<std::size_t>(oy) * wo + ox] =
                            (y >= 0 && y < h && x >= 0 && x < w)
                                ? input[(static_cast<std::size_t>(c) * h + y) * w + x]
                                : T(0);
                    }
                }
            }
}

template <typename T>
void col2im_accum(const T* cols, int cin_g, int h, int w, int kh, int kw, int stride, int pad,
                  int ho, int wo, T* dinput) {
    for (int c = 0; c < cin_g; ++c)
        for (int ki = 0; ki < kh; ++ki)
            for (int kj = 0; kj < kw; ++kj) {
                const T* row = cols + ((static_cast<std::size_t>(c) * kh + ki) * kw + kj) * (static_cast<std::size_t>(ho) * wo);
                for (int oy = 0; oy < ho; ++oy) {
                    int y = oy * stride - pad + ki;
                    if (y < 0 || y >= h) continue;
                    for (int ox = 0; ox < wo; ++ox) {
                        int x = ox * stride - pad + kj;
                        if (x < 0 || x >= w) continue;
                        dinput[(static_cast<std::size_t>(c) * h + y) * w + x] += row[static_cast<std::size_t>(oy) * wo + ox];
                    }
                }
            }
}

}  // namespace detail

/// 2-d convolution (cross-correlation, no kernel flip) over a [C,H,W] input
/// with zero padding. kernel is [Cout, Cin/groups, kh, kw]; optional bias [Cout].
/// Output size must divide exactly: (H + 2*pad - kh) % stride == 0.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& kernel, const Tensor<T>* bias,
                 int stride, int pad, int groups = 1) {
    if (x.ndim() != 3) throw ShapeError("conv2d expects input [C,H,W]");
    if (kernel.ndim() != 4) throw ShapeError("conv2d expects kernel [Cout,Cin/g,kh,kw]");
    if (stride <= 0 || pad < 0 || groups <= 0) throw ShapeError("conv2d: bad stride/pad/groups");
    int cin = x.dim(0), h = x.dim(1), w = x.dim(2);
    int cout = kernel.dim(0), cin_g = kernel.dim(1), kh = kernel.dim(2), kw = kernel.dim(3);
    if (cin % groups != 0 || cout % groups != 0)
        throw ShapeError("conv2d: channels not divisible by groups");
    if (cin / groups != cin_g)
        throw ShapeError("conv2d: kernel channel count " + std::to_string(cin_g) +
                         " != Cin/groups = " + std::to_string(cin / groups));
    int hn = h + 2 * pad - kh, wn = w + 2 * pad - kw;
    if (hn < 0 || wn < 0 || hn % stride != 0 || wn % stride != 0)
        throw ShapeError("conv2d: non-integer output size for input " + shape_str(x.shape()) +
                         " kernel " + shape_str(kernel.shape()) + " stride " + std::to_string(stride) +
                         " pad " + std::to_string(pad));
    int ho = hn / stride + 1, wo = wn / stride + 1;
    if (bias && (bias->ndim() != 1 || bias->dim(0) != cout)) throw ShapeError("conv2d: bias must be [Cout]");

    int cout_g = cout / groups;
    std::size_t kcols = static_cast<std::size_t>(cin_g) * kh * kw;
    std::size_t opix = static_cast<std::size_t>(ho) * wo;
    std::vector<T> out(static_cast<std::size_t>(cout) * opix);
    {
        std::vector<T> cols(kcols * opix);
        for (int g = 0; g < groups; ++g) {
            detail::im2col(x.value().data() + static_cast<std::size_t>(g) * cin_g * h * w,
                           cin_g, h, w, kh, kw, stride, pad, ho, wo, cols.data());
            ConstMatMap<T> K(kernel.value().data() + static_cast<std::size_t>(g) * cout_g * kcols,
                             cout_g, static_cast<Eigen::Index>(kcols));
            ConstMatMap<T> C(cols.data(), static_cast<Eigen::Index>(kcols), static_cast<Eigen::Index>(opix));
            MatMap<T> O(out.data() + static_cast<std::size_t>(g) * cout_g * opix,
                        cout_g, static_cast<Eigen::Index>(opix));
            O.noalias() = K * C;
        }
    }
    if (bias) {
        auto bv = bias->value();
        for (int c = 0; c < cout; ++c) {
            T b = bv[c];
            T* row = out.data() + static_cast<std::size_t>(c) * opix;
            for (std::size_t i = 0; i < opix; ++i) row[i] += b;
        }
    }

    std::vector<Tensor<T>> parents = {x, kernel};
    if (bias) parents.push_back(*bias);
    auto xn = x.node(), kn = kernel.node();
    auto bn = bias ? bias->node() : nullptr;
    return Tensor<T>::make_op({cout, ho, wo}, std::move(out), parents,
                              [xn, kn, bn, cin_g, cout_g, groups, h, w, kh, kw, stride, pad, ho, wo,
                               kcols, opix](TensorNode<T>& o) {
        std::vector<T> cols(kcols * opix);
        std::vector<T> dcols;
        for (int g = 0; g < groups; ++g) {
            // Patches are recomputed instead of stored across the forward pass.
            detail::im2col(xn->value.data() + static_cast<std::size_t>(g) * cin_g * h * w,
                           cin_g, h, w, kh, kw, stride, pad, ho, wo, cols.data());
            ConstMatMap<T> dO(o.grad.data() + static_cast<std::size_t>(g) * cout_g * opix,
                              cout_g, static_cast<Eigen::Index>(opix));
            if (kn->requires_grad) {
                kn->ensure_grad();
                ConstMatMap<T> C(cols.data(), static_cast<Eigen::Index>(kcols), static_cast<Eigen::Index>(opix));
                MatMap<T> dK(kn->grad.data() + static_cast<std::size_t>(g) * cout_g * kcols,
                             cout_g, static_cast<Eigen::Index>(kcols));
                dK.noalias() += dO * C.transpose();
            }
            if (xn->requires_grad) {
                xn->ensure_grad();
                dcols.assign(kcols * opix, T(0));
                ConstMatMap<T> K(kn->value.data() + static_cast<std::size_t>(g) * cout_g * kcols,
                                 cout_g, static_cast<Eigen::Index>(kcols));
                MatMap<T> dC(dcols.data(), static_cast<Eigen::Index>(kcols), static_cast<Eigen::Index>(opix));
                dC.noalias() = K.transpose() * dO;
                detail::col2im_accum(dcols.data(), cin_g, h, w, kh, kw, stride, pad, ho, wo,
                                     xn->grad.data() + static_cast<std::size_t>(g) * cin_g * h * w);
            }
        }
        if (bn && bn->requires_grad) {
            bn->ensure_grad();
            int cout = cout_g * groups;
            for (int c = 0; c < cout; ++c) {
                const T* row = o.grad.data() + static_cast<std::size_t>(c) * opix;
                T acc = 0;
                for (std::size_t i = 0; i < opix; ++i) acc += row[i];
                bn->grad[c] += acc;
            }
        }
    });
}

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& kernel, int stride, int pad, int groups = 1) {
    return conv2d(x, kernel, static_cast<const Tensor<T>*>(nullptr), stride, pad, groups);
}

/// Bilinear resize of a [C,H,W] map, align-corners convention: output corner
/// samples map exactly onto input corner samples.
template <typename T>
Tensor<T> bilinear_resize(const Tensor<T>& x, int oh, int ow) {
    if (x.ndim() != 3) throw ShapeError("bilinear_resize expects [C,H,W]");
    if (oh < 1 || ow < 1) throw ShapeError("bilinear_resize: output size must be >= 1");
    int c = x.dim(0), h = x.dim(1), w = x.dim(2);
    // Precompute 1-d taps once per axis.
    struct Tap {
        int i0, i1;
        T w0, w1;
    };
    auto make_taps = [](int in, int out) {
        std::vector<Tap> taps(out);
        double s = out == 1 ? 0.0 : static_cast<double>(in - 1) / (out - 1);
        for (int o = 0; o < out; ++o) {
            double pos = o * s;
            int i0 = static_cast<int>(pos);
            if (i0 > in - 2) i0 = in >= 2 ? in - 2 : 0;
            double f = pos - i0;
            taps[o] = {i0, in >= 2 ? i0 + 1 : i0, static_cast<T>(1.0 - f), static_cast<T>(f)};
        }
        return taps;
    };
    auto ty = std::make_shared<std::vector<Tap>>(make_taps(h, oh));
    auto tx = std::make_shared<std::vector<Tap>>(make_taps(w, ow));

    std::vector<T> out(static_cast<std::size_t>(c) * oh * ow);
    auto xv = x.value();
    for (int ch = 0; ch < c; ++ch) {
        const T* plane = xv.data() + static_cast<std::size_t>(ch) * h * w;
        T* oplane = out.data() + static_cast<std::size_t>(ch) * oh * ow;
        for (int oy = 0; oy < oh; ++oy) {
            const Tap& a = (*ty)[oy];
            for (int ox = 0; ox < ow; ++ox) {
                const Tap& b = (*tx)[ox];
                oplane[static_cast<std::size_t>(oy) * ow + ox] =
                    a.w0 * (b.w0 * plane[static_cast<std::size_t>(a.i0) * w + b.i0] +
                            b.w1 * plane[static_cast<std::size_t>(a.i0) * w + b.i1]) +
                    a.w1 * (b.w0 * plane[static_cast<std::size_t>(a.i1) * w + b.i0] +
                            b.w1 * plane[static_cast<std::size_t>(a.i1) * w + b.i1]);
            }
        }
    }
    auto xn = x.node();
    return Tensor<T>::make_op({c, oh, ow}, std::move(out), {x},
                              [xn, ty, tx, c, h, w, oh, ow](TensorNode<T>& o) {
        xn->ensure_grad();
        for (int ch = 0; ch < c; ++ch) {
            T* dplane = xn->grad.data() + static_cast<std::size_t>(ch) * h * w;
            const T* gplane = o.grad.data() + static_cast<std::size_t>(ch) * oh * ow;
            for (int oy = 0; oy < oh; ++oy) {
                const Tap& a = (*ty)[oy];
                for (int ox = 0; ox < ow; ++ox) {
                    const Tap& b = (*tx)[ox];
                    T g = gplane[static_cast<std::size_t>(oy) * ow + ox];
                    dplane[static_cast<std::size_t>(a.i0) * w + b.i0] += g * a.w0 * b.w0;
                    dplane[static_cast<std::size_t>(a.i0) * w + b.i1] += g * a.w0 * b.w1;
                    dplane[static_cast<std::size_t>(a.i1) * w + b.i0] += g * a.w1 * b.w0;
                    dplane[static_cast<std::size_t>(a.i1) * w + b.i1] += g * a.w1 * b.w1;
                }
            }
        }
    });
}

}  // namespace fpi::ops
