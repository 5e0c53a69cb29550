// Copyright (C) 2026 the patchwork authors
// SPDX-License-Identifier: Apache-2.0

#include "patchwork/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

namespace patchwork::ag {

namespace {

Var make_node(Tensor val, std::vector<Var> parents, std::function<void(Node&)> backprop) {
    auto n = std::make_shared<Node>();
    n->val = std::move(val);
    bool rg = false;
    for (const auto& p : parents) rg = rg || p->requires_grad;
    n->requires_grad = rg;
    if (rg) {
        n->parents = std::move(parents);
        n->backprop = std::move(backprop);
    }
    return n;
}

void check_same_shape(const Var& a, const Var& b, const char* op) {
    if (!a->val.same_shape(b->val))
        throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_str(a->val.dims()) +
                                    " vs " + shape_str(b->val.dims()));
}

}  // namespace

Var constant(Tensor t) {
    auto n = std::make_shared<Node>();
    n->val = std::move(t);
    return n;
}

Var param(Tensor t) {
    auto n = std::make_shared<Node>();
    n->val = std::move(t);
    n->requires_grad = true;
    return n;
}

void backward(const Var& root) {
    if (root->val.numel() != 1) throw std::logic_error("backward: root must be scalar");
    // Iterative post-order DFS for the topological order.
    std::vector<Node*> order;
    std::unordered_set<Node*> visited;
    std::vector<std::pair<Node*, size_t>> stack;
    if (root->requires_grad) stack.emplace_back(root.get(), 0);
    while (!stack.empty()) {
        auto& [node, idx] = stack.back();
        if (idx < node->parents.size()) {
            Node* p = node->parents[idx++].get();
            if (p->requires_grad && !visited.count(p)) {
                visited.insert(p);
                stack.emplace_back(p, 0);
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }
    root->grad_buf().array().setConstant(1.0);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->backprop && n->grad.numel() != 0) n->backprop(*n);
    }
}

void zero_grad(const std::vector<Var>& params) {
    for (const auto& p : params)
        if (p->grad.numel() != 0) p->grad.array().setZero();
}

// ---------------------------------------------------------------- elementwise

Var add(const Var& a, const Var& b) {
    check_same_shape(a, b, "add");
    Tensor out(a->val.dims(), a->val.array() + b->val.array());
    return make_node(std::move(out), {a, b}, [a, b](Node& n) {
        if (a->requires_grad) a->grad_buf().array() += n.grad.array();
        if (b->requires_grad) b->grad_buf().array() += n.grad.array();
    });
}

Var sub(const Var& a, const Var& b) {
    check_same_shape(a, b, "sub");
    Tensor out(a->val.dims(), a->val.array() - b->val.array());
    return make_node(std::move(out), {a, b}, [a, b](Node& n) {
        if (a->requires_grad) a->grad_buf().array() += n.grad.array();
        if (b->requires_grad) b->grad_buf().array() -= n.grad.array();
    });
}

Var mul(const Var& a, const Var& b) {
    check_same_shape(a, b, "mul");
    Tensor out(a->val.dims(), a->val.array() * b->val.array());
    return make_node(std::move(out), {a, b}, [a, b](Node& n) {
        if (a->requires_grad) a->grad_buf().array() += n.grad.array() * b->val.array();
        if (b->requires_grad) b->grad_buf().array() += n.grad.array() * a->val.array();
    });
}

Var add_scalar(const Var& a, double s) {
    Tensor out(a->val.dims(), a->val.array() + s);
    return make_node(std::move(out), {a}, [a](Node& n) {
        a->grad_buf().array() += n.grad.array();
    });
}

Var mul_scalar(const Var& a, double s) {
    Tensor out(a->val.dims(), a->val.array() * s);
    return make_node(std::move(out), {a}, [a, s](Node& n) {
        a->grad_buf().array() += n.grad.array() * s;
    });
}

Var square(const Var& a) {
    Tensor out(a->val.dims(), a->val.array().square());
    return make_node(std::move(out), {a}, [a](Node& n) {
        a->grad_buf().array() += 2.0 * n.grad.array() * a->val.array();
    });
}

Var exp(const Var& a) {
    Tensor out(a->val.dims(), a->val.array().exp());
    Eigen::ArrayXd v = out.array();
    return make_node(std::move(out), {a}, [a, v = std::move(v)](Node& n) {
        a->grad_buf().array() += n.grad.array() * v;
    });
}

Var abs(const Var& a) {
    Tensor out(a->val.dims(), a->val.array().abs());
    return make_node(std::move(out), {a}, [a](Node& n) {
        a->grad_buf().array() += n.grad.array() * a->val.array().sign();
    });
}

Var silu(const Var& a) {
    Eigen::ArrayXd sig = 1.0 / (1.0 + (-a->val.array()).exp());
    Tensor out(a->val.dims(), a->val.array() * sig);
    return make_node(std::move(out), {a}, [a, sig](Node& n) {
        a->grad_buf().array() += n.grad.array() * (sig * (1.0 + a->val.array() * (1.0 - sig)));
    });
}

// ------------------------------------------------------------ shape/indexing

Var reshape(const Var& a, Shape dims) {
    Tensor out = a->val.reshaped(dims);
    return make_node(std::move(out), {a}, [a](Node& n) {
        a->grad_buf().array() += n.grad.array();
    });
}

Var transpose(const Var& a) {
    auto m = a->val.mat();
    Tensor out({a->val.dim(1), a->val.dim(0)});
    out.mat() = m.transpose();
    return make_node(std::move(out), {a}, [a](Node& n) {
        a->grad_buf().mat() += n.grad.mat().transpose();
    });
}

Var slice_cols(const Var& a, int c0, int len) {
    int rows = a->val.dim(0), cols = a->val.dim(1);
    if (c0 < 0 || c0 + len > cols) throw std::out_of_range("slice_cols");
    Tensor out({rows, len});
    out.mat() = a->val.mat().middleCols(c0, len);
    return make_node(std::move(out), {a}, [a, c0, len](Node& n) {
        a->grad_buf().mat().middleCols(c0, len) += n.grad.mat();
    });
}

Var concat_cols(const std::vector<Var>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat_cols: empty");
    int rows = parts[0]->val.dim(0), total = 0;
    for (const auto& p : parts) {
        if (p->val.dim(0) != rows) throw std::invalid_argument("concat_cols: row mismatch");
        total += p->val.dim(1);
    }
    Tensor out({rows, total});
    int c = 0;
    for (const auto& p : parts) {
        out.mat().middleCols(c, p->val.dim(1)) = p->val.mat();
        c += p->val.dim(1);
    }
    return make_node(std::move(out), parts, [parts](Node& n) {
        int c = 0;
        for (const auto& p : parts) {
            int w = p->val.dim(1);
            if (p->requires_grad) p->grad_buf().mat() += n.grad.mat().middleCols(c, w);
            c += w;
        }
    });
}

Var gather_rows(const Var& a, std::vector<int> idx) {
    int cols = a->val.dim(1);
    Tensor out({static_cast<int>(idx.size()), cols});
    for (size_t i = 0; i < idx.size(); ++i) out.mat().row(static_cast<int>(i)) = a->val.mat().row(idx[i]);
    return make_node(std::move(out), {a}, [a, idx = std::move(idx)](Node& n) {
        for (size_t i = 0; i < idx.size(); ++i)
            a->grad_buf().mat().row(idx[i]) += n.grad.mat().row(static_cast<int>(i));
    });
}

Var scatter_rows(const Var& base, const Var& src, std::vector<int> idx) {
    if (static_cast<int>(idx.size()) != src->val.dim(0))
        throw std::invalid_argument("scatter_rows: index count != src rows");
    Tensor out = base->val;
    for (size_t i = 0; i < idx.size(); ++i) out.mat().row(idx[i]) = src->val.mat().row(static_cast<int>(i));
    return make_node(std::move(out), {base, src}, [base, src, idx = std::move(idx)](Node& n) {
        if (src->requires_grad) {
            for (size_t i = 0; i < idx.size(); ++i)
                src->grad_buf().mat().row(static_cast<int>(i)) += n.grad.mat().row(idx[i]);
        }
        if (base->requires_grad) {
            Tensor masked = n.grad;
            for (int r : idx) masked.mat().row(r).setZero();
            base->grad_buf().array() += masked.array();
        }
    });
}

Var broadcast_row(const Var& row, int n_rows) {
    int d = static_cast<int>(row->val.numel());
    Tensor out({n_rows, d});
    Eigen::Map<const Eigen::RowVectorXd> r(row->val.data(), d);
    out.mat().rowwise() = r;
    return make_node(std::move(out), {row}, [row, d](Node& n) {
        Eigen::Map<Eigen::RowVectorXd> g(row->grad_buf().data(), d);
        g += n.grad.mat().colwise().sum();
    });
}

// ----------------------------------------------------------- linear algebra

Var matmul(const Var& a, const Var& b) {
    if (a->val.dim(1) != b->val.dim(0))
        throw std::invalid_argument("matmul: inner dims " + shape_str(a->val.dims()) + " x " +
                                    shape_str(b->val.dims()));
    Tensor out({a->val.dim(0), b->val.dim(1)});
    out.mat().noalias() = a->val.mat() * b->val.mat();
    return make_node(std::move(out), {a, b}, [a, b](Node& n) {
        if (a->requires_grad) a->grad_buf().mat().noalias() += n.grad.mat() * b->val.mat().transpose();
        if (b->requires_grad) b->grad_buf().mat().noalias() += a->val.mat().transpose() * n.grad.mat();
    });
}

Var add_bias_rows(const Var& x, const Var& b) {
    int d = x->val.dim(1);
    if (static_cast<int>(b->val.numel()) != d) throw std::invalid_argument("add_bias_rows: dim mismatch");
    Tensor out = x->val;
    Eigen::Map<const Eigen::RowVectorXd> bv(b->val.data(), d);
    out.mat().rowwise() += bv;
    return make_node(std::move(out), {x, b}, [x, b, d](Node& n) {
        if (x->requires_grad) x->grad_buf().array() += n.grad.array();
        if (b->requires_grad) {
            Eigen::Map<Eigen::RowVectorXd> g(b->grad_buf().data(), d);
            g += n.grad.mat().colwise().sum();
        }
    });
}

Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps) {
    int rows = x->val.dim(0), d = x->val.dim(1);
    Tensor out(x->val.dims());
    Eigen::ArrayXd mu(rows), istd(rows);
    auto xm = x->val.mat();
    for (int r = 0; r < rows; ++r) {
        double m = xm.row(r).mean();
        double var = (xm.row(r).array() - m).square().mean();
        mu[r] = m;
        istd[r] = 1.0 / std::sqrt(var + eps);
    }
    Eigen::Map<const Eigen::RowVectorXd> g(gamma->val.data(), d), be(beta->val.data(), d);
    for (int r = 0; r < rows; ++r)
        out.mat().row(r) = ((xm.row(r).array() - mu[r]) * istd[r]).matrix().cwiseProduct(g) + be;
    return make_node(std::move(out), {x, gamma, beta},
                     [x, gamma, beta, mu, istd, d, rows](Node& n) {
        Eigen::Map<const Eigen::RowVectorXd> g(gamma->val.data(), d);
        auto xm = x->val.mat();
        for (int r = 0; r < rows; ++r) {
            Eigen::RowVectorXd xhat = (xm.row(r).array() - mu[r]).matrix() * istd[r];
            Eigen::RowVectorXd dy = n.grad.mat().row(r);
            if (gamma->requires_grad) {
                Eigen::Map<Eigen::RowVectorXd> gg(gamma->grad_buf().data(), d);
                gg += dy.cwiseProduct(xhat);
            }
            if (beta->requires_grad) {
                Eigen::Map<Eigen::RowVectorXd> gb(beta->grad_buf().data(), d);
                gb += dy;
            }
            if (x->requires_grad) {
                Eigen::RowVectorXd dxhat = dy.cwiseProduct(g);
                double m1 = dxhat.mean();
                double m2 = dxhat.cwiseProduct(xhat).mean();
                x->grad_buf().mat().row(r) +=
                    istd[r] * (dxhat.array() - m1 - xhat.array() * m2).matrix();
            }
        }
    });
}

Var softmax_rows(const Var& x) {
    Tensor out(x->val.dims());
    int rows = x->val.dim(0);
    for (int r = 0; r < rows; ++r) {
        Eigen::ArrayXd row = x->val.mat().row(r).array();
        row -= row.maxCoeff();
        row = row.exp();
        out.mat().row(r) = (row / row.sum()).matrix();
    }
    Tensor y = out;
    return make_node(std::move(out), {x}, [x, y = std::move(y)](Node& n) {
        int rows = y.dim(0);
        for (int r = 0; r < rows; ++r) {
            Eigen::ArrayXd yr = y.mat().row(r).array();
            Eigen::ArrayXd dy = n.grad.mat().row(r).array();
            double dot = (dy * yr).sum();
            x->grad_buf().mat().row(r) += (yr * (dy - dot)).matrix();
        }
    });
}

// ---------------------------------------------------------------- reductions

Var sum_all(const Var& a) {
    Tensor out = Tensor::scalar(a->val.array().sum());
    return make_node(std::move(out), {a}, [a](Node& n) {
        a->grad_buf().array() += n.grad.item();
    });
}

Var mean_all(const Var& a) {
    double inv = 1.0 / static_cast<double>(a->val.numel());
    Tensor out = Tensor::scalar(a->val.array().mean());
    return make_node(std::move(out), {a}, [a, inv](Node& n) {
        a->grad_buf().array() += n.grad.item() * inv;
    });
}

// ------------------------------------------------------------------ image ops

namespace {

// cols: [C*k*k, Ho*Wo]
void im2col(const double* x, int c, int h, int w, int k, int stride, int pad,
            Eigen::MatrixXd& cols) {
    int ho = (h + 2 * pad - k) / stride + 1;
    int wo = (w + 2 * pad - k) / stride + 1;
    cols.setZero(c * k * k, ho * wo);
    for (int ch = 0; ch < c; ++ch)
        for (int ky = 0; ky < k; ++ky)
            for (int kx = 0; kx < k; ++kx) {
                int row = (ch * k + ky) * k + kx;
                for (int oy = 0; oy < ho; ++oy) {
                    int iy = oy * stride - pad + ky;
                    if (iy < 0 || iy >= h) continue;
                    for (int ox = 0; ox < wo; ++ox) {
                        int ix = ox * stride - pad + kx;
                        if (ix < 0 || ix >= w) continue;
                        cols(row, oy * wo + ox) = x[(ch * h + iy) * w + ix];
                    }
                }
            }
}

void col2im_add(const Eigen::MatrixXd& cols, int c, int h, int w, int k, int stride, int pad,
                double* dx) {
    int ho = (h + 2 * pad - k) / stride + 1;
    int wo = (w + 2 * pad - k) / stride + 1;
    for (int ch = 0; ch < c; ++ch)
        for (int ky = 0; ky < k; ++ky)
            for (int kx = 0; kx < k; ++kx) {
                int row = (ch * k + ky) * k + kx;
                for (int oy = 0; oy < ho; ++oy) {
                    int iy = oy * stride - pad + ky;
                    if (iy < 0 || iy >= h) continue;
                    for (int ox = 0; ox < wo; ++ox) {
                        int ix = ox * stride - pad + kx;
                        if (ix < 0 || ix >= w) continue;
                        dx[(ch * h + iy) * w + ix] += cols(row, oy * wo + ox);
                    }
                }
            }
}

}  // namespace

Var conv2d(const Var& x, const Var& w, const Var& b, int stride, int pad) {
    if (x->val.ndim() != 4 || w->val.ndim() != 4)
        throw std::invalid_argument("conv2d: expects NCHW input and OIHW weight");
    int n = x->val.dim(0), c = x->val.dim(1), h = x->val.dim(2), wd = x->val.dim(3);
    int o = w->val.dim(0), ci = w->val.dim(1), k = w->val.dim(2);
    if (ci != c) throw std::invalid_argument("conv2d: channel mismatch");
    if (w->val.dim(3) != k) throw std::invalid_argument("conv2d: non-square kernel");
    int ho = (h + 2 * pad - k) / stride + 1;
    int wo = (wd + 2 * pad - k) / stride + 1;
    Tensor out({n, o, ho, wo});
    auto wm = w->val.as_mat(o, c * k * k);
    Eigen::Map<const Eigen::VectorXd> bv(b->val.data(), o);
    Eigen::MatrixXd cols;
    for (int i = 0; i < n; ++i) {
        im2col(x->val.data() + int64_t(i) * c * h * wd, c, h, wd, k, stride, pad, cols);
        Tensor::MatMap y(out.data() + int64_t(i) * o * ho * wo, o, ho * wo);
        y.noalias() = wm * cols;
        y.colwise() += bv;
    }
    return make_node(std::move(out), {x, w, b},
                     [x, w, b, n, c, h, wd, o, k, stride, pad, ho, wo](Node& nd) {
        auto wm = w->val.as_mat(o, c * k * k);
        Eigen::MatrixXd cols, dcols;
        for (int i = 0; i < n; ++i) {
            Tensor::CMatMap dy(nd.grad.data() + int64_t(i) * o * ho * wo, o, ho * wo);
            if (w->requires_grad || b->requires_grad)
                im2col(x->val.data() + int64_t(i) * c * h * wd, c, h, wd, k, stride, pad, cols);
            if (w->requires_grad) {
                auto dwm = w->grad_buf().as_mat(o, c * k * k);
                dwm.noalias() += dy * cols.transpose();
            }
            if (b->requires_grad) {
                Eigen::Map<Eigen::VectorXd> db(b->grad_buf().data(), o);
                db += dy.rowwise().sum();
            }
            if (x->requires_grad) {
                dcols.noalias() = wm.transpose() * dy;
                col2im_add(dcols, c, h, wd, k, stride, pad,
                           x->grad_buf().data() + int64_t(i) * c * h * wd);
            }
        }
    });
}

Var upsample_nearest2(const Var& x) {
    int n = x->val.dim(0), c = x->val.dim(1), h = x->val.dim(2), w = x->val.dim(3);
    Tensor out({n, c, h * 2, w * 2});
    const double* src = x->val.data();
    double* dst = out.data();
    for (int i = 0; i < n * c; ++i)
        for (int y = 0; y < 2 * h; ++y)
            for (int xx = 0; xx < 2 * w; ++xx)
                dst[(int64_t(i) * 4 * h * w) + y * 2 * w + xx] =
                    src[(int64_t(i) * h * w) + (y / 2) * w + (xx / 2)];
    return make_node(std::move(out), {x}, [x, n, c, h, w](Node& nd) {
        double* dx = x->grad_buf().data();
        const double* dy = nd.grad.data();
        for (int i = 0; i < n * c; ++i)
            for (int y = 0; y < 2 * h; ++y)
                for (int xx = 0; xx < 2 * w; ++xx)
                    dx[(int64_t(i) * h * w) + (y / 2) * w + (xx / 2)] +=
                        dy[(int64_t(i) * 4 * h * w) + y * 2 * w + xx];
    });
}

Var group_norm(const Var& x, int groups, const Var& gamma, const Var& beta, double eps) {
    int n = x->val.dim(0), c = x->val.dim(1), h = x->val.dim(2), w = x->val.dim(3);
    if (c % groups != 0) throw std::invalid_argument("group_norm: channels not divisible by groups");
    int cpg = c / groups;
    int64_t gsz = int64_t(cpg) * h * w;
    Tensor out(x->val.dims());
    Eigen::ArrayXd mu(n * groups), istd(n * groups);
    for (int i = 0; i < n; ++i)
        for (int g = 0; g < groups; ++g) {
            const double* xs = x->val.data() + (int64_t(i) * c + int64_t(g) * cpg) * h * w;
            Eigen::Map<const Eigen::ArrayXd> xa(xs, gsz);
            double m = xa.mean();
            double var = (xa - m).square().mean();
            int gi = i * groups + g;
            mu[gi] = m;
            istd[gi] = 1.0 / std::sqrt(var + eps);
            Eigen::Map<Eigen::ArrayXd> ya(out.data() + (int64_t(i) * c + int64_t(g) * cpg) * h * w, gsz);
            ya = (xa - m) * istd[gi];
        }
    // scale/shift per channel
    for (int i = 0; i < n; ++i)
        for (int ch = 0; ch < c; ++ch) {
            Eigen::Map<Eigen::ArrayXd> ya(out.data() + (int64_t(i) * c + ch) * h * w, int64_t(h) * w);
            ya = ya * gamma->val.at(ch) + beta->val.at(ch);
        }
    return make_node(std::move(out), {x, gamma, beta},
                     [x, gamma, beta, groups, mu, istd, n, c, h, w, cpg, gsz](Node& nd) {
        for (int i = 0; i < n; ++i)
            for (int g = 0; g < groups; ++g) {
                int gi = i * groups + g;
                const double* xs = x->val.data() + (int64_t(i) * c + int64_t(g) * cpg) * h * w;
                const double* dys = nd.grad.data() + (int64_t(i) * c + int64_t(g) * cpg) * h * w;
                Eigen::Map<const Eigen::ArrayXd> xa(xs, gsz);
                Eigen::Map<const Eigen::ArrayXd> dya(dys, gsz);
                Eigen::ArrayXd xhat = (xa - mu[gi]) * istd[gi];
                // per-channel gamma within the group
                Eigen::ArrayXd dxhat(gsz);
                int64_t hw = int64_t(h) * w;
                for (int cc = 0; cc < cpg; ++cc) {
                    int ch = g * cpg + cc;
                    dxhat.segment(cc * hw, hw) = dya.segment(cc * hw, hw) * gamma->val.at(ch);
                    if (gamma->requires_grad)
                        gamma->grad_buf().at(ch) +=
                            (dya.segment(cc * hw, hw) * xhat.segment(cc * hw, hw)).sum();
                    if (beta->requires_grad) beta->grad_buf().at(ch) += dya.segment(cc * hw, hw).sum();
                }
                if (x->requires_grad) {
                    double m1 = dxhat.mean();
                    double m2 = (dxhat * xhat).mean();
                    Eigen::Map<Eigen::ArrayXd> dxa(
                        x->grad_buf().data() + (int64_t(i) * c + int64_t(g) * cpg) * h * w, gsz);
                    dxa += istd[gi] * (dxhat - m1 - xhat * m2);
                }
            }
    });
}

Var add_channel_bias(const Var& x, const Var& b) {
    int n = x->val.dim(0), c = x->val.dim(1), h = x->val.dim(2), w = x->val.dim(3);
    if (static_cast<int>(b->val.numel()) != c) throw std::invalid_argument("add_channel_bias: dim");
    Tensor out = x->val;
    int64_t hw = int64_t(h) * w;
    for (int i = 0; i < n; ++i)
        for (int ch = 0; ch < c; ++ch) {
            Eigen::Map<Eigen::ArrayXd> ya(out.data() + (int64_t(i) * c + ch) * hw, hw);
            ya += b->val.at(ch);
        }
    return make_node(std::move(out), {x, b}, [x, b, n, c, h, w](Node& nd) {
        int64_t hw = int64_t(h) * w;
        if (x->requires_grad) x->grad_buf().array() += nd.grad.array();
        if (b->requires_grad)
            for (int i = 0; i < n; ++i)
                for (int ch = 0; ch < c; ++ch) {
                    Eigen::Map<const Eigen::ArrayXd> ga(nd.grad.data() + (int64_t(i) * c + ch) * hw, hw);
                    b->grad_buf().at(ch) += ga.sum();
                }
    });
}

Var chw_to_rows(const Var& x) {
    if (x->val.ndim() != 4 || x->val.dim(0) != 1) throw std::invalid_argument("chw_to_rows: expects [1,C,H,W]");
    int c = x->val.dim(1), h = x->val.dim(2), w = x->val.dim(3);
    Tensor out({h * w, c});
    for (int ch = 0; ch < c; ++ch)
        for (int p = 0; p < h * w; ++p) out.mat()(p, ch) = x->val.at(int64_t(ch) * h * w + p);
    return make_node(std::move(out), {x}, [x, c, h, w](Node& nd) {
        for (int ch = 0; ch < c; ++ch)
            for (int p = 0; p < h * w; ++p)
                x->grad_buf().at(int64_t(ch) * h * w + p) += nd.grad.mat()(p, ch);
    });
}

Var rows_to_chw(const Var& x, int c, int h, int w) {
    if (x->val.dim(0) != h * w || x->val.dim(1) != c) throw std::invalid_argument("rows_to_chw: shape");
    Tensor out({1, c, h, w});
    for (int ch = 0; ch < c; ++ch)
        for (int p = 0; p < h * w; ++p) out.at(int64_t(ch) * h * w + p) = x->val.mat()(p, ch);
    return make_node(std::move(out), {x}, [x, c, h, w](Node& nd) {
        for (int ch = 0; ch < c; ++ch)
            for (int p = 0; p < h * w; ++p)
                x->grad_buf().mat()(p, ch) += nd.grad.at(int64_t(ch) * h * w + p);
    });
}

namespace {
// token row layout: (c * P + py) * P + px
inline int64_t patch_src_index(int l, int j, int c, int h, int w, int patch) {
    int gw = w / patch;
    int gy = l / gw, gx = l % gw;
    int ch = j / (patch * patch);
    int py = (j / patch) % patch;
    int px = j % patch;
    (void)c;
    (void)h;
    return (int64_t(ch) * h + (gy * patch + py)) * w + (gx * patch + px);
}
}  // namespace

Var image_to_patches(const Var& img, int patch) {
    if (img->val.ndim() != 3) throw std::invalid_argument("image_to_patches: expects [C,H,W]");
    int c = img->val.dim(0), h = img->val.dim(1), w = img->val.dim(2);
    if (h % patch != 0 || w % patch != 0)
        throw std::invalid_argument("image_to_patches: dims not divisible by patch size");
    int l = (h / patch) * (w / patch), d = patch * patch * c;
    Tensor out({l, d});
    for (int r = 0; r < l; ++r)
        for (int j = 0; j < d; ++j) out.mat()(r, j) = img->val.at(patch_src_index(r, j, c, h, w, patch));
    return make_node(std::move(out), {img}, [img, c, h, w, patch, l, d](Node& nd) {
        for (int r = 0; r < l; ++r)
            for (int j = 0; j < d; ++j)
                img->grad_buf().at(patch_src_index(r, j, c, h, w, patch)) += nd.grad.mat()(r, j);
    });
}

Var patches_to_image(const Var& rows, int c, int h, int w, int patch) {
    int l = (h / patch) * (w / patch), d = patch * patch * c;
    if (rows->val.dim(0) != l || rows->val.dim(1) != d)
        throw std::invalid_argument("patches_to_image: shape mismatch");
    Tensor out({c, h, w});
    for (int r = 0; r < l; ++r)
        for (int j = 0; j < d; ++j) out.at(patch_src_index(r, j, c, h, w, patch)) = rows->val.mat()(r, j);
    return make_node(std::move(out), {rows}, [rows, c, h, w, patch, l, d](Node& nd) {
        for (int r = 0; r < l; ++r)
            for (int j = 0; j < d; ++j)
                rows->grad_buf().mat()(r, j) += nd.grad.at(patch_src_index(r, j, c, h, w, patch));
    });
}

// -------------------------------------------------------------------- losses

Var mse_loss(const Var& pred, const Tensor& target) {
    if (!pred->val.same_shape(target)) throw std::invalid_argument("mse_loss: shape mismatch");
    return mean_all(square(sub(pred, constant(target))));
}

Var l1_loss(const Var& pred, const Tensor& target) {
    if (!pred->val.same_shape(target)) throw std::invalid_argument("l1_loss: shape mismatch");
    return mean_all(abs(sub(pred, constant(target))));
}

}  // namespace patchwork::ag
