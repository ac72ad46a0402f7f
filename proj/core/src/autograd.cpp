// Copyright (C) 2026 The realism authors
// SPDX-License-Identifier: Apache-2.0

#include "realism/autograd.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace realism::ad {

namespace {

constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluA = 0.044715;

void check_same_shape(const Matrix& a, const Matrix& b, const char* op) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw std::invalid_argument(std::string(op) + ": shape mismatch");
    }
}

}  // namespace

Var Graph::push(Matrix value, bool needs_grad, std::function<void(Graph&, int)> back) {
    Node n;
    n.owned = std::move(value);
    n.needs_grad = needs_grad;
    if (needs_grad) n.back = std::move(back);
    nodes_.push_back(std::move(n));
    return Var{static_cast<int>(nodes_.size()) - 1};
}

Var Graph::constant(Matrix value) { return push(std::move(value), false, {}); }

Var Graph::constant_ref(const Matrix& value) {
    Node n;
    n.ref = &value;
    nodes_.push_back(std::move(n));
    return Var{static_cast<int>(nodes_.size()) - 1};
}

Var Graph::parameter(const Matrix& value, Matrix* grad_sink) {
    Node n;
    n.ref = &value;
    n.sink = grad_sink;
    n.needs_grad = grad_sink != nullptr;
    nodes_.push_back(std::move(n));
    return Var{static_cast<int>(nodes_.size()) - 1};
}

const Matrix& Graph::value(Var v) const { return val(v.id); }

bool Graph::requires_grad(Var v) const { return nodes_[static_cast<std::size_t>(v.id)].needs_grad; }

Matrix& Graph::grad_of(int id) { return nodes_[static_cast<std::size_t>(id)].grad; }

void Graph::accumulate(int id, const Matrix& g) {
    auto& n = nodes_[static_cast<std::size_t>(id)];
    if (!n.needs_grad) return;
    if (n.grad.size() == 0) {
        n.grad = g;
    } else {
        n.grad += g;
    }
}

bool Graph::any_needs(std::initializer_list<int> ids) const {
    for (int id : ids) {
        if (nodes_[static_cast<std::size_t>(id)].needs_grad) return true;
    }
    return false;
}

Var Graph::matmul(Var a, Var b) {
    if (val(a.id).cols() != val(b.id).rows()) throw std::invalid_argument("matmul: inner dimension mismatch");
    Matrix out = val(a.id) * val(b.id);
    return push(std::move(out), any_needs({a.id, b.id}), [a, b](Graph& g, int self) {
        const Matrix& d = g.grad_of(self);
        if (g.nodes_[a.id].needs_grad) g.accumulate(a.id, d * g.val(b.id).transpose());
        if (g.nodes_[b.id].needs_grad) g.accumulate(b.id, g.val(a.id).transpose() * d);
    });
}

Var Graph::matmul_nt(Var a, Var b) {
    if (val(a.id).cols() != val(b.id).cols()) throw std::invalid_argument("matmul_nt: inner dimension mismatch");
    Matrix out = val(a.id) * val(b.id).transpose();
    return push(std::move(out), any_needs({a.id, b.id}), [a, b](Graph& g, int self) {
        const Matrix& d = g.grad_of(self);
        if (g.nodes_[a.id].needs_grad) g.accumulate(a.id, d * g.val(b.id));
        if (g.nodes_[b.id].needs_grad) g.accumulate(b.id, d.transpose() * g.val(a.id));
    });
}

Var Graph::add(Var a, Var b) {
    check_same_shape(val(a.id), val(b.id), "add");
    Matrix out = val(a.id) + val(b.id);
    return push(std::move(out), any_needs({a.id, b.id}), [a, b](Graph& g, int self) {
        const Matrix& d = g.grad_of(self);
        g.accumulate(a.id, d);
        g.accumulate(b.id, d);
    });
}

Var Graph::add_row(Var a, Var row) {
    const auto& r = val(row.id);
    if (r.rows() != 1 || r.cols() != val(a.id).cols()) throw std::invalid_argument("add_row: shape mismatch");
    Matrix out = val(a.id).rowwise() + r.row(0);
    return push(std::move(out), any_needs({a.id, row.id}), [a, row](Graph& g, int self) {
        const Matrix& d = g.grad_of(self);
        g.accumulate(a.id, d);
        if (g.nodes_[row.id].needs_grad) g.accumulate(row.id, d.colwise().sum());
    });
}

Var Graph::scale(Var a, double s) {
    Matrix out = val(a.id) * s;
    return push(std::move(out), any_needs({a.id}), [a, s](Graph& g, int self) {
        g.accumulate(a.id, g.grad_of(self) * s);
    });
}

Var Graph::gelu(Var a) {
    const Matrix& x = val(a.id);
    Matrix out(x.rows(), x.cols());
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        const double v = x.data()[i];
        out.data()[i] = 0.5 * v * (1.0 + std::tanh(kGeluC * (v + kGeluA * v * v * v)));
    }
    return push(std::move(out), any_needs({a.id}), [a](Graph& g, int self) {
        const Matrix& x = g.val(a.id);
        Matrix d = g.grad_of(self);
        for (Eigen::Index i = 0; i < x.size(); ++i) {
            const double v = x.data()[i];
            const double t = std::tanh(kGeluC * (v + kGeluA * v * v * v));
            const double dt = (1.0 - t * t) * kGeluC * (1.0 + 3.0 * kGeluA * v * v);
            d.data()[i] *= 0.5 * (1.0 + t) + 0.5 * v * dt;
        }
        g.accumulate(a.id, d);
    });
}

Var Graph::sigmoid(Var a) {
    Matrix out = val(a.id).unaryExpr([](double v) { return 1.0 / (1.0 + std::exp(-v)); });
    return push(std::move(out), any_needs({a.id}), [a](Graph& g, int self) {
        const Matrix& y = g.val(self);
        Matrix d = g.grad_of(self).cwiseProduct(y.unaryExpr([](double v) { return v * (1.0 - v); }));
        g.accumulate(a.id, d);
    });
}

Var Graph::layer_norm(Var x, Var gain, Var bias, double eps) {
    const Matrix& in = val(x.id);
    const auto& gm = val(gain.id);
    const auto& bm = val(bias.id);
    if (gm.rows() != 1 || bm.rows() != 1 || gm.cols() != in.cols() || bm.cols() != in.cols()) {
        throw std::invalid_argument("layer_norm: shape mismatch");
    }
    const auto n = in.cols();
    Matrix xhat(in.rows(), n);
    Eigen::VectorXd inv_std(in.rows());
    for (Eigen::Index r = 0; r < in.rows(); ++r) {
        const double mean = in.row(r).mean();
        const double var = (in.row(r).array() - mean).square().mean();
        inv_std[r] = 1.0 / std::sqrt(var + eps);
        xhat.row(r) = (in.row(r).array() - mean) * inv_std[r];
    }
    Matrix out = (xhat.array().rowwise() * gm.row(0).array()).rowwise() + bm.row(0).array();
    return push(std::move(out), any_needs({x.id, gain.id, bias.id}),
                [x, gain, bias, xhat = std::move(xhat), inv_std = std::move(inv_std)](Graph& g, int self) {
                    const Matrix& d = g.grad_of(self);
                    if (g.nodes_[gain.id].needs_grad) {
                        g.accumulate(gain.id, d.cwiseProduct(xhat).colwise().sum());
                    }
                    if (g.nodes_[bias.id].needs_grad) g.accumulate(bias.id, d.colwise().sum());
                    if (g.nodes_[x.id].needs_grad) {
                        const auto& gm = g.val(gain.id);
                        Matrix dxhat = d.array().rowwise() * gm.row(0).array();
                        Matrix dx(d.rows(), d.cols());
                        for (Eigen::Index r = 0; r < d.rows(); ++r) {
                            const double m1 = dxhat.row(r).mean();
                            const double m2 = dxhat.row(r).cwiseProduct(xhat.row(r)).mean();
                            dx.row(r) = (dxhat.row(r).array() - m1 - xhat.row(r).array() * m2) * inv_std[r];
                        }
                        g.accumulate(x.id, dx);
                    }
                });
}

Var Graph::causal_softmax(Var scores, int prefix) {
    const Matrix& s = val(scores.id);
    Matrix out = Matrix::Zero(s.rows(), s.cols());
    for (Eigen::Index r = 0; r < s.rows(); ++r) {
        const Eigen::Index allowed = std::min<Eigen::Index>(s.cols(), prefix + r + 1);
        const double mx = s.row(r).head(allowed).maxCoeff();
        double total = 0;
        for (Eigen::Index c = 0; c < allowed; ++c) {
            const double e = std::exp(s(r, c) - mx);
            out(r, c) = e;
            total += e;
        }
        out.row(r).head(allowed) /= total;
    }
    return push(std::move(out), any_needs({scores.id}), [scores](Graph& g, int self) {
        const Matrix& y = g.val(self);
        const Matrix& d = g.grad_of(self);
        Matrix dx(y.rows(), y.cols());
        for (Eigen::Index r = 0; r < y.rows(); ++r) {
            const double dot = d.row(r).dot(y.row(r));
            dx.row(r) = y.row(r).array() * (d.row(r).array() - dot);
        }
        g.accumulate(scores.id, dx);
    });
}

Var Graph::segment_max(Var a, int segment) {
    const Matrix& x = val(a.id);
    if (segment <= 0 || x.rows() == 0 || x.rows() % segment != 0) {
        throw std::invalid_argument("segment_max: rows must be a positive multiple of the segment length");
    }
    const Eigen::Index blocks = x.rows() / segment;
    Matrix out(blocks, x.cols());
    std::vector<Eigen::Index> arg(static_cast<std::size_t>(blocks * x.cols()), 0);
    for (Eigen::Index b = 0; b < blocks; ++b) {
        const Eigen::Index base = b * segment;
        for (Eigen::Index c = 0; c < x.cols(); ++c) {
            Eigen::Index best = base;
            for (Eigen::Index r = base + 1; r < base + segment; ++r) {
                if (x(r, c) > x(best, c)) best = r;
            }
            arg[static_cast<std::size_t>(b * x.cols() + c)] = best;
            out(b, c) = x(best, c);
        }
    }
    return push(std::move(out), any_needs({a.id}), [a, arg = std::move(arg)](Graph& g, int self) {
        const Matrix& d = g.grad_of(self);
        const Matrix& x = g.val(a.id);
        Matrix dx = Matrix::Zero(x.rows(), x.cols());
        for (Eigen::Index b = 0; b < d.rows(); ++b) {
            for (Eigen::Index c = 0; c < d.cols(); ++c) dx(arg[static_cast<std::size_t>(b * d.cols() + c)], c) += d(b, c);
        }
        g.accumulate(a.id, dx);
    });
}

Var Graph::concat_rows(std::span<const Var> parts) {
    if (parts.empty()) throw std::invalid_argument("concat_rows: nothing to concatenate");
    Eigen::Index rows = 0;
    const auto cols = val(parts[0].id).cols();
    bool needs = false;
    for (auto p : parts) {
        if (val(p.id).cols() != cols) throw std::invalid_argument("concat_rows: column mismatch");
        rows += val(p.id).rows();
        needs = needs || nodes_[p.id].needs_grad;
    }
    Matrix out(rows, cols);
    Eigen::Index at = 0;
    for (auto p : parts) {
        const auto& m = val(p.id);
        out.middleRows(at, m.rows()) = m;
        at += m.rows();
    }
    std::vector<Var> ids(parts.begin(), parts.end());
    return push(std::move(out), needs, [ids = std::move(ids)](Graph& g, int self) {
        const Matrix& d = g.grad_of(self);
        Eigen::Index at = 0;
        for (auto p : ids) {
            const auto r = g.val(p.id).rows();
            if (g.nodes_[p.id].needs_grad) g.accumulate(p.id, d.middleRows(at, r));
            at += r;
        }
    });
}

Var Graph::concat_cols(std::span<const Var> parts) {
    if (parts.empty()) throw std::invalid_argument("concat_cols: nothing to concatenate");
    Eigen::Index cols = 0;
    const auto rows = val(parts[0].id).rows();
    bool needs = false;
    for (auto p : parts) {
        if (val(p.id).rows() != rows) throw std::invalid_argument("concat_cols: row mismatch");
        cols += val(p.id).cols();
        needs = needs || nodes_[p.id].needs_grad;
    }
    Matrix out(rows, cols);
    Eigen::Index at = 0;
    for (auto p : parts) {
        const auto& m = val(p.id);
        out.middleCols(at, m.cols()) = m;
        at += m.cols();
    }
    std::vector<Var> ids(parts.begin(), parts.end());
    return push(std::move(out), needs, [ids = std::move(ids)](Graph& g, int self) {
        const Matrix& d = g.grad_of(self);
        Eigen::Index at = 0;
        for (auto p : ids) {
            const auto c = g.val(p.id).cols();
            if (g.nodes_[p.id].needs_grad) g.accumulate(p.id, d.middleCols(at, c));
            at += c;
        }
    });
}

Var Graph::slice_rows(Var a, int begin, int count) {
    const Matrix& x = val(a.id);
    if (begin < 0 || count < 0 || begin + count > x.rows()) throw std::invalid_argument("slice_rows: out of range");
    Matrix out = x.middleRows(begin, count);
    return push(std::move(out), any_needs({a.id}), [a, begin, count](Graph& g, int self) {
        const Matrix& x = g.val(a.id);
        Matrix dx = Matrix::Zero(x.rows(), x.cols());
        dx.middleRows(begin, count) = g.grad_of(self);
        g.accumulate(a.id, dx);
    });
}

Var Graph::slice_cols(Var a, int begin, int count) {
    const Matrix& x = val(a.id);
    if (begin < 0 || count < 0 || begin + count > x.cols()) throw std::invalid_argument("slice_cols: out of range");
    Matrix out = x.middleCols(begin, count);
    return push(std::move(out), any_needs({a.id}), [a, begin, count](Graph& g, int self) {
        const Matrix& x = g.val(a.id);
        Matrix dx = Matrix::Zero(x.rows(), x.cols());
        dx.middleCols(begin, count) = g.grad_of(self);
        g.accumulate(a.id, dx);
    });
}

Var Graph::gather_rows(Var table, std::span<const int> ids) {
    const Matrix& t = val(table.id);
    Matrix out(static_cast<Eigen::Index>(ids.size()), t.cols());
    for (std::size_t k = 0; k < ids.size(); ++k) {
        if (ids[k] < 0 || ids[k] >= t.rows()) throw std::invalid_argument("gather_rows: id out of range");
        out.row(static_cast<Eigen::Index>(k)) = t.row(ids[k]);
    }
    std::vector<int> idv(ids.begin(), ids.end());
    return push(std::move(out), any_needs({table.id}), [table, idv = std::move(idv)](Graph& g, int self) {
        const Matrix& d = g.grad_of(self);
        const Matrix& t = g.val(table.id);
        Matrix dt = Matrix::Zero(t.rows(), t.cols());
        for (std::size_t k = 0; k < idv.size(); ++k) dt.row(idv[k]) += d.row(static_cast<Eigen::Index>(k));
        g.accumulate(table.id, dt);
    });
}

Var Graph::squared_error(Var pred, double target) {
    const Matrix& p = val(pred.id);
    if (p.size() != 1) throw std::invalid_argument("squared_error: expects a 1x1 prediction");
    const double r = p(0, 0) - target;
    Matrix out(1, 1);
    out(0, 0) = r * r;
    return push(std::move(out), any_needs({pred.id}), [pred, r](Graph& g, int self) {
        Matrix d(1, 1);
        d(0, 0) = 2.0 * r * g.grad_of(self)(0, 0);
        g.accumulate(pred.id, d);
    });
}

Var Graph::absolute_error(Var pred, double target) {
    const Matrix& p = val(pred.id);
    if (p.size() != 1) throw std::invalid_argument("absolute_error: expects a 1x1 prediction");
    const double r = p(0, 0) - target;
    Matrix out(1, 1);
    out(0, 0) = std::abs(r);
    return push(std::move(out), any_needs({pred.id}), [pred, r](Graph& g, int self) {
        Matrix d(1, 1);
        d(0, 0) = (r > 0 ? 1.0 : (r < 0 ? -1.0 : 0.0)) * g.grad_of(self)(0, 0);
        g.accumulate(pred.id, d);
    });
}

Var Graph::cross_entropy(Var logits, int target) {
    const Matrix& z = val(logits.id);
    if (z.rows() != 1 || target < 0 || target >= z.cols()) throw std::invalid_argument("cross_entropy: bad shape");
    const double mx = z.maxCoeff();
    Matrix probs = (z.array() - mx).exp();
    const double total = probs.sum();
    probs /= total;
    Matrix out(1, 1);
    out(0, 0) = -(z(0, target) - mx - std::log(total));
    return push(std::move(out), any_needs({logits.id}), [logits, target, probs = std::move(probs)](Graph& g, int self) {
        Matrix d = probs;
        d(0, target) -= 1.0;
        d *= g.grad_of(self)(0, 0);
        g.accumulate(logits.id, d);
    });
}

void Graph::backward(Var loss) {
    if (val(loss.id).size() != 1) throw std::invalid_argument("backward: loss must be 1x1");
    if (!nodes_[loss.id].needs_grad) return;
    nodes_[loss.id].grad = Matrix::Ones(1, 1);
    for (int i = loss.id; i >= 0; --i) {
        auto& n = nodes_[static_cast<std::size_t>(i)];
        if (!n.needs_grad || n.grad.size() == 0) continue;
        if (n.back) n.back(*this, i);
        if (n.sink) {
            if (n.sink->size() == 0) {
                *n.sink = n.grad;
            } else {
                *n.sink += n.grad;
            }
        }
        // Interior gradients are no longer needed once propagated.
        if (!n.sink) n.grad.resize(0, 0);
    }
}

}  // namespace realism::ad
