// Copyright (C) 2026 The realism authors
// SPDX-License-Identifier: Apache-2.0

#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "realism/random.hpp"

namespace oracle {

using realism::Matrix;

std::optional<double> pearson(const std::vector<double>& x, const std::vector<double>& y) {
    const auto n = static_cast<long double>(x.size());
    long double mx = 0, my = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    long double sxy = 0, sxx = 0, syy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    if (sxx == 0 || syy == 0) return std::nullopt;
    return static_cast<double>(sxy / std::sqrt(sxx * syy));
}

namespace {

std::vector<double> def_ranks(const std::vector<double>& v) {
    std::vector<double> r(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) {
        double less = 0, equal = 0;
        for (double w : v) {
            if (w < v[i]) less += 1;
            if (w == v[i]) equal += 1;
        }
        r[i] = less + (equal + 1) / 2;
    }
    return r;
}

}  // namespace

std::optional<double> spearman(const std::vector<double>& x, const std::vector<double>& y) {
    return pearson(def_ranks(x), def_ranks(y));
}

double spearman_closed_form(const std::vector<double>& x, const std::vector<double>& y) {
    const auto rx = def_ranks(x), ry = def_ranks(y);
    const double n = static_cast<double>(x.size());
    double d2 = 0;
    for (std::size_t i = 0; i < x.size(); ++i) d2 += (rx[i] - ry[i]) * (rx[i] - ry[i]);
    return 1.0 - 6.0 * d2 / (n * (n * n - 1.0));
}

std::optional<double> kendall_pairs(const std::vector<double>& x, const std::vector<double>& y) {
    long s = 0;
    bool any = false;
    const std::size_t n = x.size();
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            const int a = (x[i] < x[j]) - (x[i] > x[j]);
            const int b = (y[i] < y[j]) - (y[i] > y[j]);
            if (a != 0 && b != 0) any = true;
            s += a * b;
        }
    }
    bool x_all_tied = std::all_of(x.begin(), x.end(), [&](double v) { return v == x[0]; });
    bool y_all_tied = std::all_of(y.begin(), y.end(), [&](double v) { return v == y[0]; });
    if (x_all_tied || y_all_tied) return std::nullopt;
    (void)any;
    return static_cast<double>(s) / (static_cast<double>(n) * static_cast<double>(n - 1) / 2.0);
}

namespace {

long count_inversions(std::vector<double>& a, std::size_t lo, std::size_t hi, std::vector<double>& tmp) {
    if (hi - lo < 2) return 0;
    const std::size_t mid = (lo + hi) / 2;
    long inv = count_inversions(a, lo, mid, tmp) + count_inversions(a, mid, hi, tmp);
    std::size_t i = lo, j = mid, k = lo;
    while (i < mid && j < hi) {
        if (a[j] < a[i]) {
            inv += static_cast<long>(mid - i);
            tmp[k++] = a[j++];
        } else {
            tmp[k++] = a[i++];
        }
    }
    while (i < mid) tmp[k++] = a[i++];
    while (j < hi) tmp[k++] = a[j++];
    std::copy(tmp.begin() + static_cast<long>(lo), tmp.begin() + static_cast<long>(hi), a.begin() + static_cast<long>(lo));
    return inv;
}

}  // namespace

double kendall_mergesort(const std::vector<double>& x, const std::vector<double>& y) {
    const std::size_t n = x.size();
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
    std::vector<double> ys(n), tmp(n);
    for (std::size_t i = 0; i < n; ++i) ys[i] = y[idx[i]];
    const long inv = count_inversions(ys, 0, n, tmp);
    const double pairs = static_cast<double>(n) * static_cast<double>(n - 1) / 2.0;
    return (pairs - 2.0 * static_cast<double>(inv)) / pairs;
}

realism::Mesh sphere_mesh(int rings, int segments, double radius, std::string name) {
    realism::Mesh m;
    m.name = std::move(name);
    m.vertices.push_back({0, 0, radius});
    for (int r = 1; r < rings; ++r) {
        const double th = std::numbers::pi * r / rings;
        for (int s = 0; s < segments; ++s) {
            const double ph = 2 * std::numbers::pi * s / segments;
            m.vertices.push_back({radius * std::sin(th) * std::cos(ph), radius * std::sin(th) * std::sin(ph),
                                  radius * std::cos(th)});
        }
    }
    m.vertices.push_back({0, 0, -radius});
    const auto ring = [&](int r, int s) { return static_cast<std::uint32_t>(1 + (r - 1) * segments + (s % segments)); };
    for (int s = 0; s < segments; ++s) m.faces.push_back({0, ring(1, s), ring(1, s + 1)});
    for (int r = 1; r + 1 < rings; ++r) {
        for (int s = 0; s < segments; ++s) {
            m.faces.push_back({ring(r, s), ring(r + 1, s), ring(r + 1, s + 1)});
            m.faces.push_back({ring(r, s), ring(r + 1, s + 1), ring(r, s + 1)});
        }
    }
    const auto last = static_cast<std::uint32_t>(m.vertices.size() - 1);
    for (int s = 0; s < segments; ++s) m.faces.push_back({ring(rings - 1, s + 1), ring(rings - 1, s), last});
    return m;
}

realism::Mesh noisy(const realism::Mesh& m, double sigma, std::uint64_t seed) {
    realism::Rng rng(seed);
    auto out = m;
    for (auto& v : out.vertices) {
        for (auto& c : v) c += sigma * rng.normal();
    }
    return out;
}

realism::ModelConfig tiny_config(realism::FinetuneMode mode, realism::LossMode loss) {
    realism::ModelConfig c;
    c.encoder = {8, 8, 16, 32};
    c.bridge.d_model = 32;
    c.bridge.n_layers = 2;
    c.bridge.n_heads = 2;
    c.bridge.max_seq = 64;
    c.bridge.mlp_ratio = 2;
    c.bridge.finetune = mode;
    c.prompts.system_text = "sys";
    c.prompts.realism_text = "rate object";
    c.max_points = 64;
    c.loss_mode = loss;
    return c;
}

namespace {

double total_loss(const realism::ModelBundle& model, const std::vector<realism::TrainingSample>& samples,
                  const realism::TrainConfig& cfg) {
    std::vector<const realism::TrainingSample*> ptrs;
    for (const auto& s : samples) ptrs.push_back(&s);
    return realism::compute_gradients(ptrs, model, cfg, {}).loss;
}

}  // namespace

GradCheck check_gradients(realism::ModelBundle model, const std::vector<realism::TrainingSample>& samples,
                          const realism::TrainConfig& cfg, const realism::ParameterSelection& selection,
                          std::size_t per_tensor, double eps, std::uint64_t seed) {
    std::vector<const realism::TrainingSample*> ptrs;
    for (const auto& s : samples) ptrs.push_back(&s);
    const auto analytic = realism::compute_gradients(ptrs, model, cfg, selection);

    GradCheck out;
    realism::Rng rng(seed);
    auto views = realism::parameter_views(model, selection);
    for (auto& [name, w] : views) {
        const auto it = analytic.grads.find(name);
        const Matrix zero = Matrix::Zero(w->rows(), w->cols());
        const Matrix& ga = it == analytic.grads.end() ? zero : it->second;
        const std::size_t count = std::min<std::size_t>(per_tensor, static_cast<std::size_t>(w->size()));
        for (std::size_t k = 0; k < count; ++k) {
            const auto idx = static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(w->size())));
            const double orig = w->data()[idx];
            w->data()[idx] = orig + eps;
            const double lp = total_loss(model, samples, cfg);
            w->data()[idx] = orig - eps;
            const double lm = total_loss(model, samples, cfg);
            w->data()[idx] = orig;
            const double numeric = (lp - lm) / (2 * eps);
            const double a = ga.data()[idx];
            const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-6});
            out.checked += 1;
            if (rel > out.max_rel_error) {
                out.max_rel_error = rel;
                out.worst = name + "[" + std::to_string(idx) + "] analytic=" + std::to_string(a) +
                            " numeric=" + std::to_string(numeric);
            }
        }
    }
    return out;
}

}  // namespace oracle
