#pragma once

// Straight-from-the-equations reimplementations used as test oracles. None
// of these call into the library beyond plain data accessors.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "cmcss/cmcss.hpp"

namespace oracle {

using cmcss::Matrix;

// Embeddings of one subject: emb[u] is the vector of modality index u, empty
// when the modality is inactive.
using Subject = std::array<std::vector<double>, 5>;

struct Batch {
    std::vector<Subject> subjects;
    std::vector<int> labels;
    std::array<bool, 5> active{true, true, true, true, true};
    double tau = 1.0;
    bool include_positive = false;
};

inline double inner(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

// Eq (3): S(i,j) = sum_{u != v} exp(f_u^i . f_v^j / tau); a lone modality
// pairs with itself.
inline double S(const Batch& b, std::size_t i, std::size_t j) {
    int n_active = 0;
    for (bool a : b.active) n_active += a;
    double s = 0.0;
    for (int u = 0; u < 5; ++u) {
        if (!b.active[u]) continue;
        for (int v = 0; v < 5; ++v) {
            if (!b.active[v]) continue;
            if (u == v && n_active > 1) continue;
            s += std::exp(inner(b.subjects[i].at(u), b.subjects[j].at(v)) / b.tau);
        }
    }
    return s;
}

// Eq (4)
inline double p_instance(const Batch& b, std::size_t i) {
    double den = 0.0;
    for (std::size_t j = 0; j < b.subjects.size(); ++j)
        if (j != i || b.include_positive) den += S(b, i, j);
    return S(b, i, i) / den;
}

// Eq (5)
inline double p_negative(const Batch& b, std::size_t i, std::size_t k) {
    double den = 0.0;
    for (std::size_t j = 0; j < b.subjects.size(); ++j)
        if (j != k || b.include_positive) den += S(b, j, k);
    return S(b, i, k) / den;
}

// Eq (6)
inline double cmc(const Batch& b) {
    const std::size_t m = b.subjects.size();
    double pos = 0.0, neg = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        pos += std::log(p_instance(b, i));
        for (std::size_t k = 0; k < m; ++k)
            if (k != i) neg += std::log(p_negative(b, i, k));
    }
    return -(pos - neg) / static_cast<double>(m);
}

// Eq (7)
inline double p_same(const Batch& b, std::size_t i, std::size_t g) {
    double den = 0.0;
    for (std::size_t j = 0; j < b.subjects.size(); ++j)
        if (j != i || b.include_positive) den += S(b, i, j);
    return S(b, i, g) / den;
}

// Eq (8)
inline double css(const Batch& b) {
    const std::size_t m = b.subjects.size();
    double total = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        double group = 0.0;
        int n = 0;
        for (std::size_t g = 0; g < m; ++g) {
            if (g == i || b.labels[g] != b.labels[i]) continue;
            group += std::log(p_same(b, i, g));
            ++n;
        }
        if (n > 0) total += group / n;
    }
    return -total / static_cast<double>(m);
}

// Eq (9)
inline double joint(const Batch& b, double lambda) { return lambda * cmc(b) + css(b); }

inline cmcss::BatchView to_view(const Batch& b) {
    cmcss::BatchView v;
    v.temperature = b.tau;
    v.labels = b.labels;
    v.denominator_includes_positive = b.include_positive;
    v.modalities = cmcss::ModalitySet();
    for (int u = 0; u < 5; ++u)
        if (b.active[u]) v.modalities.insert(cmcss::kAllModalities[u]);
    for (std::size_t i = 0; i < b.subjects.size(); ++i) {
        cmcss::EmbeddingSet e;
        e.present = v.modalities;
        for (int u = 0; u < 5; ++u) e.vectors[u] = b.subjects[i][u];
        v.embeddings.push_back(e);
        v.indices.push_back(i);
    }
    return v;
}

inline std::vector<double> random_unit(std::mt19937_64& rng, std::size_t n) {
    std::normal_distribution<double> g;
    std::vector<double> v(n);
    double s = 0.0;
    for (double& x : v) {
        x = g(rng);
        s += x * x;
    }
    for (double& x : v) x /= std::sqrt(s);
    return v;
}

inline Batch random_batch(std::mt19937_64& rng, std::size_t m, std::size_t dim = 8) {
    Batch b;
    std::uniform_int_distribution<int> coin(0, 1);
    std::uniform_real_distribution<double> t(0.3, 2.0);
    b.tau = t(rng);
    for (std::size_t i = 0; i < m; ++i) {
        Subject s;
        for (auto& v : s) v = random_unit(rng, dim);
        b.subjects.push_back(s);
        b.labels.push_back(coin(rng));
    }
    return b;
}

// ---- encoder -------------------------------------------------------------

inline std::vector<std::vector<double>> to_rows(const Matrix& m) {
    std::vector<std::vector<double>> r(m.rows(), std::vector<double>(m.cols()));
    for (std::size_t i = 0; i < m.rows(); ++i)
        for (std::size_t j = 0; j < m.cols(); ++j) r[i][j] = m(i, j);
    return r;
}

struct Attention {
    std::vector<std::vector<double>> attention, output;
};

// softmax((xWq)(xWk)^T / sqrt(rows)) (xWv), one scalar at a time.
inline Attention attention(const Matrix& x, const Matrix& wq, const Matrix& wk, const Matrix& wv) {
    const std::size_t n = x.rows(), w = x.cols();
    auto project = [&](const Matrix& W) {
        std::vector<std::vector<double>> out(n, std::vector<double>(w, 0.0));
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < w; ++j)
                for (std::size_t t = 0; t < w; ++t) out[i][j] += x(i, t) * W(t, j);
        return out;
    };
    const auto q = project(wq), k = project(wk), v = project(wv);
    Attention r;
    r.attention.assign(n, std::vector<double>(n));
    r.output.assign(n, std::vector<double>(w, 0.0));
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<double> logits(n);
        for (std::size_t j = 0; j < n; ++j) {
            double s = 0.0;
            for (std::size_t t = 0; t < w; ++t) s += q[i][t] * k[j][t];
            logits[j] = s / std::sqrt(static_cast<double>(n));
        }
        const double mx = *std::max_element(logits.begin(), logits.end());
        double z = 0.0;
        for (double l : logits) z += std::exp(l - mx);
        for (std::size_t j = 0; j < n; ++j) r.attention[i][j] = std::exp(logits[j] - mx) / z;
        for (std::size_t j = 0; j < n; ++j)
            for (std::size_t t = 0; t < w; ++t) r.output[i][t] += r.attention[i][j] * v[j][t];
    }
    return r;
}

inline std::vector<double> dense(const cmcss::Linear& L, const std::vector<double>& x, bool relu) {
    std::vector<double> y(L.weight.rows());
    for (std::size_t o = 0; o < y.size(); ++o) {
        double s = L.bias(o, 0);
        for (std::size_t i = 0; i < x.size(); ++i) s += L.weight(o, i) * x[i];
        y[o] = relu ? std::max(s, 0.0) : s;
    }
    return y;
}

inline std::vector<double> unit(std::vector<double> v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    for (double& x : v) x /= std::sqrt(s);
    return v;
}

// 3x3, stride 2, padding 1, followed by ReLU. in[c][y][x].
using Volume = std::vector<std::vector<std::vector<double>>>;
inline Volume conv(const Volume& in, const cmcss::Conv2d& c) {
    const std::size_t ch = in.size(), h = in[0].size(), w = in[0][0].size();
    const std::size_t oh = (h - 1) / 2 + 1, ow = (w - 1) / 2 + 1;
    Volume out(c.kernel.rows(), std::vector<std::vector<double>>(oh, std::vector<double>(ow)));
    for (std::size_t o = 0; o < out.size(); ++o)
        for (std::size_t y = 0; y < oh; ++y)
            for (std::size_t x = 0; x < ow; ++x) {
                double s = c.bias(o, 0);
                for (std::size_t i = 0; i < ch; ++i)
                    for (int ky = 0; ky < 3; ++ky)
                        for (int kx = 0; kx < 3; ++kx) {
                            const long iy = 2 * static_cast<long>(y) + ky - 1;
                            const long ix = 2 * static_cast<long>(x) + kx - 1;
                            if (iy < 0 || ix < 0 || iy >= static_cast<long>(h) || ix >= static_cast<long>(w)) continue;
                            s += c.kernel(o, i * 9 + ky * 3 + kx) * in[i][iy][ix];
                        }
                out[o][y][x] = std::max(s, 0.0);
            }
    return out;
}

// Full forward pass for every active modality, composed stage by stage.
inline Subject encode(const cmcss::SubjectRecord& rec, const cmcss::EncoderParams& p) {
    Subject out;
    for (int b = 0; b < 3; ++b) {
        const auto m = cmcss::kAllModalities[b];
        if (!p.shape.active.contains(m)) continue;
        const auto& br = p.attention[b];
        const Attention a = attention(rec.payload(m), br.attention.w_q, br.attention.w_k, br.attention.w_v);
        std::vector<double> flat;
        for (const auto& row : a.output) {
            const auto r = dense(br.reduce, row, false);
            flat.insert(flat.end(), r.begin(), r.end());
        }
        const auto h1 = dense(br.hidden1, flat, true);
        const auto h2 = dense(br.hidden2, h1, true);
        out[b] = unit(dense(br.project, h2, false));
    }
    if (p.shape.active.contains(cmcss::Modality::image_volume)) {
        const auto& d = rec.image_volume;
        const std::size_t slices = p.shape.dims.n_slices, h = p.shape.dims.h, w = p.shape.dims.w;
        Volume v(slices, std::vector<std::vector<double>>(h, std::vector<double>(w)));
        for (std::size_t s = 0; s < slices; ++s)
            for (std::size_t y = 0; y < h; ++y)
                for (std::size_t x = 0; x < w; ++x) v[s][y][x] = d(s * h + y, x);
        for (const auto& c : p.volume.conv) v = conv(v, c);
        std::vector<double> flat;
        for (const auto& ch : v)
            for (const auto& row : ch) flat.insert(flat.end(), row.begin(), row.end());
        const auto feat = dense(p.volume.fc, flat, true);
        out[3] = unit(dense(p.volume.project, feat, false));
    }
    if (p.shape.active.contains(cmcss::Modality::clinical)) {
        std::vector<double> x(rec.clinical.values().begin(), rec.clinical.values().end());
        const auto feat = dense(p.clinical.fc, x, true);
        out[4] = unit(dense(p.clinical.project, feat, false));
    }
    return out;
}

// ---- metrics -------------------------------------------------------------

// Fraction of (positive, negative) pairs ranked correctly, ties one half.
inline double auc_pairs(const std::vector<int>& y, const std::vector<double>& s) {
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i)
        for (std::size_t j = 0; j < y.size(); ++j) {
            if (y[i] != 1 || y[j] != 0) continue;
            den += 1.0;
            num += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
        }
    return num / den;
}

// Two-sided exact signed-rank p-value by enumerating all 2^n sign patterns
// of the mid-ranked non-zero differences.
inline double wilcoxon_enumerate(const std::vector<double>& a, const std::vector<double>& b) {
    std::vector<double> d;
    for (std::size_t i = 0; i < a.size(); ++i)
        if (a[i] != b[i]) d.push_back(a[i] - b[i]);
    const std::size_t n = d.size();
    if (n == 0) return 1.0;
    std::vector<double> rank(n);
    for (std::size_t i = 0; i < n; ++i) {
        double less = 0.0, equal = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            if (std::fabs(d[j]) < std::fabs(d[i])) less += 1.0;
            else if (std::fabs(d[j]) == std::fabs(d[i])) equal += 1.0;
        }
        rank[i] = less + (equal + 1.0) / 2.0;
    }
    double observed = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        if (d[i] > 0) observed += rank[i];
    const std::uint64_t total = std::uint64_t{1} << n;
    std::uint64_t le = 0, ge = 0;
    for (std::uint64_t mask = 0; mask < total; ++mask) {
        double w = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            if (mask >> i & 1) w += rank[i];
        if (w <= observed + 1e-9) ++le;
        if (w >= observed - 1e-9) ++ge;
    }
    const double p = 2.0 * static_cast<double>(std::min(le, ge)) / static_cast<double>(total);
    return std::min(1.0, p);
}

// ---- logistic probe --------------------------------------------------------

// L2-regularised logistic regression by full-batch gradient descent; returns
// test-set scores.
inline std::vector<double> logistic_probe(const std::vector<std::vector<double>>& xtr, const std::vector<int>& ytr,
                                          const std::vector<std::vector<double>>& xte, int iterations = 500,
                                          double rate = 0.1, double l2 = 1e-2) {
    const std::size_t p = xtr[0].size();
    std::vector<double> mu(p, 0.0), sd(p, 0.0);
    for (const auto& x : xtr)
        for (std::size_t j = 0; j < p; ++j) mu[j] += x[j] / xtr.size();
    for (const auto& x : xtr)
        for (std::size_t j = 0; j < p; ++j) sd[j] += (x[j] - mu[j]) * (x[j] - mu[j]) / xtr.size();
    for (double& s : sd) s = std::sqrt(s) + 1e-9;
    auto z = [&](const std::vector<double>& x, std::size_t j) { return (x[j] - mu[j]) / sd[j]; };
    std::vector<double> w(p, 0.0);
    double bias = 0.0;
    for (int it = 0; it < iterations; ++it) {
        std::vector<double> gw(p, 0.0);
        double gb = 0.0;
        for (std::size_t i = 0; i < xtr.size(); ++i) {
            double s = bias;
            for (std::size_t j = 0; j < p; ++j) s += w[j] * z(xtr[i], j);
            const double r = 1.0 / (1.0 + std::exp(-s)) - ytr[i];
            for (std::size_t j = 0; j < p; ++j) gw[j] += r * z(xtr[i], j) / xtr.size();
            gb += r / xtr.size();
        }
        for (std::size_t j = 0; j < p; ++j) w[j] -= rate * (gw[j] + l2 * w[j]);
        bias -= rate * gb;
    }
    std::vector<double> out;
    for (const auto& x : xte) {
        double s = bias;
        for (std::size_t j = 0; j < p; ++j) s += w[j] * z(x, j);
        out.push_back(1.0 / (1.0 + std::exp(-s)));
    }
    return out;
}

inline std::vector<double> flatten(const cmcss::SubjectRecord& r) {
    std::vector<double> v;
    for (auto m : cmcss::kAllModalities) {
        const auto vals = r.payload(m).values();
        v.insert(v.end(), vals.begin(), vals.end());
    }
    return v;
}

}  // namespace oracle
