#include "cmcss/encoder.hpp"

#include <cmath>
#include <random>

#include "cmcss/error.hpp"
#include "cmcss/kernels.hpp"

namespace cmcss {

namespace {

constexpr std::size_t kKernel = 3;
constexpr std::size_t kStride = 2;
constexpr std::size_t kPad = 1;

std::size_t conv_out_size(std::size_t n) { return (n + 2 * kPad - kKernel) / kStride + 1; }

void uniform_fill(Matrix& m, double bound, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(-bound, bound);
    for (double& v : m.values()) v = u(rng);
}

Linear make_linear(std::size_t in, std::size_t out, std::mt19937_64& rng) {
    Linear l{Matrix(out, in), Matrix(out, 1)};
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    uniform_fill(l.weight, bound, rng);
    uniform_fill(l.bias, bound, rng);
    return l;
}

Conv2d make_conv(std::size_t in, std::size_t out, std::mt19937_64& rng) {
    Conv2d c{Matrix(out, in * kKernel * kKernel), Matrix(out, 1)};
    const double bound = 1.0 / std::sqrt(static_cast<double>(in * kKernel * kKernel));
    uniform_fill(c.kernel, bound, rng);
    uniform_fill(c.bias, bound, rng);
    return c;
}

void relu_inplace(std::vector<double>& v) {
    for (double& x : v) x = x > 0.0 ? x : 0.0;
}

std::vector<double> linear_forward(const Linear& l, std::span<const double> x) {
    std::vector<double> y(l.weight.rows());
    kernels::affine(l.weight, l.bias, x, y);
    return y;
}

// dx for a linear layer; accumulates the weight gradient.
std::vector<double> linear_backward(const Linear& l, Linear& g, std::span<const double> x,
                                    std::span<const double> dy) {
    kernels::affine_param_grad(dy, x, g.weight, g.bias);
    std::vector<double> dx(l.weight.cols());
    kernels::affine_input_grad(l.weight, dy, dx);
    return dx;
}

void relu_mask(std::vector<double>& grad, const std::vector<double>& activation) {
    for (std::size_t i = 0; i < grad.size(); ++i)
        if (activation[i] <= 0.0) grad[i] = 0.0;
}

// Unfolds 3x3 patches: (channels * 9) x (oh * ow), zero outside the image.
Matrix im2col(const Matrix& input, std::size_t height, std::size_t width) {
    const std::size_t channels = input.rows();
    const std::size_t oh = conv_out_size(height), ow = conv_out_size(width);
    Matrix cols(channels * kKernel * kKernel, oh * ow);
    for (std::size_t c = 0; c < channels; ++c) {
        const double* x = input.data() + c * height * width;
        for (std::size_t ki = 0; ki < kKernel; ++ki) {
            for (std::size_t kj = 0; kj < kKernel; ++kj) {
                double* row = cols.data() + ((c * kKernel + ki) * kKernel + kj) * oh * ow;
                for (std::size_t oy = 0; oy < oh; ++oy) {
                    const long iy = static_cast<long>(oy * kStride + ki) - static_cast<long>(kPad);
                    if (iy < 0 || iy >= static_cast<long>(height)) continue;
                    for (std::size_t ox = 0; ox < ow; ++ox) {
                        const long ix = static_cast<long>(ox * kStride + kj) - static_cast<long>(kPad);
                        if (ix < 0 || ix >= static_cast<long>(width)) continue;
                        row[oy * ow + ox] = x[iy * static_cast<long>(width) + ix];
                    }
                }
            }
        }
    }
    return cols;
}

// Adjoint of im2col: scatters patch gradients back onto the image.
Matrix col2im(const Matrix& cols, std::size_t channels, std::size_t height, std::size_t width) {
    const std::size_t oh = conv_out_size(height), ow = conv_out_size(width);
    Matrix out(channels, height * width);
    for (std::size_t c = 0; c < channels; ++c) {
        double* x = out.data() + c * height * width;
        for (std::size_t ki = 0; ki < kKernel; ++ki) {
            for (std::size_t kj = 0; kj < kKernel; ++kj) {
                const double* row = cols.data() + ((c * kKernel + ki) * kKernel + kj) * oh * ow;
                for (std::size_t oy = 0; oy < oh; ++oy) {
                    const long iy = static_cast<long>(oy * kStride + ki) - static_cast<long>(kPad);
                    if (iy < 0 || iy >= static_cast<long>(height)) continue;
                    for (std::size_t ox = 0; ox < ow; ++ox) {
                        const long ix = static_cast<long>(ox * kStride + kj) - static_cast<long>(kPad);
                        if (ix < 0 || ix >= static_cast<long>(width)) continue;
                        x[iy * static_cast<long>(width) + ix] += row[oy * ow + ox];
                    }
                }
            }
        }
    }
    return out;
}

// input: channels x (height * width); output: out_channels x (oh * ow), post-ReLU.
Matrix conv_forward(const Matrix& input, std::size_t height, std::size_t width, const Conv2d& conv) {
    Matrix out = kernels::matmul(conv.kernel, im2col(input, height, width));
    for (std::size_t o = 0; o < out.rows(); ++o) {
        const double b = conv.bias.data()[o];
        for (double& v : out.row(o)) v = std::max(v + b, 0.0);
    }
    return out;
}

// grad_out is dLoss/d(post-ReLU output). Returns dLoss/dInput when requested.
Matrix conv_backward(const Matrix& input, std::size_t height, std::size_t width, const Conv2d& conv,
                     const Matrix& output, const Matrix& grad_out, Conv2d& grad, bool need_input_grad) {
    Matrix d_pre = grad_out;
    for (std::size_t e = 0; e < d_pre.size(); ++e)
        if (output.data()[e] <= 0.0) d_pre.data()[e] = 0.0;
    for (std::size_t o = 0; o < d_pre.rows(); ++o)
        for (double g : d_pre.row(o)) grad.bias.data()[o] += g;
    const Matrix cols = im2col(input, height, width);
    const Matrix dk = kernels::matmul_nt(d_pre, cols);
    for (std::size_t e = 0; e < dk.size(); ++e) grad.kernel.data()[e] += dk.data()[e];
    if (!need_input_grad) return Matrix();
    return col2im(kernels::matmul_tn(conv.kernel, d_pre), input.rows(), height, width);
}

void check_finite(std::span<const double> v, Modality m, const char* stage) {
    if (!all_finite(v))
        throw NumericError("non-finite activation in " + std::string(modality_name(m)) + " branch (" + stage + ")");
}

void finish_embedding(BranchTape& t, const Linear& project, Modality m) {
    t.projected = linear_forward(project, t.hidden2.empty() ? t.feature : t.hidden2);
    check_finite(t.projected, m, "projection");
    t.projected_norm = norm2(t.projected);
    try {
        t.embedding = l2_normalize(t.projected);
    } catch (const NumericError&) {
        throw NumericError("zero-norm projection in " + std::string(modality_name(m)) + " branch");
    }
}

// Gradient of the embedding w.r.t. the pre-normalisation projection.
std::vector<double> normalize_backward(const BranchTape& t, std::span<const double> df) {
    const double fd = dot(t.embedding, df);
    std::vector<double> dp(df.size());
    for (std::size_t i = 0; i < df.size(); ++i) dp[i] = (df[i] - t.embedding[i] * fd) / t.projected_norm;
    return dp;
}

void attention_forward(const Matrix& x, const AttentionBranch& p, BranchTape& t, Modality m) {
    if (x.cols() != p.attention.w_q.rows())
        throw ShapeError(std::string(modality_name(m)) + ": input " + x.shape_string() + " vs W_q " +
                         p.attention.w_q.shape_string());
    t.q = kernels::matmul(x, p.attention.w_q);
    t.k = kernels::matmul(x, p.attention.w_k);
    t.v = kernels::matmul(x, p.attention.w_v);
    t.attention = kernels::matmul_nt(t.q, t.k);
    const double scale = 1.0 / std::sqrt(static_cast<double>(x.rows()));
    for (double& a : t.attention.values()) a *= scale;
    kernels::softmax_rows(t.attention);
    t.attended = kernels::matmul(t.attention, t.v);
    t.reduced = kernels::matmul_nt(t.attended, p.reduce.weight);
    for (std::size_t r = 0; r < t.reduced.rows(); ++r)
        for (std::size_t c = 0; c < t.reduced.cols(); ++c) t.reduced(r, c) += p.reduce.bias.data()[c];
    check_finite(t.reduced.values(), m, "attention");
    t.flat.assign(t.reduced.values().begin(), t.reduced.values().end());
    t.hidden1 = linear_forward(p.hidden1, t.flat);
    relu_inplace(t.hidden1);
    t.hidden2 = linear_forward(p.hidden2, t.hidden1);
    relu_inplace(t.hidden2);
    finish_embedding(t, p.project, m);
}

void attention_backward(const Matrix& x, const AttentionBranch& p, const BranchTape& t, std::span<const double> df,
                        AttentionBranch& g) {
    std::vector<double> dp = normalize_backward(t, df);
    std::vector<double> dh2 = linear_backward(p.project, g.project, t.hidden2, dp);
    relu_mask(dh2, t.hidden2);
    std::vector<double> dh1 = linear_backward(p.hidden2, g.hidden2, t.hidden1, dh2);
    relu_mask(dh1, t.hidden1);
    std::vector<double> dflat = linear_backward(p.hidden1, g.hidden1, t.flat, dh1);

    const Matrix d_reduced(t.reduced.rows(), t.reduced.cols(), std::move(dflat));
    kernels::matmul_tn_acc(d_reduced, t.attended, g.reduce.weight);
    for (std::size_t r = 0; r < d_reduced.rows(); ++r)
        for (std::size_t c = 0; c < d_reduced.cols(); ++c) g.reduce.bias.data()[c] += d_reduced(r, c);
    const Matrix d_attended = kernels::matmul(d_reduced, p.reduce.weight);

    Matrix d_attention = kernels::matmul_nt(d_attended, t.v);
    const Matrix d_v = kernels::matmul_tn(t.attention, d_attended);
    const double scale = 1.0 / std::sqrt(static_cast<double>(x.rows()));
    for (std::size_t r = 0; r < d_attention.rows(); ++r) {
        const auto a = t.attention.row(r);
        auto da = d_attention.row(r);
        const double inner = dot(a, da);
        for (std::size_t c = 0; c < da.size(); ++c) da[c] = a[c] * (da[c] - inner) * scale;
    }
    const Matrix d_q = kernels::matmul(d_attention, t.k);
    const Matrix d_k = kernels::matmul_tn(d_attention, t.q);
    kernels::matmul_tn_acc(x, d_q, g.attention.w_q);
    kernels::matmul_tn_acc(x, d_k, g.attention.w_k);
    kernels::matmul_tn_acc(x, d_v, g.attention.w_v);
}

void volume_forward(const Matrix& image, const ModelShape& shape, const VolumeBranch& p, BranchTape& t) {
    const auto sizes = shape.conv_output_sizes();
    t.conv_out.clear();
    std::size_t height = shape.dims.h, width = shape.dims.w;
    const Matrix input(shape.dims.n_slices, height * width,
                       std::vector<double>(image.values().begin(), image.values().end()));
    const Matrix* current = &input;
    for (std::size_t l = 0; l < 3; ++l) {
        t.conv_out.push_back(conv_forward(*current, height, width, p.conv[l]));
        current = &t.conv_out.back();
        std::tie(height, width) = sizes[l];
    }
    t.flat.assign(current->values().begin(), current->values().end());
    t.feature = linear_forward(p.fc, t.flat);
    relu_inplace(t.feature);
    t.hidden2.clear();
    finish_embedding(t, p.project, Modality::image_volume);
}

void volume_backward(const Matrix& image, const ModelShape& shape, const VolumeBranch& p, const BranchTape& t,
                     std::span<const double> df, VolumeBranch& g) {
    std::vector<double> dp = normalize_backward(t, df);
    std::vector<double> dfeat = linear_backward(p.project, g.project, t.feature, dp);
    relu_mask(dfeat, t.feature);
    std::vector<double> dflat = linear_backward(p.fc, g.fc, t.flat, dfeat);

    const auto sizes = shape.conv_output_sizes();
    const Matrix input(shape.dims.n_slices, shape.dims.h * shape.dims.w,
                       std::vector<double>(image.values().begin(), image.values().end()));
    Matrix grad(t.conv_out[2].rows(), t.conv_out[2].cols(), std::move(dflat));
    for (std::size_t l = 3; l-- > 0;) {
        const Matrix& in = l == 0 ? input : t.conv_out[l - 1];
        const std::size_t height = l == 0 ? shape.dims.h : sizes[l - 1].first;
        const std::size_t width = l == 0 ? shape.dims.w : sizes[l - 1].second;
        grad = conv_backward(in, height, width, p.conv[l], t.conv_out[l], grad, g.conv[l], l > 0);
    }
}

void clinical_forward(const Matrix& x, const ClinicalBranch& p, BranchTape& t) {
    t.feature = linear_forward(p.fc, x.values());
    relu_inplace(t.feature);
    t.hidden2.clear();
    finish_embedding(t, p.project, Modality::clinical);
}

void clinical_backward(const Matrix& x, const ClinicalBranch& p, const BranchTape& t, std::span<const double> df,
                       ClinicalBranch& g) {
    std::vector<double> dp = normalize_backward(t, df);
    std::vector<double> dfeat = linear_backward(p.project, g.project, t.feature, dp);
    relu_mask(dfeat, t.feature);
    kernels::affine_param_grad(dfeat, x.values(), g.fc.weight, g.fc.bias);
}

void visit_linear(const std::string& path, Linear& l, const std::function<void(const std::string&, Matrix&)>& fn) {
    fn(path + ".weight", l.weight);
    fn(path + ".bias", l.bias);
}

}  // namespace

std::size_t ModelShape::attention_width(Modality m) const {
    return m == Modality::radiomics ? dims.z : dims.d;
}

std::array<std::pair<std::size_t, std::size_t>, 3> ModelShape::conv_output_sizes() const {
    std::array<std::pair<std::size_t, std::size_t>, 3> out;
    std::size_t h = dims.h, w = dims.w;
    for (auto& s : out) {
        h = conv_out_size(h);
        w = conv_out_size(w);
        s = {h, w};
    }
    return out;
}

void EncoderParams::for_each(const std::function<void(const std::string&, Matrix&)>& fn) {
    for (std::size_t i = 0; i < attention.size(); ++i) {
        const std::string base(modality_name(kAllModalities[i]));
        auto& b = attention[i];
        fn(base + ".w_q", b.attention.w_q);
        fn(base + ".w_k", b.attention.w_k);
        fn(base + ".w_v", b.attention.w_v);
        visit_linear(base + ".reduce", b.reduce, fn);
        visit_linear(base + ".hidden1", b.hidden1, fn);
        visit_linear(base + ".hidden2", b.hidden2, fn);
        visit_linear(base + ".project", b.project, fn);
    }
    for (std::size_t l = 0; l < volume.conv.size(); ++l) {
        const std::string base = "image_volume.conv" + std::to_string(l);
        fn(base + ".kernel", volume.conv[l].kernel);
        fn(base + ".bias", volume.conv[l].bias);
    }
    visit_linear("image_volume.fc", volume.fc, fn);
    visit_linear("image_volume.project", volume.project, fn);
    visit_linear("clinical.fc", clinical.fc, fn);
    visit_linear("clinical.project", clinical.project, fn);
    visit_linear("fusion", fusion, fn);
}

void EncoderParams::for_each(const std::function<void(const std::string&, const Matrix&)>& fn) const {
    const_cast<EncoderParams*>(this)->for_each(
        [&](const std::string& path, Matrix& m) { fn(path, static_cast<const Matrix&>(m)); });
}

EncoderParams EncoderParams::zeros_like() const {
    EncoderParams z = *this;
    z.set_zero();
    return z;
}

void EncoderParams::set_zero() {
    for_each([](const std::string&, Matrix& m) { m.fill(0.0); });
}

std::size_t EncoderParams::parameter_count() const {
    std::size_t n = 0;
    for_each([&](const std::string&, const Matrix& m) { n += m.size(); });
    return n;
}

void EncoderParams::add(const EncoderParams& other, double scale) {
    std::vector<const Matrix*> src;
    other.for_each([&](const std::string&, const Matrix& m) { src.push_back(&m); });
    std::size_t i = 0;
    for_each([&](const std::string& path, Matrix& m) {
        const Matrix& o = *src.at(i++);
        if (!m.same_shape(o)) throw ShapeError("parameter " + path + " shape mismatch in add");
        double* dst = m.data();
        const double* s = o.data();
        for (std::size_t e = 0; e < m.size(); ++e) dst[e] += scale * s[e];
    });
}

EncoderParams init_params(const ModelShape& shape, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    EncoderParams p;
    p.shape = shape;
    for (std::size_t i = 0; i < 3; ++i) {
        const Modality m = kAllModalities[i];
        const std::size_t width = shape.attention_width(m);
        auto& b = p.attention[i];
        const double bound = 1.0 / std::sqrt(static_cast<double>(width));
        for (Matrix* w : {&b.attention.w_q, &b.attention.w_k, &b.attention.w_v}) {
            *w = Matrix(width, width);
            uniform_fill(*w, bound, rng);
        }
        b.reduce = make_linear(width, shape.reduce_width, rng);
        b.hidden1 = make_linear(shape.dims.d * shape.reduce_width, shape.hidden1, rng);
        b.hidden2 = make_linear(shape.hidden1, shape.hidden2, rng);
        b.project = make_linear(shape.hidden2, shape.embed_dim, rng);
    }
    std::size_t channels = shape.dims.n_slices;
    for (std::size_t l = 0; l < 3; ++l) {
        p.volume.conv[l] = make_conv(channels, shape.conv_channels[l], rng);
        channels = shape.conv_channels[l];
    }
    const auto sizes = shape.conv_output_sizes();
    p.volume.fc = make_linear(channels * sizes[2].first * sizes[2].second, shape.feature_width, rng);
    p.volume.project = make_linear(shape.feature_width, shape.embed_dim, rng);
    p.clinical.fc = make_linear(shape.dims.c_dim, shape.feature_width, rng);
    p.clinical.project = make_linear(shape.feature_width, shape.embed_dim, rng);
    p.fusion = make_linear(shape.fusion_width(), 2, rng);
    return p;
}

void reset_fusion_head(EncoderParams& params, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    params.fusion = make_linear(params.shape.fusion_width(), 2, rng);
}

AttentionResult self_attention(const Matrix& x, const AttentionWeights& w) {
    if (x.cols() != w.w_q.rows() || x.cols() != w.w_k.rows() || x.cols() != w.w_v.rows())
        throw ShapeError("self_attention: input " + x.shape_string() + " does not match weights " +
                         w.w_q.shape_string());
    if (w.w_q.cols() != w.w_k.cols()) throw ShapeError("self_attention: W_q and W_k output widths differ");
    const Matrix q = kernels::matmul(x, w.w_q);
    const Matrix k = kernels::matmul(x, w.w_k);
    const Matrix v = kernels::matmul(x, w.w_v);
    AttentionResult r;
    r.attention = kernels::matmul_nt(q, k);
    const double scale = 1.0 / std::sqrt(static_cast<double>(x.rows()));
    for (double& a : r.attention.values()) a *= scale;
    kernels::softmax_rows(r.attention);
    r.output = kernels::matmul(r.attention, v);
    return r;
}

std::vector<double> l2_normalize(std::span<const double> v) {
    const double n = norm2(v);
    if (!(n > 1e-12)) throw NumericError("cannot normalise a vector with norm " + std::to_string(n));
    std::vector<double> out(v.begin(), v.end());
    for (double& x : out) x /= n;
    return out;
}

std::vector<double> concat_embeddings(const EmbeddingSet& e) {
    std::vector<double> out;
    for (Modality m : e.present.members()) out.insert(out.end(), e[m].begin(), e[m].end());
    return out;
}

std::array<double, 2> fusion_logits(const EmbeddingSet& e, const EncoderParams& params) {
    const std::vector<double> x = concat_embeddings(e);
    if (x.size() != params.fusion.weight.cols())
        throw ShapeError("fusion: concatenated width " + std::to_string(x.size()) + " vs fusion weight " +
                         params.fusion.weight.shape_string());
    std::array<double, 2> logits{};
    kernels::affine(params.fusion.weight, params.fusion.bias, x, logits);
    return logits;
}

std::array<double, 2> fuse_and_classify(const EmbeddingSet& e, const EncoderParams& params) {
    const auto z = fusion_logits(e, params);
    const double mx = std::max(z[0], z[1]);
    const double e0 = std::exp(z[0] - mx), e1 = std::exp(z[1] - mx);
    return {e0 / (e0 + e1), e1 / (e0 + e1)};
}

std::array<std::vector<double>, kModalityCount> fusion_backward(const EmbeddingSet& e, const EncoderParams& params,
                                                                const std::array<double, 2>& logit_grad,
                                                                EncoderParams& grads) {
    const std::vector<double> x = concat_embeddings(e);
    kernels::affine_param_grad(logit_grad, x, grads.fusion.weight, grads.fusion.bias);
    std::vector<double> dx(x.size());
    kernels::affine_input_grad(params.fusion.weight, logit_grad, dx);
    std::array<std::vector<double>, kModalityCount> out;
    std::size_t offset = 0;
    for (Modality m : e.present.members()) {
        const std::size_t n = e[m].size();
        out[index_of(m)].assign(dx.begin() + static_cast<long>(offset), dx.begin() + static_cast<long>(offset + n));
        offset += n;
    }
    return out;
}

SubjectTape forward_subject(const SubjectRecord& rec, const EncoderParams& params) {
    SubjectTape tape;
    const ModelShape& shape = params.shape;
    tape.embeddings.present = shape.active;
    for (Modality m : shape.active.members()) {
        BranchTape& t = tape.branches[index_of(m)];
        const Matrix& x = rec.payload(m);
        if (is_attention_modality(m)) {
            attention_forward(x, params.attention[index_of(m)], t, m);
        } else if (m == Modality::image_volume) {
            if (x.rows() != shape.dims.n_slices * shape.dims.h || x.cols() != shape.dims.w)
                throw ShapeError("image_volume: payload " + x.shape_string() + " does not match model dims");
            volume_forward(x, shape, params.volume, t);
        } else {
            if (x.size() != shape.dims.c_dim)
                throw ShapeError("clinical: payload " + x.shape_string() + " does not match c_dim");
            clinical_forward(x, params.clinical, t);
        }
        tape.embeddings[m] = t.embedding;
    }
    return tape;
}

EmbeddingSet encode_subject(const SubjectRecord& rec, const EncoderParams& params) {
    return forward_subject(rec, params).embeddings;
}

void backward_subject(const SubjectRecord& rec, const EncoderParams& params, const SubjectTape& tape,
                      const std::array<std::vector<double>, kModalityCount>& df, EncoderParams& grads) {
    for (Modality m : params.shape.active.members()) {
        const auto& g = df[index_of(m)];
        if (g.empty()) continue;
        const BranchTape& t = tape.branches[index_of(m)];
        const Matrix& x = rec.payload(m);
        if (is_attention_modality(m)) {
            attention_backward(x, params.attention[index_of(m)], t, g, grads.attention[index_of(m)]);
        } else if (m == Modality::image_volume) {
            volume_backward(x, params.shape, params.volume, t, g, grads.volume);
        } else {
            clinical_backward(x, params.clinical, t, g, grads.clinical);
        }
    }
}

std::vector<EmbeddingSet> encode_batch(const Cohort& cohort, const std::vector<std::size_t>& indices,
                                       const EncoderParams& params) {
    std::vector<EmbeddingSet> out(indices.size());
    const long n = static_cast<long>(indices.size());
    std::exception_ptr failure;
#pragma omp parallel for schedule(dynamic)
    for (long i = 0; i < n; ++i) {
        try {
            out[static_cast<std::size_t>(i)] = encode_subject(cohort.subjects.at(indices[static_cast<std::size_t>(i)]), params);
        } catch (...) {
#pragma omp critical
            if (!failure) failure = std::current_exception();
        }
    }
    if (failure) std::rethrow_exception(failure);
    return out;
}

}  // namespace cmcss
