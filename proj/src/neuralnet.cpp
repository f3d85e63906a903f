#include "oplab/neuralnet.hpp"

#include <cmath>
#include <stdexcept>

namespace oplab {

Activation activation_from_string(const std::string& s) {
    if (s == "tanh") return Activation::Tanh;
    if (s == "relu") return Activation::Relu;
    if (s == "elu") return Activation::Elu;
    if (s == "leaky_relu") return Activation::LeakyRelu;
    if (s == "sigmoid") return Activation::Sigmoid;
    if (s == "swish") return Activation::Swish;
    throw std::invalid_argument("unknown activation: " + s);
}

std::string to_string(Activation a) {
    switch (a) {
        case Activation::Tanh: return "tanh";
        case Activation::Relu: return "relu";
        case Activation::Elu: return "elu";
        case Activation::LeakyRelu: return "leaky_relu";
        case Activation::Sigmoid: return "sigmoid";
        case Activation::Swish: return "swish";
    }
    return "?";
}

Init init_from_string(const std::string& s) {
    if (s == "glorot_normal") return Init::GlorotNormal;
    if (s == "glorot_uniform") return Init::GlorotUniform;
    if (s == "he_normal") return Init::HeNormal;
    if (s == "he_uniform") return Init::HeUniform;
    if (s == "lecun_normal") return Init::LecunNormal;
    if (s == "lecun_uniform") return Init::LecunUniform;
    if (s == "orthogonal") return Init::Orthogonal;
    if (s == "orthogonal_gain_1.41") return Init::OrthogonalGain141;
    throw std::invalid_argument("unknown initializer: " + s);
}

std::string to_string(Init i) {
    switch (i) {
        case Init::GlorotNormal: return "glorot_normal";
        case Init::GlorotUniform: return "glorot_uniform";
        case Init::HeNormal: return "he_normal";
        case Init::HeUniform: return "he_uniform";
        case Init::LecunNormal: return "lecun_normal";
        case Init::LecunUniform: return "lecun_uniform";
        case Init::Orthogonal: return "orthogonal";
        case Init::OrthogonalGain141: return "orthogonal_gain_1.41";
    }
    return "?";
}

double activate(Activation a, double x) {
    switch (a) {
        case Activation::Tanh: return std::tanh(x);
        case Activation::Relu: return x > 0 ? x : 0.0;
        case Activation::Elu: return x > 0 ? x : std::expm1(x);
        case Activation::LeakyRelu: return x > 0 ? x : 0.01 * x;
        case Activation::Sigmoid: return sigmoid(x);
        case Activation::Swish: return x * sigmoid(x);
    }
    return 0.0;
}

double activate_deriv(Activation a, double x) {
    switch (a) {
        case Activation::Tanh: {
            const double t = std::tanh(x);
            return 1.0 - t * t;
        }
        case Activation::Relu: return x > 0 ? 1.0 : 0.0;
        case Activation::Elu: return x > 0 ? 1.0 : std::exp(x);
        case Activation::LeakyRelu: return x > 0 ? 1.0 : 0.01;
        case Activation::Sigmoid: {
            const double s = sigmoid(x);
            return s * (1.0 - s);
        }
        case Activation::Swish: {
            const double s = sigmoid(x);
            return s + x * s * (1.0 - s);
        }
    }
    return 0.0;
}

namespace {

// Semi-orthogonal matrix from modified Gram-Schmidt on a Gaussian draw:
// the smaller dimension's vectors come out orthonormal.
void orthogonal_fill(Matrix& w, double gain, Rng& rng) {
    const int r = w.rows, c = w.cols;
    const int n = std::max(r, c), k = std::min(r, c);
    // columns of g (n x k) get orthonormalized
    Matrix g(n, k);
    for (double& v : g.data) v = rng.normal();
    for (int j = 0; j < k; ++j) {
        for (int p = 0; p < j; ++p) {
            double dot = 0.0;
            for (int i = 0; i < n; ++i) dot += g(i, j) * g(i, p);
            for (int i = 0; i < n; ++i) g(i, j) -= dot * g(i, p);
        }
        double norm = 0.0;
        for (int i = 0; i < n; ++i) norm += g(i, j) * g(i, j);
        norm = std::sqrt(norm);
        if (norm < 1e-12) {  // astronomically unlikely; redraw the column
            for (int i = 0; i < n; ++i) g(i, j) = rng.normal();
            --j;
            continue;
        }
        for (int i = 0; i < n; ++i) g(i, j) /= norm;
    }
    if (r >= c) {
        for (int i = 0; i < r; ++i)
            for (int j = 0; j < c; ++j) w(i, j) = gain * g(i, j);
    } else {
        for (int i = 0; i < r; ++i)
            for (int j = 0; j < c; ++j) w(i, j) = gain * g(j, i);
    }
}

}  // namespace

void init_weights(Matrix& w, Init scheme, Rng& rng) {
    const double fan_in = w.cols, fan_out = w.rows;
    auto fill_normal = [&](double var) {
        const double sd = std::sqrt(var);
        for (double& v : w.data) v = sd * rng.normal();
    };
    auto fill_uniform = [&](double var) {
        const double lim = std::sqrt(3.0 * var);
        for (double& v : w.data) v = rng.uniform(-lim, lim);
    };
    switch (scheme) {
        case Init::GlorotNormal: fill_normal(2.0 / (fan_in + fan_out)); break;
        case Init::GlorotUniform: fill_uniform(2.0 / (fan_in + fan_out)); break;
        case Init::HeNormal: fill_normal(2.0 / fan_in); break;
        case Init::HeUniform: fill_uniform(2.0 / fan_in); break;
        case Init::LecunNormal: fill_normal(1.0 / fan_in); break;
        case Init::LecunUniform: fill_uniform(1.0 / fan_in); break;
        case Init::Orthogonal: orthogonal_fill(w, 1.0, rng); break;
        case Init::OrthogonalGain141: orthogonal_fill(w, 1.41, rng); break;
    }
}

Mlp::Mlp(const MlpSpec& spec, Rng& rng) : spec_(spec) {
    if (spec.widths.empty()) throw std::invalid_argument("MlpSpec.widths must be non-empty");
    if (spec.heads.empty()) throw std::invalid_argument("MlpSpec.heads must be non-empty");
    int in = spec.in_dim;
    for (int width : spec.widths) {
        Matrix w(width, in);
        init_weights(w, spec.init, rng);
        w_.push_back(std::move(w));
        b_.emplace_back(width, 0.0);
        in = width;
    }
    for (const HeadSpec& h : spec.heads) {
        if (h.weight_scale <= 0.0) throw std::invalid_argument("head weight_scale must be > 0");
        Matrix w(h.out_dim, in);
        init_weights(w, spec.init, rng);
        for (double& v : w.data) v *= h.weight_scale;
        w_.push_back(std::move(w));
        b_.emplace_back(h.out_dim, 0.0);
    }
    dw_.reserve(w_.size());
    db_.reserve(b_.size());
    for (const Matrix& w : w_) dw_.emplace_back(w.rows, w.cols);
    for (const auto& b : b_) db_.emplace_back(b.size(), 0.0);
}

std::vector<Matrix> Mlp::forward(const Matrix& x, Cache& cache) const {
    if (x.cols != spec_.in_dim) throw std::invalid_argument("forward: input dimension mismatch");
    for (double v : x.data)
        if (!std::isfinite(v)) throw std::domain_error("forward: non-finite input");
    const int n_hidden = num_hidden();
    cache.input = x;
    cache.pre.assign(n_hidden, {});
    cache.post.assign(n_hidden, {});
    cache.stamp = stamp_;
    const Matrix* h = &cache.input;
    for (int l = 0; l < n_hidden; ++l) {
        Matrix pre = matmul_nt(*h, w_[l]);
        for (int i = 0; i < pre.rows; ++i)
            for (int j = 0; j < pre.cols; ++j) pre(i, j) += b_[l][j];
        Matrix post(pre.rows, pre.cols);
        for (size_t k = 0; k < pre.data.size(); ++k) post.data[k] = activate(spec_.activation, pre.data[k]);
        cache.pre[l] = std::move(pre);
        cache.post[l] = std::move(post);
        h = &cache.post[l];
    }
    std::vector<Matrix> outs;
    outs.reserve(spec_.heads.size());
    for (size_t k = 0; k < spec_.heads.size(); ++k) {
        const size_t li = n_hidden + k;
        Matrix y = matmul_nt(*h, w_[li]);
        for (int i = 0; i < y.rows; ++i)
            for (int j = 0; j < y.cols; ++j) y(i, j) += b_[li][j];
        outs.push_back(std::move(y));
    }
    return outs;
}

Matrix Mlp::backward(const Cache& cache, const std::vector<Matrix>& d_heads) {
    if (cache.stamp != stamp_) throw std::logic_error("backward: cache is stale (parameters changed)");
    if (d_heads.size() != spec_.heads.size()) throw std::invalid_argument("backward: d_heads count mismatch");
    const int n_hidden = num_hidden();
    const Matrix& last = n_hidden > 0 ? cache.post[n_hidden - 1] : cache.input;
    // heads
    Matrix dh(last.rows, last.cols);
    for (size_t k = 0; k < d_heads.size(); ++k) {
        const size_t li = n_hidden + k;
        const Matrix& dy = d_heads[k];
        Matrix dwk = matmul_tn(dy, last);
        for (size_t q = 0; q < dwk.data.size(); ++q) dw_[li].data[q] += dwk.data[q];
        for (int i = 0; i < dy.rows; ++i)
            for (int j = 0; j < dy.cols; ++j) db_[li][j] += dy(i, j);
        Matrix d = matmul(dy, w_[li]);
        for (size_t q = 0; q < d.data.size(); ++q) dh.data[q] += d.data[q];
    }
    // hidden layers
    for (int l = n_hidden - 1; l >= 0; --l) {
        Matrix dpre = std::move(dh);
        for (size_t q = 0; q < dpre.data.size(); ++q)
            dpre.data[q] *= activate_deriv(spec_.activation, cache.pre[l].data[q]);
        const Matrix& below = l > 0 ? cache.post[l - 1] : cache.input;
        Matrix dwl = matmul_tn(dpre, below);
        for (size_t q = 0; q < dwl.data.size(); ++q) dw_[l].data[q] += dwl.data[q];
        for (int i = 0; i < dpre.rows; ++i)
            for (int j = 0; j < dpre.cols; ++j) db_[l][j] += dpre(i, j);
        dh = matmul(dpre, w_[l]);
    }
    return dh;
}

void Mlp::zero_grad() {
    for (Matrix& m : dw_) m.fill(0.0);
    for (auto& b : db_) std::fill(b.begin(), b.end(), 0.0);
}

}  // namespace oplab
