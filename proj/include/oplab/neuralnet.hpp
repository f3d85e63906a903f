#pragma once

#include <string>
#include <vector>

#include "oplab/math.hpp"

namespace oplab {

enum class Activation { Tanh, Relu, Elu, LeakyRelu, Sigmoid, Swish };
enum class Init {
    GlorotNormal,
    GlorotUniform,
    HeNormal,
    HeUniform,
    LecunNormal,
    LecunUniform,
    Orthogonal,       // gain 1
    OrthogonalGain141  // gain 1.41
};

Activation activation_from_string(const std::string& s);
std::string to_string(Activation a);
Init init_from_string(const std::string& s);
std::string to_string(Init i);

/// Elementwise activation value and exact derivative.
double activate(Activation a, double x);
double activate_deriv(Activation a, double x);

/// Linear output head attached to the last hidden layer.
struct HeadSpec {
    int out_dim = 1;
    /// Multiplies the head's weights right after initialization.
    double weight_scale = 1.0;
};

struct MlpSpec {
    int in_dim = 0;
    std::vector<int> widths;  // hidden layer widths, non-empty
    Activation activation = Activation::Tanh;
    Init init = Init::OrthogonalGain141;
    std::vector<HeadSpec> heads;
};

/// Fill a (fan_out x fan_in) weight matrix per the named scheme.
void init_weights(Matrix& w, Init scheme, Rng& rng);

/// MLP with activated hidden layers and one or more linear heads sharing
/// the last hidden activation. Owns its parameters and their gradient
/// accumulators; all arithmetic is float64.
class Mlp {
public:
    Mlp() = default;
    Mlp(const MlpSpec& spec, Rng& rng);

    const MlpSpec& spec() const { return spec_; }
    int num_hidden() const { return static_cast<int>(spec_.widths.size()); }
    int num_heads() const { return static_cast<int>(spec_.heads.size()); }

    struct Cache {
        Matrix input;              // batch x in_dim
        std::vector<Matrix> pre;   // per hidden layer: batch x width (pre-activation)
        std::vector<Matrix> post;  // per hidden layer: batch x width (post-activation)
        uint64_t stamp = 0;        // parameter version the cache was computed with
    };

    /// Batched forward; x rows are samples. Returns one output matrix per head.
    std::vector<Matrix> forward(const Matrix& x, Cache& cache) const;

    /// Accumulates parameter gradients for <d_heads, heads> and returns the
    /// gradient w.r.t. the input batch. The cache must come from a forward
    /// with the current parameters.
    Matrix backward(const Cache& cache, const std::vector<Matrix>& d_heads);

    void zero_grad();

    // hidden weights/biases then head weights/biases, in layer order
    std::vector<Matrix>& weights() { return w_; }
    std::vector<std::vector<double>>& biases() { return b_; }
    const std::vector<Matrix>& weights() const { return w_; }
    const std::vector<std::vector<double>>& biases() const { return b_; }
    std::vector<Matrix>& weight_grads() { return dw_; }
    std::vector<std::vector<double>>& bias_grads() { return db_; }
    const std::vector<Matrix>& weight_grads() const { return dw_; }
    const std::vector<std::vector<double>>& bias_grads() const { return db_; }

    /// Bumped by the optimizer after every parameter change so stale caches
    /// can be detected in backward.
    void mark_params_changed() { ++stamp_; }
    uint64_t param_stamp() const { return stamp_; }

private:
    MlpSpec spec_;
    std::vector<Matrix> w_;
    std::vector<std::vector<double>> b_;
    std::vector<Matrix> dw_;
    std::vector<std::vector<double>> db_;
    uint64_t stamp_ = 0;
};

}  // namespace oplab
