#include "oplab/dataflow.hpp"

#include <cmath>
#include <stdexcept>

#include "oplab/math.hpp"

namespace oplab {

void RunningMoments::update(std::span<const double> x) {
    if (static_cast<int>(x.size()) != dim()) throw std::invalid_argument("RunningMoments: dimension mismatch");
    count += 1.0;
    for (int i = 0; i < dim(); ++i) {
        const double delta = x[i] - mean[i];
        mean[i] += delta / count;
        m2[i] += delta * (x[i] - mean[i]);
    }
}

double RunningMoments::std_dev(int i) const { return count > 0 ? std::sqrt(m2[i] / count) : 0.0; }

double RunningMoments::safe_std(int i) const {
    if (count == 0.0) return 1.0;
    return std::max(std_dev(i), 1e-6);
}

double RunningMoments::safe_mean(int i) const { return count == 0.0 ? 0.0 : mean[i]; }

void normalize_obs(const RunningMoments& stats, std::span<const double> obs, std::span<double> out,
                   bool clip_enabled, double o_max) {
    for (size_t i = 0; i < obs.size(); ++i) {
        double v = (obs[i] - stats.safe_mean(static_cast<int>(i))) / stats.safe_std(static_cast<int>(i));
        if (clip_enabled) v = clamp(v, -o_max, o_max);
        out[i] = v;
    }
}

double normalize_value_target(const RunningMoments& stats, double v) {
    return (v - stats.safe_mean(0)) / stats.safe_std(0);
}

double denormalize_value(const RunningMoments& stats, double v_out) {
    return stats.safe_mean(0) + v_out * stats.safe_std(0);
}

std::vector<double> normalize_advantages(std::span<const double> advantages) {
    const size_t n = advantages.size();
    std::vector<double> out(n, 0.0);
    if (n < 2) return out;
    double mean = 0.0;
    for (double a : advantages) mean += a;
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (double a : advantages) var += (a - mean) * (a - mean);
    var /= static_cast<double>(n);
    const double sd = std::max(std::sqrt(var), 1e-8);
    for (size_t i = 0; i < n; ++i) out[i] = (advantages[i] - mean) / sd;
    return out;
}

void clip_gradient(std::span<double> grad, double threshold) {
    if (threshold <= 0.0) throw std::invalid_argument("gradient clip threshold must be > 0");
    const double norm = l2_norm(grad);
    if (norm > threshold) {
        const double scale = threshold / norm;
        for (double& g : grad) g *= scale;
    }
}

}  // namespace oplab
