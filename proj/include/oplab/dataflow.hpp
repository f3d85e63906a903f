#pragma once

#include <span>
#include <vector>

namespace oplab {

/// Streaming mean / population-variance accumulator (Welford). With no
/// data seen, normalization is the identity (mean 0, std 1).
struct RunningMoments {
    double count = 0.0;
    std::vector<double> mean;
    std::vector<double> m2;  // sum of squared deviations

    explicit RunningMoments(int dim = 1) : mean(dim, 0.0), m2(dim, 0.0) {}

    int dim() const { return static_cast<int>(mean.size()); }
    void update(std::span<const double> x);
    /// Population std of coordinate i, 0 until two samples are seen.
    double std_dev(int i) const;
    /// max(std, 1e-6), or 1 when no data has been seen.
    double safe_std(int i) const;
    double safe_mean(int i) const;
};

void normalize_obs(const RunningMoments& stats, std::span<const double> obs, std::span<double> out,
                   bool clip_enabled, double o_max);

double normalize_value_target(const RunningMoments& stats, double v);
double denormalize_value(const RunningMoments& stats, double v_out);

/// Zero mean, unit population std per minibatch (std floored at 1e-8).
/// A single-element batch comes back as zeros.
std::vector<double> normalize_advantages(std::span<const double> advantages);

/// Rescales so the L2 norm does not exceed the threshold.
void clip_gradient(std::span<double> grad, double threshold);

}  // namespace oplab
