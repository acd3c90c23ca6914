#pragma once

#include <stdexcept>
#include <vector>

#include "mixconf/rng.hpp"

namespace mixconf {

enum class KernelFamily { Gaussian, Triangular };

// Thrown by compute_lambda_b when the kernel support covers neither endpoint
// contribution, i.e. k'(u-1) + k'(u) underflows to exactly zero. Only
// reachable for triangular kernels with width < 0.5 at interior ratios that
// carry zero sampling density.
struct DegenerateKernelError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// A symmetric, unimodal kernel k' defined on interpolation-ratio space.
// `width` is the kernel scale sigma, dimensionless. Values are deliberately
// unnormalized; every consumer either takes ratios or renormalizes.
struct KernelSpec {
    KernelFamily family = KernelFamily::Gaussian;
    double width = 0.4;

    void validate() const;
};

// Interpolation ratios for one mixed sample: lambda_a scales the inputs,
// lambda_b the labels. lambda_b is a deterministic function of lambda_a
// given the kernel.
struct LambdaPair {
    double lambda_a = 0.0;
    double lambda_b = 0.0;
};

// k'(u). Gaussian: exp(-u^2 / (2 sigma^2)); triangular: max(0, 1 - |u|/sigma).
double eval_kernel(const KernelSpec& spec, double u);

// Normalized density of the mixture (k'(u-1) + k'(u)) / 2 truncated to
// [0, 1]. Zero outside [0, 1]. The normalization constant is obtained by
// composite Simpson quadrature on the unit interval.
double lambda_a_pdf(const KernelSpec& spec, double lambda_a);

// Label interpolation ratio: k'(u - 1) / (k'(u - 1) + k'(u)).
double compute_lambda_b(const KernelSpec& spec, double lambda_a);

// Draws lambda_a from the truncated mixture density by inverse-CDF lookup on
// a precomputed quadrature grid (4096 intervals, per-interval Simpson, linear
// interpolation between nodes). Construction does all the integration work;
// sampling is a binary search. Immutable after construction, so safe to share
// across threads; the random engine is caller-owned.
class LambdaSampler {
public:
    explicit LambdaSampler(const KernelSpec& spec);

    const KernelSpec& spec() const { return spec_; }

    double pdf(double lambda_a) const;
    double cdf(double lambda_a) const;
    double sample(Rng& rng) const;

    // Draws lambda_a and pairs it with its lambda_b.
    LambdaPair sample_pair(Rng& rng) const;

private:
    KernelSpec spec_;
    double normalizer_;            // integral of the unnormalized mixture over [0,1]
    std::vector<double> cdf_grid_; // cdf at i / kGridIntervals, i = 0..kGridIntervals

    static constexpr std::size_t kGridIntervals = 4096;
};

// One-shot convenience; prefer a LambdaSampler when drawing repeatedly.
double sample_lambda_a(const KernelSpec& spec, Rng& rng);

}  // namespace mixconf
