#include "mixconf/kernel.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace mixconf {

void KernelSpec::validate() const {
    if (!(width > 0.0) || !std::isfinite(width))
        throw std::invalid_argument("KernelSpec: width must be a positive finite real, got " +
                                    std::to_string(width));
    if (family != KernelFamily::Gaussian && family != KernelFamily::Triangular)
        throw std::invalid_argument("KernelSpec: unknown kernel family");
}

double eval_kernel(const KernelSpec& spec, double u) {
    switch (spec.family) {
        case KernelFamily::Gaussian:
            return std::exp(-u * u / (2.0 * spec.width * spec.width));
        case KernelFamily::Triangular:
            return std::max(0.0, 1.0 - std::abs(u) / spec.width);
    }
    return 0.0;
}

namespace {

// Unnormalized truncated-mixture density: (k'(u-1) + k'(u)) / 2 on [0,1].
double mixture(const KernelSpec& spec, double u) {
    return 0.5 * (eval_kernel(spec, u - 1.0) + eval_kernel(spec, u));
}

double simpson(const KernelSpec& spec, double a, double b) {
    return (b - a) / 6.0 * (mixture(spec, a) + 4.0 * mixture(spec, 0.5 * (a + b)) + mixture(spec, b));
}

// Interior slope breaks of the mixture. The triangular kernel's support edges
// land at width and 1-width; splitting there makes Simpson exact on the
// piecewise-linear segments.
std::vector<double> interior_kinks(const KernelSpec& spec) {
    std::vector<double> pts;
    if (spec.family == KernelFamily::Triangular) {
        for (double p : {spec.width, 1.0 - spec.width})
            if (p > 0.0 && p < 1.0) pts.push_back(p);
        std::sort(pts.begin(), pts.end());
    }
    return pts;
}

double integrate_cell(const KernelSpec& spec, double a, double b,
                      const std::vector<double>& kinks) {
    double total = 0.0;
    double left = a;
    for (double k : kinks)
        if (k > left && k < b) {
            total += simpson(spec, left, k);
            left = k;
        }
    return total + simpson(spec, left, b);
}

// Composite Simpson over [0,1] with n cells, kink-split per cell.
double integrate_mixture(const KernelSpec& spec, std::size_t n) {
    const std::vector<double> kinks = interior_kinks(spec);
    const double h = 1.0 / static_cast<double>(n);
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double a = static_cast<double>(i) * h;
        total += integrate_cell(spec, a, a + h, kinks);
    }
    return total;
}

constexpr std::size_t kNormalizerIntervals = 4096;

}  // namespace

double lambda_a_pdf(const KernelSpec& spec, double lambda_a) {
    spec.validate();
    if (lambda_a < 0.0 || lambda_a > 1.0 || !std::isfinite(lambda_a)) return 0.0;
    return mixture(spec, lambda_a) / integrate_mixture(spec, kNormalizerIntervals);
}

double compute_lambda_b(const KernelSpec& spec, double lambda_a) {
    spec.validate();
    if (!(lambda_a >= 0.0 && lambda_a <= 1.0))
        throw std::invalid_argument("compute_lambda_b: lambda_a must be in [0,1], got " +
                                    std::to_string(lambda_a));
    const double near = eval_kernel(spec, lambda_a - 1.0);
    const double far = eval_kernel(spec, lambda_a);
    const double denom = near + far;
    if (denom == 0.0)
        throw DegenerateKernelError(
            "compute_lambda_b: kernel width " + std::to_string(spec.width) +
            " has no support at lambda_a=" + std::to_string(lambda_a));
    return near / denom;
}

LambdaSampler::LambdaSampler(const KernelSpec& spec) : spec_(spec) {
    spec_.validate();
    cdf_grid_.resize(kGridIntervals + 1);
    cdf_grid_[0] = 0.0;
    const std::vector<double> kinks = interior_kinks(spec_);
    const double h = 1.0 / static_cast<double>(kGridIntervals);
    double acc = 0.0;
    for (std::size_t i = 0; i < kGridIntervals; ++i) {
        const double a = static_cast<double>(i) * h;
        acc += integrate_cell(spec_, a, a + h, kinks);
        cdf_grid_[i + 1] = acc;
    }
    normalizer_ = acc;
    for (double& v : cdf_grid_) v /= normalizer_;
    cdf_grid_.back() = 1.0;
}

double LambdaSampler::pdf(double lambda_a) const {
    if (lambda_a < 0.0 || lambda_a > 1.0 || !std::isfinite(lambda_a)) return 0.0;
    return mixture(spec_, lambda_a) / normalizer_;
}

double LambdaSampler::cdf(double lambda_a) const {
    if (lambda_a <= 0.0) return 0.0;
    if (lambda_a >= 1.0) return 1.0;
    const double pos = lambda_a * static_cast<double>(kGridIntervals);
    const std::size_t i = std::min(static_cast<std::size_t>(pos), kGridIntervals - 1);
    const double frac = pos - static_cast<double>(i);
    return cdf_grid_[i] + frac * (cdf_grid_[i + 1] - cdf_grid_[i]);
}

double LambdaSampler::sample(Rng& rng) const {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const double v = unit(rng);
    // First grid node with cdf > v; v falls in the preceding interval.
    const auto it = std::upper_bound(cdf_grid_.begin(), cdf_grid_.end(), v);
    const std::size_t hi = std::min<std::size_t>(
        std::max<std::ptrdiff_t>(it - cdf_grid_.begin(), 1), kGridIntervals);
    const std::size_t lo = hi - 1;
    const double span = cdf_grid_[hi] - cdf_grid_[lo];
    const double h = 1.0 / static_cast<double>(kGridIntervals);
    const double left = static_cast<double>(lo) * h;
    if (span <= 0.0) return left;  // zero-density plateau, probability-zero event
    double result = left + h * (v - cdf_grid_[lo]) / span;
    // A grid cell can straddle the edge of the kernel support (triangular
    // kernels with width < 0.5); linear interpolation may then land in the
    // zero-density part of the cell. Bisect back to the supported side.
    if (pdf(result) == 0.0 && result > 0.0 && result < 1.0) {
        double inside = pdf(left) > 0.0 ? left : std::min(left + h, 1.0);
        double outside = result;
        if (pdf(inside) > 0.0) {
            for (int i = 0; i < 64; ++i) {
                const double mid = 0.5 * (inside + outside);
                (pdf(mid) > 0.0 ? inside : outside) = mid;
            }
            result = inside;
        }
    }
    return result;
}

LambdaPair LambdaSampler::sample_pair(Rng& rng) const {
    LambdaPair pair;
    pair.lambda_a = sample(rng);
    pair.lambda_b = compute_lambda_b(spec_, pair.lambda_a);
    return pair;
}

double sample_lambda_a(const KernelSpec& spec, Rng& rng) {
    return LambdaSampler(spec).sample(rng);
}

}  // namespace mixconf
