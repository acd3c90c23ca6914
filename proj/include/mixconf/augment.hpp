#pragma once

#include <cstddef>
#include <optional>
#include <utility>
#include <vector>

#include "mixconf/kernel.hpp"
#include "mixconf/rng.hpp"

namespace mixconf {

// One training sample: feature vector x and a label distribution p over C
// classes (one-hot for hard labels, soft after mixing).
struct Sample {
    std::vector<double> x;
    std::vector<double> p;
};

// A mixed sample together with the ratios that produced it and the indices of
// its two sources within their batch (original, partner).
struct MixedSample {
    std::vector<double> x_tilde;
    std::vector<double> p_tilde;
    LambdaPair lambda;
    std::pair<std::size_t, std::size_t> source_indices{0, 0};
};

// Interpolates x with lambda_a and p with lambda_b:
//   x~ = la * x0 + (1 - la) * x1,  p~ = lb * p0 + (1 - lb) * p1.
MixedSample interpolate(const Sample& s0, const Sample& s1, const LambdaPair& lambda);

// MixConf: lambda_a drawn from the sampler's truncated mixture, lambda_b the
// kernel posterior ratio. `forced_lambda_a` bypasses the draw (test hook);
// lambda_b is still derived from it.
MixedSample mixconf_pair(const Sample& s0, const Sample& s1, const LambdaSampler& sampler,
                         Rng& rng, std::optional<double> forced_lambda_a = std::nullopt);

// Convenience overload that builds the sampler tables on the fly.
MixedSample mixconf_pair(const Sample& s0, const Sample& s1, const KernelSpec& spec,
                         Rng& rng, std::optional<double> forced_lambda_a = std::nullopt);

// Mixup baseline: lambda_a ~ Beta(alpha, alpha), lambda_b = lambda_a. No
// max(lambda, 1-lambda) folding.
MixedSample mixup_pair(const Sample& s0, const Sample& s1, double alpha, Rng& rng,
                       std::optional<double> forced_lambda_a = std::nullopt);

// Which mixing rule a batch-level caller wants.
struct AugmentorConfig {
    enum class Kind { MixConf, Mixup } kind = Kind::MixConf;
    KernelSpec kernel;   // MixConf
    double alpha = 1.0;  // Mixup
};

// Precomputes whatever the chosen rule needs (sampler tables for MixConf) and
// mixes sample pairs. Immutable after construction.
class Augmentor {
public:
    explicit Augmentor(const AugmentorConfig& config);

    MixedSample mix(const Sample& s0, const Sample& s1, Rng& rng,
                    std::optional<double> forced_lambda_a = std::nullopt) const;

    const AugmentorConfig& config() const { return config_; }

private:
    AugmentorConfig config_;
    std::optional<LambdaSampler> sampler_;
};

// Element-wise mixing of two equal-length batches. Each element consumes its
// own child stream split off `rng` up front, so results are seed-deterministic
// under any evaluation order. Output order follows `originals`.
std::vector<MixedSample> mix_batches(const std::vector<Sample>& originals,
                                     const std::vector<Sample>& partners,
                                     const Augmentor& augmentor, Rng& rng);

}  // namespace mixconf
