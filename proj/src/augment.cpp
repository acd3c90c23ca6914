#include "mixconf/augment.hpp"

#include <stdexcept>

namespace mixconf {

namespace {

void check_pair(const Sample& s0, const Sample& s1) {
    if (s0.x.size() != s1.x.size())
        throw std::invalid_argument("mix: feature dimension mismatch");
    if (s0.p.size() != s1.p.size())
        throw std::invalid_argument("mix: class count mismatch");
}

double sample_beta_symmetric(double alpha, Rng& rng) {
    std::gamma_distribution<double> gamma(alpha, 1.0);
    const double a = gamma(rng);
    const double b = gamma(rng);
    const double s = a + b;
    if (s <= 0.0) return 0.5;  // both draws underflowed; symmetric fallback
    return a / s;
}

}  // namespace

MixedSample interpolate(const Sample& s0, const Sample& s1, const LambdaPair& lambda) {
    check_pair(s0, s1);
    MixedSample out;
    out.lambda = lambda;
    out.x_tilde.resize(s0.x.size());
    out.p_tilde.resize(s0.p.size());
    const double la = lambda.lambda_a, lb = lambda.lambda_b;
    for (std::size_t i = 0; i < s0.x.size(); ++i)
        out.x_tilde[i] = la * s0.x[i] + (1.0 - la) * s1.x[i];
    for (std::size_t j = 0; j < s0.p.size(); ++j)
        out.p_tilde[j] = lb * s0.p[j] + (1.0 - lb) * s1.p[j];
    return out;
}

MixedSample mixconf_pair(const Sample& s0, const Sample& s1, const LambdaSampler& sampler,
                         Rng& rng, std::optional<double> forced_lambda_a) {
    LambdaPair lambda;
    lambda.lambda_a = forced_lambda_a ? *forced_lambda_a : sampler.sample(rng);
    lambda.lambda_b = compute_lambda_b(sampler.spec(), lambda.lambda_a);
    return interpolate(s0, s1, lambda);
}

MixedSample mixconf_pair(const Sample& s0, const Sample& s1, const KernelSpec& spec,
                         Rng& rng, std::optional<double> forced_lambda_a) {
    return mixconf_pair(s0, s1, LambdaSampler(spec), rng, forced_lambda_a);
}

MixedSample mixup_pair(const Sample& s0, const Sample& s1, double alpha, Rng& rng,
                       std::optional<double> forced_lambda_a) {
    if (!(alpha > 0.0))
        throw std::invalid_argument("mixup_pair: alpha must be positive");
    LambdaPair lambda;
    lambda.lambda_a = forced_lambda_a ? *forced_lambda_a : sample_beta_symmetric(alpha, rng);
    lambda.lambda_b = lambda.lambda_a;
    return interpolate(s0, s1, lambda);
}

Augmentor::Augmentor(const AugmentorConfig& config) : config_(config) {
    if (config_.kind == AugmentorConfig::Kind::MixConf)
        sampler_.emplace(config_.kernel);
    else if (!(config_.alpha > 0.0))
        throw std::invalid_argument("Augmentor: mixup alpha must be positive");
}

MixedSample Augmentor::mix(const Sample& s0, const Sample& s1, Rng& rng,
                           std::optional<double> forced_lambda_a) const {
    if (config_.kind == AugmentorConfig::Kind::MixConf)
        return mixconf_pair(s0, s1, *sampler_, rng, forced_lambda_a);
    return mixup_pair(s0, s1, config_.alpha, rng, forced_lambda_a);
}

std::vector<MixedSample> mix_batches(const std::vector<Sample>& originals,
                                     const std::vector<Sample>& partners,
                                     const Augmentor& augmentor, Rng& rng) {
    if (originals.size() != partners.size())
        throw std::invalid_argument("mix_batches: batch length mismatch");
    // Pre-split one child stream per element; the mixing below could then run
    // in any order without changing results.
    std::vector<std::uint64_t> seeds(originals.size());
    for (auto& s : seeds) s = rng();
    std::vector<MixedSample> out(originals.size());
    for (std::size_t i = 0; i < originals.size(); ++i) {
        Rng child(seeds[i]);
        out[i] = augmentor.mix(originals[i], partners[i], child);
        out[i].source_indices = {i, i};
    }
    return out;
}

}  // namespace mixconf
