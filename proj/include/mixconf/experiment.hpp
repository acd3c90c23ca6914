#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "mixconf/data.hpp"
#include "mixconf/net.hpp"
#include "mixconf/ssl.hpp"

namespace mixconf {

enum class ExperimentKind { Calibrate, SslTrain, ThresholdSweep, LambdaDiagnostics };

// One augmentation arm of an experiment. `param_grid`, when non-empty, is a
// validation-accuracy search over sigma (MixConf) or alpha (Mixup).
struct AugmentorChoice {
    enum class Kind { None, Mixup, MixConfG, MixConfT } kind = Kind::MixConfG;
    double alpha = 1.0;
    double sigma = 0.4;
    std::vector<double> param_grid;

    std::string name() const;
    // Throws for Kind::None: a mixing rule is required to build an augmentor.
    AugmentorConfig to_augmentor(double param) const;
    double default_param() const { return kind == Kind::Mixup ? alpha : sigma; }
};

struct ExperimentConfig {
    ExperimentKind kind = ExperimentKind::SslTrain;
    DatasetSpec dataset;
    SplitSpec split;
    SslConfig ssl;
    std::vector<AugmentorChoice> augmentors;  // calibrate compares all; other kinds use front()
    std::size_t repeats = 1;
    std::uint64_t seed = 1;
    std::string out_path;
    std::string step_log_prefix;  // ssl kind: per-repeat step logs when non-empty

    // network
    std::vector<std::size_t> hidden{32, 32};
    Activation activation = Activation::ReLU;
    double ema_decay = 0.999;

    // calibrate
    std::vector<double> proportions{0.05, 0.2, 1.0};
    std::size_t supervised_iterations = 1500;
    std::size_t supervised_batch = 32;

    // sweep-threshold
    std::vector<double> thresholds{0.5, 0.6, 0.7, 0.8, 0.9, 0.95};

    // lambda-diag
    std::size_t diag_draws = 1000000;
    std::size_t diag_bins = 50;

    void validate() const;
    // Flat key=value echo of every resolved setting, embedded in reports.
    std::map<std::string, std::string> echo() const;
};

ExperimentConfig default_config(ExperimentKind kind);

// Declarative "key = value" file ('#' starts a comment). Unknown keys are
// rejected so configs stay diffable and typo-safe.
ExperimentConfig parse_config_file(const std::string& path, ExperimentKind kind);
void apply_override(ExperimentConfig& config, const std::string& key, const std::string& value);

// Supervised trainer shared by the calibration study: plain cross-entropy
// minibatch training, optionally through a mixing augmentor.
NetState train_supervised(const Matrix& x, const std::vector<std::size_t>& y,
                          std::size_t n_classes, const AugmentorChoice& choice, double param,
                          const ExperimentConfig& config, std::uint64_t net_seed, Rng& rng);

// Each runner writes its report (JSON for calibrate/ssl, CSV for the sweep
// and diagnostics) and returns the output path.
std::string run_calibration(const ExperimentConfig& config);
std::string run_ssl(const ExperimentConfig& config);
std::string run_threshold_sweep(const ExperimentConfig& config);
std::string run_lambda_diagnostics(const ExperimentConfig& config);
std::string run_experiment(const ExperimentConfig& config);

}  // namespace mixconf
