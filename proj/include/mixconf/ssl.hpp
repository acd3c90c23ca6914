#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mixconf/augment.hpp"
#include "mixconf/data.hpp"
#include "mixconf/matrix.hpp"
#include "mixconf/net.hpp"
#include "mixconf/rng.hpp"

namespace mixconf {

// Thrown when a per-step self-check fails (threshold, selection order,
// selection counts, or loss decomposition). These checks run on every
// training step.
struct InvariantViolation : std::logic_error {
    using std::logic_error::logic_error;
};

struct SslConfig {
    std::size_t batch_labeled = 10;  // B_L; the unlabeled batch size is derived
    double c_thr = 0.8;              // confidence threshold, (0, 1]
    double lambda_u = 2.0;           // unlabeled loss weight
    std::size_t k_augment = 4;       // augmentations per unlabeled sample
    std::size_t iterations = 5000;
    AugmentorConfig augmentor;       // mixing rule (MixConf kernel, or Mixup baseline)
    double learn_rate = 2e-3;
    double jitter_sd = 0.05;         // input augmentation for pseudo-labeling
    bool small_loss_selection = true;
    std::size_t eval_every = 0;      // 0 = no periodic evaluation

    // B_U = round(B_L / c_thr), fixed for the whole run.
    std::size_t unlabeled_batch_size() const {
        return static_cast<std::size_t>(std::llround(static_cast<double>(batch_labeled) / c_thr));
    }
    void validate() const;
};

// Input-space augmentation hook used for pseudo-label averaging.
using InputAugment = std::function<Matrix(const Matrix&, Rng&)>;

inline InputAugment make_jitter(double sd) {
    return [sd](const Matrix& x, Rng& rng) { return jitter(x, sd, rng); };
}

// Model outputs averaged over k augmented views of the unlabeled batch, plus
// the views themselves (they are reused as the features to be mixed).
struct PseudoPrediction {
    Matrix averaged_probs;               // n x C
    std::vector<std::size_t> y_hat;      // argmax of the averaged prediction
    std::vector<double> c;               // max of the averaged prediction
    std::vector<Matrix> augmented_views; // k matrices, n x d
};

PseudoPrediction generate_pseudo_labels(const NetState& state, const Matrix& x_unlabeled,
                                        std::size_t k, const InputAugment& augment, Rng& rng);

// The unlabeled samples surviving the confidence threshold.
struct PseudoBatch {
    Matrix x;                             // retained rows of the unlabeled batch
    std::vector<std::size_t> y_hat;
    std::vector<double> c;                // all >= the threshold
    double c_ave = 0.0;                   // mean of retained confidences (0 when empty)
    std::size_t retained_count = 0;
    std::vector<std::size_t> source_rows; // positions within the incoming batch
};

PseudoBatch threshold_filter(const Matrix& x_unlabeled, const PseudoPrediction& prediction,
                             double c_thr);

// How many mixed samples to keep per pool:
//   n_L = floor(f * B_L),  n_U = min(B_L, retained, floor(f * c_ave * retained)),
// with f = (B_L + c_ave * retained) / (B_L + retained). The retained count
// stands in for B_U since discarded samples never reach the mixing stage.
struct SelectionPlan {
    std::size_t n_labeled = 0;
    std::size_t n_unlabeled = 0;
};

SelectionPlan selection_counts(std::size_t batch_labeled, std::size_t retained_count,
                               double c_ave);

// Indices of the n smallest losses in ascending loss order; ties keep the
// lower index. Every selected loss is <= every unselected loss.
std::vector<std::size_t> select_small_loss(std::span<const double> losses, std::size_t n);

struct StepReport {
    std::size_t iteration = 0;
    double c_ave = 0.0;
    std::size_t retained_count = 0;
    std::size_t n_labeled = 0;
    std::size_t n_unlabeled = 0;
    double loss_labeled = 0.0;    // (1/B_L) * sum of selected labeled-mixed losses
    double loss_unlabeled = 0.0;  // (1/(B_L*K)) * sum over the K unlabeled pools
    double loss_total = 0.0;      // loss_labeled + lambda_u * loss_unlabeled
    double eval_error = std::numeric_limits<double>::quiet_NaN();
    double eval_ece = std::numeric_limits<double>::quiet_NaN();
};

// Test/diagnostic capture of the batch a step actually trained on.
struct StepTrace {
    Matrix step_x;
    Matrix step_targets;
    std::vector<double> step_weights;
    std::vector<double> labeled_losses;
    std::vector<std::vector<double>> unlabeled_losses;
    std::vector<std::size_t> selected_labeled;
    std::vector<std::vector<std::size_t>> selected_unlabeled;
    PseudoBatch pseudo;
};

// One selective-training step: pseudo-label with K-augmentation averaging,
// threshold, mix labeled and retained pseudo-labeled data against a shuffled
// pool, keep the small-loss subsets, and take one optimizer step on the
// weighted combined batch.
StepReport train_step(NetState& state, const Matrix& x_labeled, const Matrix& targets_labeled,
                      const Matrix& x_unlabeled, const SslConfig& config, Rng& rng,
                      StepTrace* trace = nullptr);

// Cycles freshly shuffled minibatches (partial tail batches are dropped) for
// config.iterations steps. Periodic evaluation, when configured, runs the EMA
// parameters against eval_set.
std::vector<StepReport> train_loop(NetState& state, const Dataset& labeled,
                                   const Matrix& x_unlabeled, const SslConfig& config, Rng& rng,
                                   const Dataset* eval_set = nullptr);

// Step log as CSV, preceded by "# key=value" metadata lines.
void write_step_log_csv(const std::vector<StepReport>& log, const std::string& path,
                        const std::vector<std::pair<std::string, std::string>>& metadata);

}  // namespace mixconf
