#include "mixconf/ssl.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "mixconf/calibration.hpp"

namespace mixconf {

void SslConfig::validate() const {
    if (batch_labeled == 0) throw std::invalid_argument("SslConfig: batch_labeled must be positive");
    if (!(c_thr > 0.0 && c_thr <= 1.0))
        throw std::invalid_argument("SslConfig: c_thr must be in (0,1]");
    if (!(lambda_u >= 0.0)) throw std::invalid_argument("SslConfig: lambda_u must be non-negative");
    if (k_augment == 0) throw std::invalid_argument("SslConfig: k_augment must be positive");
    if (!(learn_rate > 0.0)) throw std::invalid_argument("SslConfig: learn_rate must be positive");
    if (jitter_sd < 0.0) throw std::invalid_argument("SslConfig: jitter_sd must be non-negative");
    if (augmentor.kind == AugmentorConfig::Kind::MixConf) augmentor.kernel.validate();
}

PseudoPrediction generate_pseudo_labels(const NetState& state, const Matrix& x_unlabeled,
                                        std::size_t k, const InputAugment& augment, Rng& rng) {
    if (k == 0) throw std::invalid_argument("generate_pseudo_labels: k must be positive");
    PseudoPrediction out;
    out.augmented_views.reserve(k);
    for (std::size_t i = 0; i < k; ++i) out.augmented_views.push_back(augment(x_unlabeled, rng));

    const std::size_t n = x_unlabeled.rows();
    const std::size_t n_classes = state.config.num_classes();
    out.averaged_probs = Matrix(n, n_classes);
    for (const Matrix& view : out.augmented_views) {
        const Matrix probs = forward(state, view);
        for (std::size_t i = 0; i < probs.data().size(); ++i)
            out.averaged_probs.data()[i] += probs.data()[i];
    }
    const double inv_k = 1.0 / static_cast<double>(k);
    for (double& v : out.averaged_probs.data()) v *= inv_k;

    auto conf = confidence(out.averaged_probs);
    out.y_hat = std::move(conf.y_hat);
    out.c = std::move(conf.c);
    return out;
}

PseudoBatch threshold_filter(const Matrix& x_unlabeled, const PseudoPrediction& prediction,
                             double c_thr) {
    if (!(c_thr > 0.0 && c_thr <= 1.0))
        throw std::invalid_argument("threshold_filter: c_thr must be in (0,1]");
    PseudoBatch batch;
    for (std::size_t i = 0; i < prediction.c.size(); ++i) {
        if (prediction.c[i] >= c_thr) {
            batch.source_rows.push_back(i);
            batch.y_hat.push_back(prediction.y_hat[i]);
            batch.c.push_back(prediction.c[i]);
        }
    }
    batch.retained_count = batch.source_rows.size();
    batch.x = x_unlabeled.take_rows(batch.source_rows);
    if (batch.retained_count > 0)
        batch.c_ave = std::accumulate(batch.c.begin(), batch.c.end(), 0.0) /
                      static_cast<double>(batch.retained_count);
    return batch;
}

SelectionPlan selection_counts(std::size_t batch_labeled, std::size_t retained_count,
                               double c_ave) {
    SelectionPlan plan;
    if (retained_count == 0) {
        plan.n_labeled = batch_labeled;
        plan.n_unlabeled = 0;
        return plan;
    }
    const double b_l = static_cast<double>(batch_labeled);
    const double b_u = static_cast<double>(retained_count);
    const double fraction = (b_l + c_ave * b_u) / (b_l + b_u);
    plan.n_labeled = static_cast<std::size_t>(std::floor(fraction * b_l));
    const auto raw_u = static_cast<std::size_t>(std::floor(fraction * (c_ave * b_u)));
    plan.n_unlabeled = std::min({batch_labeled, retained_count, raw_u});
    return plan;
}

std::vector<std::size_t> select_small_loss(std::span<const double> losses, std::size_t n) {
    if (n > losses.size())
        throw std::invalid_argument("select_small_loss: n exceeds pool size");
    std::vector<std::size_t> order(losses.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return losses[a] < losses[b]; });
    order.resize(n);
    return order;
}

namespace {

Sample make_sample(std::span<const double> x, std::span<const double> p) {
    return Sample{{x.begin(), x.end()}, {p.begin(), p.end()}};
}

std::vector<double> one_hot_row(std::size_t cls, std::size_t n_classes) {
    std::vector<double> p(n_classes, 0.0);
    p[cls] = 1.0;
    return p;
}

void run_invariant_checks(const SslConfig& config, const PseudoBatch& pseudo,
                          const SelectionPlan& plan, const StepTrace& trace,
                          double backward_loss, const StepReport& report) {
    for (double c : pseudo.c)
        if (c < config.c_thr)
            throw InvariantViolation("train_step: retained confidence below threshold");

    if (config.small_loss_selection) {
        if (plan.n_labeled > config.batch_labeled ||
            plan.n_unlabeled > std::min(config.batch_labeled, pseudo.retained_count))
            throw InvariantViolation("train_step: selection counts out of range");
        const SelectionPlan recomputed =
            selection_counts(config.batch_labeled, pseudo.retained_count, pseudo.c_ave);
        if (recomputed.n_labeled != plan.n_labeled || recomputed.n_unlabeled != plan.n_unlabeled)
            throw InvariantViolation("train_step: selection counts not reproducible");

        auto check_order = [](std::span<const double> losses, std::span<const std::size_t> sel) {
            if (sel.empty() || sel.size() == losses.size()) return;
            std::vector<bool> taken(losses.size(), false);
            double max_sel = -std::numeric_limits<double>::infinity();
            for (std::size_t i : sel) {
                taken[i] = true;
                max_sel = std::max(max_sel, losses[i]);
            }
            for (std::size_t i = 0; i < losses.size(); ++i)
                if (!taken[i] && losses[i] < max_sel)
                    throw InvariantViolation("train_step: selected loss exceeds an unselected one");
        };
        check_order(trace.labeled_losses, trace.selected_labeled);
        for (std::size_t k = 0; k < trace.unlabeled_losses.size(); ++k)
            check_order(trace.unlabeled_losses[k], trace.selected_unlabeled[k]);
    }

    const double recombined = report.loss_labeled + config.lambda_u * report.loss_unlabeled;
    if (std::abs(backward_loss - recombined) > 1e-12 * std::max(1.0, std::abs(recombined)))
        throw InvariantViolation("train_step: loss decomposition mismatch");
}

}  // namespace

StepReport train_step(NetState& state, const Matrix& x_labeled, const Matrix& targets_labeled,
                      const Matrix& x_unlabeled, const SslConfig& config, Rng& rng,
                      StepTrace* trace) {
    config.validate();
    const std::size_t b_l = config.batch_labeled;
    const std::size_t k = config.k_augment;
    const std::size_t n_classes = state.config.num_classes();
    if (x_labeled.rows() != b_l || targets_labeled.rows() != b_l)
        throw std::invalid_argument("train_step: labeled batch size mismatch");

    if (config.lambda_u > 0.0 && x_unlabeled.rows() != config.unlabeled_batch_size())
        throw std::invalid_argument("train_step: unlabeled batch size mismatch");

    StepTrace local_trace;
    StepTrace& tr = trace ? *trace : local_trace;

    // (a) pseudo labels from the K-averaged prediction, (b) thresholding.
    // With a zero unlabeled weight the pseudo-labeled pool is skipped
    // entirely and the step reduces to supervised training on the mixed
    // labeled batch.
    PseudoPrediction prediction;
    if (config.lambda_u > 0.0) {
        prediction =
            generate_pseudo_labels(state, x_unlabeled, k, make_jitter(config.jitter_sd), rng);
        tr.pseudo = threshold_filter(x_unlabeled, prediction, config.c_thr);
    } else {
        tr.pseudo = PseudoBatch{};
        tr.pseudo.x = Matrix(0, x_unlabeled.cols());
    }
    const PseudoBatch& pseudo = tr.pseudo;
    const std::size_t retained = pseudo.retained_count;

    // (c) mixing pool: labeled data plus every augmented copy of the retained
    // pseudo-labeled data, one entry per (copy, sample).
    std::vector<Sample> pool;
    pool.reserve(b_l + k * retained);
    for (std::size_t i = 0; i < b_l; ++i)
        pool.push_back(make_sample(x_labeled.row(i), targets_labeled.row(i)));
    const std::size_t k_used = retained > 0 ? k : 0;
    for (std::size_t ki = 0; ki < k_used; ++ki)
        for (std::size_t j = 0; j < retained; ++j)
            pool.push_back(Sample{{}, one_hot_row(pseudo.y_hat[j], n_classes)});
    // Fill pool features for the pseudo part from the augmented views.
    {
        std::size_t p = b_l;
        for (std::size_t ki = 0; ki < k_used; ++ki)
            for (std::size_t j = 0; j < retained; ++j, ++p) {
                auto src = prediction.augmented_views[ki].row(pseudo.source_rows[j]);
                pool[p].x.assign(src.begin(), src.end());
            }
    }

    // (d) shuffle once and pair elementwise: the first B_L partners go to the
    // labeled originals, the rest to the K pseudo-labeled minibatches.
    std::vector<std::size_t> perm(pool.size());
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);

    std::vector<Sample> originals(pool.size());
    std::vector<Sample> partners(pool.size());
    for (std::size_t i = 0; i < pool.size(); ++i) {
        originals[i] = pool[i];  // pool is ordered: labeled block, then K blocks
        partners[i] = pool[perm[i]];
    }
    const Augmentor augmentor(config.augmentor);
    const std::vector<MixedSample> mixed = mix_batches(originals, partners, augmentor, rng);

    // (e) per-sample cross entropy on every mixed sample under the live net.
    Matrix mixed_x(mixed.size(), x_labeled.cols());
    Matrix mixed_t(mixed.size(), n_classes);
    for (std::size_t i = 0; i < mixed.size(); ++i) {
        for (std::size_t c = 0; c < mixed_x.cols(); ++c) mixed_x(i, c) = mixed[i].x_tilde[c];
        for (std::size_t c = 0; c < n_classes; ++c) mixed_t(i, c) = mixed[i].p_tilde[c];
    }
    const std::vector<double> losses = cross_entropy(forward(state, mixed_x), mixed_t);
    tr.labeled_losses.assign(losses.begin(), losses.begin() + b_l);
    tr.unlabeled_losses.assign(k_used, {});
    for (std::size_t ki = 0; ki < k_used; ++ki)
        tr.unlabeled_losses[ki].assign(losses.begin() + b_l + ki * retained,
                                       losses.begin() + b_l + (ki + 1) * retained);

    // (f) small-loss selection, labeled and unlabeled pools sorted separately.
    SelectionPlan plan;
    if (config.small_loss_selection) {
        plan = selection_counts(b_l, retained, pseudo.c_ave);
        tr.selected_labeled = select_small_loss(tr.labeled_losses, plan.n_labeled);
        for (std::size_t ki = 0; ki < k_used; ++ki)
            tr.selected_unlabeled.push_back(select_small_loss(tr.unlabeled_losses[ki], plan.n_unlabeled));
    } else {
        plan.n_labeled = b_l;
        plan.n_unlabeled = retained;
        tr.selected_labeled.resize(b_l);
        std::iota(tr.selected_labeled.begin(), tr.selected_labeled.end(), 0);
        for (std::size_t ki = 0; ki < k_used; ++ki) {
            std::vector<std::size_t> all(retained);
            std::iota(all.begin(), all.end(), 0);
            tr.selected_unlabeled.push_back(std::move(all));
        }
    }

    // (g) loss terms; (h) one optimizer step with weights that encode the
    // selection and the 1/B_L, lambda_U/(B_L*K) normalizations.
    const double w_labeled = 1.0 / static_cast<double>(b_l);
    const double w_unlabeled_base = 1.0 / (static_cast<double>(b_l) * static_cast<double>(k));
    std::vector<double> weights(mixed.size(), 0.0);
    double loss_labeled = 0.0;
    for (std::size_t i : tr.selected_labeled) {
        weights[i] = w_labeled;
        loss_labeled += w_labeled * tr.labeled_losses[i];
    }
    double loss_unlabeled = 0.0;
    for (std::size_t ki = 0; ki < k_used; ++ki)
        for (std::size_t j : tr.selected_unlabeled[ki]) {
            weights[b_l + ki * retained + j] = config.lambda_u * w_unlabeled_base;
            loss_unlabeled += w_unlabeled_base * tr.unlabeled_losses[ki][j];
        }

    const double backward_loss =
        backward_and_step(state, mixed_x, mixed_t, weights, config.learn_rate);

    StepReport report;
    report.c_ave = pseudo.c_ave;
    report.retained_count = retained;
    report.n_labeled = plan.n_labeled;
    report.n_unlabeled = plan.n_unlabeled;
    report.loss_labeled = loss_labeled;
    report.loss_unlabeled = loss_unlabeled;
    report.loss_total = loss_labeled + config.lambda_u * loss_unlabeled;

    tr.step_weights = std::move(weights);
    if (trace) {
        trace->step_x = std::move(mixed_x);
        trace->step_targets = std::move(mixed_t);
    }
    run_invariant_checks(config, pseudo, plan, tr, backward_loss, report);
    return report;
}

namespace {

// Cycles a dataset in randomized order, reshuffling whenever fewer than a
// full batch remains (partial tails are dropped).
class BatchCycler {
public:
    BatchCycler(std::size_t n, std::size_t batch, Rng& rng, const char* what)
        : n_(n), batch_(batch), order_(n), cursor_(n), rng_(rng) {
        if (batch_ == 0 || batch_ > n_)
            throw std::invalid_argument(std::string("train_loop: ") + what +
                                        " dataset smaller than its batch size");
        std::iota(order_.begin(), order_.end(), 0);
    }

    std::vector<std::size_t> next() {
        if (cursor_ + batch_ > n_) {
            std::shuffle(order_.begin(), order_.end(), rng_);
            cursor_ = 0;
        }
        std::vector<std::size_t> idx(order_.begin() + cursor_, order_.begin() + cursor_ + batch_);
        cursor_ += batch_;
        return idx;
    }

private:
    std::size_t n_, batch_;
    std::vector<std::size_t> order_;
    std::size_t cursor_;
    Rng& rng_;
};

}  // namespace

std::vector<StepReport> train_loop(NetState& state, const Dataset& labeled,
                                   const Matrix& x_unlabeled, const SslConfig& config, Rng& rng,
                                   const Dataset* eval_set) {
    config.validate();
    if (labeled.size() == 0 || x_unlabeled.rows() == 0)
        throw std::invalid_argument("train_loop: datasets must be non-empty");
    const std::size_t n_classes = state.config.num_classes();
    const Matrix labeled_targets = one_hot(labeled.y, n_classes);

    BatchCycler labeled_cycler(labeled.size(), config.batch_labeled, rng, "labeled");
    BatchCycler unlabeled_cycler(x_unlabeled.rows(), config.unlabeled_batch_size(), rng,
                                 "unlabeled");

    std::vector<StepReport> log;
    log.reserve(config.iterations);
    for (std::size_t iter = 0; iter < config.iterations; ++iter) {
        const auto li = labeled_cycler.next();
        const auto ui = unlabeled_cycler.next();
        StepReport report = train_step(state, labeled.x.take_rows(li),
                                       labeled_targets.take_rows(li), x_unlabeled.take_rows(ui),
                                       config, rng);
        report.iteration = iter;
        if (eval_set && config.eval_every > 0 &&
            ((iter + 1) % config.eval_every == 0 || iter + 1 == config.iterations)) {
            const Matrix probs = ema_forward(state, eval_set->x);
            report.eval_error = error_rate(probs, eval_set->y);
            const auto conf = confidence(probs);
            report.eval_ece = ece(conf.c, conf.y_hat, eval_set->y).ece;
        }
        log.push_back(report);
    }
    return log;
}

void write_step_log_csv(const std::vector<StepReport>& log, const std::string& path,
                        const std::vector<std::pair<std::string, std::string>>& metadata) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("write_step_log_csv: cannot open " + path);
    os.precision(17);
    for (const auto& [key, value] : metadata) os << "# " << key << "=" << value << "\n";
    os << "iteration,c_ave,retained_count,n_L,n_U,loss_labeled,loss_unlabeled,loss_total,"
          "eval_error,eval_ece\n";
    for (const auto& s : log) {
        os << s.iteration << ',' << s.c_ave << ',' << s.retained_count << ',' << s.n_labeled
           << ',' << s.n_unlabeled << ',' << s.loss_labeled << ',' << s.loss_unlabeled << ','
           << s.loss_total << ',';
        if (!std::isnan(s.eval_error)) os << s.eval_error;
        os << ',';
        if (!std::isnan(s.eval_ece)) os << s.eval_ece;
        os << '\n';
    }
}

}  // namespace mixconf
