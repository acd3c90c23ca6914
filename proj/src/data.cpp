#include "mixconf/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace mixconf {

void DatasetSpec::validate() const {
    if (n_classes < 2) throw std::invalid_argument("DatasetSpec: need at least 2 classes");
    if (generator == Generator::TwoMoons && n_classes != 2)
        throw std::invalid_argument("DatasetSpec: TwoMoons is a 2-class generator");
    if (n_samples < n_classes)
        throw std::invalid_argument("DatasetSpec: need at least one sample per class");
    if (noise_sd < 0.0 || !std::isfinite(noise_sd))
        throw std::invalid_argument("DatasetSpec: noise_sd must be non-negative");
}

namespace {

// Class counts balanced within +-1: remainder goes to the lowest classes.
std::vector<std::size_t> balanced_counts(std::size_t n, std::size_t c) {
    std::vector<std::size_t> counts(c, n / c);
    for (std::size_t j = 0; j < n % c; ++j) counts[j] += 1;
    return counts;
}

}  // namespace

Dataset generate(const DatasetSpec& spec) {
    spec.validate();
    Rng rng(spec.seed);
    std::normal_distribution<double> noise(0.0, 1.0);
    const auto counts = balanced_counts(spec.n_samples, spec.n_classes);

    Dataset ds;
    ds.x = Matrix(spec.n_samples, 2);
    ds.y.resize(spec.n_samples);
    std::size_t row = 0;
    if (spec.generator == Generator::TwoMoons) {
        for (std::size_t cls = 0; cls < 2; ++cls) {
            const std::size_t m = counts[cls];
            for (std::size_t i = 0; i < m; ++i, ++row) {
                // Evenly spaced angles keep the zero-noise geometry exact.
                const double t = std::numbers::pi * (m > 1 ? static_cast<double>(i) / (m - 1) : 0.5);
                double px, py;
                if (cls == 0) {
                    px = std::cos(t);
                    py = std::sin(t);
                } else {
                    px = 1.0 - std::cos(t);
                    py = 0.5 - std::sin(t);
                }
                ds.x(row, 0) = px + spec.noise_sd * noise(rng);
                ds.x(row, 1) = py + spec.noise_sd * noise(rng);
                ds.y[row] = cls;
            }
        }
    } else {
        // Means equally spaced on the unit circle; noise_sd sets the overlap.
        for (std::size_t cls = 0; cls < spec.n_classes; ++cls) {
            const double ang = 2.0 * std::numbers::pi * static_cast<double>(cls) /
                               static_cast<double>(spec.n_classes);
            const double mx = std::cos(ang), my = std::sin(ang);
            for (std::size_t i = 0; i < counts[cls]; ++i, ++row) {
                ds.x(row, 0) = mx + spec.noise_sd * noise(rng);
                ds.x(row, 1) = my + spec.noise_sd * noise(rng);
                ds.y[row] = cls;
            }
        }
    }
    return ds;
}

SplitResult split(const Dataset& dataset, const SplitSpec& spec, std::uint64_t seed) {
    const std::size_t n = dataset.size();
    if (spec.n_labeled + spec.n_validation + spec.n_test > n)
        throw std::invalid_argument("split: requested splits exceed dataset size");

    Rng rng(seed);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);

    auto take = [&](std::size_t offset, std::size_t count) {
        Dataset out;
        std::vector<std::size_t> idx(order.begin() + offset, order.begin() + offset + count);
        out.x = dataset.x.take_rows(idx);
        out.y.reserve(count);
        for (std::size_t i : idx) out.y.push_back(dataset.y[i]);
        return out;
    };

    SplitResult result;
    result.test = take(0, spec.n_test);
    result.validation = take(spec.n_test, spec.n_validation);

    // Training pool = the rest; pick the labeled subset per-class so priors
    // track the full dataset (largest-remainder apportionment, +-1 each).
    std::vector<std::size_t> pool(order.begin() + spec.n_test + spec.n_validation, order.end());
    const std::size_t n_classes = 1 + *std::max_element(dataset.y.begin(), dataset.y.end());
    std::vector<std::size_t> class_total(n_classes, 0);
    for (std::size_t y : dataset.y) class_total[y] += 1;

    std::vector<std::size_t> available(n_classes, 0);
    for (std::size_t i : pool) available[dataset.y[i]] += 1;

    std::vector<std::size_t> quota(n_classes, 0);
    std::vector<double> exact(n_classes, 0.0);
    std::vector<std::pair<double, std::size_t>> remainders;
    std::size_t assigned = 0;
    for (std::size_t c = 0; c < n_classes; ++c) {
        exact[c] = static_cast<double>(spec.n_labeled) * static_cast<double>(class_total[c]) /
                   static_cast<double>(n);
        quota[c] = std::min(static_cast<std::size_t>(std::floor(exact[c])), available[c]);
        assigned += quota[c];
        remainders.push_back({exact[c] - std::floor(exact[c]), c});
    }
    std::stable_sort(remainders.begin(), remainders.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });
    for (std::size_t i = 0; assigned < spec.n_labeled && i < remainders.size(); ++i) {
        const std::size_t c = remainders[i].second;
        if (quota[c] < available[c]) {
            quota[c] += 1;
            ++assigned;
        }
    }
    // When a class cannot fill its proportional share (small pools), spill
    // the shortfall to whichever classes still have capacity, most-underfull
    // first.
    while (assigned < spec.n_labeled) {
        std::size_t best = n_classes;
        double best_gap = -std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < n_classes; ++c) {
            if (quota[c] >= available[c]) continue;
            const double gap = exact[c] - static_cast<double>(quota[c]);
            if (gap > best_gap) {
                best_gap = gap;
                best = c;
            }
        }
        if (best == n_classes)
            throw std::runtime_error("split: training pool exhausted before the labeled quota");
        quota[best] += 1;
        ++assigned;
    }

    std::vector<std::size_t> labeled_idx, unlabeled_idx;
    for (std::size_t i : pool) {
        const std::size_t c = dataset.y[i];
        if (quota[c] > 0) {
            quota[c] -= 1;
            labeled_idx.push_back(i);
        } else {
            unlabeled_idx.push_back(i);
        }
    }

    result.labeled.x = dataset.x.take_rows(labeled_idx);
    for (std::size_t i : labeled_idx) result.labeled.y.push_back(dataset.y[i]);
    result.unlabeled_x = dataset.x.take_rows(unlabeled_idx);
    for (std::size_t i : unlabeled_idx) result.unlabeled_y.push_back(dataset.y[i]);
    return result;
}

Matrix jitter(const Matrix& x_batch, double magnitude, Rng& rng) {
    if (magnitude < 0.0) throw std::invalid_argument("jitter: magnitude must be non-negative");
    Matrix out = x_batch;
    if (magnitude == 0.0) return out;
    std::normal_distribution<double> noise(0.0, magnitude);
    for (double& v : out.data()) v += noise(rng);
    return out;
}

namespace {

void write_rows(std::ofstream& os, const Matrix& x, const std::vector<std::size_t>& y,
                const char* tag) {
    for (std::size_t r = 0; r < x.rows(); ++r)
        os << x(r, 0) << ',' << x(r, 1) << ',' << y[r] << ',' << tag << '\n';
}

}  // namespace

void export_csv(const SplitResult& splits, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("export_csv: cannot open " + path);
    os << "x0,x1,label,split\n";
    write_rows(os, splits.labeled.x, splits.labeled.y, "labeled");
    write_rows(os, splits.unlabeled_x, splits.unlabeled_y, "unlabeled");
    write_rows(os, splits.validation.x, splits.validation.y, "validation");
    write_rows(os, splits.test.x, splits.test.y, "test");
}

Matrix one_hot(const std::vector<std::size_t>& y, std::size_t n_classes) {
    Matrix out(y.size(), n_classes);
    for (std::size_t i = 0; i < y.size(); ++i) {
        if (y[i] >= n_classes) throw std::invalid_argument("one_hot: label out of range");
        out(i, y[i]) = 1.0;
    }
    return out;
}

}  // namespace mixconf
