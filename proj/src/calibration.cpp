#include "mixconf/calibration.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "json.hpp"

namespace mixconf {

ConfidenceResult confidence(const Matrix& prob_rows) {
    ConfidenceResult out;
    out.y_hat.resize(prob_rows.rows());
    out.c.resize(prob_rows.rows());
    for (std::size_t r = 0; r < prob_rows.rows(); ++r) {
        auto row = prob_rows.row(r);
        std::size_t best = 0;
        double best_v = row[0];
        for (std::size_t j = 1; j < row.size(); ++j) {
            if (row[j] > best_v) {  // strict: ties keep the smallest index
                best_v = row[j];
                best = j;
            }
        }
        out.y_hat[r] = best;
        out.c[r] = best_v;
    }
    return out;
}

CalibrationReport ece(const std::vector<double>& confidences,
                      const std::vector<std::size_t>& predictions,
                      const std::vector<std::size_t>& labels, std::size_t num_bins) {
    if (confidences.size() != predictions.size() || confidences.size() != labels.size())
        throw std::invalid_argument("ece: input length mismatch");
    if (num_bins == 0) throw std::invalid_argument("ece: need at least one bin");

    const std::size_t n = confidences.size();
    CalibrationReport report;
    report.num_bins = num_bins;
    report.total_count = n;
    report.bins.resize(num_bins);
    std::vector<double> conf_sum(num_bins, 0.0), correct_sum(num_bins, 0.0);
    for (std::size_t m = 0; m < num_bins; ++m) {
        report.bins[m].lo = static_cast<double>(m) / static_cast<double>(num_bins);
        report.bins[m].hi = static_cast<double>(m + 1) / static_cast<double>(num_bins);
    }
    for (std::size_t i = 0; i < n; ++i) {
        const double c = confidences[i];
        // Bin m covers ((m-1)/M, m/M]; c <= 0 goes to the first bin.
        std::size_t m = 0;
        if (c > 0.0) {
            m = static_cast<std::size_t>(std::ceil(c * static_cast<double>(num_bins))) - 1;
            m = std::min(m, num_bins - 1);
        }
        report.bins[m].count += 1;
        conf_sum[m] += c;
        correct_sum[m] += (predictions[i] == labels[i]) ? 1.0 : 0.0;
    }
    double e = 0.0;
    for (std::size_t m = 0; m < num_bins; ++m) {
        auto& bin = report.bins[m];
        if (bin.count == 0) continue;
        bin.acc = correct_sum[m] / static_cast<double>(bin.count);
        bin.conf = conf_sum[m] / static_cast<double>(bin.count);
        e += (static_cast<double>(bin.count) / static_cast<double>(n)) * std::abs(bin.acc - bin.conf);
    }
    report.ece = e;
    return report;
}

double error_rate(const Matrix& prob_rows, const std::vector<std::size_t>& labels) {
    if (prob_rows.rows() != labels.size())
        throw std::invalid_argument("error_rate: length mismatch");
    if (labels.empty()) return 0.0;
    const auto conf = confidence(prob_rows);
    std::size_t wrong = 0;
    for (std::size_t i = 0; i < labels.size(); ++i)
        if (conf.y_hat[i] != labels[i]) ++wrong;
    return static_cast<double>(wrong) / static_cast<double>(labels.size());
}

std::string CalibrationReport::to_json() const {
    nlohmann::json j;
    j["bins"] = nlohmann::json::array();
    for (const auto& b : bins)
        j["bins"].push_back({{"lo", b.lo}, {"hi", b.hi}, {"count", b.count}, {"acc", b.acc}, {"conf", b.conf}});
    j["ece"] = ece;
    j["n"] = total_count;
    return j.dump();
}

}  // namespace mixconf
