#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "mixconf/matrix.hpp"

namespace mixconf {

// Hard predictions and their confidences read off a probability matrix.
struct ConfidenceResult {
    std::vector<std::size_t> y_hat;  // argmax per row, smallest index on ties
    std::vector<double> c;           // max per row
};

ConfidenceResult confidence(const Matrix& prob_rows);

struct CalibrationBin {
    double lo = 0.0;
    double hi = 0.0;
    std::size_t count = 0;
    double acc = 0.0;   // mean correctness in the bin (0 when empty)
    double conf = 0.0;  // mean confidence in the bin (0 when empty)
};

// Reliability-diagram data plus the expected calibration error,
// ece = sum_m (|B_m| / N) * |acc(B_m) - conf(B_m)|.
struct CalibrationReport {
    std::size_t num_bins = 0;
    std::size_t total_count = 0;
    std::vector<CalibrationBin> bins;
    double ece = 0.0;

    std::string to_json() const;
};

inline constexpr std::size_t kDefaultEceBins = 15;

// Equal-width bins ((m-1)/M, m/M]; confidence 0 lands in the first bin and
// empty bins contribute nothing.
CalibrationReport ece(const std::vector<double>& confidences,
                      const std::vector<std::size_t>& predictions,
                      const std::vector<std::size_t>& labels,
                      std::size_t num_bins = kDefaultEceBins);

// Top-1 error rate; argmax tie-breaking matches confidence().
double error_rate(const Matrix& prob_rows, const std::vector<std::size_t>& labels);

}  // namespace mixconf
