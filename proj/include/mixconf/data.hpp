#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mixconf/matrix.hpp"
#include "mixconf/rng.hpp"

namespace mixconf {

enum class Generator { TwoMoons, GaussianBlobs };

struct DatasetSpec {
    Generator generator = Generator::TwoMoons;
    std::size_t n_samples = 2000;
    double noise_sd = 0.1;
    std::size_t n_classes = 2;  // TwoMoons requires 2
    std::uint64_t seed = 0;

    void validate() const;
};

struct Dataset {
    Matrix x;                    // n x 2
    std::vector<std::size_t> y;  // class per row

    std::size_t size() const { return y.size(); }
};

// Seeded synthetic dataset with class counts balanced within one sample.
// TwoMoons: two interleaved half-circles (unit radius, second moon shifted to
// (1, 0.5)). GaussianBlobs: C isotropic blobs with means equally spaced on
// the unit circle.
Dataset generate(const DatasetSpec& spec);

struct SplitSpec {
    std::size_t n_labeled = 0;
    std::size_t n_validation = 0;
    std::size_t n_test = 0;
};

struct SplitResult {
    Dataset labeled;
    Matrix unlabeled_x;
    std::vector<std::size_t> unlabeled_y;  // hidden labels, diagnostics only
    Dataset validation;
    Dataset test;
};

// Disjoint splits: test and validation are drawn at random, then the labeled
// subset is sampled from the remaining training pool so its class priors
// match the full dataset within one sample per class. Everything left over
// becomes the unlabeled pool (true labels retained separately for corruption
// diagnostics, never for training).
SplitResult split(const Dataset& dataset, const SplitSpec& spec, std::uint64_t seed);

// Adds isotropic Gaussian noise with the given per-coordinate standard
// deviation. magnitude 0 is the identity.
Matrix jitter(const Matrix& x_batch, double magnitude, Rng& rng);

// Writes "x0,x1,label,split" rows for external inspection.
void export_csv(const SplitResult& splits, const std::string& path);

// One-hot label matrix for a label vector.
Matrix one_hot(const std::vector<std::size_t>& y, std::size_t n_classes);

}  // namespace mixconf
