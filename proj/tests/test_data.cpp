#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>

#include "mixconf/data.hpp"

using namespace mixconf;

TEST_CASE("two moons with zero noise lie exactly on the canonical half-circles") {
    DatasetSpec spec{Generator::TwoMoons, 100, 0.0, 2, 42};
    const Dataset ds = generate(spec);
    REQUIRE(ds.size() == 100);
    std::size_t class0 = 0;
    for (std::size_t i = 0; i < ds.size(); ++i) {
        const double x = ds.x(i, 0), y = ds.x(i, 1);
        if (ds.y[i] == 0) {
            ++class0;
            CHECK(x * x + y * y == doctest::Approx(1.0).epsilon(1e-12));
            CHECK(y >= -1e-12);
        } else {
            CHECK((x - 1.0) * (x - 1.0) + (y - 0.5) * (y - 0.5) == doctest::Approx(1.0).epsilon(1e-12));
            CHECK(y <= 0.5 + 1e-12);
        }
    }
    CHECK(class0 == 50);
}

TEST_CASE("generation is deterministic and balanced within one sample") {
    DatasetSpec spec{Generator::GaussianBlobs, 101, 0.2, 3, 7};
    const Dataset a = generate(spec);
    const Dataset b = generate(spec);
    CHECK(a.x.data() == b.x.data());
    CHECK(a.y == b.y);

    std::vector<std::size_t> counts(3, 0);
    for (std::size_t y : a.y) counts[y] += 1;
    for (std::size_t c = 0; c < 3; ++c) {
        CHECK(counts[c] >= 33);
        CHECK(counts[c] <= 34);
    }
    CHECK(a.x.all_finite());
}

TEST_CASE("blob means sit on the unit circle") {
    DatasetSpec spec{Generator::GaussianBlobs, 4000, 0.05, 4, 3};
    const Dataset ds = generate(spec);
    std::vector<double> cx(4, 0.0), cy(4, 0.0);
    std::vector<std::size_t> n(4, 0);
    for (std::size_t i = 0; i < ds.size(); ++i) {
        cx[ds.y[i]] += ds.x(i, 0);
        cy[ds.y[i]] += ds.x(i, 1);
        n[ds.y[i]] += 1;
    }
    for (std::size_t c = 0; c < 4; ++c) {
        const double mx = cx[c] / n[c], my = cy[c] / n[c];
        CHECK(std::sqrt(mx * mx + my * my) == doctest::Approx(1.0).epsilon(0.01));
    }
}

TEST_CASE("dataset spec validation") {
    CHECK_THROWS_AS(generate({Generator::TwoMoons, 100, 0.1, 3, 0}), std::invalid_argument);
    CHECK_THROWS_AS(generate({Generator::GaussianBlobs, 2, 0.1, 4, 0}), std::invalid_argument);
    CHECK_THROWS_AS(generate({Generator::TwoMoons, 100, -0.1, 2, 0}), std::invalid_argument);
}

TEST_CASE("split produces disjoint parts and prior-preserving labeled subset") {
    DatasetSpec spec{Generator::GaussianBlobs, 1000, 0.3, 4, 11};
    const Dataset ds = generate(spec);
    const SplitSpec split_spec{40, 100, 200};
    const SplitResult splits = split(ds, split_spec, 99);

    CHECK(splits.labeled.size() == 40);
    CHECK(splits.validation.size() == 100);
    CHECK(splits.test.size() == 200);
    CHECK(splits.unlabeled_x.rows() == 1000 - 40 - 100 - 200);
    CHECK(splits.unlabeled_y.size() == splits.unlabeled_x.rows());

    // priors: 10 per class expected (250/1000 each), within one sample
    std::vector<std::size_t> counts(4, 0);
    for (std::size_t y : splits.labeled.y) counts[y] += 1;
    for (std::size_t c = 0; c < 4; ++c) {
        CHECK(counts[c] >= 9);
        CHECK(counts[c] <= 11);
    }

    // disjointness via exact coordinate identity
    std::set<std::pair<double, double>> seen;
    auto insert_all = [&](const Matrix& x) {
        for (std::size_t i = 0; i < x.rows(); ++i) {
            const bool fresh = seen.insert({x(i, 0), x(i, 1)}).second;
            CHECK(fresh);
        }
    };
    insert_all(splits.labeled.x);
    insert_all(splits.unlabeled_x);
    insert_all(splits.validation.x);
    insert_all(splits.test.x);
    CHECK(seen.size() == 1000);
}

TEST_CASE("split consumes the whole pool when asked") {
    DatasetSpec spec{Generator::TwoMoons, 60, 0.1, 2, 4};
    const Dataset ds = generate(spec);
    const SplitResult splits = split(ds, {40, 10, 10}, 5);
    CHECK(splits.unlabeled_x.rows() == 0);
    CHECK_THROWS_AS(split(ds, {41, 10, 10}, 5), std::invalid_argument);
}

TEST_CASE("jitter adds noise of the configured scale") {
    Matrix x(200000, 2, 0.0);
    Rng rng(12);

    SUBCASE("magnitude zero is the identity") {
        const Matrix out = jitter(x, 0.0, rng);
        CHECK(out.data() == x.data());
    }

    SUBCASE("per-coordinate standard deviation matches within 1 percent") {
        const double magnitude = 0.25;
        const Matrix out = jitter(x, magnitude, rng);
        double sum = 0.0, sum2 = 0.0;
        const std::size_t n = out.data().size();
        for (double v : out.data()) {
            sum += v;
            sum2 += v * v;
        }
        const double mean = sum / n;
        const double sd = std::sqrt(sum2 / n - mean * mean);
        CHECK(sd == doctest::Approx(magnitude).epsilon(0.01));
    }

    SUBCASE("seeded draws repeat") {
        Rng r1(77), r2(77);
        const Matrix a = jitter(x, 0.1, r1);
        const Matrix b = jitter(x, 0.1, r2);
        CHECK(a.data() == b.data());
    }

    SUBCASE("negative magnitude is rejected") {
        CHECK_THROWS_AS(jitter(x, -0.1, rng), std::invalid_argument);
    }
}

TEST_CASE("csv export writes all rows with split tags") {
    DatasetSpec spec{Generator::TwoMoons, 50, 0.1, 2, 8};
    const Dataset ds = generate(spec);
    const SplitResult splits = split(ds, {10, 5, 10}, 3);
    const std::string path = (std::filesystem::temp_directory_path() / "mixconf_split.csv").string();
    export_csv(splits, path);

    std::ifstream is(path);
    REQUIRE(is.good());
    std::string line;
    std::getline(is, line);
    CHECK(line == "x0,x1,label,split");
    std::size_t rows = 0, labeled = 0;
    while (std::getline(is, line)) {
        ++rows;
        if (line.find(",labeled") != std::string::npos) ++labeled;
    }
    CHECK(rows == 50);
    CHECK(labeled == 10);
    std::remove(path.c_str());
}

TEST_CASE("one_hot encodes and validates") {
    const Matrix t = one_hot({2, 0, 1}, 3);
    CHECK(t(0, 2) == 1.0);
    CHECK(t(1, 0) == 1.0);
    CHECK(t(2, 1) == 1.0);
    CHECK(t(0, 0) == 0.0);
    CHECK_THROWS_AS(one_hot({3}, 3), std::invalid_argument);
}
