#include <doctest.h>

#include "helpers.hpp"
#include "perfodyn/errors.hpp"
#include "perfodyn/policy.hpp"

using namespace perfodyn;

TEST_CASE("perfect policy is the identity") {
    const AffinePolicy p = perfect_policy(2);
    Eigen::Vector2d x(0.2, 0.9);
    CHECK((apply_policy(p, x) - x).lpNorm<Eigen::Infinity>() == 0.0);
    const Eigen::VectorXd c = Eigen::Vector2d::Constant(0.4);
    CHECK((apply_policy(p, c) - c).lpNorm<Eigen::Infinity>() == 0.0);
}

TEST_CASE("mean estimation policy") {
    const AffinePolicy p = mean_estimation_policy({0, 1}, 3);
    Eigen::Vector3d x(0.2, 0.6, 0.9);
    const Eigen::VectorXd f = apply_policy(p, x);
    CHECK(f(0) == doctest::Approx(0.2));
    CHECK(f(1) == doctest::Approx(0.6));
    CHECK(f(2) == doctest::Approx(0.4).epsilon(1e-14));

    SUBCASE("observing everyone reduces to perfect prediction") {
        const AffinePolicy all = mean_estimation_policy({0, 1, 2}, 3);
        CHECK((all.M - perfect_policy(3).M).lpNorm<Eigen::Infinity>() == 0.0);
        CHECK(all.b.lpNorm<Eigen::Infinity>() == 0.0);
    }
    SUBCASE("constant opinions are fixed") {
        const Eigen::VectorXd c = Eigen::Vector3d::Constant(0.7);
        CHECK((apply_policy(p, c) - c).lpNorm<Eigen::Infinity>() < 1e-15);
    }
    SUBCASE("empty observed set rejected") {
        CHECK_THROWS_AS(mean_estimation_policy({}, 3), InvalidInputError);
    }
}

TEST_CASE("steering policy") {
    const AffinePolicy p = steering_policy(0, 1.0, 3);
    Eigen::Vector3d x(0.2, 0.6, 0.9);
    const Eigen::VectorXd f = apply_policy(p, x);
    CHECK(f(0) == 1.0);
    CHECK(f(1) == doctest::Approx(0.6));
    CHECK(f(2) == doctest::Approx(0.9));

    SUBCASE("target equal to the current value is a coincidence fixed point") {
        const AffinePolicy q = steering_policy(1, 0.6, 3);
        CHECK((apply_policy(q, x) - x).lpNorm<Eigen::Infinity>() < 1e-15);
    }
    SUBCASE("the steered coordinate is constant under composition") {
        Eigen::VectorXd cur = x;
        for (int t = 0; t < 5; ++t) {
            cur = apply_policy(p, cur);
            CHECK(cur(0) == 1.0);
        }
    }
    SUBCASE("node out of range") { CHECK_THROWS_AS(steering_policy(3, 1.0, 3), InvalidInputError); }
}

TEST_CASE("policies preserve [0,1] and match per-coordinate evaluation") {
    Rng rng(99);
    for (int trial = 0; trial < 30; ++trial) {
        const int n = 2 + static_cast<int>(rng.uniform_index(20));
        AffinePolicy p;
        const int kind = static_cast<int>(rng.uniform_index(3));
        if (kind == 0) {
            p = perfect_policy(n);
        } else if (kind == 1) {
            std::vector<int> observed;
            for (int i = 0; i < n; ++i)
                if (rng.uniform01() < 0.6) observed.push_back(i);
            if (observed.empty()) observed.push_back(0);
            p = mean_estimation_policy(observed, n);
        } else {
            p = steering_policy(static_cast<int>(rng.uniform_index(static_cast<std::size_t>(n))),
                                rng.uniform01(), n);
        }
        const Eigen::VectorXd x = testutil::random_opinions(n, rng);
        const Eigen::VectorXd f = apply_policy(p, x);
        CHECK(f.minCoeff() >= 0.0);
        CHECK(f.maxCoeff() <= 1.0);
        for (int i = 0; i < n; ++i) {
            double manual = p.b(i);
            for (int j = 0; j < n; ++j) manual += p.M(i, j) * x(j);
            CHECK(std::abs(f(i) - manual) < 1e-14);
        }
    }
}

TEST_CASE("ols fitting") {
    SUBCASE("exact 1-d fit when features equal targets") {
        FeatureTable features;
        features.features = Eigen::MatrixXd(4, 1);
        features.features << 0.1, 0.4, 0.6, 0.9;
        Eigen::VectorXd targets(4);
        targets << 0.1, 0.4, 0.6, 0.9;
        const LearnedPredictor p = fit_ols(features, targets, {0, 1, 2, 3}, 1e-12);
        const Eigen::VectorXd pred = predict(p, features, {0, 1, 2, 3});
        CHECK((pred - targets).lpNorm<Eigen::Infinity>() < 1e-8);
    }
    SUBCASE("constant targets give a constant model") {
        Rng rng(3);
        FeatureTable features;
        features.features = Eigen::MatrixXd(6, 2);
        for (int i = 0; i < 6; ++i)
            for (int j = 0; j < 2; ++j) features.features(i, j) = rng.normal(0, 1);
        const Eigen::VectorXd targets = Eigen::VectorXd::Constant(6, 0.42);
        const LearnedPredictor p = fit_ols(features, targets, {0, 1, 2, 3, 4, 5});
        const Eigen::VectorXd pred = predict(p, features, {0, 1, 2, 3, 4, 5});
        for (int i = 0; i < 6; ++i) CHECK(pred(i) == doctest::Approx(0.42).epsilon(1e-8));
    }
    SUBCASE("extrapolation clips to [0,1]") {
        FeatureTable features;
        features.features = Eigen::MatrixXd(3, 1);
        features.features << 0.0, 1.0, 2.0;
        Eigen::VectorXd targets(3);
        targets << 0.0, 1.0, 0.0;  // third value unused; only nodes 0 and 1 observed
        const LearnedPredictor p = fit_ols(features, targets, {0, 1}, 1e-12);
        CHECK(p.raw_predict(features.features.row(2).transpose()) == doctest::Approx(2.0).epsilon(1e-6));
        const Eigen::VectorXd pred = predict(p, features, {2});
        CHECK(pred(0) == 1.0);
    }
    SUBCASE("interpolation with one-hot features reproduces perfect prediction") {
        const int n = 6;
        FeatureTable features;
        features.features = Eigen::MatrixXd::Identity(n, n);
        Rng rng(17);
        const Eigen::VectorXd targets = testutil::random_opinions(n, rng);
        std::vector<int> all;
        for (int i = 0; i < n; ++i) all.push_back(i);
        const LearnedPredictor p = fit_ols(features, targets, all, 1e-12);
        const Eigen::VectorXd pred = predict(p, features, all);
        CHECK((pred - targets).lpNorm<Eigen::Infinity>() < 1e-6);
    }
    SUBCASE("non-finite features rejected") {
        FeatureTable features;
        features.features = Eigen::MatrixXd::Constant(2, 1, std::nan(""));
        CHECK_THROWS_AS(fit_ols(features, Eigen::Vector2d(0, 1), {0, 1}), InvalidInputError);
    }
}

TEST_CASE("mlp fitting") {
    Rng rng(8);
    FeatureTable features;
    const int n = 24;
    features.features = Eigen::MatrixXd(n, 2);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < 2; ++j) features.features(i, j) = rng.normal(0, 1);
    std::vector<int> all;
    for (int i = 0; i < n; ++i) all.push_back(i);

    SUBCASE("constant targets are learned within 0.05") {
        const Eigen::VectorXd targets = Eigen::VectorXd::Constant(n, 0.6);
        MlpHyper hyper;
        hyper.seed = 5;
        const LearnedPredictor p = fit_mlp(features, targets, all, hyper);
        CHECK_FALSE(p.diverged());
        const Eigen::VectorXd pred = predict(p, features, all);
        for (int i = 0; i < n; ++i) CHECK(std::abs(pred(i) - 0.6) < 0.05);
    }
    SUBCASE("same seed gives bit-identical predictions") {
        Eigen::VectorXd targets(n);
        for (int i = 0; i < n; ++i) targets(i) = rng.uniform01();
        MlpHyper hyper;
        hyper.seed = 11;
        const LearnedPredictor a = fit_mlp(features, targets, all, hyper);
        const LearnedPredictor b = fit_mlp(features, targets, all, hyper);
        const Eigen::VectorXd pa = predict(a, features, all);
        const Eigen::VectorXd pb = predict(b, features, all);
        CHECK((pa - pb).lpNorm<Eigen::Infinity>() == 0.0);
    }
    SUBCASE("training loss is nonincreasing within tolerance") {
        Eigen::VectorXd targets(n);
        for (int i = 0; i < n; ++i) targets(i) = 0.2 + 0.6 * (features.features(i, 0) > 0);
        MlpHyper hyper;
        hyper.seed = 21;
        const LearnedPredictor p = fit_mlp(features, targets, all, hyper);
        const auto& loss = p.loss_history();
        REQUIRE(loss.size() > 1);
        for (std::size_t k = 1; k < loss.size(); ++k) CHECK(loss[k] <= loss[k - 1] + 1e-6);
    }
    SUBCASE("monotone 1-d trend roughly agrees with least squares") {
        FeatureTable f1;
        f1.features = Eigen::MatrixXd(n, 1);
        for (int i = 0; i < n; ++i) f1.features(i, 0) = -1.0 + 2.0 * i / (n - 1);
        Eigen::VectorXd targets(n);
        for (int i = 0; i < n; ++i) targets(i) = 0.2 + 0.3 * (f1.features(i, 0) + 1.0);
        MlpHyper hyper;
        hyper.seed = 2;
        const LearnedPredictor mlp = fit_mlp(f1, targets, all, hyper);
        const LearnedPredictor ols = fit_ols(f1, targets, all);
        const Eigen::VectorXd pm = predict(mlp, f1, all);
        const Eigen::VectorXd po = predict(ols, f1, all);
        CHECK((pm - po).lpNorm<Eigen::Infinity>() < 0.1);
    }
    SUBCASE("unfitted predictor rejected") {
        const LearnedPredictor p;
        CHECK_THROWS_AS(predict(p, features, all), InvalidInputError);
    }
}
