#pragma once

#include <Eigen/Dense>
#include <memory>
#include <utility>
#include <vector>

#include "oracles/oracles.hpp"
#include "perfodyn/dynamics.hpp"
#include "perfodyn/graph.hpp"
#include "perfodyn/rng.hpp"

namespace testutil {

inline perfodyn::InfluenceMatrix make_w(int n, const std::vector<std::pair<int, int>>& edges) {
    auto g = std::make_shared<const perfodyn::Graph>(perfodyn::Graph::from_edges(n, edges));
    return perfodyn::influence_matrix(g);
}

inline perfodyn::InfluenceMatrix path2() { return make_w(2, {{0, 1}}); }
inline perfodyn::InfluenceMatrix path3() { return make_w(3, {{0, 1}, {1, 2}}); }
inline perfodyn::InfluenceMatrix triangle() { return make_w(3, {{0, 1}, {1, 2}, {0, 2}}); }

inline perfodyn::InfluenceMatrix cycle(int n) {
    std::vector<std::pair<int, int>> edges;
    for (int i = 0; i < n; ++i) edges.emplace_back(i, (i + 1) % n);
    return make_w(n, edges);
}

/// Random connected graph: random spanning tree plus `extra` random edges.
inline perfodyn::InfluenceMatrix random_connected(int n, int extra, perfodyn::Rng& rng) {
    std::vector<std::pair<int, int>> edges;
    std::vector<int> order(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
    for (int i = n - 1; i > 0; --i)
        std::swap(order[static_cast<std::size_t>(i)], order[rng.uniform_index(static_cast<std::size_t>(i) + 1)]);
    for (int k = 1; k < n; ++k)
        edges.emplace_back(order[static_cast<std::size_t>(k)],
                           order[rng.uniform_index(static_cast<std::size_t>(k))]);
    int added = 0;
    while (added < extra) {
        const int a = static_cast<int>(rng.uniform_index(static_cast<std::size_t>(n)));
        const int b = static_cast<int>(rng.uniform_index(static_cast<std::size_t>(n)));
        if (a == b) continue;
        edges.emplace_back(a, b);
        ++added;  // duplicates collapse in the builder
    }
    return make_w(n, edges);
}

inline Eigen::VectorXd random_opinions(int n, perfodyn::Rng& rng) {
    Eigen::VectorXd x(n);
    for (int i = 0; i < n; ++i) x(i) = rng.uniform01();
    return x;
}

inline oracle::Mat to_oracle(const Eigen::MatrixXd& m) {
    oracle::Mat out(static_cast<int>(m.rows()), static_cast<int>(m.cols()));
    for (int i = 0; i < out.rows; ++i)
        for (int j = 0; j < out.cols; ++j) out.at(i, j) = m(i, j);
    return out;
}

inline std::vector<double> to_vec(const Eigen::VectorXd& v) {
    return std::vector<double>(v.data(), v.data() + v.size());
}

inline Eigen::VectorXd from_vec(const std::vector<double>& v) {
    return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

/// Expressed-opinion fixed point straight from the oracle, for an affine rule.
inline Eigen::VectorXd oracle_equilibrium(const Eigen::VectorXd& x_star,
                                          const perfodyn::SusceptibilityProfile& profile,
                                          const perfodyn::InfluenceMatrix& w, int horizon,
                                          const Eigen::MatrixXd& m, const Eigen::VectorXd& b,
                                          double tol = 1e-11) {
    oracle::OracleConfig cfg;
    cfg.tol = tol;
    cfg.max_iter = 100000;
    return from_vec(oracle::fixed_point(to_vec(x_star), to_vec(profile.alpha), to_vec(profile.beta),
                                        w.graph().neighbors(), horizon, to_oracle(m), to_vec(b), cfg));
}

}  // namespace testutil
