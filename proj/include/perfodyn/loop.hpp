#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <variant>
#include <vector>

#include "perfodyn/dynamics.hpp"
#include "perfodyn/policy.hpp"

namespace perfodyn {

/// Retrain-from-scratch parametric policy: each retraining step fits a fresh
/// predictor on the observed expressed opinions. Observed nodes receive their
/// own expressed value; the model only fills in the unobserved ones, matching
/// the shape of the mean-estimation rule.
struct LearnedPolicyBundle {
    enum class Kind { Ols, Mlp };

    Kind kind = Kind::Ols;
    FeatureTable features;
    std::vector<int> observed;
    double ridge = 1e-8;
    MlpHyper mlp;
    std::uint64_t seed = 0;  // per-step substreams derived from (seed, t)
    bool echo_observed = true;
};

struct LoopConfig {
    Eigen::VectorXd x_star;
    SusceptibilityProfile profile;
    int horizon = 1;  // K; kInfiniteHorizon for the equilibrated inner loop
    int t_max = 30;
    double tol = 1e-9;  // sup-norm stability tolerance on successive predictions
    std::variant<AffinePolicy, LearnedPolicyBundle> policy;
    bool record_full = true;  // thin mode keeps residuals and the final step only
};

struct TrajectoryStep {
    Eigen::VectorXd x_init;
    Eigen::VectorXd x_ex;
    Eigen::VectorXd f;
};

struct Trajectory {
    /// Steps t = 1..t_stop (full mode); thin mode holds only the final step.
    std::vector<TrajectoryStep> records;
    /// residuals[t-1] = ||f^(t+1) - f^(t)||_inf, t = 1..t_stop-1.
    std::vector<double> residuals;
    bool converged = false;
    int t_stop = 0;
    bool policy_diverged = false;

    const TrajectoryStep& last() const { return records.back(); }
};

/// The outer retraining loop: platform influence, K peer steps, observation,
/// model update, repeated until the predictions stabilize or t_max is reached.
Trajectory run(const LoopConfig& cfg, const InfluenceMatrix& w);

/// True iff the last recorded residual is below tol; also returns that residual.
std::pair<bool, double> detect_stability(const Trajectory& tr, double tol);

struct RateEstimate {
    /// The trajectory hit the equilibrium to numerical precision at this step;
    /// no rate was fitted.
    bool exact_convergence = false;
    int exact_step = 0;

    double c_hat = 0.0;  // per-step error contraction factor (> 1 reports divergence)
    double r2 = 0.0;
    int window_begin = 0;  // steps (1-based, inclusive) used for the fit
    int window_end = 0;
};

/// Least-squares fit of log ||x_ex^(t) - x_ps||_2 against t. The first 20% of
/// steps and any step with error below 1e-13 are dropped; fewer than 4 usable
/// points is reported as exact convergence.
RateEstimate estimate_rate(const Trajectory& tr, const Eigen::VectorXd& x_ps);

}  // namespace perfodyn
