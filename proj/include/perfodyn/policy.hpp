#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

namespace perfodyn {

/// Affine prediction rule f = M x_ex + b with M nonnegative, row sums <= 1,
/// b in [0,1]; outputs stay in [0,1]^n for inputs in [0,1]^n.
struct AffinePolicy {
    enum class Kind { Perfect, MeanEstimation, Steering, Custom };

    Kind kind = Kind::Custom;
    Eigen::MatrixXd M;
    Eigen::VectorXd b;

    // Structure tags used by block-form equilibrium handling.
    std::vector<int> observed;  // MeanEstimation
    int steer_node = -1;        // Steering
    double steer_target = 0.0;  // Steering

    int size() const { return static_cast<int>(M.rows()); }
};

/// Identity rule: f = x_ex.
AffinePolicy perfect_policy(int n);

/// Observed nodes echo their expressed opinion; unobserved nodes receive the
/// mean over the observed set.
AffinePolicy mean_estimation_policy(const std::vector<int>& observed, int n);

/// Node j is pinned to the target s; everyone else gets perfect prediction.
AffinePolicy steering_policy(int j, double s, int n);

Eigen::VectorXd apply_policy(const AffinePolicy& p, const Eigen::VectorXd& x_ex);

/// Per-node covariates, fixed for the lifetime of an experiment.
struct FeatureTable {
    Eigen::MatrixXd features;  // n x d

    int nodes() const { return static_cast<int>(features.rows()); }
    int dim() const { return static_cast<int>(features.cols()); }
};

struct MlpHyper {
    int width = 32;
    int epochs = 500;
    double learning_rate = 0.05;
    std::uint64_t seed = 0;
};

/// Parametric predictor (least squares or small MLP); predictions are always
/// clipped to [0,1].
class LearnedPredictor {
public:
    enum class Kind { Ols, Mlp };

    Kind kind() const { return kind_; }
    bool fitted() const { return fitted_; }
    bool diverged() const { return diverged_; }
    const std::vector<double>& loss_history() const { return loss_history_; }

    /// Unclipped scalar prediction for one feature row.
    double raw_predict(const Eigen::VectorXd& row) const;

private:
    friend LearnedPredictor fit_ols(const FeatureTable&, const Eigen::VectorXd&,
                                    const std::vector<int>&, double);
    friend LearnedPredictor fit_mlp(const FeatureTable&, const Eigen::VectorXd&,
                                    const std::vector<int>&, const MlpHyper&);

    Kind kind_ = Kind::Ols;
    bool fitted_ = false;
    bool diverged_ = false;

    Eigen::VectorXd ols_weights_;  // d coefficients followed by the intercept

    Eigen::MatrixXd mlp_w1_;  // width x d
    Eigen::VectorXd mlp_b1_;
    Eigen::VectorXd mlp_w2_;
    double mlp_b2_ = 0.0;

    std::vector<double> loss_history_;
};

/// Ridge-regularized least squares over the observed rows (intercept included
/// in the regularized system).
LearnedPredictor fit_ols(const FeatureTable& features, const Eigen::VectorXd& targets,
                         const std::vector<int>& observed, double ridge = 1e-8);

/// One hidden tanh layer trained by full-batch gradient descent on the mean
/// squared error over the observed rows. Deterministic given hyper.seed; a
/// non-finite loss marks the predictor diverged instead of throwing.
LearnedPredictor fit_mlp(const FeatureTable& features, const Eigen::VectorXd& targets,
                         const std::vector<int>& observed, const MlpHyper& hyper = {});

/// Clipped predictions for the requested nodes.
Eigen::VectorXd predict(const LearnedPredictor& p, const FeatureTable& features,
                        const std::vector<int>& nodes);

}  // namespace perfodyn
