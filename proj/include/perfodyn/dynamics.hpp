#pragma once

#include <Eigen/Dense>

#include "perfodyn/graph.hpp"

namespace perfodyn {

/// Horizon sentinel for K = ∞ ("inf" in config files).
inline constexpr int kInfiniteHorizon = -1;

/// Per-node peer (alpha) and platform (beta) susceptibilities, the diagonals
/// of the two coupling matrices. Entries live in [0, 1].
struct SusceptibilityProfile {
    Eigen::VectorXd alpha;
    Eigen::VectorXd beta;

    static SusceptibilityProfile uniform(int n, double alpha_value, double beta_value);
    void validate(int n) const;
};

/// Checks entries are finite and within [0,1]; throws InvalidInputError.
void validate_opinion_vector(const Eigen::VectorXd& x, const char* role);

/// One peer-interaction step anchored at x_init:
///   x' = (I - diag(alpha)) x_init + diag(alpha) W x_k
Eigen::VectorXd fj_step(const Eigen::VectorXd& x_k, const Eigen::VectorXd& x_init,
                        const SusceptibilityProfile& profile, const InfluenceMatrix& w);

/// K peer-interaction steps from x_init (K = 0 returns x_init unchanged).
Eigen::VectorXd fj_iterate(const Eigen::VectorXd& x_init, const SusceptibilityProfile& profile,
                           const InfluenceMatrix& w, int steps);

/// Long-run peer equilibrium solving (I - diag(alpha) W) x = (I - diag(alpha)) x_init.
/// Requires at least one alpha_i < 1 on a connected graph; rows with
/// alpha_i = 1 are carried by the anchored block through the same solve.
Eigen::VectorXd fj_equilibrium(const Eigen::VectorXd& x_init, const SusceptibilityProfile& profile,
                               const InfluenceMatrix& w);

/// Consensus limit of repeated neighbor averaging: c = y^T x_init with y the
/// left Perron vector of W. Requires a connected aperiodic graph; bipartite
/// graphs oscillate with period 2 and are rejected.
Eigen::VectorXd degroot_equilibrium(const Eigen::VectorXd& x_init, const InfluenceMatrix& w);

/// The linear operator mapping initial opinions to opinions after K peer
/// steps. Row-stochastic for every K, including K = ∞ when it exists.
class PsiOperator {
public:
    enum class Construction { Recursion, ClosedForm, Iterative };

    int horizon() const { return horizon_; }
    int size() const { return static_cast<int>(matrix_.rows()); }
    const Eigen::MatrixXd& matrix() const { return matrix_; }
    const Eigen::VectorXd& alpha() const { return alpha_; }
    Construction construction() const { return construction_; }

    Eigen::VectorXd apply(const Eigen::VectorXd& x) const { return matrix_ * x; }

private:
    friend PsiOperator psi_operator(const SusceptibilityProfile&, const InfluenceMatrix&, int);

    Eigen::MatrixXd matrix_;
    Eigen::VectorXd alpha_;
    int horizon_ = 0;
    Construction construction_ = Construction::Recursion;
};

/// Build Psi_K. Finite K uses the recursion Psi_{k+1} = (I - L_a) + L_a W Psi_k
/// with Psi_0 = I; K = ∞ solves (I - L_a W) Psi = (I - L_a) (requires at least
/// one alpha_i < 1), falling back to the capped recursion when the dense solve
/// does not certify row-stochasticity.
PsiOperator psi_operator(const SusceptibilityProfile& profile, const InfluenceMatrix& w, int horizon);

}  // namespace perfodyn
