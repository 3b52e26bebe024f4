#pragma once

#include <Eigen/Dense>
#include <optional>
#include <vector>

#include "perfodyn/dynamics.hpp"
#include "perfodyn/policy.hpp"

namespace perfodyn {

/// Spread below which an equilibrium is reported as a consensus.
inline constexpr double kConsensusSpreadTol = 1e-3;

struct EquilibriumReport {
    enum class Method { ClosedForm, BlockForm, Iterative };

    Eigen::VectorXd x_ps;
    double mean = 0.0;
    double variance = 0.0;  // population variance, (1/n) sum (x_i - mean)^2
    double spread = 0.0;    // max - min
    Method method = Method::ClosedForm;
    /// Sup-norm residual of the fixed-point equation
    /// x - Psi((I - L_b) x* + L_b (M x + b)).
    double residual = 0.0;
    /// Mean opinion, reported as the consensus value when spread < kConsensusSpreadTol.
    std::optional<double> consensus_value;
};

/// Performatively stable opinions for an affine platform rule:
///   x_ps = (I - Psi L_b M)^{-1} Psi ((I - L_b) x* + L_b b)
/// when the spectral radius of Psi L_b M is below one. At radius one the
/// perfect-prediction block form and the mean-estimation consensus block are
/// handled; anything else raises "equilibrium family degenerate".
EquilibriumReport ps_closed_form(const Eigen::VectorXd& x_star, const SusceptibilityProfile& profile,
                                 const PsiOperator& psi, const AffinePolicy& policy);

struct SpectralReport {
    Eigen::VectorXd mu;      // eigenvalues of W, descending
    Eigen::VectorXd lambda;  // matching eigenvalues of Psi_K from the closed formulas
    Eigen::MatrixXd v;       // orthonormal eigenvectors of W (columns), aligned with mu
    Eigen::VectorXd y;       // left Perron vector of Psi_K, sum 1
    Eigen::VectorXd coefficients;  // lambda_i / (1 - beta * lambda_i)
    double alpha = 0.0;
    double beta = 0.0;
    int horizon = 0;
};

/// Eigenstructure of Psi_K on a regular connected graph with scalar
/// susceptibilities. lambda_i = (1-a)/(1-a mu_i) for K = ∞, plus the
/// (a mu_i)^K correction for finite K.
SpectralReport spectral_decomposition(const InfluenceMatrix& w, double alpha, double beta, int horizon);

/// x = sum_i lambda_i/(1 - beta lambda_i) v_i v_i^T (1-beta) x*. beta = 1 is
/// singular; use consensus_limit there.
Eigen::VectorXd reconstruct_from_spectrum(const SpectralReport& report, const Eigen::VectorXd& x_star,
                                          double beta);

struct SweepPoint {
    double parameter = 0.0;
    double mean = 0.0;
    double variance = 0.0;
};

struct SweepTable {
    std::vector<SweepPoint> points;
    /// Monotonicity is only asserted for regular graphs with homogeneous
    /// susceptibilities; other inputs still produce the table.
    bool monotonicity_guaranteed = false;
};

/// Equilibrium mean/variance across a grid of homogeneous platform
/// susceptibilities at fixed alpha (perfect prediction). Grid points fan out
/// across worker threads; results are identical for any thread count.
SweepTable variance_sweep(const Eigen::VectorXd& x_star, const InfluenceMatrix& w, double alpha,
                          const std::vector<double>& betas, int horizon, int threads = 1);

/// Same sweep in the alpha direction at fixed beta.
SweepTable variance_sweep_alpha(const Eigen::VectorXd& x_star, const InfluenceMatrix& w,
                                const std::vector<double>& alphas, double beta, int horizon,
                                int threads = 1);

struct ConsensusReport {
    double c_star = 0.0;             // y^T x*
    Eigen::VectorXd y;               // left Perron vector of Psi_K
    std::array<double, 3> deltas{};  // 1 - beta levels probed
    std::array<double, 3> spreads{};
    bool spread_shrinks = false;
    bool preconditions_hold = false;  // alpha_i in (0,1) for every node
};

/// Consensus value in the beta -> 1 limit. Heterogeneous profiles are probed
/// along beta_i(delta) = 1 - delta * r_i with ratios taken from the profile.
ConsensusReport consensus_limit(const Eigen::VectorXd& x_star, const SusceptibilityProfile& profile,
                                const PsiOperator& psi);

EquilibriumReport mean_estimation_equilibrium(const Eigen::VectorXd& x_star,
                                              const SusceptibilityProfile& profile,
                                              const PsiOperator& psi,
                                              const std::vector<int>& observed);

/// The spillover probe: equilibria before and after bumping one observed
/// node's innate opinion.
std::pair<EquilibriumReport, EquilibriumReport> mean_estimation_counterfactual(
    const Eigen::VectorXd& x_star, const SusceptibilityProfile& profile, const PsiOperator& psi,
    const std::vector<int>& observed, int node, double bump);

struct SteeringReport {
    double psi1 = 0.0;
    double psi2 = 0.0;
    Eigen::VectorXd x_ps;  // steered node at index 0, shielded node at index 1
    double delta_l = 0.0;  // (x_ps)_l minus its gamma = 0 baseline
    double mean = 0.0;
    int steered = 0;
    int shielded = 1;
};

/// Fully-connected closed form for the single-node steering rule at K = ∞:
/// three-term decomposition over e_j, e_l and the all-ones direction.
SteeringReport steering_closed_form(int n, double alpha, double beta_j, double gamma, double s);

/// Consensus value of repeated averaging under platform feedback on a regular
/// aperiodic graph: d* = sum (1-beta_i) x*_i / (n - sum beta_i), or mean(x*)
/// when every beta_i = 1.
double degroot_consensus_value(const Eigen::VectorXd& x_star, const Eigen::VectorXd& beta,
                               const InfluenceMatrix& w);

/// Sensitivity of one retraining update to a prediction perturbation:
/// ||L_b||_2 * ||Psi_K||_2 in the spectral norm.
double sensitivity(const SusceptibilityProfile& profile, const PsiOperator& psi);

/// Which convergence-rate regime the inputs fall into, as a diagnostic label:
/// "subunit-beta" (every beta_i < 1, c = O(max beta)), "unit-beta-subunit-radius"
/// (some beta_i = 1 with rho(Psi L_b) < 1, c = rho), "unit-beta-unit-radius"
/// (c = the largest sub-unit eigenvalue magnitude), or
/// "unit-beta-unit-radius; no sub-unit mode" when that spectrum is empty.
std::string rate_case_label(const SusceptibilityProfile& profile, const PsiOperator& psi);

/// Spectral radius estimate by power iteration (cap 1e4, tolerance 1e-12).
double spectral_radius_estimate(const Eigen::MatrixXd& a);

/// Left Perron vector of a primitive row-stochastic matrix, normalized to sum 1.
Eigen::VectorXd left_perron_vector(const Eigen::MatrixXd& a);

}  // namespace perfodyn
