#include "perfodyn/dynamics.hpp"

#include <cmath>
#include <string>

#include "perfodyn/errors.hpp"

namespace perfodyn {

namespace {

constexpr double kRangeSlack = 1e-12;

void clamp_unit_interval(Eigen::VectorXd& x, const char* where) {
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        if (!std::isfinite(x(i)) || x(i) < -kRangeSlack || x(i) > 1.0 + kRangeSlack)
            throw NumericalError(std::string(where) + ": value " + std::to_string(x(i)) +
                                 " left [0,1] at node " + std::to_string(i));
        if (x(i) < 0.0) x(i) = 0.0;
        if (x(i) > 1.0) x(i) = 1.0;
    }
}

}  // namespace

SusceptibilityProfile SusceptibilityProfile::uniform(int n, double alpha_value, double beta_value) {
    SusceptibilityProfile p;
    p.alpha = Eigen::VectorXd::Constant(n, alpha_value);
    p.beta = Eigen::VectorXd::Constant(n, beta_value);
    p.validate(n);
    return p;
}

void SusceptibilityProfile::validate(int n) const {
    if (alpha.size() != n || beta.size() != n)
        throw InvalidInputError("susceptibility profile: dimension mismatch");
    for (Eigen::Index i = 0; i < alpha.size(); ++i) {
        if (!(alpha(i) >= 0.0 && alpha(i) <= 1.0))
            throw InvalidInputError("susceptibility profile: alpha out of [0,1]");
        if (!(beta(i) >= 0.0 && beta(i) <= 1.0))
            throw InvalidInputError("susceptibility profile: beta out of [0,1]");
    }
}

void validate_opinion_vector(const Eigen::VectorXd& x, const char* role) {
    for (Eigen::Index i = 0; i < x.size(); ++i)
        if (!(x(i) >= 0.0 && x(i) <= 1.0))
            throw InvalidInputError(std::string(role) + ": opinion out of [0,1] at node " +
                                    std::to_string(i));
}

Eigen::VectorXd fj_step(const Eigen::VectorXd& x_k, const Eigen::VectorXd& x_init,
                        const SusceptibilityProfile& profile, const InfluenceMatrix& w) {
    const int n = w.size();
    if (x_k.size() != n || x_init.size() != n)
        throw InvalidInputError("fj_step: dimension mismatch");
    profile.validate(n);
    Eigen::VectorXd mixed = w.apply(x_k);
    Eigen::VectorXd out =
        (Eigen::VectorXd::Ones(n) - profile.alpha).cwiseProduct(x_init) + profile.alpha.cwiseProduct(mixed);
    clamp_unit_interval(out, "fj_step");
    return out;
}

Eigen::VectorXd fj_iterate(const Eigen::VectorXd& x_init, const SusceptibilityProfile& profile,
                           const InfluenceMatrix& w, int steps) {
    if (steps < 0) throw InvalidInputError("fj_iterate: negative step count");
    Eigen::VectorXd x = x_init;
    for (int k = 0; k < steps; ++k) x = fj_step(x, x_init, profile, w);
    return x;
}

Eigen::VectorXd fj_equilibrium(const Eigen::VectorXd& x_init, const SusceptibilityProfile& profile,
                               const InfluenceMatrix& w) {
    const int n = w.size();
    if (x_init.size() != n) throw InvalidInputError("fj_equilibrium: dimension mismatch");
    profile.validate(n);
    if ((profile.alpha.array() >= 1.0).all())
        throw InvalidInputError("fj_equilibrium: all alpha_i = 1; no anchored node (use degroot_equilibrium)");

    const Eigen::MatrixXd& W = w.matrix();
    Eigen::MatrixXd system = Eigen::MatrixXd::Identity(n, n) - profile.alpha.asDiagonal() * W;
    Eigen::VectorXd rhs = (Eigen::VectorXd::Ones(n) - profile.alpha).cwiseProduct(x_init);
    Eigen::VectorXd x = system.partialPivLu().solve(rhs);

    const double residual = (x - rhs - profile.alpha.cwiseProduct(w.apply(x))).lpNorm<Eigen::Infinity>();
    if (!std::isfinite(residual) || residual > 1e-10)
        throw NumericalError("fj_equilibrium: solve residual " + std::to_string(residual) +
                             " (graph disconnected or degenerate)");
    clamp_unit_interval(x, "fj_equilibrium");
    return x;
}

Eigen::VectorXd degroot_equilibrium(const Eigen::VectorXd& x_init, const InfluenceMatrix& w) {
    const int n = w.size();
    if (x_init.size() != n) throw InvalidInputError("degroot_equilibrium: dimension mismatch");
    const GraphProperties props = check_properties(w.graph());
    if (!props.connected) throw InvalidInputError("degroot_equilibrium: graph not connected");
    if (!props.aperiodic)
        throw InvalidInputError(
            "degroot_equilibrium: bipartite graph; averaging oscillates with period 2");
    const double c = w.left_perron().dot(x_init);
    return Eigen::VectorXd::Constant(n, c);
}

PsiOperator psi_operator(const SusceptibilityProfile& profile, const InfluenceMatrix& w, int horizon) {
    const int n = w.size();
    profile.validate(n);
    if (horizon < 0 && horizon != kInfiniteHorizon)
        throw InvalidInputError("psi_operator: invalid horizon");

    PsiOperator psi;
    psi.alpha_ = profile.alpha;
    psi.horizon_ = horizon;

    const Eigen::MatrixXd& W = w.matrix();
    const Eigen::VectorXd stubborn = Eigen::VectorXd::Ones(n) - profile.alpha;
    const Eigen::MatrixXd anchored = stubborn.asDiagonal();

    if (horizon != kInfiniteHorizon) {
        Eigen::MatrixXd psi_k = Eigen::MatrixXd::Identity(n, n);
        for (int k = 0; k < horizon; ++k)
            psi_k = anchored + profile.alpha.asDiagonal() * (W * psi_k);
        psi.matrix_ = std::move(psi_k);
        psi.construction_ = PsiOperator::Construction::Recursion;
        return psi;
    }

    if ((profile.alpha.array() >= 1.0).all())
        throw InvalidInputError("psi_operator: K = inf with all alpha_i = 1; Psi_inf does not exist");

    // Closed form: rows with alpha_i = 0 come out as identity rows, the rest
    // solve against the anchored block in one dense system.
    Eigen::MatrixXd system = Eigen::MatrixXd::Identity(n, n) - profile.alpha.asDiagonal() * W;
    Eigen::MatrixXd candidate = system.partialPivLu().solve(anchored);
    const double row_err = (candidate.rowwise().sum() - Eigen::VectorXd::Ones(n)).lpNorm<Eigen::Infinity>();
    if (std::isfinite(row_err) && row_err < 1e-10) {
        psi.matrix_ = std::move(candidate);
        psi.construction_ = PsiOperator::Construction::ClosedForm;
        return psi;
    }

    // The dense solve did not certify row-stochasticity (e.g. an all-susceptible
    // component); iterate the recursion to the fixed point instead.
    Eigen::MatrixXd psi_k = Eigen::MatrixXd::Identity(n, n);
    constexpr long kMaxIterations = 1000000;
    for (long k = 0; k < kMaxIterations; ++k) {
        Eigen::MatrixXd next = anchored + profile.alpha.asDiagonal() * (W * psi_k);
        const double delta = (next - psi_k).lpNorm<Eigen::Infinity>();
        psi_k = std::move(next);
        if (delta < 1e-10) {
            psi.matrix_ = std::move(psi_k);
            psi.construction_ = PsiOperator::Construction::Iterative;
            return psi;
        }
    }
    throw NumericalError("psi_operator: K = inf recursion did not converge within cap");
}

}  // namespace perfodyn
