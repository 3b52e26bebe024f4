#include "perfodyn/equilibrium.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <functional>
#include <mutex>
#include <string>
#include <thread>

#include "perfodyn/errors.hpp"

namespace perfodyn {

namespace {

constexpr double kUnitRadiusMargin = 1e-9;

/// Static-free fan-out over grid indices. Each index writes its own slot, so
/// the result does not depend on the schedule.
void parallel_points(std::size_t count, int threads, const std::function<void(std::size_t)>& work) {
    if (threads <= 1 || count <= 1) {
        for (std::size_t i = 0; i < count; ++i) work(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr first_error;
    std::mutex error_mutex;
    auto worker = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= count) return;
            try {
                work(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!first_error) first_error = std::current_exception();
            }
        }
    };
    std::vector<std::thread> pool;
    const int spawn = static_cast<int>(std::min<std::size_t>(static_cast<std::size_t>(threads), count));
    pool.reserve(static_cast<std::size_t>(spawn));
    for (int t = 0; t < spawn; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
    if (first_error) std::rethrow_exception(first_error);
}

EquilibriumReport finish_report(Eigen::VectorXd x, EquilibriumReport::Method method,
                                const Eigen::VectorXd& x_star, const SusceptibilityProfile& profile,
                                const PsiOperator& psi, const AffinePolicy& policy) {
    const int n = static_cast<int>(x.size());
    EquilibriumReport report;
    const Eigen::VectorXd ones = Eigen::VectorXd::Ones(n);
    const Eigen::VectorXd x_init =
        (ones - profile.beta).cwiseProduct(x_star) + profile.beta.cwiseProduct(policy.M * x + policy.b);
    report.residual = (x - psi.apply(x_init)).lpNorm<Eigen::Infinity>();
    if (!std::isfinite(report.residual) || report.residual > 1e-8)
        throw NumericalError("ps_closed_form: fixed-point residual " + std::to_string(report.residual));
    report.x_ps = std::move(x);
    report.mean = report.x_ps.mean();
    report.variance = (report.x_ps.array() - report.mean).square().sum() / n;
    report.spread = report.x_ps.maxCoeff() - report.x_ps.minCoeff();
    report.method = method;
    if (report.spread < kConsensusSpreadTol) report.consensus_value = report.mean;
    return report;
}

/// x <- A x until the increments die out; the limit of A^t x0 for matrices
/// whose power limit exists. Throws on the oscillating (periodic) case.
Eigen::VectorXd iterate_to_limit(const Eigen::MatrixXd& a, Eigen::VectorXd x, double tol,
                                 long max_iter, const char* who) {
    for (long k = 0; k < max_iter; ++k) {
        Eigen::VectorXd next = a * x;
        const double delta = (next - x).lpNorm<Eigen::Infinity>();
        x = std::move(next);
        if (delta < tol) return x;
    }
    throw NumericalError(std::string(who) + ": power limit did not converge within cap");
}

}  // namespace

double spectral_radius_estimate(const Eigen::MatrixXd& a) {
    const int n = static_cast<int>(a.rows());
    Eigen::VectorXd x = Eigen::VectorXd::Constant(n, 1.0 / n);
    double rho = 0.0;
    for (int k = 0; k < 10000; ++k) {
        Eigen::VectorXd next = a * x;
        const double norm = next.norm();
        if (norm == 0.0) return 0.0;
        next /= norm;
        const double estimate = next.dot(a * next);
        if (std::abs(estimate - rho) < 1e-12) return std::abs(estimate);
        rho = estimate;
        x = std::move(next);
    }
    return std::abs(rho);
}

Eigen::VectorXd left_perron_vector(const Eigen::MatrixXd& a) {
    const int n = static_cast<int>(a.rows());
    Eigen::VectorXd y = Eigen::VectorXd::Constant(n, 1.0 / n);
    for (long k = 0; k < 200000; ++k) {
        Eigen::VectorXd next = a.transpose() * y;
        const double total = next.sum();
        if (total <= 0.0) throw NumericalError("left_perron_vector: nonpositive iterate");
        next /= total;
        const double delta = (next - y).lpNorm<Eigen::Infinity>();
        y = std::move(next);
        if (delta < 1e-13) return y;
    }
    throw NumericalError("left_perron_vector: power iteration did not converge");
}

EquilibriumReport ps_closed_form(const Eigen::VectorXd& x_star, const SusceptibilityProfile& profile,
                                 const PsiOperator& psi, const AffinePolicy& policy) {
    const int n = psi.size();
    if (x_star.size() != n || policy.size() != n)
        throw InvalidInputError("ps_closed_form: dimension mismatch");
    profile.validate(n);

    const Eigen::MatrixXd& Psi = psi.matrix();
    const Eigen::VectorXd ones = Eigen::VectorXd::Ones(n);
    const Eigen::MatrixXd coupling = Psi * profile.beta.asDiagonal() * policy.M;
    const Eigen::VectorXd forcing =
        Psi * ((ones - profile.beta).cwiseProduct(x_star) + profile.beta.cwiseProduct(policy.b));

    const double rho = spectral_radius_estimate(coupling);
    if (rho < 1.0 - kUnitRadiusMargin) {
        Eigen::VectorXd x =
            (Eigen::MatrixXd::Identity(n, n) - coupling).partialPivLu().solve(forcing);
        return finish_report(std::move(x), EquilibriumReport::Method::ClosedForm, x_star, profile, psi,
                             policy);
    }

    if (policy.kind == AffinePolicy::Kind::Perfect) {
        // Block elimination: the stochastic closure S of Psi L_b evolves by pure
        // averaging (beta = 1 through Psi's support there) and carries the
        // power-limit of its own block; the remaining rows solve a Schur-stable
        // system against it.
        const Eigen::MatrixXd a = Psi * profile.beta.asDiagonal();
        std::vector<char> in_s(static_cast<std::size_t>(n), 1);
        bool changed = true;
        while (changed) {
            changed = false;
            for (int i = 0; i < n; ++i) {
                if (!in_s[static_cast<std::size_t>(i)]) continue;
                double row = 0.0;
                for (int j = 0; j < n; ++j)
                    if (in_s[static_cast<std::size_t>(j)]) row += a(i, j);
                if (row < 1.0 - kUnitRadiusMargin) {
                    in_s[static_cast<std::size_t>(i)] = 0;
                    changed = true;
                }
            }
        }
        std::vector<int> block1, block2;
        for (int i = 0; i < n; ++i)
            (in_s[static_cast<std::size_t>(i)] ? block2 : block1).push_back(i);
        if (block2.empty())
            throw NumericalError("ps_closed_form: equilibrium family degenerate; use iterative run");

        const int n2 = static_cast<int>(block2.size());
        Eigen::MatrixXd a22(n2, n2);
        Eigen::VectorXd star2(n2);
        for (int r = 0; r < n2; ++r) {
            star2(r) = x_star(block2[static_cast<std::size_t>(r)]);
            for (int c = 0; c < n2; ++c)
                a22(r, c) = a(block2[static_cast<std::size_t>(r)], block2[static_cast<std::size_t>(c)]);
        }
        Eigen::VectorXd x2 = iterate_to_limit(a22, star2, 1e-12, 1000000, "ps_closed_form");

        Eigen::VectorXd x(n);
        for (int r = 0; r < n2; ++r) x(block2[static_cast<std::size_t>(r)]) = x2(r);
        if (!block1.empty()) {
            const int n1 = static_cast<int>(block1.size());
            Eigen::MatrixXd a11(n1, n1);
            Eigen::VectorXd rhs(n1);
            const Eigen::VectorXd base = Psi * (ones - profile.beta).cwiseProduct(x_star);
            for (int r = 0; r < n1; ++r) {
                const int i = block1[static_cast<std::size_t>(r)];
                rhs(r) = base(i);
                for (int c = 0; c < n2; ++c) rhs(r) += a(i, block2[static_cast<std::size_t>(c)]) * x2(c);
                for (int c = 0; c < n1; ++c) a11(r, c) = a(i, block1[static_cast<std::size_t>(c)]);
            }
            Eigen::VectorXd x1 = (Eigen::MatrixXd::Identity(n1, n1) - a11).partialPivLu().solve(rhs);
            for (int r = 0; r < n1; ++r) x(block1[static_cast<std::size_t>(r)]) = x1(r);
        }
        return finish_report(std::move(x), EquilibriumReport::Method::BlockForm, x_star, profile, psi,
                             policy);
    }

    if (policy.kind == AffinePolicy::Kind::MeanEstimation &&
        profile.beta.minCoeff() >= 1.0 - kUnitRadiusMargin) {
        // Fully platform-susceptible population: the observed block evolves by
        // the row-stochastic matrix B = R Psi E and settles on its Perron
        // projection; everyone else inherits the consensus.
        const auto& observed = policy.observed;
        const int m = static_cast<int>(observed.size());
        std::vector<char> is_observed(static_cast<std::size_t>(n), 0);
        for (int i : observed) is_observed[static_cast<std::size_t>(i)] = 1;
        Eigen::MatrixXd b(m, m);
        for (int r = 0; r < m; ++r) {
            const int i = observed[static_cast<std::size_t>(r)];
            double off_mass = 0.0;
            for (int u = 0; u < n; ++u)
                if (!is_observed[static_cast<std::size_t>(u)]) off_mass += Psi(i, u);
            for (int c = 0; c < m; ++c)
                b(r, c) = Psi(i, observed[static_cast<std::size_t>(c)]) + off_mass / m;
        }
        Eigen::VectorXd star_obs(m);
        for (int r = 0; r < m; ++r) star_obs(r) = x_star(observed[static_cast<std::size_t>(r)]);
        Eigen::VectorXd z = iterate_to_limit(b, star_obs, 1e-12, 1000000, "ps_closed_form");

        Eigen::VectorXd f(n);
        const double z_mean = z.mean();
        for (int i = 0; i < n; ++i) f(i) = z_mean;
        for (int r = 0; r < m; ++r) f(observed[static_cast<std::size_t>(r)]) = z(r);
        const Eigen::VectorXd x_init =
            (ones - profile.beta).cwiseProduct(x_star) + profile.beta.cwiseProduct(f);
        return finish_report(psi.apply(x_init), EquilibriumReport::Method::BlockForm, x_star, profile,
                             psi, policy);
    }

    // Remaining unit-radius families: settle by plain fixed-point iteration
    // when the retraining map still converges (e.g. custom rules whose power
    // limit exists), starting from the first observed response.
    {
        Eigen::VectorXd x = psi.apply(x_star);
        constexpr long kCap = 1000000;
        for (long k = 0; k < kCap; ++k) {
            Eigen::VectorXd next = coupling * x + forcing;
            const double delta = (next - x).lpNorm<Eigen::Infinity>();
            x = std::move(next);
            if (delta < 1e-12)
                return finish_report(std::move(x), EquilibriumReport::Method::Iterative, x_star,
                                     profile, psi, policy);
            if (!x.allFinite()) break;
        }
    }
    throw NumericalError("ps_closed_form: equilibrium family degenerate; use iterative run");
}

std::string rate_case_label(const SusceptibilityProfile& profile, const PsiOperator& psi) {
    profile.validate(psi.size());
    if ((profile.beta.array() < 1.0).all()) return "subunit-beta";
    const Eigen::MatrixXd coupling = psi.matrix() * profile.beta.asDiagonal();
    const double rho = spectral_radius_estimate(coupling);
    if (rho < 1.0 - kUnitRadiusMargin) return "unit-beta-subunit-radius";
    // rho = 1: the rate is the largest sub-unit eigenvalue magnitude.
    const Eigen::VectorXcd spectrum = coupling.eigenvalues();
    double best = -1.0;
    for (Eigen::Index i = 0; i < spectrum.size(); ++i) {
        const double mag = std::abs(spectrum(i));
        if (mag < 1.0 - kUnitRadiusMargin) best = std::max(best, mag);
    }
    if (best < 0.0) return "unit-beta-unit-radius; no sub-unit mode";
    return "unit-beta-unit-radius";
}

SpectralReport spectral_decomposition(const InfluenceMatrix& w, double alpha, double beta,
                                      int horizon) {
    const GraphProperties props = check_properties(w.graph());
    if (!props.regular || !props.connected)
        throw InvalidInputError("spectral_decomposition: requires a regular connected graph");
    if (!(alpha > 0.0 && alpha < 1.0))
        throw InvalidInputError("spectral_decomposition: alpha must lie in (0,1)");
    if (!(beta >= 0.0 && beta < 1.0))
        throw InvalidInputError("spectral_decomposition: beta must lie in [0,1)");
    if (horizon < 0 && horizon != kInfiniteHorizon)
        throw InvalidInputError("spectral_decomposition: invalid horizon");

    const int n = w.size();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(w.matrix());
    if (eig.info() != Eigen::Success)
        throw NumericalError("spectral_decomposition: eigensolver failed");

    SpectralReport report;
    report.alpha = alpha;
    report.beta = beta;
    report.horizon = horizon;
    report.mu.resize(n);
    report.v.resize(n, n);
    // Ascending from the solver; report descending so the Perron mode is first.
    for (int i = 0; i < n; ++i) {
        report.mu(i) = eig.eigenvalues()(n - 1 - i);
        report.v.col(i) = eig.eigenvectors().col(n - 1 - i);
    }
    report.lambda.resize(n);
    for (int i = 0; i < n; ++i) {
        const double mu = report.mu(i);
        const double base = (1.0 - alpha) / (1.0 - alpha * mu);
        report.lambda(i) = horizon == kInfiniteHorizon
                               ? base
                               : base + (1.0 - base) * std::pow(alpha * mu, horizon);
    }
    report.coefficients.resize(n);
    for (int i = 0; i < n; ++i) report.coefficients(i) = report.lambda(i) / (1.0 - beta * report.lambda(i));
    // Regular graph: W and Psi_K are symmetric and doubly stochastic.
    report.y = Eigen::VectorXd::Constant(n, 1.0 / n);
    return report;
}

Eigen::VectorXd reconstruct_from_spectrum(const SpectralReport& report, const Eigen::VectorXd& x_star,
                                          double beta) {
    if (x_star.size() != report.mu.size())
        throw InvalidInputError("reconstruct_from_spectrum: dimension mismatch");
    if (beta >= 1.0)
        throw InvalidInputError("reconstruct_from_spectrum: beta = 1 is singular; use consensus_limit");
    const int n = static_cast<int>(x_star.size());
    Eigen::VectorXd x = Eigen::VectorXd::Zero(n);
    const Eigen::VectorXd anchored = (1.0 - beta) * x_star;
    for (int i = 0; i < n; ++i) {
        const double coeff = report.lambda(i) / (1.0 - beta * report.lambda(i));
        x += coeff * report.v.col(i).dot(anchored) * report.v.col(i);
    }
    return x;
}

SweepTable variance_sweep(const Eigen::VectorXd& x_star, const InfluenceMatrix& w, double alpha,
                          const std::vector<double>& betas, int horizon, int threads) {
    const int n = w.size();
    const GraphProperties props = check_properties(w.graph());
    const AffinePolicy policy = perfect_policy(n);
    const SusceptibilityProfile base = SusceptibilityProfile::uniform(n, alpha, 0.0);
    const PsiOperator psi = psi_operator(base, w, horizon);

    SweepTable table;
    table.monotonicity_guaranteed = props.regular && props.connected && alpha > 0.0 && alpha < 1.0;
    table.points.resize(betas.size());
    parallel_points(betas.size(), threads, [&](std::size_t i) {
        SusceptibilityProfile profile = base;
        profile.beta.setConstant(betas[i]);
        const EquilibriumReport report = ps_closed_form(x_star, profile, psi, policy);
        table.points[i] = {betas[i], report.mean, report.variance};
    });
    return table;
}

SweepTable variance_sweep_alpha(const Eigen::VectorXd& x_star, const InfluenceMatrix& w,
                                const std::vector<double>& alphas, double beta, int horizon,
                                int threads) {
    const int n = w.size();
    const GraphProperties props = check_properties(w.graph());
    const AffinePolicy policy = perfect_policy(n);

    SweepTable table;
    table.monotonicity_guaranteed = props.regular && props.connected && beta > 0.0 && beta < 1.0;
    table.points.resize(alphas.size());
    parallel_points(alphas.size(), threads, [&](std::size_t i) {
        const SusceptibilityProfile profile = SusceptibilityProfile::uniform(n, alphas[i], beta);
        const PsiOperator psi = psi_operator(profile, w, horizon);
        const EquilibriumReport report = ps_closed_form(x_star, profile, psi, policy);
        table.points[i] = {alphas[i], report.mean, report.variance};
    });
    return table;
}

ConsensusReport consensus_limit(const Eigen::VectorXd& x_star, const SusceptibilityProfile& profile,
                                const PsiOperator& psi) {
    const int n = psi.size();
    if (x_star.size() != n) throw InvalidInputError("consensus_limit: dimension mismatch");
    profile.validate(n);

    ConsensusReport report;
    report.preconditions_hold =
        (profile.alpha.array() > 0.0).all() && (profile.alpha.array() < 1.0).all();
    report.y = left_perron_vector(psi.matrix());
    report.c_star = report.y.dot(x_star);

    // Probe the limit along beta_i(delta) = 1 - delta * r_i, ratios from the
    // profile (homogeneous profiles reduce to beta = 1 - delta).
    Eigen::VectorXd ratios = Eigen::VectorXd::Ones(n) - profile.beta;
    const double top = ratios.maxCoeff();
    if (top > 0.0)
        ratios /= top;
    else
        ratios.setOnes();

    const AffinePolicy policy = perfect_policy(n);
    SusceptibilityProfile probe = profile;
    report.deltas = {0.1, 0.01, 0.001};
    for (std::size_t k = 0; k < report.deltas.size(); ++k) {
        probe.beta = Eigen::VectorXd::Ones(n) - report.deltas[k] * ratios;
        const EquilibriumReport eq = ps_closed_form(x_star, probe, psi, policy);
        report.spreads[k] = eq.spread;
    }
    report.spread_shrinks =
        report.spreads[0] > report.spreads[1] && report.spreads[1] > report.spreads[2];
    return report;
}

EquilibriumReport mean_estimation_equilibrium(const Eigen::VectorXd& x_star,
                                              const SusceptibilityProfile& profile,
                                              const PsiOperator& psi,
                                              const std::vector<int>& observed) {
    return ps_closed_form(x_star, profile, psi, mean_estimation_policy(observed, psi.size()));
}

std::pair<EquilibriumReport, EquilibriumReport> mean_estimation_counterfactual(
    const Eigen::VectorXd& x_star, const SusceptibilityProfile& profile, const PsiOperator& psi,
    const std::vector<int>& observed, int node, double bump) {
    if (std::find(observed.begin(), observed.end(), node) == observed.end())
        throw InvalidInputError("mean_estimation_counterfactual: perturbed node must be observed");
    Eigen::VectorXd bumped = x_star;
    bumped(node) = std::clamp(bumped(node) + bump, 0.0, 1.0);
    return {mean_estimation_equilibrium(x_star, profile, psi, observed),
            mean_estimation_equilibrium(bumped, profile, psi, observed)};
}

SteeringReport steering_closed_form(int n, double alpha, double beta_j, double gamma, double s) {
    if (n < 2) throw InvalidInputError("steering_closed_form: need at least two nodes");
    if (!(alpha > 0.0 && alpha < 1.0))
        throw InvalidInputError("steering_closed_form: alpha must lie in (0,1)");
    if (!(gamma >= 0.0 && gamma <= 1.0))
        throw InvalidInputError("steering_closed_form: gamma must lie in [0,1]");
    if (!(beta_j >= 0.0 && beta_j <= 1.0) || !(s >= 0.0 && s <= 1.0))
        throw InvalidInputError("steering_closed_form: beta_j and s must lie in [0,1]");

    SteeringReport report;
    report.psi1 = (1.0 - alpha) * (n - 1.0) / (n - 1.0 + alpha);
    report.psi2 = alpha / (n - 1.0 + alpha);
    const double p1 = report.psi1;
    const double p2 = report.psi2;
    // Denominator of the three-term decomposition. Derived from the coordinate
    // fixed-point equations and verified against dense solves of the steering
    // fixed point at machine precision.
    const double denom = 1.0 - gamma + 2.0 * gamma * p2;

    const double coef_j = beta_j * s * (1.0 - gamma + gamma * p2) * p1 / denom;
    const double coef_l = -beta_j * s * gamma * p1 * p2 / denom;
    const double coef_all = beta_j * s * p2 / denom;

    report.x_ps = Eigen::VectorXd::Constant(n, coef_all);
    report.x_ps(0) += coef_j;
    report.x_ps(1) += coef_l;
    report.delta_l = report.x_ps(1) - beta_j * s * p2;  // gamma = 0 baseline
    report.mean = beta_j * s * (1.0 - gamma * p1) / (n * denom);
    return report;
}

double degroot_consensus_value(const Eigen::VectorXd& x_star, const Eigen::VectorXd& beta,
                               const InfluenceMatrix& w) {
    const int n = w.size();
    if (x_star.size() != n || beta.size() != n)
        throw InvalidInputError("degroot_consensus_value: dimension mismatch");
    const GraphProperties props = check_properties(w.graph());
    if (!props.connected) throw InvalidInputError("degroot_consensus_value: graph not connected");
    if (!props.aperiodic)
        throw InvalidInputError("degroot_consensus_value: bipartite graph is not primitive");
    if (!props.regular)
        throw InvalidInputError("degroot_consensus_value: W must be doubly stochastic (regular graph)");
    for (Eigen::Index i = 0; i < beta.size(); ++i)
        if (!(beta(i) >= 0.0 && beta(i) <= 1.0))
            throw InvalidInputError("degroot_consensus_value: beta out of [0,1]");

    const double beta_total = beta.sum();
    if (std::abs(n - beta_total) < 1e-12) return x_star.mean();
    return (Eigen::VectorXd::Ones(n) - beta).cwiseProduct(x_star).sum() / (n - beta_total);
}

double sensitivity(const SusceptibilityProfile& profile, const PsiOperator& psi) {
    profile.validate(psi.size());
    const double beta_norm = profile.beta.maxCoeff();
    if (beta_norm == 0.0) return 0.0;
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(psi.matrix());
    return beta_norm * svd.singularValues()(0);
}

}  // namespace perfodyn
