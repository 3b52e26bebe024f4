#include "perfodyn/loop.hpp"

#include <cmath>

#include "perfodyn/errors.hpp"
#include "perfodyn/rng.hpp"

namespace perfodyn {

namespace {

Eigen::VectorXd learned_predictions(const LearnedPolicyBundle& bundle, const Eigen::VectorXd& data,
                                    int step, bool& diverged) {
    const int n = static_cast<int>(data.size());
    LearnedPredictor model;
    if (bundle.kind == LearnedPolicyBundle::Kind::Ols) {
        model = fit_ols(bundle.features, data, bundle.observed, bundle.ridge);
    } else {
        MlpHyper hyper = bundle.mlp;
        hyper.seed = Rng::substream(bundle.seed, static_cast<std::uint64_t>(step)).next_u64();
        model = fit_mlp(bundle.features, data, bundle.observed, hyper);
    }
    diverged = diverged || model.diverged();
    std::vector<int> all(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) all[static_cast<std::size_t>(i)] = i;
    Eigen::VectorXd f = predict(model, bundle.features, all);
    if (bundle.echo_observed)
        for (int i : bundle.observed) f(i) = data(i);
    return f;
}

}  // namespace

Trajectory run(const LoopConfig& cfg, const InfluenceMatrix& w) {
    const int n = w.size();
    if (cfg.x_star.size() != n) throw InvalidInputError("run: innate opinion dimension mismatch");
    cfg.profile.validate(n);
    validate_opinion_vector(cfg.x_star, "run: innate opinions");
    if (cfg.t_max < 1) throw InvalidInputError("run: t_max must be >= 1");
    if (!(cfg.tol > 0.0)) throw InvalidInputError("run: tol must be positive");

    const Eigen::VectorXd anchored_star =
        (Eigen::VectorXd::Ones(n) - cfg.profile.beta).cwiseProduct(cfg.x_star);

    bool diverged = false;
    auto algo = [&](const Eigen::VectorXd& data, int step) -> Eigen::VectorXd {
        if (const auto* affine = std::get_if<AffinePolicy>(&cfg.policy)) {
            if (affine->size() != n) throw InvalidInputError("run: policy dimension mismatch");
            return apply_policy(*affine, data);
        }
        return learned_predictions(std::get<LearnedPolicyBundle>(cfg.policy), data, step, diverged);
    };
    auto peer_response = [&](const Eigen::VectorXd& x_init) {
        return cfg.horizon == kInfiniteHorizon ? fj_equilibrium(x_init, cfg.profile, w)
                                               : fj_iterate(x_init, cfg.profile, w, cfg.horizon);
    };

    Trajectory tr;
    Eigen::VectorXd f = algo(cfg.x_star, 0);
    bool converged = false;
    for (int t = 1;; ++t) {
        Eigen::VectorXd x_init = anchored_star + cfg.profile.beta.cwiseProduct(f);
        Eigen::VectorXd x_ex = peer_response(x_init);
        if (cfg.record_full) {
            tr.records.push_back({x_init, x_ex, f});
        } else {
            tr.records.assign(1, {x_init, x_ex, f});
        }
        tr.t_stop = t;
        if (converged || t == cfg.t_max) break;
        Eigen::VectorXd f_next = algo(x_ex, t);
        tr.residuals.push_back((f_next - f).lpNorm<Eigen::Infinity>());
        converged = tr.residuals.back() < cfg.tol;
        f = std::move(f_next);
    }
    tr.converged = converged;
    tr.policy_diverged = diverged;
    return tr;
}

std::pair<bool, double> detect_stability(const Trajectory& tr, double tol) {
    if (tr.residuals.empty())
        throw InvalidInputError("detect_stability: needs at least two retraining steps");
    const double last = tr.residuals.back();
    return {last < tol, last};
}

RateEstimate estimate_rate(const Trajectory& tr, const Eigen::VectorXd& x_ps) {
    if (tr.records.size() != static_cast<std::size_t>(tr.t_stop))
        throw InvalidInputError("estimate_rate: needs a fully recorded trajectory");

    constexpr double kErrorFloor = 1e-13;
    std::vector<std::pair<int, double>> usable;  // (t, log error)
    for (int t = 1; t <= tr.t_stop; ++t) {
        const double err = (tr.records[static_cast<std::size_t>(t - 1)].x_ex - x_ps).norm();
        if (err > kErrorFloor) usable.emplace_back(t, std::log(err));
    }
    // Drop the transient: the first 20% of recorded steps.
    const int skip = tr.t_stop / 5;
    while (!usable.empty() && usable.front().first <= skip) usable.erase(usable.begin());

    RateEstimate est;
    if (usable.size() < 4) {
        est.exact_convergence = true;
        est.exact_step = usable.empty() ? 1 : usable.back().first + 1;
        return est;
    }

    double st = 0, sl = 0, stt = 0, stl = 0;
    const double m = static_cast<double>(usable.size());
    for (const auto& [t, l] : usable) {
        st += t;
        sl += l;
        stt += static_cast<double>(t) * t;
        stl += t * l;
    }
    const double slope = (m * stl - st * sl) / (m * stt - st * st);
    const double intercept = (sl - slope * st) / m;
    double ss_res = 0, ss_tot = 0;
    for (const auto& [t, l] : usable) {
        const double fit = slope * t + intercept;
        ss_res += (l - fit) * (l - fit);
        ss_tot += (l - sl / m) * (l - sl / m);
    }
    est.c_hat = std::exp(slope);
    est.r2 = ss_tot > 0 ? 1.0 - ss_res / ss_tot : 1.0;
    est.window_begin = usable.front().first;
    est.window_end = usable.back().first;
    return est;
}

}  // namespace perfodyn
