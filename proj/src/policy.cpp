#include "perfodyn/policy.hpp"

#include <algorithm>
#include <cmath>

#include "perfodyn/errors.hpp"
#include "perfodyn/rng.hpp"

namespace perfodyn {

AffinePolicy perfect_policy(int n) {
    if (n < 1) throw InvalidInputError("perfect_policy: empty population");
    AffinePolicy p;
    p.kind = AffinePolicy::Kind::Perfect;
    p.M = Eigen::MatrixXd::Identity(n, n);
    p.b = Eigen::VectorXd::Zero(n);
    return p;
}

AffinePolicy mean_estimation_policy(const std::vector<int>& observed, int n) {
    if (observed.empty()) throw InvalidInputError("mean_estimation_policy: empty observed set");
    std::vector<char> is_observed(static_cast<std::size_t>(n), 0);
    for (int i : observed) {
        if (i < 0 || i >= n) throw InvalidInputError("mean_estimation_policy: node out of range");
        is_observed[static_cast<std::size_t>(i)] = 1;
    }
    AffinePolicy p;
    p.kind = AffinePolicy::Kind::MeanEstimation;
    p.M = Eigen::MatrixXd::Zero(n, n);
    p.b = Eigen::VectorXd::Zero(n);
    const double inv = 1.0 / static_cast<double>(observed.size());
    for (int i = 0; i < n; ++i) {
        if (is_observed[static_cast<std::size_t>(i)]) {
            p.M(i, i) = 1.0;
        } else {
            for (int j : observed) p.M(i, j) = inv;
        }
    }
    p.observed = observed;
    std::sort(p.observed.begin(), p.observed.end());
    p.observed.erase(std::unique(p.observed.begin(), p.observed.end()), p.observed.end());
    return p;
}

AffinePolicy steering_policy(int j, double s, int n) {
    if (j < 0 || j >= n) throw InvalidInputError("steering_policy: node out of range");
    if (!(s >= 0.0 && s <= 1.0)) throw InvalidInputError("steering_policy: target outside [0,1]");
    AffinePolicy p;
    p.kind = AffinePolicy::Kind::Steering;
    p.M = Eigen::MatrixXd::Identity(n, n);
    p.M(j, j) = 0.0;
    p.b = Eigen::VectorXd::Zero(n);
    p.b(j) = s;
    p.steer_node = j;
    p.steer_target = s;
    return p;
}

Eigen::VectorXd apply_policy(const AffinePolicy& p, const Eigen::VectorXd& x_ex) {
    if (x_ex.size() != p.M.cols()) throw InvalidInputError("apply_policy: dimension mismatch");
    Eigen::VectorXd f = p.M * x_ex + p.b;
    for (Eigen::Index i = 0; i < f.size(); ++i) {
        if (!std::isfinite(f(i)) || f(i) < -1e-12 || f(i) > 1.0 + 1e-12)
            throw NumericalError("apply_policy: prediction left [0,1]");
        f(i) = std::clamp(f(i), 0.0, 1.0);
    }
    return f;
}

namespace {

void check_fit_inputs(const FeatureTable& features, const Eigen::VectorXd& targets,
                      const std::vector<int>& observed) {
    if (features.nodes() != targets.size())
        throw InvalidInputError("fit: feature/target dimension mismatch");
    if (observed.empty()) throw InvalidInputError("fit: empty observed set");
    for (int i : observed)
        if (i < 0 || i >= features.nodes()) throw InvalidInputError("fit: observed node out of range");
    if (!features.features.allFinite()) throw InvalidInputError("fit: non-finite features");
}

}  // namespace

LearnedPredictor fit_ols(const FeatureTable& features, const Eigen::VectorXd& targets,
                         const std::vector<int>& observed, double ridge) {
    check_fit_inputs(features, targets, observed);
    const int d = features.dim();
    const int m = static_cast<int>(observed.size());

    Eigen::MatrixXd design(m, d + 1);
    Eigen::VectorXd y(m);
    for (int r = 0; r < m; ++r) {
        design.row(r).head(d) = features.features.row(observed[static_cast<std::size_t>(r)]);
        design(r, d) = 1.0;
        y(r) = targets(observed[static_cast<std::size_t>(r)]);
    }
    Eigen::MatrixXd gram = design.transpose() * design;
    gram.diagonal().array() += ridge;
    LearnedPredictor p;
    p.kind_ = LearnedPredictor::Kind::Ols;
    p.ols_weights_ = gram.ldlt().solve(design.transpose() * y);
    p.fitted_ = true;
    return p;
}

LearnedPredictor fit_mlp(const FeatureTable& features, const Eigen::VectorXd& targets,
                         const std::vector<int>& observed, const MlpHyper& hyper) {
    check_fit_inputs(features, targets, observed);
    if (hyper.width < 1 || hyper.epochs < 0 || hyper.learning_rate <= 0.0)
        throw InvalidInputError("fit_mlp: invalid hyperparameters");
    const int d = features.dim();
    const int m = static_cast<int>(observed.size());
    const int h = hyper.width;

    Eigen::MatrixXd x(m, d);
    Eigen::VectorXd y(m);
    for (int r = 0; r < m; ++r) {
        x.row(r) = features.features.row(observed[static_cast<std::size_t>(r)]);
        y(r) = targets(observed[static_cast<std::size_t>(r)]);
    }

    LearnedPredictor p;
    p.kind_ = LearnedPredictor::Kind::Mlp;
    Rng rng(hyper.seed);
    auto init = [&](Eigen::Index rows, Eigen::Index cols) {
        Eigen::MatrixXd w(rows, cols);
        for (Eigen::Index i = 0; i < rows; ++i)
            for (Eigen::Index j = 0; j < cols; ++j) w(i, j) = rng.uniform(-0.1, 0.1);
        return w;
    };
    Eigen::MatrixXd w1 = init(h, d);
    Eigen::VectorXd b1 = init(h, 1);
    Eigen::VectorXd w2 = init(h, 1);
    double b2 = rng.uniform(-0.1, 0.1);

    p.loss_history_.reserve(static_cast<std::size_t>(hyper.epochs) + 1);
    for (int epoch = 0; epoch <= hyper.epochs; ++epoch) {
        Eigen::MatrixXd pre = (x * w1.transpose()).rowwise() + b1.transpose();  // m x h
        Eigen::MatrixXd hid = pre.array().tanh();
        Eigen::VectorXd out = hid * w2 + Eigen::VectorXd::Constant(m, b2);
        Eigen::VectorXd err = out - y;
        const double loss = err.squaredNorm() / m;
        p.loss_history_.push_back(loss);
        if (!std::isfinite(loss)) {
            p.diverged_ = true;
            break;
        }
        if (epoch == hyper.epochs) break;

        // d(loss)/d(out) = 2 err / m
        Eigen::VectorXd grad_out = (2.0 / m) * err;
        Eigen::VectorXd grad_w2 = hid.transpose() * grad_out;
        const double grad_b2 = grad_out.sum();
        Eigen::MatrixXd grad_hid = grad_out * w2.transpose();                  // m x h
        Eigen::MatrixXd grad_pre = grad_hid.array() * (1.0 - hid.array().square());
        Eigen::MatrixXd grad_w1 = grad_pre.transpose() * x;
        Eigen::VectorXd grad_b1 = grad_pre.colwise().sum();

        w1 -= hyper.learning_rate * grad_w1;
        b1 -= hyper.learning_rate * grad_b1;
        w2 -= hyper.learning_rate * grad_w2;
        b2 -= hyper.learning_rate * grad_b2;
    }

    if (!p.diverged_ && p.loss_history_.size() >= 2 &&
        p.loss_history_.back() > 1.1 * p.loss_history_.front() + 1e-9)
        p.diverged_ = true;  // trained loss ended above where it started

    p.mlp_w1_ = std::move(w1);
    p.mlp_b1_ = std::move(b1);
    p.mlp_w2_ = std::move(w2);
    p.mlp_b2_ = b2;
    p.fitted_ = true;
    return p;
}

double LearnedPredictor::raw_predict(const Eigen::VectorXd& row) const {
    if (!fitted_) throw InvalidInputError("predict: model not fitted");
    if (kind_ == Kind::Ols) {
        if (row.size() + 1 != ols_weights_.size())
            throw InvalidInputError("predict: feature dimension mismatch");
        return ols_weights_.head(row.size()).dot(row) + ols_weights_(row.size());
    }
    if (row.size() != mlp_w1_.cols()) throw InvalidInputError("predict: feature dimension mismatch");
    Eigen::VectorXd hid = (mlp_w1_ * row + mlp_b1_).array().tanh();
    return mlp_w2_.dot(hid) + mlp_b2_;
}

Eigen::VectorXd predict(const LearnedPredictor& p, const FeatureTable& features,
                        const std::vector<int>& nodes) {
    Eigen::VectorXd out(static_cast<Eigen::Index>(nodes.size()));
    for (std::size_t k = 0; k < nodes.size(); ++k) {
        const int i = nodes[k];
        if (i < 0 || i >= features.nodes()) throw InvalidInputError("predict: node out of range");
        out(static_cast<Eigen::Index>(k)) =
            std::clamp(p.raw_predict(features.features.row(i).transpose()), 0.0, 1.0);
    }
    return out;
}

}  // namespace perfodyn
