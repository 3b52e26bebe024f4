#include "oracles.hpp"

#include <algorithm>
#include <cmath>

namespace oracle {

namespace {

double dot(const std::vector<double>& x, const std::vector<double>& y) {
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) s += x[i] * y[i];
    return s;
}

double norm(const std::vector<double>& x) { return std::sqrt(dot(x, x)); }

double max_abs_diff(const std::vector<double>& x, const std::vector<double>& y) {
    double m = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) m = std::max(m, std::abs(x[i] - y[i]));
    return m;
}

std::vector<double> mat_vec(const Mat& a, const std::vector<double>& x) {
    std::vector<double> y(static_cast<std::size_t>(a.rows), 0.0);
    for (int i = 0; i < a.rows; ++i) {
        double s = 0.0;
        for (int j = 0; j < a.cols; ++j) s += a.at(i, j) * x[static_cast<std::size_t>(j)];
        y[static_cast<std::size_t>(i)] = s;
    }
    return y;
}

}  // namespace

std::vector<double> dense_solve(Mat a, std::vector<double> b) {
    const int n = a.rows;
    if (a.cols != n || static_cast<int>(b.size()) != n)
        throw OracleFailure("dense_solve: shape mismatch");
    for (int col = 0; col < n; ++col) {
        int pivot = col;
        for (int r = col + 1; r < n; ++r)
            if (std::abs(a.at(r, col)) > std::abs(a.at(pivot, col))) pivot = r;
        if (std::abs(a.at(pivot, col)) < 1e-14)
            throw OracleFailure("dense_solve: singular to working precision");
        if (pivot != col) {
            for (int c = 0; c < n; ++c) std::swap(a.at(pivot, c), a.at(col, c));
            std::swap(b[static_cast<std::size_t>(pivot)], b[static_cast<std::size_t>(col)]);
        }
        for (int r = col + 1; r < n; ++r) {
            const double factor = a.at(r, col) / a.at(col, col);
            if (factor == 0.0) continue;
            for (int c = col; c < n; ++c) a.at(r, c) -= factor * a.at(col, c);
            b[static_cast<std::size_t>(r)] -= factor * b[static_cast<std::size_t>(col)];
        }
    }
    std::vector<double> x(static_cast<std::size_t>(n), 0.0);
    for (int r = n - 1; r >= 0; --r) {
        double s = b[static_cast<std::size_t>(r)];
        for (int c = r + 1; c < n; ++c) s -= a.at(r, c) * x[static_cast<std::size_t>(c)];
        x[static_cast<std::size_t>(r)] = s / a.at(r, r);
    }
    return x;
}

namespace {

struct PowerResult {
    double value = 0.0;
    std::vector<double> vec;
    bool period_two = false;
};

PowerResult power_iteration(const Mat& a, const OracleConfig& cfg) {
    const int n = a.rows;
    std::vector<double> x(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) x[static_cast<std::size_t>(i)] = 1.0 + 0.01 * (i + 1);  // fixed, non-symmetric start
    double nx = norm(x);
    for (double& v : x) v /= nx;

    std::vector<double> prev = x;
    double value = 0.0;
    for (long k = 0; k < cfg.max_iter; ++k) {
        std::vector<double> y = mat_vec(a, x);
        const double ny = norm(y);
        if (ny < 1e-300) return {0.0, x, false};
        for (double& v : y) v /= ny;
        value = dot(y, mat_vec(a, y));
        if (max_abs_diff(y, x) < cfg.tol || max_abs_diff(y, prev) < cfg.tol) {
            // Stable after two steps but not one: sign-alternating limit.
            const bool flip = max_abs_diff(y, x) >= cfg.tol;
            return {value, y, flip};
        }
        prev = x;
        x = std::move(y);
    }
    throw OracleFailure("power iteration did not converge");
}

}  // namespace

EigResult eig(const Mat& a, const OracleConfig& cfg) {
    const int n = a.rows;
    if (n > 64) throw OracleFailure("eig oracle capped at n = 64");
    EigResult result;

    const PowerResult dominant = power_iteration(a, cfg);
    result.period_two = dominant.period_two;
    result.right = dominant.vec;
    result.dominant = dominant.value;

    if (!dominant.period_two) {
        Mat at(n, n);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) at.at(i, j) = a.at(j, i);
        const PowerResult left = power_iteration(at, cfg);
        result.left = left.vec;
        double total = 0.0;
        for (double v : result.left) total += v;
        if (std::abs(total) > 1e-12)
            for (double& v : result.left) v /= total;
    }

    // Full spectrum by deflation; valid for symmetric input.
    Mat work = a;
    auto deflate = [&](const std::vector<double>& v, double lambda) {
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j)
                work.at(i, j) -= lambda * v[static_cast<std::size_t>(i)] * v[static_cast<std::size_t>(j)];
    };
    int guard = 0;
    while (static_cast<int>(result.eigenvalues.size()) < n && ++guard <= 2 * n) {
        PowerResult step;
        try {
            step = power_iteration(work, cfg);
        } catch (const OracleFailure&) {
            break;
        }
        if (step.period_two) {
            // Sign-alternating limit: either a lone negative eigenvalue or a
            // +/- pair. Split the two-cycle into its eigenvector components
            // and keep whichever survive.
            const double magnitude =
                std::sqrt(std::abs(dot(step.vec, mat_vec(work, mat_vec(work, step.vec)))));
            const std::vector<double> img = mat_vec(work, step.vec);
            std::vector<double> plus(step.vec.size()), minus(step.vec.size());
            for (std::size_t i = 0; i < step.vec.size(); ++i) {
                plus[i] = magnitude * step.vec[i] + img[i];
                minus[i] = magnitude * step.vec[i] - img[i];
            }
            bool recorded = false;
            for (auto* v : {&plus, &minus}) {
                const double nv = norm(*v);
                if (nv < 1e-9 * std::max(magnitude, 1e-30)) continue;
                for (double& e : *v) e /= nv;
                const double lambda = dot(*v, mat_vec(work, *v));
                result.eigenvalues.push_back(lambda);
                deflate(*v, lambda);
                recorded = true;
            }
            if (!recorded) break;
            continue;
        }
        result.eigenvalues.push_back(step.value);
        deflate(step.vec, step.value);
    }
    std::sort(result.eigenvalues.begin(), result.eigenvalues.end(),
              [](double x, double y) { return std::abs(x) > std::abs(y); });
    return result;
}

std::vector<double> fixed_point(const std::vector<double>& x_star, const std::vector<double>& alpha,
                                const std::vector<double>& beta,
                                const std::vector<std::vector<int>>& adjacency, int steps,
                                const Mat& policy_m, const std::vector<double>& policy_b,
                                const OracleConfig& cfg) {
    const std::size_t n = x_star.size();
    auto peer_average = [&](const std::vector<double>& x) {
        std::vector<double> y(n, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            double s = 0.0;
            for (int j : adjacency[i]) s += x[static_cast<std::size_t>(j)];
            y[i] = s / static_cast<double>(adjacency[i].size());
        }
        return y;
    };
    auto peer_rounds = [&](const std::vector<double>& x0) {
        std::vector<double> x = x0;
        if (steps >= 0) {
            for (int k = 0; k < steps; ++k) {
                std::vector<double> avg = peer_average(x);
                for (std::size_t i = 0; i < n; ++i)
                    x[i] = (1.0 - alpha[i]) * x0[i] + alpha[i] * avg[i];
            }
            return x;
        }
        for (long k = 0; k < cfg.max_iter; ++k) {
            std::vector<double> avg = peer_average(x);
            std::vector<double> next(n);
            for (std::size_t i = 0; i < n; ++i)
                next[i] = (1.0 - alpha[i]) * x0[i] + alpha[i] * avg[i];
            const double delta = max_abs_diff(next, x);
            x = std::move(next);
            if (delta < 1e-14) return x;
        }
        throw OracleFailure("fixed_point: inner peer loop did not converge");
    };
    auto model = [&](const std::vector<double>& x) {
        std::vector<double> f = mat_vec(policy_m, x);
        for (std::size_t i = 0; i < n; ++i) f[i] += policy_b[i];
        return f;
    };

    std::vector<double> f = model(x_star);
    std::vector<double> x_ex(n, 0.0);
    for (long t = 0; t < cfg.max_iter; ++t) {
        std::vector<double> x_init(n);
        for (std::size_t i = 0; i < n; ++i)
            x_init[i] = (1.0 - beta[i]) * x_star[i] + beta[i] * f[i];
        x_ex = peer_rounds(x_init);
        std::vector<double> f_next = model(x_ex);
        const double delta = max_abs_diff(f_next, f);
        f = std::move(f_next);
        if (delta < cfg.tol) return x_ex;
    }
    throw OracleFailure("fixed_point: retraining loop did not converge within cap");
}

double finite_difference(const std::function<double(double)>& fn, double at, double h) {
    auto central = [&](double step) {
        const double hi = fn(at + step);
        const double lo = fn(at - step);
        if (!std::isfinite(hi) || !std::isfinite(lo))
            throw OracleFailure("finite_difference: non-finite evaluation");
        return (hi - lo) / (2.0 * step);
    };
    const double coarse = central(h);
    const double fine = central(h / 2.0);
    // Richardson refinement for the O(h^2) central stencil.
    const double refined = (4.0 * fine - coarse) / 3.0;
    const double scale = std::max({1.0, std::abs(coarse), std::abs(fine)});
    if (std::abs(fine - coarse) > 1e-3 * scale)
        throw OracleFailure("finite_difference: estimates at h and h/2 disagree");
    return refined;
}

}  // namespace oracle
