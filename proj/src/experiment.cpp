#include "perfodyn/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>

#include "perfodyn/errors.hpp"
#include "perfodyn/rng.hpp"

using nlohmann::json;

namespace perfodyn {

Eigen::VectorXd sample_susceptibilities(int n, double mean, double stddev, double clip_lo,
                                        double clip_hi, std::uint64_t seed) {
    if (!(clip_lo < clip_hi)) throw InvalidInputError("sample_susceptibilities: clip_lo must be < clip_hi");
    Rng rng(seed);
    Eigen::VectorXd out(n);
    for (int i = 0; i < n; ++i)
        out(i) = std::clamp(rng.normal(mean, stddev), clip_lo, clip_hi);
    return out;
}

namespace {

Graph path_or_cycle(int n, bool close) {
    std::vector<std::pair<int, int>> edges;
    for (int i = 0; i + 1 < n; ++i) edges.emplace_back(i, i + 1);
    if (close) edges.emplace_back(n - 1, 0);
    return Graph::from_edges(n, edges);
}

Graph preferential_attachment(int n, int m, Rng& rng) {
    if (m < 1) throw InvalidInputError("generate_network: attachment count must be >= 1");
    if (n < m + 2) throw InvalidInputError("generate_network: need n > m + 1 for preferential attachment");
    std::vector<std::pair<int, int>> edges;
    std::vector<int> endpoints;  // degree-proportional sampling pool
    for (int i = 0; i <= m; ++i)
        for (int j = i + 1; j <= m; ++j) {
            edges.emplace_back(i, j);
            endpoints.push_back(i);
            endpoints.push_back(j);
        }
    for (int v = m + 1; v < n; ++v) {
        std::set<int> targets;
        while (static_cast<int>(targets.size()) < m)
            targets.insert(endpoints[rng.uniform_index(endpoints.size())]);
        for (int u : targets) {
            edges.emplace_back(u, v);
            endpoints.push_back(u);
            endpoints.push_back(v);
        }
    }
    return Graph::from_edges(n, edges);
}

Graph random_geometric(int n, double radius, Rng& rng) {
    if (radius <= 0.0) throw InvalidInputError("generate_network: radius must be positive");
    std::vector<double> px(static_cast<std::size_t>(n)), py(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        px[static_cast<std::size_t>(i)] = rng.uniform01();
        py[static_cast<std::size_t>(i)] = rng.uniform01();
    }
    std::vector<std::pair<int, int>> edges;
    const double r2 = radius * radius;
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) {
            const double dx = px[static_cast<std::size_t>(i)] - px[static_cast<std::size_t>(j)];
            const double dy = py[static_cast<std::size_t>(i)] - py[static_cast<std::size_t>(j)];
            if (dx * dx + dy * dy <= r2) edges.emplace_back(i, j);
        }
    if (edges.empty()) throw InvalidInputError("generate_network: geometric graph has no edges");
    return Graph::from_edges(n, edges, IsolatedNodePolicy::Drop);
}

}  // namespace

Graph generate_network(const NetworkSpec& spec, std::uint64_t seed) {
    Rng rng(seed);
    switch (spec.kind) {
        case NetworkSpec::Kind::Cycle:
            if (spec.n < 3) throw InvalidInputError("generate_network: cycle needs n >= 3");
            return path_or_cycle(spec.n, true);
        case NetworkSpec::Kind::Complete: {
            if (spec.n < 2) throw InvalidInputError("generate_network: complete graph needs n >= 2");
            std::vector<std::pair<int, int>> edges;
            for (int i = 0; i < spec.n; ++i)
                for (int j = i + 1; j < spec.n; ++j) edges.emplace_back(i, j);
            return Graph::from_edges(spec.n, edges);
        }
        case NetworkSpec::Kind::Path:
            if (spec.n < 2) throw InvalidInputError("generate_network: path needs n >= 2");
            return path_or_cycle(spec.n, false);
        case NetworkSpec::Kind::PreferentialAttachment:
            return preferential_attachment(spec.n, spec.attach, rng);
        case NetworkSpec::Kind::RandomGeometric:
            return largest_connected_component(random_geometric(spec.n, spec.radius, rng));
        case NetworkSpec::Kind::EdgeList:
            return largest_connected_component(load_edge_list(spec.path));
    }
    throw InvalidInputError("generate_network: unknown kind");
}

// --------------------------------------------------------------------------
// Config parsing. Unknown keys are rejected at every level.
// --------------------------------------------------------------------------

namespace {

void reject_unknown(const json& j, std::initializer_list<const char*> allowed, const char* where) {
    for (const auto& item : j.items()) {
        bool ok = false;
        for (const char* key : allowed)
            if (item.key() == key) {
                ok = true;
                break;
            }
        if (!ok)
            throw InvalidInputError(std::string("config: unknown key \"") + item.key() + "\" in " +
                                    where);
    }
}

NetworkSpec parse_network(const json& j) {
    reject_unknown(j, {"kind", "n", "m", "radius", "path"}, "network");
    NetworkSpec spec;
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "cycle") spec.kind = NetworkSpec::Kind::Cycle;
    else if (kind == "complete") spec.kind = NetworkSpec::Kind::Complete;
    else if (kind == "path") spec.kind = NetworkSpec::Kind::Path;
    else if (kind == "preferential-attachment") spec.kind = NetworkSpec::Kind::PreferentialAttachment;
    else if (kind == "random-geometric") spec.kind = NetworkSpec::Kind::RandomGeometric;
    else if (kind == "edge-list") spec.kind = NetworkSpec::Kind::EdgeList;
    else throw InvalidInputError("config: unknown network kind \"" + kind + "\"");
    if (spec.kind == NetworkSpec::Kind::EdgeList) {
        spec.path = j.at("path").get<std::string>();
    } else {
        spec.n = j.at("n").get<int>();
    }
    if (j.contains("m")) spec.attach = j.at("m").get<int>();
    if (j.contains("radius")) spec.radius = j.at("radius").get<double>();
    return spec;
}

SusceptibilitySpec parse_susceptibility(const json& j, const char* where) {
    reject_unknown(j, {"values", "mean", "std", "clip", "complement"}, where);
    SusceptibilitySpec spec;
    if (j.contains("complement")) spec.complement = j.at("complement").get<bool>();
    if (j.contains("values")) {
        spec.values = j.at("values").get<std::vector<double>>();
        for (double v : *spec.values)
            if (!(v >= 0.0 && v <= 1.0))
                throw InvalidInputError("config: susceptibility values must lie in [0,1]");
        return spec;
    }
    if (j.contains("mean")) spec.mean = j.at("mean").get<double>();
    if (j.contains("std")) spec.stddev = j.at("std").get<double>();
    if (j.contains("clip")) {
        const auto clip = j.at("clip").get<std::vector<double>>();
        if (clip.size() != 2) throw InvalidInputError("config: clip must be [lo, hi]");
        spec.clip_lo = clip[0];
        spec.clip_hi = clip[1];
    }
    if (spec.clip_lo < 0.0 || spec.clip_hi > 1.0 || !(spec.clip_lo < spec.clip_hi))
        throw InvalidInputError("config: clip bounds must satisfy 0 <= lo < hi <= 1");
    return spec;
}

PolicySpec parse_policy(const json& j) {
    reject_unknown(j,
                   {"kind", "observed_fraction", "observed", "node", "target", "fraction",
                    "feature_dim", "ridge", "width", "epochs", "learning_rate"},
                   "policy");
    PolicySpec spec;
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "perfect") spec.kind = PolicySpec::Kind::Perfect;
    else if (kind == "mean") spec.kind = PolicySpec::Kind::Mean;
    else if (kind == "steer") spec.kind = PolicySpec::Kind::Steer;
    else if (kind == "ols") spec.kind = PolicySpec::Kind::Ols;
    else if (kind == "mlp") spec.kind = PolicySpec::Kind::Mlp;
    else throw InvalidInputError("config: unknown policy kind \"" + kind + "\"");
    if (j.contains("observed_fraction")) {
        spec.observed_fraction = j.at("observed_fraction").get<double>();
        if (!(spec.observed_fraction > 0.0 && spec.observed_fraction <= 1.0))
            throw InvalidInputError("config: observed_fraction must lie in (0,1]");
    }
    if (j.contains("observed")) spec.observed = j.at("observed").get<std::vector<int>>();
    if (j.contains("node")) spec.steer_node = j.at("node").get<int>();
    if (j.contains("target")) spec.steer_target = j.at("target").get<double>();
    if (j.contains("fraction")) spec.steer_fraction = j.at("fraction").get<double>();
    if (j.contains("feature_dim")) spec.feature_dim = j.at("feature_dim").get<int>();
    if (j.contains("ridge")) spec.ridge = j.at("ridge").get<double>();
    if (j.contains("width")) spec.mlp.width = j.at("width").get<int>();
    if (j.contains("epochs")) spec.mlp.epochs = j.at("epochs").get<int>();
    if (j.contains("learning_rate")) spec.mlp.learning_rate = j.at("learning_rate").get<double>();
    return spec;
}

InnateSpec parse_innate(const json& j) {
    reject_unknown(j, {"kind", "path", "noise_std"}, "innate");
    InnateSpec spec;
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "uniform") spec.kind = InnateSpec::Kind::Uniform;
    else if (kind == "file") spec.kind = InnateSpec::Kind::File;
    else if (kind == "feature-linked") spec.kind = InnateSpec::Kind::FeatureLinked;
    else throw InvalidInputError("config: unknown innate kind \"" + kind + "\"");
    if (j.contains("path")) spec.path = j.at("path").get<std::string>();
    if (j.contains("noise_std")) spec.noise_std = j.at("noise_std").get<double>();
    return spec;
}

SweepSpec parse_sweep(const json& j) {
    reject_unknown(j, {"parameter", "grid", "alpha", "beta"}, "sweep");
    SweepSpec spec;
    const std::string param = j.at("parameter").get<std::string>();
    if (param == "beta") spec.parameter = SweepSpec::Parameter::Beta;
    else if (param == "alpha") spec.parameter = SweepSpec::Parameter::Alpha;
    else throw InvalidInputError("config: sweep parameter must be alpha or beta");
    spec.grid = j.at("grid").get<std::vector<double>>();
    if (spec.grid.empty()) throw InvalidInputError("config: empty sweep grid");
    if (j.contains("alpha")) spec.fixed_alpha = j.at("alpha").get<double>();
    if (j.contains("beta")) spec.fixed_beta = j.at("beta").get<double>();
    return spec;
}

int parse_horizon(const json& j) {
    if (j.is_string()) {
        if (j.get<std::string>() == "inf") return kInfiniteHorizon;
        throw InvalidInputError("config: K must be a nonnegative integer or \"inf\"");
    }
    const int k = j.get<int>();
    if (k < 0) throw InvalidInputError("config: K must be a nonnegative integer or \"inf\"");
    return k;
}

}  // namespace

ExperimentConfig parse_config(const json& j) {
    reject_unknown(j,
                   {"seed", "network", "dynamics", "susceptibility", "innate", "policy", "sweep",
                    "replicates", "record"},
                   "config root");
    ExperimentConfig cfg;
    cfg.seed = j.value("seed", 0ULL);
    cfg.network = parse_network(j.at("network"));
    if (j.contains("dynamics")) {
        const json& d = j.at("dynamics");
        reject_unknown(d, {"K", "T_max", "tol"}, "dynamics");
        if (d.contains("K")) cfg.horizon = parse_horizon(d.at("K"));
        if (d.contains("T_max")) cfg.t_max = d.at("T_max").get<int>();
        if (d.contains("tol")) cfg.tol = d.at("tol").get<double>();
        if (cfg.t_max < 1 || !(cfg.tol > 0.0))
            throw InvalidInputError("config: need T_max >= 1 and tol > 0");
    }
    if (j.contains("susceptibility")) {
        const json& s = j.at("susceptibility");
        reject_unknown(s, {"alpha", "beta"}, "susceptibility");
        if (s.contains("alpha")) cfg.alpha_spec = parse_susceptibility(s.at("alpha"), "alpha");
        if (s.contains("beta")) cfg.beta_spec = parse_susceptibility(s.at("beta"), "beta");
    }
    if (j.contains("innate")) cfg.innate = parse_innate(j.at("innate"));
    if (j.contains("policy")) cfg.policy = parse_policy(j.at("policy"));
    if (j.contains("sweep")) cfg.sweep = parse_sweep(j.at("sweep"));
    if (j.contains("replicates")) {
        cfg.replicates = j.at("replicates").get<int>();
        if (cfg.replicates < 1) throw InvalidInputError("config: replicates must be >= 1");
    }
    if (j.contains("record")) {
        const std::string mode = j.at("record").get<std::string>();
        if (mode == "full") cfg.record_full = true;
        else if (mode == "thin") cfg.record_full = false;
        else throw InvalidInputError("config: record must be full or thin");
    }
    return cfg;
}

ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InvalidInputError("config: cannot open " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw InvalidInputError("config: JSON parse error in " + path + ": " + e.what());
    }
    return parse_config(j);
}

json config_to_json(const ExperimentConfig& cfg) {
    json j;
    j["seed"] = cfg.seed;
    json net;
    switch (cfg.network.kind) {
        case NetworkSpec::Kind::Cycle: net["kind"] = "cycle"; break;
        case NetworkSpec::Kind::Complete: net["kind"] = "complete"; break;
        case NetworkSpec::Kind::Path: net["kind"] = "path"; break;
        case NetworkSpec::Kind::PreferentialAttachment:
            net["kind"] = "preferential-attachment";
            net["m"] = cfg.network.attach;
            break;
        case NetworkSpec::Kind::RandomGeometric:
            net["kind"] = "random-geometric";
            net["radius"] = cfg.network.radius;
            break;
        case NetworkSpec::Kind::EdgeList: net["kind"] = "edge-list"; break;
    }
    if (cfg.network.kind == NetworkSpec::Kind::EdgeList) net["path"] = cfg.network.path;
    else net["n"] = cfg.network.n;
    j["network"] = net;
    j["dynamics"] = {{"K", cfg.horizon == kInfiniteHorizon ? json("inf") : json(cfg.horizon)},
                     {"T_max", cfg.t_max},
                     {"tol", cfg.tol}};
    auto susceptibility = [](const SusceptibilitySpec& s) {
        json out;
        if (s.values) {
            out["values"] = *s.values;
        } else {
            out["mean"] = s.mean;
            out["std"] = s.stddev;
            out["clip"] = {s.clip_lo, s.clip_hi};
        }
        out["complement"] = s.complement;
        return out;
    };
    j["susceptibility"] = {{"alpha", susceptibility(cfg.alpha_spec)},
                           {"beta", susceptibility(cfg.beta_spec)}};
    json innate;
    switch (cfg.innate.kind) {
        case InnateSpec::Kind::Uniform: innate["kind"] = "uniform"; break;
        case InnateSpec::Kind::File:
            innate["kind"] = "file";
            innate["path"] = cfg.innate.path;
            break;
        case InnateSpec::Kind::FeatureLinked:
            innate["kind"] = "feature-linked";
            innate["noise_std"] = cfg.innate.noise_std;
            break;
    }
    j["innate"] = innate;
    json policy;
    switch (cfg.policy.kind) {
        case PolicySpec::Kind::Perfect: policy["kind"] = "perfect"; break;
        case PolicySpec::Kind::Mean: policy["kind"] = "mean"; break;
        case PolicySpec::Kind::Steer: policy["kind"] = "steer"; break;
        case PolicySpec::Kind::Ols: policy["kind"] = "ols"; break;
        case PolicySpec::Kind::Mlp: policy["kind"] = "mlp"; break;
    }
    if (cfg.policy.kind == PolicySpec::Kind::Mean || cfg.policy.kind == PolicySpec::Kind::Ols ||
        cfg.policy.kind == PolicySpec::Kind::Mlp) {
        if (cfg.policy.observed) policy["observed"] = *cfg.policy.observed;
        else policy["observed_fraction"] = cfg.policy.observed_fraction;
    }
    if (cfg.policy.kind == PolicySpec::Kind::Steer) {
        if (cfg.policy.steer_fraction) policy["fraction"] = *cfg.policy.steer_fraction;
        else policy["node"] = cfg.policy.steer_node;
        policy["target"] = cfg.policy.steer_target;
    }
    if (cfg.policy.kind == PolicySpec::Kind::Ols || cfg.policy.kind == PolicySpec::Kind::Mlp) {
        policy["feature_dim"] = cfg.policy.feature_dim;
        if (cfg.policy.kind == PolicySpec::Kind::Ols) policy["ridge"] = cfg.policy.ridge;
        if (cfg.policy.kind == PolicySpec::Kind::Mlp) {
            policy["width"] = cfg.policy.mlp.width;
            policy["epochs"] = cfg.policy.mlp.epochs;
            policy["learning_rate"] = cfg.policy.mlp.learning_rate;
        }
    }
    j["policy"] = policy;
    if (cfg.sweep) {
        json sweep;
        sweep["parameter"] = cfg.sweep->parameter == SweepSpec::Parameter::Beta ? "beta" : "alpha";
        sweep["grid"] = cfg.sweep->grid;
        sweep["alpha"] = cfg.sweep->fixed_alpha;
        sweep["beta"] = cfg.sweep->fixed_beta;
        j["sweep"] = sweep;
    }
    j["replicates"] = cfg.replicates;
    j["record"] = cfg.record_full ? "full" : "thin";
    return j;
}

// --------------------------------------------------------------------------
// Experiment driver
// --------------------------------------------------------------------------

namespace {

// Substream ids for the per-experiment draws.
enum : std::uint64_t {
    kStreamNetwork = 1,
    kStreamAlpha = 2,
    kStreamBeta = 3,
    kStreamInnate = 4,
    kStreamSplit = 5,
    kStreamFeatures = 6,
    kStreamPolicy = 7,
    kStreamReplicateBase = 100
};

Eigen::VectorXd build_susceptibility(const SusceptibilitySpec& spec, int n, std::uint64_t seed,
                                     std::uint64_t stream) {
    Eigen::VectorXd v;
    if (spec.values) {
        if (static_cast<int>(spec.values->size()) != n)
            throw InvalidInputError("config: explicit susceptibility length does not match network");
        v = Eigen::Map<const Eigen::VectorXd>(spec.values->data(), n);
    } else {
        v = sample_susceptibilities(n, spec.mean, spec.stddev, spec.clip_lo, spec.clip_hi,
                                    Rng::substream(seed, stream).next_u64());
    }
    if (spec.complement) v = Eigen::VectorXd::Ones(n) - v;
    return v;
}

std::vector<int> sample_split(int n, double fraction, Rng& rng) {
    const int m = std::max(1, static_cast<int>(std::lround(fraction * n)));
    std::vector<int> perm(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) perm[static_cast<std::size_t>(i)] = i;
    for (int i = n - 1; i > 0; --i)
        std::swap(perm[static_cast<std::size_t>(i)],
                  perm[rng.uniform_index(static_cast<std::size_t>(i) + 1)]);
    std::vector<int> observed(perm.begin(), perm.begin() + m);
    std::sort(observed.begin(), observed.end());
    return observed;
}

Eigen::VectorXd build_innate(const InnateSpec& spec, int n, const FeatureTable& features, Rng& rng) {
    Eigen::VectorXd x(n);
    switch (spec.kind) {
        case InnateSpec::Kind::Uniform:
            for (int i = 0; i < n; ++i) x(i) = rng.uniform01();
            return x;
        case InnateSpec::Kind::File: {
            std::ifstream in(spec.path);
            if (!in) throw InvalidInputError("innate: cannot open " + spec.path);
            for (int i = 0; i < n; ++i)
                if (!(in >> x(i)))
                    throw InvalidInputError("innate: expected " + std::to_string(n) + " values in " +
                                            spec.path);
            validate_opinion_vector(x, "innate file");
            return x;
        }
        case InnateSpec::Kind::FeatureLinked: {
            if (features.nodes() != n) throw InvalidInputError("innate: features unavailable");
            const int d = features.dim();
            Eigen::VectorXd w(d);
            for (int k = 0; k < d; ++k) w(k) = rng.normal(0.0, 1.0 / std::sqrt(static_cast<double>(d)));
            const double intercept = 0.5;
            for (int i = 0; i < n; ++i)
                x(i) = std::clamp(features.features.row(i).dot(w) + intercept +
                                      rng.normal(0.0, spec.noise_std),
                                  0.0, 1.0);
            return x;
        }
    }
    throw InvalidInputError("innate: unknown kind");
}

}  // namespace

RunBundle run_experiment(const ExperimentConfig& cfg, int threads) {
    RunBundle bundle;
    bundle.config = cfg;
    bundle.graph = std::make_shared<const Graph>(
        generate_network(cfg.network, Rng::substream(cfg.seed, kStreamNetwork).next_u64()));
    const int n = bundle.graph->node_count();
    const InfluenceMatrix w = influence_matrix(bundle.graph);

    try {
        for (int r = 0; r < cfg.replicates; ++r) {
            const std::uint64_t rep_seed =
                cfg.replicates == 1
                    ? cfg.seed
                    : Rng::substream(cfg.seed, kStreamReplicateBase + static_cast<std::uint64_t>(r))
                          .next_u64();

            SusceptibilityProfile profile;
            profile.alpha = build_susceptibility(cfg.alpha_spec, n, rep_seed, kStreamAlpha);
            profile.beta = build_susceptibility(cfg.beta_spec, n, rep_seed, kStreamBeta);
            profile.validate(n);

            const bool needs_features = cfg.policy.kind == PolicySpec::Kind::Ols ||
                                        cfg.policy.kind == PolicySpec::Kind::Mlp ||
                                        cfg.innate.kind == InnateSpec::Kind::FeatureLinked;
            FeatureTable features;
            if (needs_features) {
                Rng rng = Rng::substream(rep_seed, kStreamFeatures);
                features.features.resize(n, cfg.policy.feature_dim);
                for (int i = 0; i < n; ++i)
                    for (int k = 0; k < cfg.policy.feature_dim; ++k)
                        features.features(i, k) = rng.normal(0.0, 1.0);
            }

            Rng innate_rng = Rng::substream(rep_seed, kStreamInnate);
            const Eigen::VectorXd x_star = build_innate(cfg.innate, n, features, innate_rng);

            std::vector<int> observed;
            if (cfg.policy.kind == PolicySpec::Kind::Mean || cfg.policy.kind == PolicySpec::Kind::Ols ||
                cfg.policy.kind == PolicySpec::Kind::Mlp) {
                if (cfg.policy.observed) {
                    observed = *cfg.policy.observed;
                    std::sort(observed.begin(), observed.end());
                } else {
                    Rng rng = Rng::substream(rep_seed, kStreamSplit);
                    observed = sample_split(n, cfg.policy.observed_fraction, rng);
                }
            }

            LoopConfig loop;
            loop.x_star = x_star;
            loop.profile = profile;
            loop.horizon = cfg.horizon;
            loop.t_max = cfg.t_max;
            loop.tol = cfg.tol;
            loop.record_full = cfg.record_full;
            bool affine = true;
            switch (cfg.policy.kind) {
                case PolicySpec::Kind::Perfect:
                    loop.policy = perfect_policy(n);
                    break;
                case PolicySpec::Kind::Mean:
                    loop.policy = mean_estimation_policy(observed, n);
                    break;
                case PolicySpec::Kind::Steer: {
                    if (cfg.policy.steer_fraction) {
                        Rng rng = Rng::substream(rep_seed, kStreamSplit);
                        const std::vector<int> steered = sample_split(n, *cfg.policy.steer_fraction, rng);
                        AffinePolicy p = perfect_policy(n);
                        p.kind = AffinePolicy::Kind::Custom;
                        for (int jnode : steered) {
                            p.M(jnode, jnode) = 0.0;
                            p.b(jnode) = cfg.policy.steer_target;
                        }
                        loop.policy = std::move(p);
                    } else {
                        loop.policy = steering_policy(cfg.policy.steer_node, cfg.policy.steer_target, n);
                    }
                    break;
                }
                case PolicySpec::Kind::Ols:
                case PolicySpec::Kind::Mlp: {
                    affine = false;
                    LearnedPolicyBundle b;
                    b.kind = cfg.policy.kind == PolicySpec::Kind::Ols ? LearnedPolicyBundle::Kind::Ols
                                                                      : LearnedPolicyBundle::Kind::Mlp;
                    b.features = features;
                    b.observed = observed;
                    b.ridge = cfg.policy.ridge;
                    b.mlp = cfg.policy.mlp;
                    b.seed = Rng::substream(rep_seed, kStreamPolicy).next_u64();
                    loop.policy = std::move(b);
                    break;
                }
            }

            ReplicateResult result;
            result.seed = rep_seed;
            result.trajectory = run(loop, w);
            for (const auto& step : result.trajectory.records) {
                const double mean = step.x_ex.mean();
                result.mean_per_step.push_back(mean);
                result.var_per_step.push_back((step.x_ex.array() - mean).square().sum() / n);
            }
            // Closed-form cross-check at desk scale; K = 100 materializes Psi by
            // a hundred dense products, so keep it to small graphs.
            if (affine && n <= 512) {
                const PsiOperator psi = psi_operator(profile, w, cfg.horizon);
                result.rate_case = rate_case_label(profile, psi);
                try {
                    result.equilibrium =
                        ps_closed_form(x_star, profile, psi, std::get<AffinePolicy>(loop.policy));
                } catch (const NumericalError&) {
                    // Degenerate family: the trajectory stands on its own.
                }
            }

            if (r == 0) {
                bundle.profile = profile;
                bundle.x_star = x_star;
                bundle.observed = observed;
            }
            bundle.replicates.push_back(std::move(result));
        }

        if (cfg.sweep) {
            if (!bundle.replicates.empty() && bundle.x_star.size() == n) {
                if (cfg.sweep->parameter == SweepSpec::Parameter::Beta)
                    bundle.sweep = variance_sweep(bundle.x_star, w, cfg.sweep->fixed_alpha,
                                                  cfg.sweep->grid, cfg.horizon, threads);
                else
                    bundle.sweep = variance_sweep_alpha(bundle.x_star, w, cfg.sweep->grid,
                                                        cfg.sweep->fixed_beta, cfg.horizon, threads);
            }
        }
    } catch (const std::exception& e) {
        // Partial results stay in the bundle; the error marker travels with them.
        bundle.error = e.what();
    }
    return bundle;
}

// --------------------------------------------------------------------------
// Emission
// --------------------------------------------------------------------------

namespace {

std::string format_double(double v) {
    if (!std::isfinite(v)) throw NumericalError("emit: non-finite value in output");
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace

void emit_bundle(const RunBundle& bundle, const std::string& out_dir) {
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    const std::string seed_line = "# seed=" + std::to_string(bundle.config.seed) + "\n";

    for (std::size_t r = 0; r < bundle.replicates.size(); ++r) {
        const auto& rep = bundle.replicates[r];
        const std::string name =
            r == 0 ? "trajectory.csv" : "trajectory_r" + std::to_string(r) + ".csv";
        std::ofstream out(fs::path(out_dir) / name);
        out << seed_line << "t,node,x_init,x_ex,f\n";
        int t = 1 + (bundle.config.record_full
                         ? 0
                         : rep.trajectory.t_stop - static_cast<int>(rep.trajectory.records.size()));
        for (const auto& step : rep.trajectory.records) {
            for (int i = 0; i < step.x_ex.size(); ++i)
                out << t << "," << i << "," << format_double(step.x_init(i)) << ","
                    << format_double(step.x_ex(i)) << "," << format_double(step.f(i)) << "\n";
            ++t;
        }
    }

    {
        nlohmann::json summary;
        summary["seed"] = bundle.config.seed;
        summary["version"] = "0.1.0";
        summary["config"] = config_to_json(bundle.config);
        summary["nodes"] = bundle.graph->node_count();
        if (!bundle.error.empty()) summary["error"] = bundle.error;
        nlohmann::json reps = nlohmann::json::array();
        for (const auto& rep : bundle.replicates) {
            nlohmann::json jr;
            jr["seed"] = rep.seed;
            jr["converged"] = rep.trajectory.converged;
            jr["t_stop"] = rep.trajectory.t_stop;
            jr["residuals"] = rep.trajectory.residuals;
            jr["mean"] = rep.mean_per_step;
            jr["var"] = rep.var_per_step;
            jr["policy_diverged"] = rep.trajectory.policy_diverged;
            if (!rep.rate_case.empty()) jr["rate_case"] = rep.rate_case;
            if (rep.equilibrium) {
                jr["equilibrium_mean"] = rep.equilibrium->mean;
                jr["equilibrium_variance"] = rep.equilibrium->variance;
                jr["equilibrium_residual"] = rep.equilibrium->residual;
                if (rep.equilibrium->consensus_value)
                    jr["consensus_value"] = *rep.equilibrium->consensus_value;
            }
            reps.push_back(std::move(jr));
        }
        // Flatten the single-replicate case to the documented shape.
        if (reps.size() == 1) {
            for (auto& item : reps[0].items()) summary[item.key()] = item.value();
        }
        summary["replicates"] = std::move(reps);
        std::ofstream out(fs::path(out_dir) / "summary.json");
        out << summary.dump(2) << "\n";
    }

    if (bundle.sweep) {
        std::ofstream out(fs::path(out_dir) / "sweep.csv");
        const bool beta_sweep =
            bundle.config.sweep && bundle.config.sweep->parameter == SweepSpec::Parameter::Beta;
        out << seed_line << (beta_sweep ? "beta" : "alpha") << ",mean,variance\n";
        for (const auto& point : bundle.sweep->points)
            out << format_double(point.parameter) << "," << format_double(point.mean) << ","
                << format_double(point.variance) << "\n";
    }

    {
        std::ofstream out(fs::path(out_dir) / "labels.csv");
        out << seed_line << "external_label,index\n";
        for (int i = 0; i < bundle.graph->node_count(); ++i)
            out << bundle.graph->labels()[static_cast<std::size_t>(i)] << "," << i << "\n";
    }
}

}  // namespace perfodyn
