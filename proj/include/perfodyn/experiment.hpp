#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "perfodyn/equilibrium.hpp"
#include "perfodyn/graph.hpp"
#include "perfodyn/loop.hpp"

namespace perfodyn {

/// Normal draws clipped (not resampled) to [clip_lo, clip_hi]; deterministic
/// per seed.
Eigen::VectorXd sample_susceptibilities(int n, double mean, double stddev, double clip_lo,
                                        double clip_hi, std::uint64_t seed);

struct NetworkSpec {
    enum class Kind { Cycle, Complete, Path, PreferentialAttachment, RandomGeometric, EdgeList };

    Kind kind = Kind::Cycle;
    int n = 0;
    int attach = 3;        // preferential attachment: edges per new node
    double radius = 0.1;   // random geometric
    std::string path;      // edge list
};

/// Build a connected network (largest component taken); deterministic per seed.
Graph generate_network(const NetworkSpec& spec, std::uint64_t seed);

/// One susceptibility vector: explicit values, or clipped-normal draws with an
/// optional complement (the protocol samples 1 - alpha_i rather than alpha_i).
struct SusceptibilitySpec {
    std::optional<std::vector<double>> values;
    double mean = 0.9;
    double stddev = 0.1;
    double clip_lo = 0.01;
    double clip_hi = 0.99;
    bool complement = false;
};

struct PolicySpec {
    enum class Kind { Perfect, Mean, Steer, Ols, Mlp };

    Kind kind = Kind::Perfect;
    double observed_fraction = 0.8;            // mean / ols / mlp
    std::optional<std::vector<int>> observed;  // explicit observed set
    int steer_node = 0;
    double steer_target = 1.0;
    std::optional<double> steer_fraction;  // steer a sampled set instead of one node
    int feature_dim = 5;
    double ridge = 1e-8;
    MlpHyper mlp;
};

struct InnateSpec {
    enum class Kind { Uniform, File, FeatureLinked };

    Kind kind = Kind::Uniform;
    std::string path;
    double noise_std = 0.1;
};

struct SweepSpec {
    enum class Parameter { Beta, Alpha };

    Parameter parameter = Parameter::Beta;
    std::vector<double> grid;
    double fixed_alpha = 0.5;  // for beta sweeps
    double fixed_beta = 0.5;   // for alpha sweeps
};

struct ExperimentConfig {
    std::uint64_t seed = 0;
    NetworkSpec network;
    int horizon = 100;  // K; kInfiniteHorizon for "inf"
    int t_max = 30;
    double tol = 1e-9;
    SusceptibilitySpec alpha_spec{.values = std::nullopt, .mean = 0.9, .stddev = 0.1, .clip_lo = 0.01, .clip_hi = 0.99, .complement = true};
    SusceptibilitySpec beta_spec{.values = std::nullopt, .mean = 0.9, .stddev = 0.1, .clip_lo = 0.01, .clip_hi = 0.99, .complement = false};
    InnateSpec innate;
    PolicySpec policy;
    std::optional<SweepSpec> sweep;
    int replicates = 1;
    bool record_full = true;
};

/// Parse a config JSON object; unknown keys are rejected.
ExperimentConfig parse_config(const nlohmann::json& j);
ExperimentConfig load_config(const std::string& path);
nlohmann::json config_to_json(const ExperimentConfig& cfg);

struct ReplicateResult {
    std::uint64_t seed = 0;
    Trajectory trajectory;
    std::vector<double> mean_per_step;  // of x_ex
    std::vector<double> var_per_step;
    std::optional<EquilibriumReport> equilibrium;  // affine policies in dense mode
    std::string rate_case;  // convergence-rate regime diagnostic (affine, dense mode)
};

struct RunBundle {
    ExperimentConfig config;
    std::shared_ptr<const Graph> graph;
    SusceptibilityProfile profile;
    Eigen::VectorXd x_star;
    std::vector<int> observed;  // recorded observed/unobserved split, sorted
    std::vector<ReplicateResult> replicates;
    std::optional<SweepTable> sweep;
    std::string error;  // partial-result marker; empty on success
};

RunBundle run_experiment(const ExperimentConfig& cfg, int threads = 1);

/// Emit trajectory.csv, summary.json, labels.csv and sweep.csv (when present)
/// under out_dir. Every file names the seed that produced it.
void emit_bundle(const RunBundle& bundle, const std::string& out_dir);

}  // namespace perfodyn
