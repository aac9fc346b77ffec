#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mol/network.hpp"
#include "mol/solver.hpp"
#include "mol/training.hpp"

namespace mol {

struct DatasetSection {
    int count = 20;
    int height = 24;
    int width = 24;
    double acceleration = 4.0;
    double noise_sigma = 0.01;
    PhantomSpec phantom;
};

// kind: identity | masked_fourier | dense_gaussian | multi_coil; mask_file
// overrides the generated mask for the Fourier kinds
struct OperatorSection {
    std::string kind = "masked_fourier";
    int rows = 0;  // dense_gaussian; 0 resolves to (h*w)/2
    int coils = 4;
    double acceleration = 4.0;
    double density_decay = 3.0;
    std::string mask_file;
};

struct AnalysisSection {
    int trials = 100;
    double perturb_scale = 0.05;
    int monotone_samples = 1000;
    int lip_points = 10;
    int lip_steps = 10;
};

struct ReconstructSection {
    std::vector<std::string> measurements;
    std::vector<std::string> ground_truth;  // optional, parallel to measurements
};

struct ExperimentConfig {
    std::uint64_t seed = 0;
    DatasetSection dataset;
    OperatorSection op;
    NetworkConfig network;
    SolverConfig solver;
    TrainConfig training;
    int checkpoint_every = 10;
    AnalysisSection analysis;
    ReconstructSection reconstruct;
};

// strict parse: unknown keys are rejected, every field has a default;
// throws ConfigError with the offending key path
ExperimentConfig parse_config_text(const std::string& text, const std::string& origin);
ExperimentConfig parse_config_file(const std::string& path);

// full resolved config as JSON; parse(serialize(parse(x))) == parse(x)
std::string serialize_config(const ExperimentConfig& cfg);

// the operator family described by the operator section, at the dataset shape
LinearOperatorSpec build_operator(const ExperimentConfig& cfg, std::uint64_t seed);

}  // namespace mol
