#include "mol/config.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>
#include <type_traits>

#include <json.hpp>

#include "mol/errors.hpp"
#include "mol/rng.hpp"

namespace mol {

namespace {

using nlohmann::json;

void check_keys(const json& obj, const std::string& path, const std::set<std::string>& allowed) {
    if (!obj.is_object()) throw ConfigError(path + ": expected an object");
    for (const auto& item : obj.items())
        if (!allowed.count(item.key()))
            throw ConfigError(path + ": unknown key '" + item.key() + "'");
}

template <typename T>
T get_num(const json& obj, const std::string& path, const char* key, T fallback) {
    if (!obj.contains(key)) return fallback;
    const json& v = obj.at(key);
    if constexpr (std::is_same_v<T, bool>) {
        if (!v.is_boolean()) throw ConfigError(path + "." + key + ": expected a boolean");
    } else {
        if (!v.is_number()) throw ConfigError(path + "." + key + ": expected a number");
        if constexpr (std::is_integral_v<T>) {
            if (!v.is_number_integer())
                throw ConfigError(path + "." + key + ": expected an integer");
        }
    }
    return v.get<T>();
}

std::string get_str(const json& obj, const std::string& path, const char* key,
                    const std::string& fallback) {
    if (!obj.contains(key)) return fallback;
    const json& v = obj.at(key);
    if (!v.is_string()) throw ConfigError(path + "." + key + ": expected a string");
    return v.get<std::string>();
}

std::vector<std::string> get_str_list(const json& obj, const std::string& path, const char* key) {
    std::vector<std::string> out;
    if (!obj.contains(key)) return out;
    const json& v = obj.at(key);
    if (!v.is_array()) throw ConfigError(path + "." + key + ": expected an array of strings");
    for (const json& e : v) {
        if (!e.is_string()) throw ConfigError(path + "." + key + ": expected an array of strings");
        out.push_back(e.get<std::string>());
    }
    return out;
}

void parse_dataset(const json& obj, DatasetSection& d) {
    check_keys(obj, "dataset",
               {"count", "height", "width", "acceleration", "noise_sigma", "min_shapes",
                "max_shapes", "max_amplitude", "phase_scale"});
    d.count = get_num<int>(obj, "dataset", "count", d.count);
    d.height = get_num<int>(obj, "dataset", "height", d.height);
    d.width = get_num<int>(obj, "dataset", "width", d.width);
    d.acceleration = get_num<double>(obj, "dataset", "acceleration", d.acceleration);
    d.noise_sigma = get_num<double>(obj, "dataset", "noise_sigma", d.noise_sigma);
    d.phantom.min_shapes = get_num<int>(obj, "dataset", "min_shapes", d.phantom.min_shapes);
    d.phantom.max_shapes = get_num<int>(obj, "dataset", "max_shapes", d.phantom.max_shapes);
    d.phantom.max_amplitude =
        get_num<double>(obj, "dataset", "max_amplitude", d.phantom.max_amplitude);
    d.phantom.phase_scale =
        get_num<double>(obj, "dataset", "phase_scale", d.phantom.phase_scale);
}

void parse_operator(const json& obj, OperatorSection& o) {
    check_keys(obj, "operator",
               {"kind", "rows", "coils", "acceleration", "density_decay", "mask_file"});
    o.kind = get_str(obj, "operator", "kind", o.kind);
    if (o.kind != "identity" && o.kind != "masked_fourier" && o.kind != "dense_gaussian" &&
        o.kind != "multi_coil")
        throw ConfigError("operator.kind: unknown operator '" + o.kind + "'");
    o.rows = get_num<int>(obj, "operator", "rows", o.rows);
    o.coils = get_num<int>(obj, "operator", "coils", o.coils);
    o.acceleration = get_num<double>(obj, "operator", "acceleration", o.acceleration);
    o.density_decay = get_num<double>(obj, "operator", "density_decay", o.density_decay);
    o.mask_file = get_str(obj, "operator", "mask_file", o.mask_file);
}

void parse_network(const json& obj, NetworkConfig& n) {
    check_keys(obj, "network",
               {"num_layers", "channels", "kernel_size", "activation", "leaky_slope",
                "probe_height", "probe_width"});
    n.num_layers = get_num<int>(obj, "network", "num_layers", n.num_layers);
    n.channels = get_num<int>(obj, "network", "channels", n.channels);
    n.kernel_size = get_num<int>(obj, "network", "kernel_size", n.kernel_size);
    const std::string act = get_str(obj, "network", "activation",
                                    n.activation == Activation::LeakyReLU ? "leaky_relu" : "relu");
    if (act == "relu")
        n.activation = Activation::ReLU;
    else if (act == "leaky_relu")
        n.activation = Activation::LeakyReLU;
    else
        throw ConfigError("network.activation: unknown activation '" + act + "'");
    n.leaky_slope = get_num<double>(obj, "network", "leaky_slope", n.leaky_slope);
    n.probe_height = get_num<int>(obj, "network", "probe_height", 0);
    n.probe_width = get_num<int>(obj, "network", "probe_width", 0);
}

void parse_solver(const json& obj, SolverConfig& s) {
    check_keys(obj, "solver",
               {"alpha", "lambda", "m", "tol_fwd", "tol_bwd", "max_iter_fwd", "max_iter_bwd",
                "anderson_depth", "divergence_threshold", "strict_mode"});
    s.alpha = get_num<double>(obj, "solver", "alpha", s.alpha);
    s.lambda = get_num<double>(obj, "solver", "lambda", s.lambda);
    s.m = get_num<double>(obj, "solver", "m", s.m);
    s.tol_fwd = get_num<double>(obj, "solver", "tol_fwd", s.tol_fwd);
    s.tol_bwd = get_num<double>(obj, "solver", "tol_bwd", s.tol_bwd);
    s.max_iter_fwd = get_num<int>(obj, "solver", "max_iter_fwd", s.max_iter_fwd);
    s.max_iter_bwd = get_num<int>(obj, "solver", "max_iter_bwd", s.max_iter_bwd);
    s.anderson_depth = get_num<int>(obj, "solver", "anderson_depth", s.anderson_depth);
    s.divergence_threshold =
        get_num<double>(obj, "solver", "divergence_threshold", s.divergence_threshold);
    s.strict_mode = get_num<bool>(obj, "solver", "strict_mode", s.strict_mode);
}

void parse_training(const json& obj, TrainConfig& t, int& checkpoint_every) {
    check_keys(obj, "training",
               {"epochs", "batch_size", "learning_rate", "optimizer", "beta1", "beta2", "opt_eps",
                "lip_weight", "lip_ascent_steps", "mode", "m_target", "checkpoint_every"});
    t.epochs = get_num<int>(obj, "training", "epochs", t.epochs);
    t.batch_size = get_num<int>(obj, "training", "batch_size", t.batch_size);
    t.learning_rate = get_num<double>(obj, "training", "learning_rate", t.learning_rate);
    const std::string opt = get_str(obj, "training", "optimizer",
                                    t.optimizer.kind == OptimizerKind::Adam ? "adam" : "sgd");
    if (opt == "adam")
        t.optimizer.kind = OptimizerKind::Adam;
    else if (opt == "sgd")
        t.optimizer.kind = OptimizerKind::SGD;
    else
        throw ConfigError("training.optimizer: unknown optimizer '" + opt + "'");
    t.optimizer.beta1 = get_num<double>(obj, "training", "beta1", t.optimizer.beta1);
    t.optimizer.beta2 = get_num<double>(obj, "training", "beta2", t.optimizer.beta2);
    t.optimizer.eps = get_num<double>(obj, "training", "opt_eps", t.optimizer.eps);
    t.lip_weight = get_num<double>(obj, "training", "lip_weight", t.lip_weight);
    t.lip_ascent_steps = get_num<int>(obj, "training", "lip_ascent_steps", t.lip_ascent_steps);
    const std::string mode = get_str(obj, "training", "mode",
                                     t.mode == TrainMode::MOL_LR
                                         ? "mol-lr"
                                         : t.mode == TrainMode::MOL_SN ? "mol-sn"
                                                                       : "unconstrained");
    if (mode == "mol-lr")
        t.mode = TrainMode::MOL_LR;
    else if (mode == "mol-sn")
        t.mode = TrainMode::MOL_SN;
    else if (mode == "unconstrained")
        t.mode = TrainMode::Unconstrained;
    else
        throw ConfigError("training.mode: unknown mode '" + mode + "'");
    t.m_target = get_num<double>(obj, "training", "m_target", t.m_target);
    checkpoint_every = get_num<int>(obj, "training", "checkpoint_every", checkpoint_every);
}

void parse_analysis(const json& obj, AnalysisSection& a) {
    check_keys(obj, "analysis",
               {"trials", "perturb_scale", "monotone_samples", "lip_points", "lip_steps"});
    a.trials = get_num<int>(obj, "analysis", "trials", a.trials);
    a.perturb_scale = get_num<double>(obj, "analysis", "perturb_scale", a.perturb_scale);
    a.monotone_samples = get_num<int>(obj, "analysis", "monotone_samples", a.monotone_samples);
    a.lip_points = get_num<int>(obj, "analysis", "lip_points", a.lip_points);
    a.lip_steps = get_num<int>(obj, "analysis", "lip_steps", a.lip_steps);
}

void parse_reconstruct(const json& obj, ReconstructSection& r) {
    check_keys(obj, "reconstruct", {"measurements", "ground_truth"});
    r.measurements = get_str_list(obj, "reconstruct", "measurements");
    r.ground_truth = get_str_list(obj, "reconstruct", "ground_truth");
}

}  // namespace

ExperimentConfig parse_config_text(const std::string& text, const std::string& origin) {
    json root;
    try {
        root = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError(origin + ": " + e.what());
    }
    check_keys(root, origin,
               {"seed", "dataset", "operator", "network", "solver", "training", "analysis",
                "reconstruct"});
    ExperimentConfig cfg;
    if (root.contains("seed")) {
        const json& s = root.at("seed");
        if (!s.is_number_unsigned()) throw ConfigError("seed: expected a non-negative integer");
        cfg.seed = s.get<std::uint64_t>();
    }
    if (root.contains("dataset")) parse_dataset(root.at("dataset"), cfg.dataset);
    if (root.contains("operator")) parse_operator(root.at("operator"), cfg.op);
    if (root.contains("network")) parse_network(root.at("network"), cfg.network);
    if (root.contains("solver")) parse_solver(root.at("solver"), cfg.solver);
    if (root.contains("training")) parse_training(root.at("training"), cfg.training,
                                                  cfg.checkpoint_every);
    if (root.contains("analysis")) parse_analysis(root.at("analysis"), cfg.analysis);
    if (root.contains("reconstruct")) parse_reconstruct(root.at("reconstruct"), cfg.reconstruct);

    // late-bound defaults: probe and dense rows follow the dataset shape
    if (cfg.network.probe_height <= 0) cfg.network.probe_height = cfg.dataset.height;
    if (cfg.network.probe_width <= 0) cfg.network.probe_width = cfg.dataset.width;
    if (cfg.op.rows <= 0) cfg.op.rows = std::max(1, cfg.dataset.height * cfg.dataset.width / 2);
    cfg.training.seed = mix_seed(cfg.seed, 0x7121);
    return cfg;
}

ExperimentConfig parse_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_config_text(buf.str(), path);
}

std::string serialize_config(const ExperimentConfig& cfg) {
    json root;
    root["seed"] = cfg.seed;
    root["dataset"] = {{"count", cfg.dataset.count},
                       {"height", cfg.dataset.height},
                       {"width", cfg.dataset.width},
                       {"acceleration", cfg.dataset.acceleration},
                       {"noise_sigma", cfg.dataset.noise_sigma},
                       {"min_shapes", cfg.dataset.phantom.min_shapes},
                       {"max_shapes", cfg.dataset.phantom.max_shapes},
                       {"max_amplitude", cfg.dataset.phantom.max_amplitude},
                       {"phase_scale", cfg.dataset.phantom.phase_scale}};
    root["operator"] = {{"kind", cfg.op.kind},
                        {"rows", cfg.op.rows},
                        {"coils", cfg.op.coils},
                        {"acceleration", cfg.op.acceleration},
                        {"density_decay", cfg.op.density_decay},
                        {"mask_file", cfg.op.mask_file}};
    root["network"] = {{"num_layers", cfg.network.num_layers},
                       {"channels", cfg.network.channels},
                       {"kernel_size", cfg.network.kernel_size},
                       {"activation",
                        cfg.network.activation == Activation::LeakyReLU ? "leaky_relu" : "relu"},
                       {"leaky_slope", cfg.network.leaky_slope},
                       {"probe_height", cfg.network.probe_height},
                       {"probe_width", cfg.network.probe_width}};
    root["solver"] = {{"alpha", cfg.solver.alpha},
                      {"lambda", cfg.solver.lambda},
                      {"m", cfg.solver.m},
                      {"tol_fwd", cfg.solver.tol_fwd},
                      {"tol_bwd", cfg.solver.tol_bwd},
                      {"max_iter_fwd", cfg.solver.max_iter_fwd},
                      {"max_iter_bwd", cfg.solver.max_iter_bwd},
                      {"anderson_depth", cfg.solver.anderson_depth},
                      {"divergence_threshold", cfg.solver.divergence_threshold},
                      {"strict_mode", cfg.solver.strict_mode}};
    root["training"] = {
        {"epochs", cfg.training.epochs},
        {"batch_size", cfg.training.batch_size},
        {"learning_rate", cfg.training.learning_rate},
        {"optimizer", cfg.training.optimizer.kind == OptimizerKind::Adam ? "adam" : "sgd"},
        {"beta1", cfg.training.optimizer.beta1},
        {"beta2", cfg.training.optimizer.beta2},
        {"opt_eps", cfg.training.optimizer.eps},
        {"lip_weight", cfg.training.lip_weight},
        {"lip_ascent_steps", cfg.training.lip_ascent_steps},
        {"mode", cfg.training.mode == TrainMode::MOL_LR
                     ? "mol-lr"
                     : cfg.training.mode == TrainMode::MOL_SN ? "mol-sn" : "unconstrained"},
        {"m_target", cfg.training.m_target},
        {"checkpoint_every", cfg.checkpoint_every}};
    root["analysis"] = {{"trials", cfg.analysis.trials},
                        {"perturb_scale", cfg.analysis.perturb_scale},
                        {"monotone_samples", cfg.analysis.monotone_samples},
                        {"lip_points", cfg.analysis.lip_points},
                        {"lip_steps", cfg.analysis.lip_steps}};
    root["reconstruct"] = {{"measurements", cfg.reconstruct.measurements},
                           {"ground_truth", cfg.reconstruct.ground_truth}};
    return root.dump(2) + "\n";
}

LinearOperatorSpec build_operator(const ExperimentConfig& cfg, std::uint64_t seed) {
    const int h = cfg.dataset.height;
    const int w = cfg.dataset.width;
    if (cfg.op.kind == "identity") return LinearOperatorSpec::identity(h, w);
    if (cfg.op.kind == "dense_gaussian")
        return LinearOperatorSpec::dense_gaussian(cfg.op.rows, h, w, mix_seed(seed, 0xde0));
    MaskSpec mask;
    if (!cfg.op.mask_file.empty()) {
        mask = read_mask(cfg.op.mask_file);
        if (mask.height != h || mask.width != w)
            throw ConfigError("operator.mask_file: mask shape does not match the dataset shape");
    } else {
        mask = make_mask(h, w, cfg.op.acceleration, cfg.op.density_decay, mix_seed(seed, 0x3a5));
    }
    if (cfg.op.kind == "masked_fourier") return LinearOperatorSpec::masked_fourier(mask);
    return LinearOperatorSpec::multi_coil_masked_fourier(
        mask, make_synthetic_coils(cfg.op.coils, h, w, mix_seed(seed, 0xc01)));
}

}  // namespace mol
