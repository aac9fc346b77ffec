#include <string>

#include <CLI11.hpp>

#include "mol/runner.hpp"

namespace {

void add_common(CLI::App* sub, mol::RunOptions& opt, bool* seed_given) {
    sub->add_option("--config", opt.config_path, "experiment config (JSON)")
        ->required();
    sub->add_option("--out", opt.out_dir, "output directory")->required();
    sub->add_option("--checkpoint", opt.checkpoint, "network checkpoint (MOLNET)");
    sub->add_option("--seed", opt.seed, "override the config seed")
        ->check(CLI::NonNegativeNumber);
    sub->callback([sub, seed_given]() { *seed_given = sub->count("--seed") > 0; });
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"monotone operator learning for linear inverse problems"};
    app.require_subcommand(1);

    mol::RunOptions opt;
    bool seed_given = false;
    CLI::App* train = app.add_subcommand("train", "train a residual operator");
    CLI::App* reconstruct =
        app.add_subcommand("reconstruct", "reconstruct images from measurements");
    CLI::App* verify = app.add_subcommand("verify", "check the solver guarantees");
    CLI::App* bench = app.add_subcommand("bench", "time forward and backward passes");
    for (CLI::App* sub : {train, reconstruct, verify, bench})
        add_common(sub, opt, &seed_given);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? mol::kExitOk : mol::kExitConfig;
    }
    opt.has_seed = seed_given;

    if (train->parsed()) return mol::run_train(opt);
    if (reconstruct->parsed()) return mol::run_reconstruct(opt);
    if (verify->parsed()) return mol::run_verify(opt);
    return mol::run_bench(opt);
}
