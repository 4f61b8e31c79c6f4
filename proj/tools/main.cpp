#include <cstdint>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "noiseavg/error.hpp"
#include "noiseavg/experiment.hpp"

namespace {

struct CommonArgs {
    std::string config;
    std::string out;
    std::vector<std::string> sets;
    std::uint64_t seed = 0;
    bool quiet = false;
    CLI::Option* seed_opt = nullptr;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
    cmd->add_option("--config", args.config, "experiment config file (key = value lines)")
        ->required();
    cmd->add_option("--out", args.out, "output directory (overrides eval.output_dir)");
    cmd->add_option("--set", args.sets, "override one config key, KEY=VALUE (repeatable)");
    args.seed_opt = cmd->add_option("--seed", args.seed,
                                    "master seed: sets data.seed, ensemble.base_seed (+1000), "
                                    "attack.rs_seed (+2000), attack.noise_seed (+3000)");
    cmd->add_flag("--quiet", args.quiet, "suppress progress output");
}

noiseavg::ExperimentConfig build_config(const CommonArgs& args) {
    noiseavg::ExperimentConfig cfg = noiseavg::load_config(args.config);
    for (const std::string& kv : args.sets) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos)
            throw noiseavg::ValidationError("--set expects KEY=VALUE, got '" + kv + "'");
        noiseavg::apply_override(cfg, kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (args.seed_opt != nullptr && args.seed_opt->count() > 0)
        noiseavg::apply_master_seed(cfg, args.seed);
    cfg.quiet = args.quiet;
    return cfg;
}

std::string out_dir(const CommonArgs& args, const noiseavg::ExperimentConfig& cfg) {
    return args.out.empty() ? cfg.output_dir : args.out;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"noise-averaged adversarial attacks on small dense-network ensembles"};
    app.require_subcommand(1);
    app.footer("config keys:\n" + noiseavg::key_help());

    CommonArgs train_args, attack_args, transfer_args, theory_args, gradcheck_args;
    std::string attack_ensemble, transfer_ensemble, theory_ensemble, transfer_adv;

    CLI::App* train_cmd =
        app.add_subcommand("train-ensemble", "train an ensemble and save it with a manifest");
    add_common(train_cmd, train_args);

    CLI::App* attack_cmd = app.add_subcommand(
        "attack", "run baseline and noise-averaged attacks from every ensemble member");
    add_common(attack_cmd, attack_args);
    attack_cmd->add_option("--ensemble", attack_ensemble, "ensemble directory")->required();

    CLI::App* transfer_cmd = app.add_subcommand(
        "eval-transfer", "score saved adversarial examples against held-out members");
    add_common(transfer_cmd, transfer_args);
    transfer_cmd->add_option("--ensemble", transfer_ensemble, "ensemble directory")->required();
    transfer_cmd->add_option("--adv", transfer_adv, "adversarial-example file")->required();

    CLI::App* theory_cmd = app.add_subcommand(
        "verify-theory", "measure objective errors and check the averaged-MSE inequality");
    add_common(theory_cmd, theory_args);
    theory_cmd->add_option("--ensemble", theory_ensemble, "ensemble directory")->required();

    CLI::App* gradcheck_cmd =
        app.add_subcommand("gradcheck", "finite-difference checks of the input gradient");
    add_common(gradcheck_cmd, gradcheck_args);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (train_cmd->parsed()) {
            const auto cfg = build_config(train_args);
            noiseavg::cmd_train_ensemble(cfg, out_dir(train_args, cfg));
        } else if (attack_cmd->parsed()) {
            const auto cfg = build_config(attack_args);
            noiseavg::cmd_attack(cfg, attack_ensemble, out_dir(attack_args, cfg));
        } else if (transfer_cmd->parsed()) {
            const auto cfg = build_config(transfer_args);
            noiseavg::cmd_eval_transfer(cfg, transfer_ensemble, transfer_adv,
                                        out_dir(transfer_args, cfg));
        } else if (theory_cmd->parsed()) {
            const auto cfg = build_config(theory_args);
            noiseavg::cmd_verify_theory(cfg, theory_ensemble, out_dir(theory_args, cfg));
        } else if (gradcheck_cmd->parsed()) {
            const auto cfg = build_config(gradcheck_args);
            noiseavg::cmd_gradcheck(cfg, out_dir(gradcheck_args, cfg));
        }
    } catch (const noiseavg::ValidationError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
    return 0;
}
