#include <iostream>

#include "CLI11.hpp"
#include "commands.hpp"

using namespace symploc::cli;

namespace {

void add_config_options(CLI::App* cmd, ConfigSource& source) {
    cmd->add_option("-c,--config", source.path, "key = value config file");
    cmd->add_option("-s,--set", source.overrides, "override one key, e.g. --set train.lr_coarse=1e-3")
        ->allow_extra_args(false);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Coarse-to-fine text-to-submap localization on synthetic scenes"};
    app.require_subcommand(1);

    ConfigSource gen_src, train_src, eval_src;
    std::string gen_out;
    TrainPaths train_paths;
    EvalPaths eval_paths;

    auto* gen = app.add_subcommand("gen-data", "generate the synthetic dataset file");
    add_config_options(gen, gen_src);
    gen->add_option("-o,--out", gen_out, "dataset file to write")->required();

    auto* tr = app.add_subcommand("train", "train all branches and the fine stage");
    add_config_options(tr, train_src);
    tr->add_option("-d,--data", train_paths.data, "dataset file")->required();
    tr->add_option("--checkpoint", train_paths.checkpoint, "checkpoint to write")->required();
    tr->add_option("--curve", train_paths.curve, "loss curve CSV to write")->required();
    tr->add_option("--divergence-dump", train_paths.divergence_dump,
                   "where to write the offending batch if training diverges");

    auto* ev = app.add_subcommand("eval", "retrieval and localization recall of a checkpoint");
    add_config_options(ev, eval_src);
    ev->add_option("-d,--data", eval_paths.data, "dataset file")->required();
    ev->add_option("--checkpoint", eval_paths.checkpoint, "checkpoint to evaluate")->required();
    ev->add_option("--metrics", eval_paths.metrics, "metrics JSON to write")->required();
    ev->add_option("--table", eval_paths.table, "also write the text table here");

    auto* gc = app.add_subcommand("grad-check", "finite-difference gradient suites");
    auto* vf = app.add_subcommand("verify", "numerical invariant suites");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitInvalidConfig;
    }

    if (*gen) return gen_data(gen_src, gen_out, std::cout, std::cerr);
    if (*tr) return train(train_src, train_paths, std::cout, std::cerr);
    if (*ev) return eval(eval_src, eval_paths, std::cout, std::cerr);
    if (*gc) return grad_check(std::cout);
    if (*vf) return verify(std::cout);
    return kExitInvalidConfig;
}
