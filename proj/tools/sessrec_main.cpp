#include <algorithm>
#include <iostream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "sessrec/cli.hpp"
#include "sessrec/config.hpp"
#include "sessrec/errors.hpp"

namespace {

struct CommonArgs {
    std::string config_path;
    unsigned threads = std::max(1u, std::thread::hardware_concurrency());
    bool deterministic = false;
};

void add_common(CLI::App* sub, CommonArgs& args) {
    sub->add_option("-c,--config", args.config_path, "run config JSON file")
        ->required()
        ->check(CLI::ExistingFile);
    sub->add_option("--threads", args.threads, "worker threads for the scoring phase");
    sub->add_flag("--deterministic", args.deterministic,
                  "single-threaded mode with a fixed reduction order");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"propensity-stratified offline evaluation of session-based recommenders"};
    app.require_subcommand(1);

    CommonArgs common;
    std::string train_model;
    std::vector<std::string> eval_models;

    auto* cmd_pre = app.add_subcommand("preprocess", "parse the raw log, filter, split, write the snapshot");
    add_common(cmd_pre, common);
    auto* cmd_prop = app.add_subcommand("propensity", "fit gamma and write the item propensity table");
    add_common(cmd_prop, common);
    auto* cmd_tr = app.add_subcommand("train", "train a model and persist it");
    add_common(cmd_tr, common);
    cmd_tr->add_option("model", train_model, "sknn or gru4rec")->required();
    auto* cmd_ev = app.add_subcommand("evaluate", "run the next-item protocol and stratified reports");
    add_common(cmd_ev, common);
    cmd_ev->add_option("models", eval_models, "models to evaluate (default: both)");
    auto* cmd_ens = app.add_subcommand("ensemble", "evaluate fixed and dynamic score blends");
    add_common(cmd_ens, common);
    auto* cmd_rep = app.add_subcommand("report", "merge evaluation artifacts into plot-ready files");
    add_common(cmd_rep, common);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    const unsigned threads = common.deterministic ? 1 : std::max(1u, common.threads);
    try {
        const sessrec::RunConfig cfg = sessrec::RunConfig::load(common.config_path);
        if (cmd_pre->parsed()) {
            sessrec::cmd_preprocess(cfg, std::cout);
        } else if (cmd_prop->parsed()) {
            sessrec::cmd_propensity(cfg, std::cout);
        } else if (cmd_tr->parsed()) {
            sessrec::cmd_train(cfg, train_model, std::cout);
        } else if (cmd_ev->parsed()) {
            if (eval_models.empty()) eval_models = {"sknn", "gru4rec"};
            sessrec::cmd_evaluate(cfg, eval_models, threads, std::cout);
        } else if (cmd_ens->parsed()) {
            sessrec::cmd_ensemble(cfg, threads, std::cout);
        } else if (cmd_rep->parsed()) {
            sessrec::cmd_report(cfg, std::cout);
        }
    } catch (const sessrec::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const sessrec::DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 2;
    } catch (const sessrec::NumericError& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
