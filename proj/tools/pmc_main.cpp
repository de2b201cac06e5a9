// pmc — command-line front end for the multi-modality adaptation lab.
//
//   pmc gen-data --spec spec.json --out data.pmcdata
//   pmc train    --config experiment.json [--workers N]
//   pmc report   RUN_DIR... [--out report.txt]
//   pmc impute   --dataset d.pmcdata --generator g.ckpt --ensemble e.ckpt --out full.pmcdata

#include <iostream>

#include <CLI11.hpp>

#include "pmc/cli.hpp"

int main(int argc, char** argv) {
    CLI::App app{"multi-modality domain adaptation lab"};
    app.require_subcommand(1);

    pmc::cli::GenDataArgs gen;
    auto* gen_cmd = app.add_subcommand("gen-data", "generate a synthetic benchmark dataset");
    gen_cmd->add_option("--spec", gen.spec_path, "benchmark spec JSON file")->required();
    gen_cmd->add_option("--out", gen.out_path, "output dataset path")->required();

    pmc::cli::TrainArgs train;
    auto* train_cmd = app.add_subcommand("train", "run a training experiment over its seed list");
    train_cmd->add_option("--config", train.config_path, "experiment config JSON file")->required();
    train_cmd->add_option("--workers", train.max_workers, "max parallel seed workers");

    pmc::cli::ReportArgs report;
    auto* report_cmd = app.add_subcommand("report", "render a comparison table over finished runs");
    report_cmd->add_option("dirs", report.run_dirs, "run output directories")->required();
    report_cmd->add_option("--out", report.out_path, "write a machine-readable copy here");

    pmc::cli::ImputeArgs impute;
    auto* impute_cmd =
        app.add_subcommand("impute", "fill a missing target modality with a trained generator");
    impute_cmd->add_option("--dataset", impute.dataset_path, "dataset with a missing modality")
        ->required();
    impute_cmd->add_option("--generator", impute.generator_path, "generator checkpoint")->required();
    impute_cmd->add_option("--ensemble", impute.ensemble_path, "ensemble checkpoint")->required();
    impute_cmd->add_option("--out", impute.out_path, "output dataset path")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (gen_cmd->parsed()) return pmc::cli::cmd_gen_data(gen, std::cout, std::cerr);
        if (train_cmd->parsed()) return pmc::cli::cmd_train(train, std::cout, std::cerr);
        if (report_cmd->parsed()) return pmc::cli::cmd_report(report, std::cout, std::cerr);
        if (impute_cmd->parsed()) return pmc::cli::cmd_impute(impute, std::cout, std::cerr);
    } catch (const pmc::cli::ConfigError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 3;
    }
    return 0;
}
