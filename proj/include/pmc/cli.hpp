#pragma once
// cli.hpp
//
// Config-driven experiment harness behind the command-line tool: dataset
// generation, baseline / cooperation / privileged-information training with
// per-seed workers, report rendering over finished runs, and batch
// imputation of a missing modality. Batch only; all state lives in the
// config files.
//
// Exit code contract: 0 success, 2 config/spec error, 3 runtime failure.

#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "pmc/synthdata.hpp"
#include "pmc/trainers.hpp"

namespace pmc::cli {

// Raised for malformed configs/specs; the tool maps it to exit code 2.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class Baseline { SourceOnly, Dann, Pmc, PmcPi };

std::string to_string(Baseline b);
Baseline baseline_from_string(const std::string& s);

struct ExperimentConfig {
    std::string dataset_path;                 // exactly one of dataset_path /
    std::optional<BenchmarkSpec> benchmark;   // benchmark is set
    Baseline baseline = Baseline::Pmc;
    std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
    std::string output_dir;
    TrainConfig train;
};

// Parsers reject unknown keys and report the offending field by name.
BenchmarkSpec benchmark_spec_from_json(const std::string& text);
ExperimentConfig experiment_config_from_json(const std::string& text);

struct GenDataArgs {
    std::string spec_path;
    std::string out_path;
};
int cmd_gen_data(const GenDataArgs& args, std::ostream& out, std::ostream& err);

struct TrainArgs {
    std::string config_path;
    std::size_t max_workers = 0;  // 0 = hardware concurrency
};
int cmd_train(const TrainArgs& args, std::ostream& out, std::ostream& err);

struct ReportArgs {
    std::vector<std::string> run_dirs;
    std::string out_path;  // optional machine-readable copy
};
int cmd_report(const ReportArgs& args, std::ostream& out, std::ostream& err);

struct ImputeArgs {
    std::string dataset_path;
    std::string generator_path;
    std::string ensemble_path;
    std::string out_path;
};
int cmd_impute(const ImputeArgs& args, std::ostream& out, std::ostream& err);

// One run of the configured baseline on one seed (used by the train command
// and by tests that need in-process access to run artifacts).
struct RunOutput {
    RunMetrics metrics;
    std::vector<std::string> modalities;
};
RunOutput run_one_seed(const MultiModalDataset& ds, const ExperimentConfig& cfg,
                       std::uint64_t seed, const std::string& run_dir);

}  // namespace pmc::cli
