#include "pmc/cli.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "pmc/io.hpp"
#include "pmc/serialize.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace pmc::cli {

std::string to_string(Baseline b) {
    switch (b) {
        case Baseline::SourceOnly: return "source-only";
        case Baseline::Dann: return "dann";
        case Baseline::Pmc: return "pmc";
        case Baseline::PmcPi: return "pmc-pi";
    }
    return "?";
}

Baseline baseline_from_string(const std::string& s) {
    if (s == "source-only") return Baseline::SourceOnly;
    if (s == "dann") return Baseline::Dann;
    if (s == "pmc") return Baseline::Pmc;
    if (s == "pmc-pi") return Baseline::PmcPi;
    throw ConfigError("baseline: unknown value '" + s +
                      "' (expected source-only|dann|pmc|pmc-pi)");
}

// ---------------------------------------------------------------------------
// JSON parsing
// ---------------------------------------------------------------------------

namespace {

void check_keys(const json& j, const std::string& where, const std::set<std::string>& allowed) {
    for (const auto& [key, _] : j.items()) {
        if (!allowed.count(key)) {
            throw ConfigError(where + ": unknown field '" + key + "'");
        }
    }
}

double num_field(const json& j, const std::string& where, const std::string& key, double dflt) {
    if (!j.contains(key)) return dflt;
    if (!j[key].is_number()) throw ConfigError(where + ": field '" + key + "' must be a number");
    return j[key].get<double>();
}

std::size_t size_field(const json& j, const std::string& where, const std::string& key,
                       std::size_t dflt) {
    if (!j.contains(key)) return dflt;
    if (!j[key].is_number_unsigned() && !j[key].is_number_integer()) {
        throw ConfigError(where + ": field '" + key + "' must be an integer");
    }
    const auto v = j[key].get<long long>();
    if (v < 0) throw ConfigError(where + ": field '" + key + "' must be nonnegative");
    return static_cast<std::size_t>(v);
}

bool bool_field(const json& j, const std::string& where, const std::string& key, bool dflt) {
    if (!j.contains(key)) return dflt;
    if (!j[key].is_boolean()) throw ConfigError(where + ": field '" + key + "' must be a boolean");
    return j[key].get<bool>();
}

std::string str_field(const json& j, const std::string& where, const std::string& key,
                      const std::string& dflt) {
    if (!j.contains(key)) return dflt;
    if (!j[key].is_string()) throw ConfigError(where + ": field '" + key + "' must be a string");
    return j[key].get<std::string>();
}

BenchmarkSpec benchmark_from(const json& j) {
    BenchmarkSpec spec;
    const std::string where = "benchmark";
    check_keys(j, where,
               {"preset", "categories", "source_count", "target_count", "noise", "seed",
                "coupling", "base_modality", "derived_modality", "modalities"});
    if (j.contains("preset")) {
        const std::string p = j["preset"].get<std::string>();
        if (p != "blobs-mm2") throw ConfigError("benchmark: unknown preset '" + p + "'");
        spec = blobs_mm2_spec();
    }
    spec.num_categories = size_field(j, where, "categories", spec.num_categories);
    spec.source_count = size_field(j, where, "source_count", spec.source_count);
    spec.target_count = size_field(j, where, "target_count", spec.target_count);
    spec.noise = num_field(j, where, "noise", spec.noise);
    spec.seed = size_field(j, where, "seed", spec.seed);
    spec.coupling = static_cast<int>(size_field(j, where, "coupling", spec.coupling));
    spec.base_modality = str_field(j, where, "base_modality", spec.base_modality);
    spec.derived_modality = str_field(j, where, "derived_modality", spec.derived_modality);
    if (j.contains("modalities")) {
        if (!j["modalities"].is_array()) throw ConfigError("benchmark: 'modalities' must be a list");
        spec.modalities.clear();
        for (const auto& mj : j["modalities"]) {
            const std::string mwhere = "benchmark.modalities";
            check_keys(mj, mwhere,
                       {"name", "dim", "informativeness", "rotation_deg", "translation", "scale"});
            ModalitySpec m;
            m.name = str_field(mj, mwhere, "name", "");
            if (m.name.empty()) throw ConfigError(mwhere + ": field 'name' is required");
            m.dim = size_field(mj, mwhere, "dim", 0);
            m.informativeness = num_field(mj, mwhere, "informativeness", 1.0);
            m.rotation_deg = num_field(mj, mwhere, "rotation_deg", 0.0);
            m.scale = num_field(mj, mwhere, "scale", 1.0);
            if (mj.contains("translation")) {
                if (!mj["translation"].is_array()) {
                    throw ConfigError(mwhere + ": 'translation' must be a list of numbers");
                }
                for (const auto& v : mj["translation"]) m.translation.push_back(v.get<double>());
            }
            spec.modalities.push_back(std::move(m));
        }
    }
    return spec;
}

TrainConfig train_config_from(const json& j) {
    TrainConfig cfg;
    const std::string where = "train";
    check_keys(j, where,
               {"warmup_epochs", "cooperation_epochs", "lambda", "lambda_gen", "base_lr",
                "momentum", "weight_decay", "batch_size", "alpha", "mode", "disable_mss",
                "disable_mis", "disable_cv", "disable_gend", "inv_schedule", "ramp",
                "fused_weight_rule", "grad_clip", "conditioning_temperature", "mmg_epochs", "mmg_latent_dim", "pi_passes_per_round", "feature_layers",
                "domain_hidden"});
    cfg.warmup_epochs = size_field(j, where, "warmup_epochs", cfg.warmup_epochs);
    cfg.cooperation_epochs = size_field(j, where, "cooperation_epochs", cfg.cooperation_epochs);
    cfg.lambda = num_field(j, where, "lambda", cfg.lambda);
    cfg.lambda_gen = num_field(j, where, "lambda_gen", cfg.lambda_gen);
    cfg.base_lr = num_field(j, where, "base_lr", cfg.base_lr);
    cfg.momentum = num_field(j, where, "momentum", cfg.momentum);
    cfg.weight_decay = num_field(j, where, "weight_decay", cfg.weight_decay);
    cfg.batch_size = size_field(j, where, "batch_size", cfg.batch_size);
    cfg.alpha = num_field(j, where, "alpha", cfg.alpha);
    cfg.grad_clip = num_field(j, where, "grad_clip", cfg.grad_clip);
    const std::string mode = str_field(j, where, "mode", "");
    if (mode == "mmda") cfg.mode = TrainConfig::Mode::Mmda;
    else if (mode == "mmda-pi") cfg.mode = TrainConfig::Mode::MmdaPi;
    else if (!mode.empty()) throw ConfigError("train: unknown mode '" + mode + "'");
    cfg.disable_mss = bool_field(j, where, "disable_mss", cfg.disable_mss);
    cfg.disable_mis = bool_field(j, where, "disable_mis", cfg.disable_mis);
    cfg.disable_cv = bool_field(j, where, "disable_cv", cfg.disable_cv);
    cfg.disable_gend = bool_field(j, where, "disable_gend", cfg.disable_gend);
    cfg.inv_schedule = bool_field(j, where, "inv_schedule", cfg.inv_schedule);
    cfg.ramp = bool_field(j, where, "ramp", cfg.ramp);
    const std::string rule = str_field(j, where, "fused_weight_rule", "mean-confidence");
    if (rule == "mean-confidence") {
        cfg.fused_weight_rule = FusedWeightRule::MeanOfModalityConfidences;
    } else if (rule == "mean-prob-at-fused") {
        cfg.fused_weight_rule = FusedWeightRule::MeanProbAtFusedLabel;
    } else {
        throw ConfigError("train: unknown fused_weight_rule '" + rule + "'");
    }
    cfg.conditioning_temperature = num_field(j, where, "conditioning_temperature", cfg.conditioning_temperature);
    cfg.mmg_epochs = size_field(j, where, "mmg_epochs", cfg.mmg_epochs);
    cfg.mmg_latent_dim = size_field(j, where, "mmg_latent_dim", cfg.mmg_latent_dim);
    cfg.pi_passes_per_round = size_field(j, where, "pi_passes_per_round", cfg.pi_passes_per_round);
    if (j.contains("feature_layers")) {
        cfg.arch.feature_layers.clear();
        for (const auto& v : j["feature_layers"]) {
            cfg.arch.feature_layers.push_back(v.get<std::size_t>());
        }
    }
    if (j.contains("domain_hidden")) {
        cfg.arch.domain_hidden.clear();
        for (const auto& v : j["domain_hidden"]) {
            cfg.arch.domain_hidden.push_back(v.get<std::size_t>());
        }
    }
    return cfg;
}

json parse_json(const std::string& text, const std::string& what) {
    try {
        return json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError(what + ": not valid JSON (" + e.what() + ")");
    }
}

}  // namespace

BenchmarkSpec benchmark_spec_from_json(const std::string& text) {
    return benchmark_from(parse_json(text, "benchmark spec"));
}

ExperimentConfig experiment_config_from_json(const std::string& text) {
    const json j = parse_json(text, "experiment config");
    check_keys(j, "config", {"dataset", "benchmark", "baseline", "seeds", "output_dir", "train"});
    ExperimentConfig cfg;
    if (j.contains("dataset") == j.contains("benchmark")) {
        throw ConfigError("config: exactly one of 'dataset' or 'benchmark' is required");
    }
    if (j.contains("dataset")) cfg.dataset_path = j["dataset"].get<std::string>();
    if (j.contains("benchmark")) cfg.benchmark = benchmark_from(j["benchmark"]);
    cfg.baseline = baseline_from_string(str_field(j, "config", "baseline", "pmc"));
    if (j.contains("seeds")) {
        if (!j["seeds"].is_array() || j["seeds"].empty()) {
            throw ConfigError("config: 'seeds' must be a nonempty list");
        }
        cfg.seeds.clear();
        for (const auto& v : j["seeds"]) cfg.seeds.push_back(v.get<std::uint64_t>());
    }
    cfg.output_dir = str_field(j, "config", "output_dir", "");
    if (cfg.output_dir.empty()) throw ConfigError("config: field 'output_dir' is required");
    if (j.contains("train")) cfg.train = train_config_from(j["train"]);
    // the baseline decides the mode unless the config pinned it explicitly
    if (!j.contains("train") || !j["train"].contains("mode")) {
        cfg.train.mode = cfg.baseline == Baseline::PmcPi ? TrainConfig::Mode::MmdaPi
                                                         : TrainConfig::Mode::Mmda;
    }
    if ((cfg.baseline == Baseline::PmcPi) != (cfg.train.mode == TrainConfig::Mode::MmdaPi)) {
        throw ConfigError("config: baseline '" + to_string(cfg.baseline) +
                          "' conflicts with the configured train mode");
    }
    try {
        cfg.train.validate();
    } catch (const std::exception& e) {
        throw ConfigError(e.what());
    }
    return cfg;
}

// ---------------------------------------------------------------------------
// gen-data
// ---------------------------------------------------------------------------

int cmd_gen_data(const GenDataArgs& args, std::ostream& out, std::ostream& err) {
    BenchmarkSpec spec;
    try {
        spec = benchmark_spec_from_json(read_file(args.spec_path));
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return 2;
    }
    try {
        const MultiModalDataset ds = generate_benchmark(spec);
        save_dataset(ds, args.out_path);
        out << "wrote " << args.out_path << ": " << ds.source_count() << " source + "
            << ds.target_count() << " target samples, " << ds.schema.num_categories
            << " categories\n";
        for (const auto& m : spec.modalities) {
            out << "  modality " << m.name << ": dim " << m.dim << ", informativeness "
                << m.informativeness << ", shift rot " << m.rotation_deg << " deg, scale "
                << m.scale << '\n';
        }
        return 0;
    } catch (const std::invalid_argument& e) {
        err << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return 3;
    }
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

namespace {

struct SeedResult {
    std::uint64_t seed = 0;
    RunMetrics metrics;
    std::vector<std::string> modalities;
    std::string error;
};

void write_audit_file(const std::string& path, const RunMetrics& metrics) {
    std::ostringstream out;
    out << audit_header() << '\n';
    for (const auto& e : metrics.epochs) {
        for (const auto& set : e.selections) append_audit(out, e.epoch, set);
    }
    atomic_write_file(path, out.str());
}

double mean_of(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

double sample_std(const std::vector<double>& v) {
    if (v.size() < 2) return 0.0;
    const double m = mean_of(v);
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return std::sqrt(s / static_cast<double>(v.size() - 1));
}

}  // namespace

RunOutput run_one_seed(const MultiModalDataset& ds, const ExperimentConfig& cfg,
                       std::uint64_t seed, const std::string& run_dir) {
    TrainConfig tc = cfg.train;
    tc.seed = seed;
    fs::create_directories(run_dir);

    RunOutput out;
    out.modalities = ds.available_modalities();
    const std::size_t epochs = tc.warmup_epochs + tc.cooperation_epochs;
    switch (cfg.baseline) {
        case Baseline::SourceOnly:
        case Baseline::Dann:
        case Baseline::Pmc: {
            TrainResult res = cfg.baseline == Baseline::SourceOnly ? train_source_only(ds, tc)
                              : cfg.baseline == Baseline::Dann     ? train_dann(ds, tc)
                                                                   : train_pmc(ds, tc);
            save_ensemble(run_dir + "/ensemble.ckpt", res.ensemble, res.optims, epochs);
            out.metrics = std::move(res.metrics);
            break;
        }
        case Baseline::PmcPi: {
            PmcPiResult res = train_pmc_pi(ds, tc);
            save_ensemble(run_dir + "/ensemble.ckpt", res.ensemble, res.optims, epochs);
            save_mmg(run_dir + "/generator.ckpt", res.generator);
            out.modalities.clear();
            for (const auto& m : ds.schema.modalities) out.modalities.push_back(m.name);
            out.metrics = std::move(res.metrics);
            break;
        }
    }
    atomic_write_file(run_dir + "/metrics.txt", metrics_to_string(out.metrics, out.modalities));
    write_audit_file(run_dir + "/audit.txt", out.metrics);
    return out;
}

int cmd_train(const TrainArgs& args, std::ostream& out, std::ostream& err) {
    ExperimentConfig cfg;
    try {
        cfg = experiment_config_from_json(read_file(args.config_path));
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return 2;
    }

    try {
        MultiModalDataset ds = cfg.benchmark ? generate_benchmark(*cfg.benchmark)
                                             : load_dataset(cfg.dataset_path);

        // baseline/mode vs dataset shape checked before any training starts
        const bool pi_shaped = !ds.schema.missing_target_modalities.empty();
        if (cfg.baseline == Baseline::PmcPi && !pi_shaped) {
            err << "error: baseline pmc-pi needs a dataset with a missing target modality\n";
            return 2;
        }
        if (cfg.baseline == Baseline::Pmc && pi_shaped) {
            err << "error: baseline pmc needs an MMDA-shaped dataset\n";
            return 2;
        }

        fs::create_directories(cfg.output_dir);
        atomic_write_file(cfg.output_dir + "/config.json", read_file(args.config_path));

        std::vector<SeedResult> results(cfg.seeds.size());
        std::size_t workers = args.max_workers ? args.max_workers
                                               : std::max(1u, std::thread::hardware_concurrency());
        workers = std::min(workers, cfg.seeds.size());
        std::vector<std::thread> pool;
        std::size_t next = 0;
        std::mutex mu;
        for (std::size_t w = 0; w < workers; ++w) {
            pool.emplace_back([&] {
                for (;;) {
                    std::size_t idx;
                    {
                        std::lock_guard<std::mutex> lock(mu);
                        if (next >= cfg.seeds.size()) return;
                        idx = next++;
                    }
                    SeedResult& r = results[idx];
                    r.seed = cfg.seeds[idx];
                    try {
                        const std::string run_dir =
                            cfg.output_dir + "/run_seed" + std::to_string(r.seed);
                        RunOutput ro = run_one_seed(ds, cfg, r.seed, run_dir);
                        r.metrics = std::move(ro.metrics);
                        r.modalities = std::move(ro.modalities);
                    } catch (const std::exception& e) {
                        r.error = e.what();
                    }
                }
            });
        }
        for (auto& t : pool) t.join();

        for (const auto& r : results) {
            if (!r.error.empty()) {
                err << "error: seed " << r.seed << ": " << r.error << '\n';
                return 3;
            }
        }

        // aggregate summary
        std::ostringstream sum;
        sum << "# pmc-summary v1\n";
        sum << "baseline " << to_string(cfg.baseline) << '\n';
        sum << "runs " << results.size() << '\n';
        sum << "modalities";
        for (const auto& m : results.front().modalities) sum << ' ' << m;
        sum << '\n';
        std::vector<double> fused;
        std::map<std::string, std::vector<double>> per_modality;
        for (const auto& r : results) {
            sum << "seed " << r.seed << " fused " << fmt_double(r.metrics.final_fused_target_acc);
            for (const auto& m : r.modalities) {
                sum << ' ' << m << ' ' << fmt_double(r.metrics.final_target_acc.at(m));
                per_modality[m].push_back(r.metrics.final_target_acc.at(m));
            }
            sum << '\n';
            fused.push_back(r.metrics.final_fused_target_acc);
        }
        sum << "final_fused_mean " << fmt_double(mean_of(fused)) << '\n';
        sum << "final_fused_std " << fmt_double(sample_std(fused)) << '\n';
        for (const auto& [m, v] : per_modality) {
            sum << "final_" << m << "_mean " << fmt_double(mean_of(v)) << '\n';
            sum << "final_" << m << "_std " << fmt_double(sample_std(v)) << '\n';
        }
        atomic_write_file(cfg.output_dir + "/summary.txt", sum.str());

        out << "baseline " << to_string(cfg.baseline) << ": fused target accuracy "
            << std::fixed << std::setprecision(4) << mean_of(fused) << " +- "
            << sample_std(fused) << " over " << results.size() << " seed(s)\n";
        out << "summary: " << cfg.output_dir << "/summary.txt\n";
        return 0;
    } catch (const ConfigError& e) {
        err << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return 3;
    }
}

// ---------------------------------------------------------------------------
// report
// ---------------------------------------------------------------------------

namespace {

struct SummaryData {
    std::string dir;
    std::string baseline;
    std::vector<std::string> modalities;
    double fused_mean = 0.0, fused_std = 0.0;
    std::map<std::string, double> modality_mean, modality_std;
    std::vector<std::pair<std::uint64_t, double>> per_seed_fused;
};

SummaryData parse_summary(const std::string& dir) {
    SummaryData s;
    s.dir = dir;
    const std::string text = read_file(dir + "/summary.txt");
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line) || line != "# pmc-summary v1") {
        throw std::runtime_error("run '" + dir + "': bad or missing summary header");
    }
    while (std::getline(in, line)) {
        const auto toks = split_ws(line);
        if (toks.empty()) continue;
        if (toks[0] == "baseline" && toks.size() == 2) s.baseline = toks[1];
        else if (toks[0] == "modalities") {
            s.modalities.assign(toks.begin() + 1, toks.end());
        } else if (toks[0] == "seed" && toks.size() >= 4) {
            s.per_seed_fused.push_back({static_cast<std::uint64_t>(parse_long(toks[1])),
                                        parse_double(toks[3])});
        } else if (toks[0] == "final_fused_mean") s.fused_mean = parse_double(toks[1]);
        else if (toks[0] == "final_fused_std") s.fused_std = parse_double(toks[1]);
        else if (toks[0].rfind("final_", 0) == 0 && toks.size() == 2) {
            const std::string key = toks[0].substr(6);
            const auto pos = key.rfind('_');
            const std::string m = key.substr(0, pos);
            if (key.substr(pos + 1) == "mean") s.modality_mean[m] = parse_double(toks[1]);
            else s.modality_std[m] = parse_double(toks[1]);
        }
    }
    if (s.baseline.empty()) throw std::runtime_error("run '" + dir + "': summary lacks baseline");
    return s;
}

}  // namespace

int cmd_report(const ReportArgs& args, std::ostream& out, std::ostream& err) {
    if (args.run_dirs.empty()) {
        err << "error: report needs at least one run directory\n";
        return 2;
    }
    try {
        std::vector<SummaryData> runs;
        for (const auto& dir : args.run_dirs) runs.push_back(parse_summary(dir));
        for (const auto& r : runs) {
            if (r.modalities != runs.front().modalities) {
                err << "error: run '" << r.dir << "' has modalities incompatible with '"
                    << runs.front().dir << "'\n";
                return 2;
            }
        }

        std::ostringstream machine;
        machine << "# pmc-report v1\n# columns: run baseline fused_mean fused_std delta";
        for (const auto& m : runs.front().modalities) machine << " " << m << "_mean " << m << "_std";
        machine << '\n';

        out << std::left << std::setw(28) << "run" << std::setw(14) << "baseline" << std::setw(18)
            << "fused (mean+-std)" << std::setw(10) << "delta";
        for (const auto& m : runs.front().modalities) out << std::setw(18) << (m + " (mean+-std)");
        out << '\n';
        for (const auto& r : runs) {
            const double delta = r.fused_mean - runs.front().fused_mean;
            char fused[64], dbuf[32];
            std::snprintf(fused, sizeof(fused), "%.4f+-%.4f", r.fused_mean, r.fused_std);
            if (&r == &runs.front()) std::snprintf(dbuf, sizeof(dbuf), "-");
            else std::snprintf(dbuf, sizeof(dbuf), "%+.4f", delta);
            out << std::left << std::setw(28) << fs::path(r.dir).filename().string()
                << std::setw(14) << r.baseline << std::setw(18) << fused << std::setw(10) << dbuf;
            machine << r.dir << ' ' << r.baseline << ' ' << fmt_double(r.fused_mean) << ' '
                    << fmt_double(r.fused_std) << ' '
                    << (&r == &runs.front() ? std::string("-") : fmt_double(delta));
            for (const auto& m : runs.front().modalities) {
                char buf[64];
                std::snprintf(buf, sizeof(buf), "%.4f+-%.4f", r.modality_mean.at(m),
                              r.modality_std.at(m));
                out << std::setw(18) << buf;
                machine << ' ' << fmt_double(r.modality_mean.at(m)) << ' '
                        << fmt_double(r.modality_std.at(m));
            }
            out << '\n';
            machine << '\n';
        }
        if (!args.out_path.empty()) atomic_write_file(args.out_path, machine.str());
        return 0;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return 2;
    }
}

// ---------------------------------------------------------------------------
// impute
// ---------------------------------------------------------------------------

int cmd_impute(const ImputeArgs& args, std::ostream& out, std::ostream& err) {
    try {
        MultiModalDataset ds = load_dataset(args.dataset_path);
        if (ds.schema.missing_target_modalities.size() != 1) {
            err << "error: impute needs a dataset with exactly one missing target modality\n";
            return 2;
        }
        const MmgModel generator = load_mmg(args.generator_path);
        const EnsembleCheckpoint ck = load_ensemble(args.ensemble_path);
        const std::string missing = ds.schema.missing_target_modalities.front();
        if (generator.missing_modality != missing) {
            err << "error: generator was trained for modality '" << generator.missing_modality
                << "', dataset misses '" << missing << "'\n";
            return 2;
        }

        std::size_t imputed = 0;
        for (auto& s : ds.samples) {
            if (s.domain != Domain::Target) continue;
            Vec mean(ck.ensemble.num_categories, 0.0);
            for (const auto& br : ck.ensemble.branches) {
                if (br.modality == missing) continue;
                const Vec p = predict_probs(br, s.payloads.at(br.modality));
                for (std::size_t c = 0; c < mean.size(); ++c) mean[c] += p[c];
            }
            double sum = 0.0;
            for (double v : mean) sum += v;
            for (double& v : mean) v /= sum;
            s.payloads[missing] = generate(generator, s.payloads.at(generator.available_modality),
                                           mean);
            ++imputed;
        }
        ds.schema.missing_target_modalities.clear();
        ds.validate();
        save_dataset(ds, args.out_path);
        out << "imputed modality '" << missing << "' for " << imputed << " target samples -> "
            << args.out_path << '\n';
        return 0;
    } catch (const std::invalid_argument& e) {
        err << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return 3;
    }
}

}  // namespace pmc::cli
