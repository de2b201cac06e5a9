#pragma once
// trainers.hpp
//
// Orchestration of the cooperation training loops:
//  - warmup: per-modality domain-adversarial training (the DANN phase);
//  - cooperation: per epoch, pseudo records from the current model, source
//    accuracies feed the proportion schedule, MSS/MIS selection, then one
//    full pass minimizing src + tar + adversarial losses;
//  - the privileged-information variant, which first trains and freezes the
//    missing-modality generator, warms up on the available modality only,
//    then regenerates the missing target payloads every cooperation epoch
//    from the latest pseudo category probability vectors.
//
// Baselines (source-only, plain DANN) run the same epoch machinery; with
// both selection modules disabled the cooperation loop reduces to the DANN
// baseline bit for bit under the same seed.
//
// Target ground truth is touched only inside evaluate(); no training path
// reads it.

#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "pmc/branches.hpp"
#include "pmc/mmg.hpp"
#include "pmc/selection.hpp"
#include "pmc/synthdata.hpp"

namespace pmc {

struct TrainConfig {
    std::size_t warmup_epochs = 20;
    std::size_t cooperation_epochs = 60;  // E
    double lambda = 0.3;
    double lambda_gen = 0.1;
    double base_lr = 0.03;
    double momentum = 0.9;
    double weight_decay = 3e-4;
    double grad_clip = 5.0;  // per-net batch gradient-norm cap, 0 disables
    std::size_t batch_size = 16;
    double alpha = 1.0;
    std::uint64_t seed = 1;

    enum class Mode { Mmda, MmdaPi } mode = Mode::Mmda;

    bool disable_mss = false;
    bool disable_mis = false;
    bool disable_cv = false;    // MMG conditioning ablation
    bool disable_gend = false;  // MMG latent domain classifier ablation

    bool inv_schedule = true;
    bool ramp = true;
    FusedWeightRule fused_weight_rule = FusedWeightRule::MeanOfModalityConfidences;
    // Temperature applied to the pseudo probability vector before it
    // conditions the generator (p_c^(1/T), renormalized). Raw soft vectors
    // blend the decoder's class-conditional structure and measurably degrade
    // the generated modality; low temperatures keep confident vectors crisp
    // while leaving genuinely ambiguous ones soft. 1 = untouched, 0 = argmax.
    double conditioning_temperature = 0.5;

    std::size_t mmg_epochs = 240;
    std::size_t mmg_latent_dim = 4;
    // Gradient passes per cooperation round in the privileged-information
    // loop. The late-starting generated-modality branch needs more work per
    // round than the warm branches of the standard loop.
    std::size_t pi_passes_per_round = 2;

    BranchArch arch;

    void validate() const;
};

struct EpochMetrics {
    std::size_t epoch = 0;  // 1-based within the whole run
    std::string phase;      // "warmup" or "coop"
    std::map<std::string, double> src_acc;   // A^m fed to the schedule
    double fused_src_acc = 0.0;              // A^0
    std::map<std::string, double> r;         // r^m after the update
    double r_fused = 0.0;                    // r^0
    std::map<std::string, std::size_t> sel_count;
    std::size_t sel_mis_count = 0;
    std::map<std::string, double> target_acc;  // from hidden labels
    double fused_target_acc = 0.0;
    std::vector<SelectionSet> selections;  // MSS sets then the MIS set
};

struct RunMetrics {
    std::vector<EpochMetrics> epochs;
    std::map<std::string, double> final_target_acc;
    double final_fused_target_acc = 0.0;

    bool operator==(const RunMetrics& o) const;
};

// Columnar per-epoch text format (one row per epoch, documented in README).
std::string metrics_to_string(const RunMetrics& m, const std::vector<std::string>& modalities);

// ---------------------------------------------------------------------------
// Operations
// ---------------------------------------------------------------------------

// Eq.-style target retraining loss for one branch: over the passed target
// samples, (1/N) sum of  s^m w^m CE(C(F(x)), label_mss) + s^0 w^0
// CE(C(F(x)), label_mis); unselected samples contribute zero. Normalization
// is by the number of samples passed, never by the selected count.
BranchBatchResult tar_loss(const ModalityBranch& branch, const SelectionSet& mss,
                           const SelectionSet& mis, std::span<const Sample* const> targets);

// Mean of the per-modality probability vectors; argmax with ties to the
// lowest index. Every ensemble modality must be present on the sample.
std::pair<int, Vec> late_fusion_predict(const BranchEnsemble& ensemble, const Sample& sample);

enum class Split { Source, Target };

struct EvalResult {
    std::map<std::string, double> per_modality;
    double fused = 0.0;
};

// Exact classification accuracies. The target split is the only reader of
// the dataset's hidden labels.
EvalResult evaluate(const BranchEnsemble& ensemble, const MultiModalDataset& ds, Split split);

// ---------------------------------------------------------------------------
// Training loops
// ---------------------------------------------------------------------------

struct TrainResult {
    BranchEnsemble ensemble;
    std::vector<BranchOptim> optims;  // final optimizer state, for checkpoints
    RunMetrics metrics;
};

TrainResult train_source_only(const MultiModalDataset& ds, const TrainConfig& cfg);
TrainResult train_dann(const MultiModalDataset& ds, const TrainConfig& cfg);
// Requires an MMDA-shaped dataset (no modality missing from targets).
TrainResult train_pmc(const MultiModalDataset& ds, const TrainConfig& cfg);

// Drop-in replacement for the frozen generator (used by the oracle-generator
// sanity runs): maps (target sample, conditioning vector) to a payload.
using GeneratorOverride = std::function<Vec(const Sample&, const Vec&)>;

struct PmcPiResult {
    BranchEnsemble ensemble;
    std::vector<BranchOptim> optims;
    MmgModel generator;
    RunMetrics metrics;
};

// Requires exactly one modality missing from targets.
PmcPiResult train_pmc_pi(const MultiModalDataset& ds, const TrainConfig& cfg,
                         const GeneratorOverride& generator_override = {});

}  // namespace pmc
