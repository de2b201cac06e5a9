#pragma once
// branches.hpp
//
// Per-modality adversarial branch: feature extractor F, category classifier
// C and domain classifier D, with the source cross-entropy and the
// domain-adversarial loss (via gradient reversal into F). One DANN epoch
// over balanced source/target mini-batches is the training unit; the
// cooperation trainer reuses the same epoch with pseudo-labeled target
// terms mixed in.
//
// Branch initialization is keyed on (seed, modality name), and the batch
// schedule is keyed on (seed, epoch) alone, so no branch's trajectory
// depends on the order modalities are listed in. Branches share no mutable
// state within an epoch and may be trained concurrently.

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pmc/nncore.hpp"
#include "pmc/synthdata.hpp"

namespace pmc {

struct BranchArch {
    std::vector<std::size_t> feature_layers{64, 32};  // hidden..., feature dim
    std::vector<std::size_t> domain_hidden{16};
};

struct ModalityBranch {
    std::string modality;
    DenseNet feature;     // x^m -> feature
    DenseNet classifier;  // feature -> N_c logits
    DenseNet domain_clf;  // feature -> 1 logit
};

struct BranchEnsemble {
    std::vector<ModalityBranch> branches;
    double lambda = 0.3;  // adversarial trade-off, applied as GRL strength
    std::size_t num_categories = 0;

    const ModalityBranch& branch(const std::string& modality) const;
    std::size_t branch_index(const std::string& modality) const;
};

BranchEnsemble make_ensemble(const DatasetSchema& schema,
                             const std::vector<std::string>& modalities, const BranchArch& arch,
                             double lambda, std::uint64_t seed);

// softmax(C(F(x))): nonnegative, sums to 1
Vec predict_probs(const ModalityBranch& branch, const Vec& x);

// ---------------------------------------------------------------------------
// Losses over batches
// ---------------------------------------------------------------------------

struct BranchGrads {
    NetGrads feature, classifier, domain;
};

struct BranchBatchResult {
    double loss = 0.0;
    BranchGrads grads;
};

// Mean source cross-entropy through C(F(x)) over the batch. Every sample
// must be source-domain.
BranchBatchResult src_loss(const ModalityBranch& branch,
                           std::span<const Sample* const> batch);

// Mean binary cross-entropy of D(F(x)) against the domain labels. Gradients
// into D are standard; gradients into F pass through the reversal layer with
// the given factor (an exactly-zero factor leaves F untouched).
BranchBatchResult adv_loss(const ModalityBranch& branch, std::span<const Sample* const> batch,
                           double grl_factor);

// ---------------------------------------------------------------------------
// Epoch training
// ---------------------------------------------------------------------------

struct BranchOptim {
    OptimState feature, classifier, domain;

    static BranchOptim for_branch(const ModalityBranch& branch, double base_lr, double momentum,
                                  double weight_decay, bool inv_schedule);
    void set_progress(double p);
};

enum class EpochMode { SourceOnly, Dann, Cooperation };

// Pseudo-label terms for one branch in a cooperation epoch, resolved from
// the MSS set of this modality and the shared MIS set: id -> (label, weight).
struct TargetTerms {
    std::map<int, std::pair<int, double>> mss;
    std::map<int, std::pair<int, double>> mis;
};

// Balanced batch schedule for one epoch, identical for every branch.
struct EpochPlan {
    std::vector<const Sample*> source_order;
    std::vector<const Sample*> target_order;
    std::size_t steps = 0;
    std::size_t half_batch = 0;
    double p_begin = 0.0;  // optimizer progress at the first step
    double p_end = 0.0;    // progress reached by the start of the next epoch
};

EpochPlan plan_epoch(const MultiModalDataset& ds, std::size_t batch_size, std::uint64_t seed,
                     std::size_t epoch_index, double p_begin, double p_end, bool need_targets);

struct EpochConfig {
    EpochMode mode = EpochMode::Dann;
    double lambda = 0.3;
    bool ramp = true;  // multiply the GRL factor by adaptation_ramp(p)
    // Per-net cap on the batch gradient norm before the SGD step; keeps the
    // reversed-gradient min-max from blowing up the feature net. 0 disables.
    double grad_clip = 5.0;
};

// Scales the gradient down to the given L2 norm when it exceeds it.
void clip_grad_norm(NetGrads& grads, double max_norm);

// One pass of mini-batch SGD for a single branch; terms may be null except
// in Cooperation mode (empty maps are fine and contribute nothing).
void run_branch_epoch(ModalityBranch& branch, BranchOptim& optim, const EpochPlan& plan,
                      const EpochConfig& cfg, const TargetTerms* terms);

// Classification accuracy of C(F(x)) over all source samples.
double source_accuracy(const ModalityBranch& branch, const MultiModalDataset& ds);
// Accuracy of the mean-of-probabilities prediction over all source samples.
double fused_source_accuracy(const BranchEnsemble& ensemble, const MultiModalDataset& ds);
// Fraction of samples whose domain D(F(x)) classifies correctly (0.5 = confused).
double domain_accuracy(const ModalityBranch& branch, const MultiModalDataset& ds);

// One DANN epoch for every branch (Eq. 3); returns the per-branch source
// accuracies measured at epoch end.
std::vector<double> train_dann_epoch(BranchEnsemble& ensemble, std::vector<BranchOptim>& optims,
                                     const MultiModalDataset& ds, const EpochPlan& plan,
                                     bool ramp);

// ---------------------------------------------------------------------------
// Checkpoints (exact round trip)
// ---------------------------------------------------------------------------

void save_ensemble(const std::string& path, const BranchEnsemble& ensemble,
                   const std::vector<BranchOptim>& optims, std::size_t epoch);

struct EnsembleCheckpoint {
    BranchEnsemble ensemble;
    std::vector<BranchOptim> optims;
    std::size_t epoch = 0;
};

EnsembleCheckpoint load_ensemble(const std::string& path);

}  // namespace pmc
