#pragma once
// selection.hpp
//
// Pseudo-label records, the self-paced proportion schedule, and the MSS /
// MIS sample-selection modules, plus the detection-mode variant (NMS and
// top-r% box selection over scored boxes). Everything here is a pure
// function over value data.
//
// Conventions fixed across the project:
//  - selected counts use floor(r * N) (a 1e-9 absolute guard absorbs the
//    binary representation of r = k/E);
//  - ties in any confidence ordering break by ascending id;
//  - proportions live in [0,1] (fractions, not percent).

#include <cstddef>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "pmc/nncore.hpp"

namespace pmc {

struct BranchEnsemble;  // branches.hpp
class MultiModalDataset;

// ---------------------------------------------------------------------------
// Pseudo records
// ---------------------------------------------------------------------------

// Per-target-sample prediction snapshot: per-modality probability vectors
// with their argmax pseudo labels and confidences, the fused (mean) vector
// with its label, and the confidence weights used for retraining.
struct PseudoRecord {
    int id = 0;
    std::vector<Vec> probs;           // one per modality, ensemble order
    std::vector<int> labels;          // argmax per modality
    std::vector<double> confidences;  // probs[m][labels[m]]
    std::vector<double> weights;      // w^m, equal to the confidences
    Vec fused_probs;                  // arithmetic mean over modalities
    int fused_label = 0;
    double fused_confidence = 0.0;
    double fused_weight = 0.0;        // w^0
};

enum class FusedWeightRule {
    // w^0 = (1/M) sum_m w^m, the literal reading (default).
    MeanOfModalityConfidences,
    // Alternative reading: w^0 = (1/M) sum_m p_m[fused_label].
    MeanProbAtFusedLabel,
};

// Builds records from explicit per-modality score vectors (one inner vector
// per modality, aligned with ids). Scores must be nonnegative with a
// positive sum; they are fused by arithmetic mean without renormalization,
// so a common positive scaling changes no label and no ordering.
std::vector<PseudoRecord> make_pseudo_records_from_scores(
    const std::vector<int>& ids, const std::vector<std::vector<Vec>>& per_modality_scores,
    FusedWeightRule rule = FusedWeightRule::MeanOfModalityConfidences);

// Predicts every target sample of `ds` with the ensemble's branches.
// Throws if a target sample lacks a payload for one of the branches.
std::vector<PseudoRecord> make_pseudo_records(
    const BranchEnsemble& ensemble, const MultiModalDataset& ds,
    FusedWeightRule rule = FusedWeightRule::MeanOfModalityConfidences);

// ---------------------------------------------------------------------------
// Proportion schedule
// ---------------------------------------------------------------------------

// One accuracy stream (a modality's, or the fused one). r = clamp(sum eta / E)
// with eta_i = -1 iff A_i < mean(A_1..A_i) and A_{i-1} < mean(A_1..A_{i-1}),
// else +1; the first two entries are forced to +1.
struct CurriculumStream {
    std::vector<double> accuracy;      // A_1..A_e
    std::vector<double> running_mean;  // mean of A_1..A_i at each i
    std::vector<int> eta;              // +1 / -1
    int eta_sum = 0;
    double proportion = 0.0;           // r, clamped to [0,1]
};

// Appends A_e and recomputes r. Throws once more epochs than total_epochs
// have been recorded.
double update_proportion(CurriculumStream& stream, double accuracy, std::size_t total_epochs);

struct CurriculumState {
    std::size_t total_epochs = 0;          // E
    double alpha = 1.0;                    // MIS ratio multiplier
    std::map<std::string, CurriculumStream> per_modality;
    CurriculumStream fused;
};

// ---------------------------------------------------------------------------
// Selection sets
// ---------------------------------------------------------------------------

struct SelectionEntry {
    int id = 0;
    int label = 0;
    double weight = 0.0;
    double confidence = 0.0;  // the score that ranked this entry
    bool mis = false;         // origin: true = MIS, false = MSS(modality)
    std::string modality;     // MSS origin only
};

// Entries ordered by descending selection confidence (ties ascending id);
// no (id, origin) pair appears twice.
struct SelectionSet {
    std::vector<SelectionEntry> entries;

    bool contains(int id) const;
    void validate() const;
};

std::size_t selection_count(double ratio, std::size_t n);

// Top floor(r*N) records by the m-th modality's confidence.
SelectionSet mss_select(const std::vector<PseudoRecord>& records, std::size_t modality_index,
                        const std::string& modality_name, double r);

// Top floor(min(alpha*r,1)*N) records by fused confidence.
SelectionSet mis_select(const std::vector<PseudoRecord>& records, double r, double alpha);

// One selection audit record per entry:
//   epoch origin id label weight confidence
void append_audit(std::ostream& out, std::size_t epoch, const SelectionSet& set);
std::string audit_header();

// ---------------------------------------------------------------------------
// Detection mode
// ---------------------------------------------------------------------------

struct ScoredBox {
    int id = 0;     // unique box id (selection sets and tie-breaks key on it)
    int frame = 0;  // boxes on different frames never suppress each other
    double x1 = 0.0, y1 = 0.0, x2 = 0.0, y2 = 0.0;
    Vec probs;      // probability vector that scored this box
    int label = 0;
    double confidence = 0.0;
};

double box_iou(const ScoredBox& a, const ScoredBox& b);

// Greedy NMS by descending confidence; survivors pairwise IoU < threshold;
// output in descending-confidence order. Input order never matters.
std::vector<ScoredBox> nms(const std::vector<ScoredBox>& boxes, double iou_threshold);

// Detection-mode MSS: NMS within the modality's boxes, then the top r
// fraction of the survivors by that modality's confidence.
SelectionSet select_boxes_mss(const std::vector<ScoredBox>& boxes, const std::string& modality_name,
                              double r, double iou_threshold);

// A pooled box for detection-mode MIS: the original detection (whose
// confidence drives NMS) plus one probability vector per modality.
struct MisBox {
    ScoredBox box;
    std::vector<Vec> per_modality_probs;
};

// Detection-mode MIS: pool boxes from every modality, NMS by detection
// confidence, average the per-modality probability vectors of the
// survivors, then the top r fraction by fused confidence.
SelectionSet select_boxes_mis(const std::vector<MisBox>& pooled, double r, double iou_threshold);

}  // namespace pmc
