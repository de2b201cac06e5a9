#include "pmc/selection.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <set>
#include <stdexcept>

#include "pmc/branches.hpp"
#include "pmc/io.hpp"
#include "pmc/synthdata.hpp"

namespace pmc {

// ---------------------------------------------------------------------------
// Pseudo records
// ---------------------------------------------------------------------------

namespace {

std::size_t argmax(const Vec& v) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < v.size(); ++i) {
        if (v[i] > v[best]) best = i;  // ties to lowest index
    }
    return best;
}

void check_score_vec(const Vec& v, int id) {
    if (v.empty()) {
        throw std::invalid_argument("pseudo record " + std::to_string(id) + ": empty score vector");
    }
    double sum = 0.0;
    for (double x : v) {
        if (!std::isfinite(x) || x < 0.0) {
            throw std::invalid_argument("pseudo record " + std::to_string(id) +
                                        ": scores must be finite and nonnegative");
        }
        sum += x;
    }
    if (!(sum > 0.0)) {
        throw std::invalid_argument("pseudo record " + std::to_string(id) + ": all-zero scores");
    }
}

}  // namespace

std::vector<PseudoRecord> make_pseudo_records_from_scores(
    const std::vector<int>& ids, const std::vector<std::vector<Vec>>& per_modality_scores,
    FusedWeightRule rule) {
    const std::size_t m = per_modality_scores.size();
    if (m == 0) throw std::invalid_argument("make_pseudo_records: no modalities");
    for (const auto& col : per_modality_scores) {
        if (col.size() != ids.size()) {
            throw std::invalid_argument("make_pseudo_records: score column size mismatch");
        }
    }
    std::vector<PseudoRecord> out;
    out.reserve(ids.size());
    for (std::size_t i = 0; i < ids.size(); ++i) {
        PseudoRecord rec;
        rec.id = ids[i];
        rec.probs.reserve(m);
        const std::size_t nc = per_modality_scores[0][i].size();
        rec.fused_probs.assign(nc, 0.0);
        for (std::size_t j = 0; j < m; ++j) {
            const Vec& p = per_modality_scores[j][i];
            check_score_vec(p, rec.id);
            if (p.size() != nc) {
                throw std::invalid_argument("pseudo record " + std::to_string(rec.id) +
                                            ": inconsistent class counts across modalities");
            }
            const std::size_t lab = argmax(p);
            rec.labels.push_back(static_cast<int>(lab));
            rec.confidences.push_back(p[lab]);
            rec.weights.push_back(p[lab]);
            for (std::size_t c = 0; c < nc; ++c) rec.fused_probs[c] += p[c];
            rec.probs.push_back(p);
        }
        for (double& v : rec.fused_probs) v /= static_cast<double>(m);
        rec.fused_label = static_cast<int>(argmax(rec.fused_probs));
        rec.fused_confidence = rec.fused_probs[rec.fused_label];
        double w0 = 0.0;
        for (std::size_t j = 0; j < m; ++j) {
            w0 += rule == FusedWeightRule::MeanOfModalityConfidences
                      ? rec.weights[j]
                      : rec.probs[j][rec.fused_label];
        }
        rec.fused_weight = w0 / static_cast<double>(m);
        out.push_back(std::move(rec));
    }
    return out;
}

std::vector<PseudoRecord> make_pseudo_records(const BranchEnsemble& ensemble,
                                              const MultiModalDataset& ds, FusedWeightRule rule) {
    std::vector<int> ids;
    std::vector<std::vector<Vec>> scores(ensemble.branches.size());
    for (const auto& s : ds.samples) {
        if (s.domain != Domain::Target) continue;
        ids.push_back(s.id);
        for (std::size_t j = 0; j < ensemble.branches.size(); ++j) {
            const auto& br = ensemble.branches[j];
            auto it = s.payloads.find(br.modality);
            if (it == s.payloads.end()) {
                throw std::invalid_argument("make_pseudo_records: target sample " +
                                            std::to_string(s.id) + " lacks modality '" +
                                            br.modality + "'");
            }
            scores[j].push_back(predict_probs(br, it->second));
        }
    }
    return make_pseudo_records_from_scores(ids, scores, rule);
}

// ---------------------------------------------------------------------------
// Proportion schedule
// ---------------------------------------------------------------------------

double update_proportion(CurriculumStream& stream, double accuracy, std::size_t total_epochs) {
    if (total_epochs == 0) throw std::invalid_argument("update_proportion: total_epochs is 0");
    if (stream.accuracy.size() >= total_epochs) {
        throw std::runtime_error("update_proportion: schedule overflow (already at epoch " +
                                 std::to_string(stream.accuracy.size()) + " of " +
                                 std::to_string(total_epochs) + ")");
    }
    stream.accuracy.push_back(accuracy);
    const std::size_t e = stream.accuracy.size();
    double sum = 0.0;
    for (double a : stream.accuracy) sum += a;
    stream.running_mean.push_back(sum / static_cast<double>(e));

    int eta = 1;
    if (e > 2) {
        const bool below_now = stream.accuracy[e - 1] < stream.running_mean[e - 1];
        const bool below_prev = stream.accuracy[e - 2] < stream.running_mean[e - 2];
        if (below_now && below_prev) eta = -1;
    }
    stream.eta.push_back(eta);
    stream.eta_sum += eta;

    double r = static_cast<double>(stream.eta_sum) / static_cast<double>(total_epochs);
    r = std::min(1.0, std::max(0.0, r));
    stream.proportion = r;
    return r;
}

// ---------------------------------------------------------------------------
// Selection sets
// ---------------------------------------------------------------------------

bool SelectionSet::contains(int id) const {
    for (const auto& e : entries)
        if (e.id == id) return true;
    return false;
}

void SelectionSet::validate() const {
    std::set<std::pair<int, std::string>> seen;
    for (const auto& e : entries) {
        if (!(e.weight > 0.0 && e.weight <= 1.0 + 1e-12)) {
            throw std::logic_error("selection entry " + std::to_string(e.id) +
                                   ": weight outside (0,1]");
        }
        const std::string origin = e.mis ? "MIS" : "MSS:" + e.modality;
        if (!seen.insert({e.id, origin}).second) {
            throw std::logic_error("duplicate selection entry (" + std::to_string(e.id) + ", " +
                                   origin + ")");
        }
    }
}

std::size_t selection_count(double ratio, std::size_t n) {
    if (!(ratio >= 0.0 && ratio <= 1.0)) {
        throw std::invalid_argument("selection ratio must lie in [0,1]");
    }
    // guard against r = k/E picking up a one-ulp-low product
    return static_cast<std::size_t>(std::floor(ratio * static_cast<double>(n) + 1e-9));
}

namespace {

// indices of the top k records under (score desc, id asc)
std::vector<std::size_t> top_k(const std::vector<PseudoRecord>& records,
                               const std::vector<double>& score, std::size_t k) {
    std::vector<std::size_t> idx(records.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
        if (score[a] != score[b]) return score[a] > score[b];
        return records[a].id < records[b].id;
    });
    idx.resize(std::min(k, idx.size()));
    return idx;
}

}  // namespace

SelectionSet mss_select(const std::vector<PseudoRecord>& records, std::size_t modality_index,
                        const std::string& modality_name, double r) {
    const std::size_t k = selection_count(r, records.size());
    std::vector<double> score(records.size());
    for (std::size_t i = 0; i < records.size(); ++i) {
        if (modality_index >= records[i].probs.size()) {
            throw std::invalid_argument("mss_select: modality index out of range");
        }
        score[i] = records[i].confidences[modality_index];
    }
    SelectionSet set;
    for (std::size_t i : top_k(records, score, k)) {
        const PseudoRecord& rec = records[i];
        SelectionEntry e;
        e.id = rec.id;
        e.label = rec.labels[modality_index];
        e.weight = rec.weights[modality_index];
        e.confidence = rec.confidences[modality_index];
        e.mis = false;
        e.modality = modality_name;
        set.entries.push_back(std::move(e));
    }
    return set;
}

SelectionSet mis_select(const std::vector<PseudoRecord>& records, double r, double alpha) {
    if (!(alpha > 0.0)) throw std::invalid_argument("mis_select: alpha must be positive");
    if (!(r >= 0.0 && r <= 1.0)) throw std::invalid_argument("mis_select: r must lie in [0,1]");
    const double ratio = std::min(alpha * r, 1.0);
    const std::size_t k = selection_count(ratio, records.size());
    std::vector<double> score(records.size());
    for (std::size_t i = 0; i < records.size(); ++i) score[i] = records[i].fused_confidence;
    SelectionSet set;
    for (std::size_t i : top_k(records, score, k)) {
        const PseudoRecord& rec = records[i];
        SelectionEntry e;
        e.id = rec.id;
        e.label = rec.fused_label;
        e.weight = rec.fused_weight;
        e.confidence = rec.fused_confidence;
        e.mis = true;
        set.entries.push_back(std::move(e));
    }
    return set;
}

std::string audit_header() { return "# epoch origin id label weight confidence"; }

void append_audit(std::ostream& out, std::size_t epoch, const SelectionSet& set) {
    for (const auto& e : set.entries) {
        out << epoch << ' ' << (e.mis ? "MIS" : "MSS:" + e.modality) << ' ' << e.id << ' '
            << e.label << ' ' << fmt_double(e.weight) << ' ' << fmt_double(e.confidence) << '\n';
    }
}

// ---------------------------------------------------------------------------
// Detection mode
// ---------------------------------------------------------------------------

namespace {

void check_box(const ScoredBox& b) {
    if (!(b.x1 < b.x2 && b.y1 < b.y2)) {
        throw std::invalid_argument("box " + std::to_string(b.id) + ": invalid geometry");
    }
    if (b.probs.empty() || b.label < 0 || static_cast<std::size_t>(b.label) >= b.probs.size()) {
        throw std::invalid_argument("box " + std::to_string(b.id) + ": bad probability vector");
    }
}

bool box_order(const ScoredBox& a, const ScoredBox& b) {
    if (a.confidence != b.confidence) return a.confidence > b.confidence;
    return a.id < b.id;
}

}  // namespace

double box_iou(const ScoredBox& a, const ScoredBox& b) {
    if (a.frame != b.frame) return 0.0;
    const double ix = std::max(0.0, std::min(a.x2, b.x2) - std::max(a.x1, b.x1));
    const double iy = std::max(0.0, std::min(a.y2, b.y2) - std::max(a.y1, b.y1));
    const double inter = ix * iy;
    const double ua = (a.x2 - a.x1) * (a.y2 - a.y1) + (b.x2 - b.x1) * (b.y2 - b.y1) - inter;
    return ua > 0.0 ? inter / ua : 0.0;
}

std::vector<ScoredBox> nms(const std::vector<ScoredBox>& boxes, double iou_threshold) {
    if (!(iou_threshold > 0.0 && iou_threshold < 1.0)) {
        throw std::invalid_argument("nms: IoU threshold must lie in (0,1)");
    }
    for (const auto& b : boxes) check_box(b);
    std::vector<ScoredBox> sorted = boxes;
    std::sort(sorted.begin(), sorted.end(), box_order);
    std::vector<ScoredBox> kept;
    for (const auto& cand : sorted) {
        bool suppressed = false;
        for (const auto& k : kept) {
            if (box_iou(cand, k) >= iou_threshold) {
                suppressed = true;
                break;
            }
        }
        if (!suppressed) kept.push_back(cand);
    }
    return kept;
}

SelectionSet select_boxes_mss(const std::vector<ScoredBox>& boxes, const std::string& modality_name,
                              double r, double iou_threshold) {
    const std::vector<ScoredBox> kept = nms(boxes, iou_threshold);
    const std::size_t k = selection_count(r, kept.size());
    SelectionSet set;
    for (std::size_t i = 0; i < k; ++i) {  // kept is already (conf desc, id asc)
        const ScoredBox& b = kept[i];
        SelectionEntry e;
        e.id = b.id;
        e.label = b.label;
        e.weight = b.confidence;
        e.confidence = b.confidence;
        e.mis = false;
        e.modality = modality_name;
        set.entries.push_back(std::move(e));
    }
    return set;
}

SelectionSet select_boxes_mis(const std::vector<MisBox>& pooled, double r, double iou_threshold) {
    std::vector<ScoredBox> boxes;
    boxes.reserve(pooled.size());
    for (const auto& mb : pooled) {
        if (mb.per_modality_probs.empty()) {
            throw std::invalid_argument("select_boxes_mis: box " + std::to_string(mb.box.id) +
                                        " lacks per-modality scores");
        }
        for (const auto& p : mb.per_modality_probs) {
            if (p.size() != mb.per_modality_probs[0].size() || p.empty()) {
                throw std::invalid_argument("select_boxes_mis: box " + std::to_string(mb.box.id) +
                                            " has inconsistent per-modality scores");
            }
        }
        boxes.push_back(mb.box);
    }
    const std::vector<ScoredBox> kept = nms(boxes, iou_threshold);

    // fused rescoring of the survivors
    struct Fused {
        int id;
        int label;
        double confidence;
        double weight;
    };
    std::vector<Fused> fused;
    fused.reserve(kept.size());
    for (const auto& b : kept) {
        const MisBox* src = nullptr;
        for (const auto& mb : pooled)
            if (mb.box.id == b.id) src = &mb;
        const std::size_t m = src->per_modality_probs.size();
        const std::size_t nc = src->per_modality_probs[0].size();
        Vec mean(nc, 0.0);
        double w0 = 0.0;
        for (const auto& p : src->per_modality_probs) {
            for (std::size_t c = 0; c < nc; ++c) mean[c] += p[c];
            w0 += *std::max_element(p.begin(), p.end());
        }
        for (double& v : mean) v /= static_cast<double>(m);
        const std::size_t lab = argmax(mean);
        fused.push_back({b.id, static_cast<int>(lab), mean[lab], w0 / static_cast<double>(m)});
    }
    std::sort(fused.begin(), fused.end(), [](const Fused& a, const Fused& b) {
        if (a.confidence != b.confidence) return a.confidence > b.confidence;
        return a.id < b.id;
    });
    const std::size_t k = selection_count(r, fused.size());
    SelectionSet set;
    for (std::size_t i = 0; i < k; ++i) {
        SelectionEntry e;
        e.id = fused[i].id;
        e.label = fused[i].label;
        e.weight = fused[i].weight;
        e.confidence = fused[i].confidence;
        e.mis = true;
        set.entries.push_back(std::move(e));
    }
    return set;
}

}  // namespace pmc
