#include "pmc/trainers.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>
#include <stdexcept>

#include "pmc/io.hpp"

namespace pmc {

void TrainConfig::validate() const {
    if (cooperation_epochs < 1) throw std::invalid_argument("config: cooperation_epochs must be >= 1");
    if (!(base_lr > 0.0)) throw std::invalid_argument("config: base_lr must be positive");
    if (!(lambda >= 0.0)) throw std::invalid_argument("config: lambda must be >= 0");
    if (!(lambda_gen >= 0.0)) throw std::invalid_argument("config: lambda_gen must be >= 0");
    if (!(alpha > 0.0)) throw std::invalid_argument("config: alpha must be positive");
    if (batch_size < 2) throw std::invalid_argument("config: batch_size must be >= 2");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw std::invalid_argument("config: bad momentum");
    if (!(weight_decay >= 0.0)) throw std::invalid_argument("config: bad weight_decay");
}

bool RunMetrics::operator==(const RunMetrics& o) const {
    if (final_target_acc != o.final_target_acc ||
        final_fused_target_acc != o.final_fused_target_acc ||
        epochs.size() != o.epochs.size())
        return false;
    for (std::size_t i = 0; i < epochs.size(); ++i) {
        const auto& a = epochs[i];
        const auto& b = o.epochs[i];
        if (a.epoch != b.epoch || a.phase != b.phase || a.src_acc != b.src_acc ||
            a.fused_src_acc != b.fused_src_acc || a.r != b.r || a.r_fused != b.r_fused ||
            a.sel_count != b.sel_count || a.sel_mis_count != b.sel_mis_count ||
            a.target_acc != b.target_acc || a.fused_target_acc != b.fused_target_acc)
            return false;
    }
    return true;
}

std::string metrics_to_string(const RunMetrics& m, const std::vector<std::string>& modalities) {
    std::ostringstream out;
    out << "# pmc-metrics v1\n# columns: epoch phase";
    for (const auto& name : modalities) out << " srcacc:" << name;
    out << " srcacc:fused";
    for (const auto& name : modalities) out << " r:" << name;
    out << " r:fused";
    for (const auto& name : modalities) out << " sel:" << name;
    out << " sel:mis";
    for (const auto& name : modalities) out << " tgtacc:" << name;
    out << " tgtacc:fused\n";
    auto put = [&out](const auto& map, const std::string& key) {
        auto it = map.find(key);
        if (it == map.end()) out << " -";
        else out << ' ' << fmt_double(static_cast<double>(it->second));
    };
    for (const auto& e : m.epochs) {
        out << e.epoch << ' ' << e.phase;
        for (const auto& name : modalities) put(e.src_acc, name);
        out << ' ' << fmt_double(e.fused_src_acc);
        const bool coop = e.phase == "coop" && !e.r.empty();
        for (const auto& name : modalities) put(e.r, name);
        if (coop) out << ' ' << fmt_double(e.r_fused);
        else out << " -";
        for (const auto& name : modalities) put(e.sel_count, name);
        if (coop) out << ' ' << e.sel_mis_count;
        else out << " -";
        for (const auto& name : modalities) put(e.target_acc, name);
        out << ' ' << fmt_double(e.fused_target_acc) << '\n';
    }
    out << "final";
    for (const auto& name : modalities) put(m.final_target_acc, name);
    out << ' ' << fmt_double(m.final_fused_target_acc) << '\n';
    return out.str();
}

// ---------------------------------------------------------------------------
// Operations
// ---------------------------------------------------------------------------

namespace {

std::map<int, std::pair<int, double>> set_to_terms(const SelectionSet& set) {
    std::map<int, std::pair<int, double>> terms;
    for (const auto& e : set.entries) terms[e.id] = {e.label, e.weight};
    return terms;
}

const Vec& payload_of(const ModalityBranch& branch, const Sample& s) {
    auto it = s.payloads.find(branch.modality);
    if (it == s.payloads.end()) {
        throw std::invalid_argument("sample " + std::to_string(s.id) + " lacks modality '" +
                                    branch.modality + "'");
    }
    return it->second;
}

}  // namespace

BranchBatchResult tar_loss(const ModalityBranch& branch, const SelectionSet& mss,
                           const SelectionSet& mis, std::span<const Sample* const> targets) {
    if (targets.empty()) throw std::invalid_argument("tar_loss: no target samples");
    std::set<int> ids;
    for (const Sample* s : targets) ids.insert(s->id);
    for (const SelectionSet* set : {&mss, &mis}) {
        for (const auto& e : set->entries) {
            if (!ids.count(e.id)) {
                throw std::invalid_argument("tar_loss: selection references unknown target id " +
                                            std::to_string(e.id));
            }
        }
    }
    const auto mss_terms = set_to_terms(mss);
    const auto mis_terms = set_to_terms(mis);

    BranchBatchResult out{0.0,
                          {zero_grads(branch.feature), zero_grads(branch.classifier),
                           zero_grads(branch.domain_clf)}};
    const double scale = 1.0 / static_cast<double>(targets.size());
    for (const Sample* s : targets) {
        const auto mss_it = mss_terms.find(s->id);
        const auto mis_it = mis_terms.find(s->id);
        if (mss_it == mss_terms.end() && mis_it == mis_terms.end()) continue;
        const Activations f = forward(branch.feature, payload_of(branch, *s));
        const Activations c = forward(branch.classifier, f.output());
        NetGrads gc = zero_grads(branch.classifier);
        for (const auto* term : {mss_it != mss_terms.end() ? &mss_it->second : nullptr,
                                 mis_it != mis_terms.end() ? &mis_it->second : nullptr}) {
            if (term == nullptr) continue;
            const LossGrad lg =
                softmax_xent(c.output(), static_cast<std::size_t>(term->first), term->second);
            out.loss += scale * lg.loss;
            backward_accumulate(branch.classifier, c, lg.grad, scale, gc);
        }
        backward_accumulate(branch.feature, f, gc.input, 1.0, out.grads.feature);
        out.grads.classifier.add_scaled(gc, 1.0);
    }
    return out;
}

std::pair<int, Vec> late_fusion_predict(const BranchEnsemble& ensemble, const Sample& sample) {
    if (ensemble.branches.empty()) throw std::invalid_argument("late_fusion_predict: empty ensemble");
    Vec mean(ensemble.num_categories, 0.0);
    for (const auto& br : ensemble.branches) {
        const Vec p = predict_probs(br, payload_of(br, sample));
        for (std::size_t c = 0; c < mean.size(); ++c) mean[c] += p[c];
    }
    for (double& v : mean) v /= static_cast<double>(ensemble.branches.size());
    std::size_t best = 0;
    for (std::size_t c = 1; c < mean.size(); ++c) {
        if (mean[c] > mean[best]) best = c;  // ties to lowest index
    }
    return {static_cast<int>(best), mean};
}

EvalResult evaluate(const BranchEnsemble& ensemble, const MultiModalDataset& ds, Split split) {
    EvalResult res;
    std::map<std::string, std::size_t> hits;
    std::size_t fused_hits = 0, total = 0;
    const auto& hidden = ds.evaluation_labels();
    for (const auto& s : ds.samples) {
        const bool want = split == Split::Source ? s.domain == Domain::Source
                                                 : s.domain == Domain::Target;
        if (!want) continue;
        const int truth = s.domain == Domain::Source ? s.label : hidden.at(s.id);
        ++total;
        Vec mean(ensemble.num_categories, 0.0);
        for (const auto& br : ensemble.branches) {
            const Vec p = predict_probs(br, payload_of(br, s));
            const auto best = std::max_element(p.begin(), p.end()) - p.begin();
            if (best == truth) ++hits[br.modality];
            for (std::size_t c = 0; c < mean.size(); ++c) mean[c] += p[c];
        }
        const auto best = std::max_element(mean.begin(), mean.end()) - mean.begin();
        if (best == truth) ++fused_hits;
    }
    if (total == 0) throw std::invalid_argument("evaluate: empty split");
    for (const auto& br : ensemble.branches) {
        res.per_modality[br.modality] =
            static_cast<double>(hits[br.modality]) / static_cast<double>(total);
    }
    res.fused = static_cast<double>(fused_hits) / static_cast<double>(total);
    return res;
}

// ---------------------------------------------------------------------------
// Training loops
// ---------------------------------------------------------------------------

namespace {

struct LoopState {
    BranchEnsemble ensemble;
    std::vector<BranchOptim> optims;
    std::size_t total_epochs = 0;
    std::size_t epoch_counter = 0;  // 0-based index of the next epoch
};

LoopState init_loop(const MultiModalDataset& ds, const TrainConfig& cfg,
                    const std::vector<std::string>& modalities, std::size_t total_epochs) {
    LoopState st;
    st.ensemble = make_ensemble(ds.schema, modalities, cfg.arch, cfg.lambda, cfg.seed);
    for (const auto& br : st.ensemble.branches) {
        st.optims.push_back(BranchOptim::for_branch(br, cfg.base_lr, cfg.momentum,
                                                    cfg.weight_decay, cfg.inv_schedule));
    }
    st.total_epochs = total_epochs;
    return st;
}

EpochPlan next_plan(LoopState& st, const MultiModalDataset& ds, const TrainConfig& cfg,
                    bool need_targets) {
    const double p0 =
        static_cast<double>(st.epoch_counter) / static_cast<double>(st.total_epochs);
    const double p1 =
        static_cast<double>(st.epoch_counter + 1) / static_cast<double>(st.total_epochs);
    EpochPlan plan =
        plan_epoch(ds, cfg.batch_size, cfg.seed, st.epoch_counter, p0, p1, need_targets);
    ++st.epoch_counter;
    return plan;
}

EpochMetrics snapshot_epoch(const LoopState& st, const MultiModalDataset& ds,
                            const std::string& phase, std::size_t epoch_number) {
    EpochMetrics em;
    em.epoch = epoch_number;
    em.phase = phase;
    for (const auto& br : st.ensemble.branches) {
        em.src_acc[br.modality] = source_accuracy(br, ds);
    }
    em.fused_src_acc = fused_source_accuracy(st.ensemble, ds);
    return em;
}

void record_target_metrics(EpochMetrics& em, const LoopState& st, const MultiModalDataset& ds) {
    const EvalResult ev = evaluate(st.ensemble, ds, Split::Target);
    em.target_acc = ev.per_modality;
    em.fused_target_acc = ev.fused;
}

void finalize_metrics(RunMetrics& rm, const LoopState& st, const MultiModalDataset& ds) {
    const EvalResult ev = evaluate(st.ensemble, ds, Split::Target);
    rm.final_target_acc = ev.per_modality;
    rm.final_fused_target_acc = ev.fused;
}

TrainResult run_plain(const MultiModalDataset& ds, const TrainConfig& cfg, EpochMode mode) {
    cfg.validate();
    ds.validate();
    const auto modalities = ds.available_modalities();
    const std::size_t total = cfg.warmup_epochs + cfg.cooperation_epochs;
    LoopState st = init_loop(ds, cfg, modalities, total);

    RunMetrics rm;
    EpochConfig ecfg;
    ecfg.mode = mode;
    ecfg.lambda = cfg.lambda;
    ecfg.ramp = cfg.ramp;
    ecfg.grad_clip = cfg.grad_clip;
    for (std::size_t e = 0; e < total; ++e) {
        const EpochPlan plan = next_plan(st, ds, cfg, mode != EpochMode::SourceOnly);
        for (std::size_t i = 0; i < st.ensemble.branches.size(); ++i) {
            run_branch_epoch(st.ensemble.branches[i], st.optims[i], plan, ecfg, nullptr);
        }
        EpochMetrics em = snapshot_epoch(st, ds, e < cfg.warmup_epochs ? "warmup" : "coop", e + 1);
        record_target_metrics(em, st, ds);
        rm.epochs.push_back(std::move(em));
    }
    finalize_metrics(rm, st, ds);
    return {std::move(st.ensemble), std::move(st.optims), std::move(rm)};
}

void validate_selection_ids(const SelectionSet& set, const std::set<int>& target_ids) {
    for (const auto& e : set.entries) {
        if (!target_ids.count(e.id)) {
            throw std::logic_error("selection references unknown target id " +
                                   std::to_string(e.id));
        }
    }
}

}  // namespace

TrainResult train_source_only(const MultiModalDataset& ds, const TrainConfig& cfg) {
    return run_plain(ds, cfg, EpochMode::SourceOnly);
}

TrainResult train_dann(const MultiModalDataset& ds, const TrainConfig& cfg) {
    return run_plain(ds, cfg, EpochMode::Dann);
}

TrainResult train_pmc(const MultiModalDataset& ds, const TrainConfig& cfg) {
    cfg.validate();
    ds.validate();
    if (cfg.mode != TrainConfig::Mode::Mmda) {
        throw std::invalid_argument("train_pmc: config mode must be MMDA");
    }
    if (!ds.schema.missing_target_modalities.empty()) {
        throw std::invalid_argument("train_pmc: dataset is not MMDA-shaped (missing '" +
                                    ds.schema.missing_target_modalities.front() + "')");
    }
    const auto modalities = ds.available_modalities();
    const std::size_t total = cfg.warmup_epochs + cfg.cooperation_epochs;
    LoopState st = init_loop(ds, cfg, modalities, total);

    std::set<int> target_ids;
    for (const auto* s : ds.target_samples()) target_ids.insert(s->id);

    RunMetrics rm;

    EpochConfig warm_cfg;
    warm_cfg.mode = EpochMode::Dann;
    warm_cfg.lambda = cfg.lambda;
    warm_cfg.ramp = cfg.ramp;
    warm_cfg.grad_clip = cfg.grad_clip;
    for (std::size_t e = 0; e < cfg.warmup_epochs; ++e) {
        const EpochPlan plan = next_plan(st, ds, cfg, true);
        for (std::size_t i = 0; i < st.ensemble.branches.size(); ++i) {
            run_branch_epoch(st.ensemble.branches[i], st.optims[i], plan, warm_cfg, nullptr);
        }
        EpochMetrics em = snapshot_epoch(st, ds, "warmup", e + 1);
        record_target_metrics(em, st, ds);
        rm.epochs.push_back(std::move(em));
    }

    CurriculumState curriculum;
    curriculum.total_epochs = cfg.cooperation_epochs;
    curriculum.alpha = cfg.alpha;
    for (const auto& name : modalities) curriculum.per_modality[name] = {};

    EpochConfig coop_cfg;
    coop_cfg.mode = EpochMode::Cooperation;
    coop_cfg.lambda = cfg.lambda;
    coop_cfg.ramp = cfg.ramp;
    coop_cfg.grad_clip = cfg.grad_clip;

    for (std::size_t e = 1; e <= cfg.cooperation_epochs; ++e) {
        // records and the schedule accuracies come from the current model
        EpochMetrics em = snapshot_epoch(st, ds, "coop", cfg.warmup_epochs + e);
        const auto records = make_pseudo_records(st.ensemble, ds, cfg.fused_weight_rule);

        std::vector<SelectionSet> mss_sets(st.ensemble.branches.size());
        SelectionSet mis_set;
        for (std::size_t i = 0; i < st.ensemble.branches.size(); ++i) {
            const auto& name = st.ensemble.branches[i].modality;
            const double r = update_proportion(curriculum.per_modality[name],
                                               em.src_acc.at(name), curriculum.total_epochs);
            em.r[name] = r;
            if (!cfg.disable_mss) {
                mss_sets[i] = mss_select(records, i, name, r);
                mss_sets[i].validate();
                validate_selection_ids(mss_sets[i], target_ids);
            }
            em.sel_count[name] = mss_sets[i].entries.size();
        }
        {
            const double r0 =
                update_proportion(curriculum.fused, em.fused_src_acc, curriculum.total_epochs);
            em.r_fused = r0;
            if (!cfg.disable_mis) {
                mis_set = mis_select(records, r0, curriculum.alpha);
                mis_set.validate();
                validate_selection_ids(mis_set, target_ids);
            }
            em.sel_mis_count = mis_set.entries.size();
        }

        const auto mis_terms = set_to_terms(mis_set);
        const EpochPlan plan = next_plan(st, ds, cfg, true);
        for (std::size_t i = 0; i < st.ensemble.branches.size(); ++i) {
            TargetTerms terms;
            terms.mss = set_to_terms(mss_sets[i]);
            terms.mis = mis_terms;
            run_branch_epoch(st.ensemble.branches[i], st.optims[i], plan, coop_cfg, &terms);
        }

        record_target_metrics(em, st, ds);
        em.selections = std::move(mss_sets);
        em.selections.push_back(std::move(mis_set));
        rm.epochs.push_back(std::move(em));
    }

    finalize_metrics(rm, st, ds);
    return {std::move(st.ensemble), std::move(st.optims), std::move(rm)};
}

PmcPiResult train_pmc_pi(const MultiModalDataset& ds, const TrainConfig& cfg,
                         const GeneratorOverride& generator_override) {
    cfg.validate();
    ds.validate();
    if (cfg.mode != TrainConfig::Mode::MmdaPi) {
        throw std::invalid_argument("train_pmc_pi: config mode must be MMDA-PI");
    }
    if (ds.schema.missing_target_modalities.size() != 1) {
        throw std::invalid_argument(
            "train_pmc_pi: exactly one modality must be missing from targets, got " +
            std::to_string(ds.schema.missing_target_modalities.size()));
    }
    const std::string missing = ds.schema.missing_target_modalities.front();
    const auto available = ds.available_modalities();
    if (available.empty()) {
        throw std::invalid_argument("train_pmc_pi: no modality left on target samples");
    }
    // The generator reads the first available modality.
    const std::string gen_input = available.front();

    // All schema modalities get a branch; the missing one first trains in
    // the cooperation loop, on real source payloads plus generated targets.
    std::vector<std::string> all_modalities;
    for (const auto& m : ds.schema.modalities) all_modalities.push_back(m.name);

    PmcPiResult result;

    // Step: train the generator, then freeze it.
    if (!generator_override) {
        MmgConfig mcfg;
        mcfg.latent_dim = cfg.mmg_latent_dim;
        mcfg.lambda_gen = cfg.lambda_gen;
        mcfg.base_lr = cfg.base_lr;
        mcfg.momentum = cfg.momentum;
        mcfg.weight_decay = cfg.weight_decay;
        mcfg.batch_size = cfg.batch_size;
        mcfg.grad_clip = cfg.grad_clip;
        mcfg.epochs = cfg.mmg_epochs;
        mcfg.inv_schedule = cfg.inv_schedule;
        mcfg.ramp = cfg.ramp;
        mcfg.conditioned = !cfg.disable_cv;
        mcfg.adversarial = !cfg.disable_gend;
        mcfg.seed = derive_seed(cfg.seed, "pmc-pi/mmg");
        result.generator = train_mmg(ds, gen_input, missing, mcfg);
    }
    const MmgModel& generator = result.generator;

    const std::size_t total =
        cfg.warmup_epochs +
        cfg.cooperation_epochs * std::max<std::size_t>(1, cfg.pi_passes_per_round);
    LoopState st = init_loop(ds, cfg, all_modalities, total);
    const std::size_t missing_index = st.ensemble.branch_index(missing);

    std::set<int> target_ids;
    for (const auto* s : ds.target_samples()) target_ids.insert(s->id);

    RunMetrics rm;

    // Initial domain adaptation on the available modalities only.
    EpochConfig warm_cfg;
    warm_cfg.mode = EpochMode::Dann;
    warm_cfg.lambda = cfg.lambda;
    warm_cfg.ramp = cfg.ramp;
    warm_cfg.grad_clip = cfg.grad_clip;
    for (std::size_t e = 0; e < cfg.warmup_epochs; ++e) {
        const EpochPlan plan = next_plan(st, ds, cfg, true);
        for (std::size_t i = 0; i < st.ensemble.branches.size(); ++i) {
            if (i == missing_index) continue;
            run_branch_epoch(st.ensemble.branches[i], st.optims[i], plan, warm_cfg, nullptr);
        }
        EpochMetrics em;
        em.epoch = e + 1;
        em.phase = "warmup";
        for (std::size_t i = 0; i < st.ensemble.branches.size(); ++i) {
            if (i == missing_index) continue;
            const auto& br = st.ensemble.branches[i];
            em.src_acc[br.modality] = source_accuracy(br, ds);
        }
        // fused over the available branches only
        {
            BranchEnsemble sub;
            sub.lambda = st.ensemble.lambda;
            sub.num_categories = st.ensemble.num_categories;
            for (std::size_t i = 0; i < st.ensemble.branches.size(); ++i) {
                if (i != missing_index) sub.branches.push_back(st.ensemble.branches[i]);
            }
            em.fused_src_acc = fused_source_accuracy(sub, ds);
            const EvalResult ev = evaluate(sub, ds, Split::Target);
            em.target_acc = ev.per_modality;
            em.fused_target_acc = ev.fused;
        }
        rm.epochs.push_back(std::move(em));
    }

    // Initial pseudo records over the available modalities; initial MSS-only
    // selection at the first-epoch proportion 1/E (the MIS set starts empty).
    std::vector<PseudoRecord> records;
    {
        BranchEnsemble sub;
        sub.lambda = st.ensemble.lambda;
        sub.num_categories = st.ensemble.num_categories;
        for (std::size_t i = 0; i < st.ensemble.branches.size(); ++i) {
            if (i != missing_index) sub.branches.push_back(st.ensemble.branches[i]);
        }
        records = make_pseudo_records(sub, ds, cfg.fused_weight_rule);
    }

    std::vector<SelectionSet> mss_sets(st.ensemble.branches.size());
    SelectionSet mis_set;
    const double r_init = 1.0 / static_cast<double>(cfg.cooperation_epochs);
    if (!cfg.disable_mss) {
        std::size_t sub_index = 0;
        for (std::size_t i = 0; i < st.ensemble.branches.size(); ++i) {
            if (i == missing_index) continue;
            mss_sets[i] = mss_select(records, sub_index, st.ensemble.branches[i].modality, r_init);
            validate_selection_ids(mss_sets[i], target_ids);
            ++sub_index;
        }
    }

    // conditioning vectors: latest fused pseudo category probability vectors
    std::map<int, Vec> latest_v;
    for (const auto& rec : records) latest_v[rec.id] = rec.fused_probs;

    CurriculumState curriculum;
    curriculum.total_epochs = cfg.cooperation_epochs;
    curriculum.alpha = cfg.alpha;
    for (const auto& name : all_modalities) curriculum.per_modality[name] = {};

    // Working copy whose target samples carry the generated payload.
    MultiModalDataset working = ds;
    working.schema.missing_target_modalities.clear();

    EpochConfig coop_cfg;
    coop_cfg.mode = EpochMode::Cooperation;
    coop_cfg.lambda = cfg.lambda;
    coop_cfg.ramp = cfg.ramp;
    coop_cfg.grad_clip = cfg.grad_clip;

    for (std::size_t e = 1; e <= cfg.cooperation_epochs; ++e) {
        // regenerate the missing target payloads with the frozen generator
        for (auto& s : working.samples) {
            if (s.domain != Domain::Target) continue;
            Vec v = latest_v.at(s.id);
            if (cfg.conditioning_temperature <= 0.0) {
                const std::size_t best =
                    std::max_element(v.begin(), v.end()) - v.begin();
                std::fill(v.begin(), v.end(), 0.0);
                v[best] = 1.0;
            } else if (cfg.conditioning_temperature != 1.0) {
                double z = 0.0;
                for (double& p : v) {
                    p = std::pow(std::max(p, 1e-300), 1.0 / cfg.conditioning_temperature);
                    z += p;
                }
                for (double& p : v) p /= z;
            }
            s.payloads[missing] = generator_override
                                      ? generator_override(s, v)
                                      : generate(generator, s.payloads.at(gen_input), v);
        }

        // one cooperation round over all branches (possibly several passes)
        const auto mis_terms = set_to_terms(mis_set);
        for (std::size_t pass = 0; pass < std::max<std::size_t>(1, cfg.pi_passes_per_round);
             ++pass) {
            const EpochPlan plan = next_plan(st, working, cfg, true);
            for (std::size_t i = 0; i < st.ensemble.branches.size(); ++i) {
                TargetTerms terms;
                terms.mss = set_to_terms(mss_sets[i]);
                terms.mis = mis_terms;
                run_branch_epoch(st.ensemble.branches[i], st.optims[i], plan, coop_cfg, &terms);
            }
        }

        // post-retrain evaluation drives the next selection (and the metrics)
        EpochMetrics em = snapshot_epoch(st, working, "coop", cfg.warmup_epochs + e);
        records = make_pseudo_records(st.ensemble, working, cfg.fused_weight_rule);
        latest_v.clear();
        for (const auto& rec : records) latest_v[rec.id] = rec.fused_probs;

        for (std::size_t i = 0; i < st.ensemble.branches.size(); ++i) {
            const auto& name = st.ensemble.branches[i].modality;
            const double r = update_proportion(curriculum.per_modality[name],
                                               em.src_acc.at(name), curriculum.total_epochs);
            em.r[name] = r;
            mss_sets[i] = SelectionSet{};
            if (!cfg.disable_mss) {
                mss_sets[i] = mss_select(records, i, name, r);
                validate_selection_ids(mss_sets[i], target_ids);
            }
            em.sel_count[name] = mss_sets[i].entries.size();
        }
        {
            const double r0 =
                update_proportion(curriculum.fused, em.fused_src_acc, curriculum.total_epochs);
            em.r_fused = r0;
            mis_set = SelectionSet{};
            if (!cfg.disable_mis) {
                mis_set = mis_select(records, r0, curriculum.alpha);
                validate_selection_ids(mis_set, target_ids);
            }
            em.sel_mis_count = mis_set.entries.size();
        }

        record_target_metrics(em, st, working);
        em.selections = mss_sets;
        em.selections.push_back(mis_set);
        rm.epochs.push_back(std::move(em));
    }

    finalize_metrics(rm, st, working);
    result.ensemble = std::move(st.ensemble);
    result.optims = std::move(st.optims);
    result.metrics = std::move(rm);
    return result;
}

}  // namespace pmc
