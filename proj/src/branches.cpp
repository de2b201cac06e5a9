#include "pmc/branches.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "pmc/io.hpp"
#include "pmc/serialize.hpp"

namespace pmc {

const ModalityBranch& BranchEnsemble::branch(const std::string& modality) const {
    return branches[branch_index(modality)];
}

std::size_t BranchEnsemble::branch_index(const std::string& modality) const {
    for (std::size_t i = 0; i < branches.size(); ++i) {
        if (branches[i].modality == modality) return i;
    }
    throw std::invalid_argument("ensemble: no branch for modality '" + modality + "'");
}

BranchEnsemble make_ensemble(const DatasetSchema& schema,
                             const std::vector<std::string>& modalities, const BranchArch& arch,
                             double lambda, std::uint64_t seed) {
    if (modalities.empty()) throw std::invalid_argument("make_ensemble: no modalities");
    if (lambda < 0.0) throw std::invalid_argument("make_ensemble: lambda must be >= 0");
    if (arch.feature_layers.empty()) {
        throw std::invalid_argument("make_ensemble: feature_layers must not be empty");
    }
    BranchEnsemble ens;
    ens.lambda = lambda;
    ens.num_categories = schema.num_categories;
    for (const auto& name : modalities) {
        const std::size_t in_dim = schema.modality_dim(name);
        const std::size_t feat_dim = arch.feature_layers.back();

        std::vector<std::size_t> f_sizes{in_dim};
        f_sizes.insert(f_sizes.end(), arch.feature_layers.begin(), arch.feature_layers.end());
        std::vector<std::size_t> c_sizes{feat_dim, schema.num_categories};
        std::vector<std::size_t> d_sizes{feat_dim};
        d_sizes.insert(d_sizes.end(), arch.domain_hidden.begin(), arch.domain_hidden.end());
        d_sizes.push_back(1);

        ModalityBranch br;
        br.modality = name;
        Rng f_rng(derive_seed(seed, "branch/" + name + "/feature"));
        Rng c_rng(derive_seed(seed, "branch/" + name + "/classifier"));
        Rng d_rng(derive_seed(seed, "branch/" + name + "/domain"));
        br.feature = make_dense_net(f_sizes, f_rng);
        br.classifier = make_dense_net(c_sizes, c_rng);
        br.domain_clf = make_dense_net(d_sizes, d_rng);
        ens.branches.push_back(std::move(br));
    }
    return ens;
}

Vec predict_probs(const ModalityBranch& branch, const Vec& x) {
    const Activations f = forward(branch.feature, x);
    const Activations c = forward(branch.classifier, f.output());
    return softmax(c.output());
}

// ---------------------------------------------------------------------------
// Batch losses
// ---------------------------------------------------------------------------

namespace {

const Vec& payload_of(const ModalityBranch& branch, const Sample& s) {
    auto it = s.payloads.find(branch.modality);
    if (it == s.payloads.end()) {
        throw std::invalid_argument("sample " + std::to_string(s.id) + " lacks modality '" +
                                    branch.modality + "'");
    }
    return it->second;
}

BranchGrads zero_branch_grads(const ModalityBranch& b) {
    return {zero_grads(b.feature), zero_grads(b.classifier), zero_grads(b.domain_clf)};
}

}  // namespace

BranchBatchResult src_loss(const ModalityBranch& branch, std::span<const Sample* const> batch) {
    if (batch.empty()) throw std::invalid_argument("src_loss: empty batch");
    BranchBatchResult out{0.0, zero_branch_grads(branch)};
    const double scale = 1.0 / static_cast<double>(batch.size());
    for (const Sample* s : batch) {
        if (s->domain != Domain::Source) {
            throw std::invalid_argument("src_loss: sample " + std::to_string(s->id) +
                                        " is not source-domain");
        }
        const Activations f = forward(branch.feature, payload_of(branch, *s));
        const Activations c = forward(branch.classifier, f.output());
        const LossGrad lg = softmax_xent(c.output(), static_cast<std::size_t>(s->label), 1.0);
        out.loss += scale * lg.loss;
        NetGrads gc = zero_grads(branch.classifier);
        backward_accumulate(branch.classifier, c, lg.grad, scale, gc);
        backward_accumulate(branch.feature, f, gc.input, 1.0, out.grads.feature);
        out.grads.classifier.add_scaled(gc, 1.0);
    }
    return out;
}

BranchBatchResult adv_loss(const ModalityBranch& branch, std::span<const Sample* const> batch,
                           double grl_factor) {
    if (batch.empty()) throw std::invalid_argument("adv_loss: empty batch");
    if (!(grl_factor >= 0.0)) throw std::invalid_argument("adv_loss: negative GRL factor");
    BranchBatchResult out{0.0, zero_branch_grads(branch)};
    const double scale = 1.0 / static_cast<double>(batch.size());
    for (const Sample* s : batch) {
        const Activations f = forward(branch.feature, payload_of(branch, *s));
        const Activations d = forward(branch.domain_clf, f.output());
        const ScalarLossGrad lg = binary_xent(d.output()[0], s->domain == Domain::Target ? 1 : 0);
        out.loss += scale * lg.loss;
        NetGrads gd = zero_grads(branch.domain_clf);
        backward_accumulate(branch.domain_clf, d, Vec{lg.grad}, scale, gd);
        out.grads.domain.add_scaled(gd, 1.0);
        if (grl_factor != 0.0) {
            // reversal layer sits between F and D
            backward_accumulate(branch.feature, f, grl_backward(gd.input, grl_factor), 1.0,
                                out.grads.feature);
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Epoch training
// ---------------------------------------------------------------------------

BranchOptim BranchOptim::for_branch(const ModalityBranch& branch, double base_lr, double momentum,
                                    double weight_decay, bool inv_schedule) {
    return {OptimState::for_net(branch.feature, base_lr, momentum, weight_decay, inv_schedule),
            OptimState::for_net(branch.classifier, base_lr, momentum, weight_decay, inv_schedule),
            OptimState::for_net(branch.domain_clf, base_lr, momentum, weight_decay, inv_schedule)};
}

void BranchOptim::set_progress(double p) {
    feature.set_progress(p);
    classifier.set_progress(p);
    domain.set_progress(p);
}

EpochPlan plan_epoch(const MultiModalDataset& ds, std::size_t batch_size, std::uint64_t seed,
                     std::size_t epoch_index, double p_begin, double p_end, bool need_targets) {
    if (batch_size < 2) throw std::invalid_argument("plan_epoch: batch size must be >= 2");
    EpochPlan plan;
    plan.source_order = ds.source_samples();
    plan.target_order = ds.target_samples();
    if (plan.source_order.empty()) throw std::invalid_argument("plan_epoch: dataset has no source samples");
    if (need_targets && plan.target_order.empty()) {
        throw std::invalid_argument("plan_epoch: dataset has no target samples");
    }
    Rng rng(derive_seed(seed, "epoch-batches", epoch_index));
    rng.shuffle(plan.source_order);
    rng.shuffle(plan.target_order);
    plan.half_batch = batch_size / 2;
    const std::size_t smallest =
        plan.target_order.empty() ? plan.source_order.size()
                                  : std::min(plan.source_order.size(), plan.target_order.size());
    plan.steps = (smallest + plan.half_batch - 1) / plan.half_batch;
    if (plan.steps == 0) plan.steps = 1;
    plan.p_begin = p_begin;
    plan.p_end = p_end;
    return plan;
}

void clip_grad_norm(NetGrads& grads, double max_norm) {
    if (max_norm <= 0.0) return;
    double sq = 0.0;
    for (const auto& l : grads.layers) {
        for (double v : l.w.v) sq += v * v;
        for (double v : l.b) sq += v * v;
    }
    const double norm = std::sqrt(sq);
    if (norm <= max_norm) return;
    const double s = max_norm / norm;
    for (auto& l : grads.layers) {
        for (double& v : l.w.v) v *= s;
        for (double& v : l.b) v *= s;
    }
}

namespace {

// consecutive half-batch with wraparound
std::vector<const Sample*> slice(const std::vector<const Sample*>& order, std::size_t step,
                                 std::size_t half) {
    std::vector<const Sample*> out;
    out.reserve(half);
    if (order.empty()) return out;
    for (std::size_t i = 0; i < half; ++i) {
        out.push_back(order[(step * half + i) % order.size()]);
    }
    return out;
}

}  // namespace

void run_branch_epoch(ModalityBranch& branch, BranchOptim& optim, const EpochPlan& plan,
                      const EpochConfig& cfg, const TargetTerms* terms) {
    if (cfg.mode == EpochMode::Cooperation && terms == nullptr) {
        throw std::invalid_argument("run_branch_epoch: cooperation mode requires target terms");
    }
    for (std::size_t step = 0; step < plan.steps; ++step) {
        const double p =
            plan.p_begin + (plan.p_end - plan.p_begin) * static_cast<double>(step) /
                               static_cast<double>(plan.steps);
        optim.set_progress(p);

        const auto src = slice(plan.source_order, step, plan.half_batch);
        const auto tgt = slice(plan.target_order, step, plan.half_batch);

        BranchBatchResult total{0.0, zero_branch_grads(branch)};

        {
            const BranchBatchResult src_part = src_loss(branch, src);
            total.grads.feature.add_scaled(src_part.grads.feature, 1.0);
            total.grads.classifier.add_scaled(src_part.grads.classifier, 1.0);
        }

        if (cfg.mode == EpochMode::Cooperation && !tgt.empty() &&
            (!terms->mss.empty() || !terms->mis.empty())) {
            // dataset-normalized, matching the retraining loss as written:
            // each selected sample contributes w*CE / N^t per epoch
            const double scale = 1.0 / static_cast<double>(plan.target_order.size());
            for (const Sample* s : tgt) {
                const auto mss_it = terms->mss.find(s->id);
                const auto mis_it = terms->mis.find(s->id);
                if (mss_it == terms->mss.end() && mis_it == terms->mis.end()) continue;
                const Activations f = forward(branch.feature, payload_of(branch, *s));
                const Activations c = forward(branch.classifier, f.output());
                NetGrads gc = zero_grads(branch.classifier);
                for (const auto* it : {mss_it != terms->mss.end() ? &*mss_it : nullptr,
                                       mis_it != terms->mis.end() ? &*mis_it : nullptr}) {
                    if (it == nullptr) continue;
                    const auto& [label, weight] = it->second;
                    const LossGrad lg =
                        softmax_xent(c.output(), static_cast<std::size_t>(label), weight);
                    backward_accumulate(branch.classifier, c, lg.grad, scale, gc);
                }
                backward_accumulate(branch.feature, f, gc.input, 1.0, total.grads.feature);
                total.grads.classifier.add_scaled(gc, 1.0);
            }
        }

        bool trained_domain = false;
        if (cfg.mode != EpochMode::SourceOnly) {
            std::vector<const Sample*> both;
            both.reserve(src.size() + tgt.size());
            both.insert(both.end(), src.begin(), src.end());
            both.insert(both.end(), tgt.begin(), tgt.end());
            const double factor = cfg.lambda * (cfg.ramp ? adaptation_ramp(p) : 1.0);
            const BranchBatchResult adv_part = adv_loss(branch, both, factor);
            total.grads.feature.add_scaled(adv_part.grads.feature, 1.0);
            total.grads.domain.add_scaled(adv_part.grads.domain, 1.0);
            trained_domain = true;
        }

        clip_grad_norm(total.grads.feature, cfg.grad_clip);
        clip_grad_norm(total.grads.classifier, cfg.grad_clip);
        clip_grad_norm(total.grads.domain, cfg.grad_clip);
        sgd_step(branch.feature, total.grads.feature, optim.feature);
        sgd_step(branch.classifier, total.grads.classifier, optim.classifier);
        if (trained_domain) sgd_step(branch.domain_clf, total.grads.domain, optim.domain);
    }
}

double source_accuracy(const ModalityBranch& branch, const MultiModalDataset& ds) {
    std::size_t total = 0, hit = 0;
    for (const auto& s : ds.samples) {
        if (s.domain != Domain::Source) continue;
        ++total;
        const Vec p = predict_probs(branch, payload_of(branch, s));
        const auto best = std::max_element(p.begin(), p.end()) - p.begin();
        if (best == s.label) ++hit;
    }
    if (total == 0) throw std::invalid_argument("source_accuracy: no source samples");
    return static_cast<double>(hit) / static_cast<double>(total);
}

double fused_source_accuracy(const BranchEnsemble& ensemble, const MultiModalDataset& ds) {
    std::size_t total = 0, hit = 0;
    for (const auto& s : ds.samples) {
        if (s.domain != Domain::Source) continue;
        ++total;
        Vec mean(ensemble.num_categories, 0.0);
        for (const auto& br : ensemble.branches) {
            const Vec p = predict_probs(br, payload_of(br, s));
            for (std::size_t c = 0; c < mean.size(); ++c) mean[c] += p[c];
        }
        const auto best = std::max_element(mean.begin(), mean.end()) - mean.begin();
        if (best == s.label) ++hit;
    }
    if (total == 0) throw std::invalid_argument("fused_source_accuracy: no source samples");
    return static_cast<double>(hit) / static_cast<double>(total);
}

double domain_accuracy(const ModalityBranch& branch, const MultiModalDataset& ds) {
    std::size_t total = 0, hit = 0;
    for (const auto& s : ds.samples) {
        auto it = s.payloads.find(branch.modality);
        if (it == s.payloads.end()) continue;
        ++total;
        const Activations f = forward(branch.feature, it->second);
        const Activations d = forward(branch.domain_clf, f.output());
        const bool says_target = d.output()[0] > 0.0;
        if (says_target == (s.domain == Domain::Target)) ++hit;
    }
    if (total == 0) throw std::invalid_argument("domain_accuracy: no scorable samples");
    return static_cast<double>(hit) / static_cast<double>(total);
}

std::vector<double> train_dann_epoch(BranchEnsemble& ensemble, std::vector<BranchOptim>& optims,
                                     const MultiModalDataset& ds, const EpochPlan& plan,
                                     bool ramp) {
    if (ensemble.branches.size() != optims.size()) {
        throw std::invalid_argument("train_dann_epoch: one optimizer per branch required");
    }
    EpochConfig cfg;
    cfg.mode = EpochMode::Dann;
    cfg.lambda = ensemble.lambda;
    cfg.ramp = ramp;
    for (std::size_t i = 0; i < ensemble.branches.size(); ++i) {
        run_branch_epoch(ensemble.branches[i], optims[i], plan, cfg, nullptr);
    }
    std::vector<double> acc;
    acc.reserve(ensemble.branches.size());
    for (const auto& br : ensemble.branches) acc.push_back(source_accuracy(br, ds));
    return acc;
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

void save_ensemble(const std::string& path, const BranchEnsemble& ensemble,
                   const std::vector<BranchOptim>& optims, std::size_t epoch) {
    if (optims.size() != ensemble.branches.size()) {
        throw std::invalid_argument("save_ensemble: one optimizer per branch required");
    }
    std::ostringstream out;
    out << "pmc-ensemble v1\n";
    out << "lambda " << fmt_double_hex(ensemble.lambda) << '\n';
    out << "categories " << ensemble.num_categories << '\n';
    out << "epoch " << epoch << '\n';
    out << "branches " << ensemble.branches.size() << '\n';
    for (std::size_t i = 0; i < ensemble.branches.size(); ++i) {
        const auto& br = ensemble.branches[i];
        out << "branch " << br.modality << '\n';
        write_net(out, "feature", br.feature);
        write_net(out, "classifier", br.classifier);
        write_net(out, "domain", br.domain_clf);
        write_optim(out, "feature", optims[i].feature);
        write_optim(out, "classifier", optims[i].classifier);
        write_optim(out, "domain", optims[i].domain);
    }
    atomic_write_file(path, out.str());
}

EnsembleCheckpoint load_ensemble(const std::string& path) {
    std::istringstream in(read_file(path));
    std::string line;
    if (!std::getline(in, line) || line != "pmc-ensemble v1") {
        throw std::runtime_error("checkpoint: bad ensemble header in " + path);
    }
    EnsembleCheckpoint ck;
    auto read_kv = [&](const std::string& key) {
        if (!std::getline(in, line)) throw std::runtime_error("checkpoint: truncated " + path);
        const auto toks = split_ws(line);
        if (toks.size() != 2 || toks[0] != key) {
            throw std::runtime_error("checkpoint: expected '" + key + "' in " + path);
        }
        return toks[1];
    };
    ck.ensemble.lambda = parse_double(read_kv("lambda"));
    ck.ensemble.num_categories = static_cast<std::size_t>(parse_long(read_kv("categories")));
    ck.epoch = static_cast<std::size_t>(parse_long(read_kv("epoch")));
    const std::size_t n = static_cast<std::size_t>(parse_long(read_kv("branches")));
    for (std::size_t i = 0; i < n; ++i) {
        ModalityBranch br;
        br.modality = read_kv("branch");
        br.feature = read_net(in, "feature");
        br.classifier = read_net(in, "classifier");
        br.domain_clf = read_net(in, "domain");
        BranchOptim opt{read_optim(in, "feature", br.feature),
                        read_optim(in, "classifier", br.classifier),
                        read_optim(in, "domain", br.domain_clf)};
        ck.ensemble.branches.push_back(std::move(br));
        ck.optims.push_back(std::move(opt));
    }
    return ck;
}

}  // namespace pmc
