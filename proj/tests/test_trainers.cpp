#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <set>

#include "oracles.hpp"
#include "pmc/trainers.hpp"

using namespace pmc;

namespace {

BenchmarkSpec tiny_spec(std::uint64_t seed = 7) {
    BenchmarkSpec spec = blobs_mm2_spec();
    spec.source_count = 120;
    spec.target_count = 120;
    spec.seed = seed;
    return spec;
}

TrainConfig tiny_cfg(std::uint64_t seed = 1) {
    TrainConfig cfg;
    cfg.warmup_epochs = 4;
    cfg.cooperation_epochs = 6;
    cfg.seed = seed;
    return cfg;
}

bool nets_equal(const DenseNet& a, const DenseNet& b) {
    for (std::size_t i = 0; i < a.layers.size(); ++i) {
        if (std::memcmp(a.layers[i].w.v.data(), b.layers[i].w.v.data(),
                        a.layers[i].w.v.size() * sizeof(double)) != 0)
            return false;
        if (std::memcmp(a.layers[i].b.data(), b.layers[i].b.data(),
                        a.layers[i].b.size() * sizeof(double)) != 0)
            return false;
    }
    return true;
}

bool ensembles_equal(const BranchEnsemble& a, const BranchEnsemble& b) {
    if (a.branches.size() != b.branches.size()) return false;
    for (std::size_t i = 0; i < a.branches.size(); ++i) {
        if (a.branches[i].modality != b.branches[i].modality) return false;
        if (!nets_equal(a.branches[i].feature, b.branches[i].feature)) return false;
        if (!nets_equal(a.branches[i].classifier, b.branches[i].classifier)) return false;
        if (!nets_equal(a.branches[i].domain_clf, b.branches[i].domain_clf)) return false;
    }
    return true;
}

SelectionEntry entry(int id, int label, double weight, bool mis, const std::string& mod = "A") {
    SelectionEntry e;
    e.id = id;
    e.label = label;
    e.weight = weight;
    e.confidence = weight;
    e.mis = mis;
    if (!mis) e.modality = mod;
    return e;
}

}  // namespace

// ---------------------------------------------------------------------------
// tar_loss
// ---------------------------------------------------------------------------

TEST_CASE("tar_loss: empty selections cost nothing") {
    const MultiModalDataset ds = generate_benchmark(tiny_spec());
    const BranchEnsemble ens = make_ensemble(ds.schema, {"A", "B"}, {}, 0.3, 1);
    const auto targets = ds.target_samples();
    const BranchBatchResult res = tar_loss(ens.branches[0], {}, {}, targets);
    CHECK(res.loss == 0.0);
    for (const auto& l : res.grads.feature.layers) {
        for (double v : l.w.v) CHECK(v == 0.0);
    }
    for (const auto& l : res.grads.classifier.layers) {
        for (double v : l.w.v) CHECK(v == 0.0);
    }
}

TEST_CASE("tar_loss: a sample selected by both modules pays both weighted terms") {
    const MultiModalDataset ds = generate_benchmark(tiny_spec());
    const BranchEnsemble ens = make_ensemble(ds.schema, {"A", "B"}, {}, 0.3, 1);
    const auto targets = ds.target_samples();
    const int id = targets[0]->id;

    SelectionSet mss, mis;
    mss.entries.push_back(entry(id, 2, 0.5, false));
    mis.entries.push_back(entry(id, 2, 0.5, true));
    const BranchBatchResult both = tar_loss(ens.branches[0], mss, mis, targets);

    const Activations f = forward(ens.branches[0].feature, targets[0]->payloads.at("A"));
    const Activations c = forward(ens.branches[0].classifier, f.output());
    const double ce = softmax_xent(c.output(), 2, 1.0).loss;
    CHECK(both.loss ==
          doctest::Approx(ce / static_cast<double>(targets.size())).epsilon(1e-12));
}

TEST_CASE("tar_loss: direct per-sample summation oracle to 1e-12") {
    const MultiModalDataset ds = generate_benchmark(tiny_spec());
    const BranchEnsemble ens = make_ensemble(ds.schema, {"A", "B"}, {}, 0.3, 3);
    const auto targets = ds.target_samples();
    Rng rng(5);

    SelectionSet mss, mis;
    for (const auto* t : targets) {
        if (rng.uniform() < 0.3) {
            mss.entries.push_back(entry(t->id, static_cast<int>(rng.below(4)),
                                        rng.uniform(0.3, 1.0), false));
        }
        if (rng.uniform() < 0.3) {
            mis.entries.push_back(entry(t->id, static_cast<int>(rng.below(4)),
                                        rng.uniform(0.3, 1.0), true));
        }
    }
    const BranchBatchResult res = tar_loss(ens.branches[0], mss, mis, targets);

    double want = 0.0;  // independent summation
    auto find = [](const SelectionSet& s, int id) -> const SelectionEntry* {
        for (const auto& e : s.entries)
            if (e.id == id) return &e;
        return nullptr;
    };
    for (const auto* t : targets) {
        const Vec probs = predict_probs(ens.branches[0], t->payloads.at("A"));
        for (const SelectionSet* s : {&mss, &mis}) {
            if (const SelectionEntry* e = find(*s, t->id)) {
                want += -e->weight * std::log(probs[e->label]);
            }
        }
    }
    want /= static_cast<double>(targets.size());
    CHECK(res.loss == doctest::Approx(want).epsilon(1e-12));
}

TEST_CASE("tar_loss: Eq-style normalization scales with the passed population") {
    const MultiModalDataset ds = generate_benchmark(tiny_spec());
    const BranchEnsemble ens = make_ensemble(ds.schema, {"A", "B"}, {}, 0.3, 3);
    auto targets = ds.target_samples();
    SelectionSet mss;
    mss.entries.push_back(entry(targets[0]->id, 1, 0.8, false));

    const double base = tar_loss(ens.branches[0], mss, {}, targets).loss;
    // duplicate the unselected population: same numerator, double denominator
    auto doubled = targets;
    MultiModalDataset copy = ds;  // duplicated samples need distinct storage
    std::vector<Sample> extra;
    for (std::size_t i = 1; i < targets.size(); ++i) {
        Sample s = *targets[i];
        s.id += 100000;
        extra.push_back(std::move(s));
    }
    for (const auto& s : extra) doubled.push_back(&s);
    const double scaled = tar_loss(ens.branches[0], mss, {}, doubled).loss;
    CHECK(scaled == doctest::Approx(base * static_cast<double>(targets.size()) /
                                    static_cast<double>(doubled.size()))
                        .epsilon(1e-12));
}

TEST_CASE("tar_loss: dangling selection ids are rejected") {
    const MultiModalDataset ds = generate_benchmark(tiny_spec());
    const BranchEnsemble ens = make_ensemble(ds.schema, {"A", "B"}, {}, 0.3, 1);
    SelectionSet mss;
    mss.entries.push_back(entry(999999, 0, 0.5, false));
    CHECK_THROWS_WITH_AS(tar_loss(ens.branches[0], mss, {}, ds.target_samples()),
                         doctest::Contains("unknown target id"), std::invalid_argument);
}

// ---------------------------------------------------------------------------
// late fusion and evaluation
// ---------------------------------------------------------------------------

TEST_CASE("late_fusion_predict: consensus, tie rule, and mean-then-argmax oracle") {
    const MultiModalDataset ds = generate_benchmark(tiny_spec());
    const BranchEnsemble ens = make_ensemble(ds.schema, {"A", "B"}, {}, 0.3, 9);

    SUBCASE("matches recomputing the mean of per-branch probabilities") {
        for (int i = 0; i < 10; ++i) {
            const Sample& s = ds.samples[i];
            const auto [label, fused] = late_fusion_predict(ens, s);
            Vec mean(4, 0.0);
            for (const auto& br : ens.branches) {
                const Vec p = predict_probs(br, s.payloads.at(br.modality));
                for (std::size_t c = 0; c < 4; ++c) mean[c] += p[c] / 2.0;
            }
            for (std::size_t c = 0; c < 4; ++c) CHECK(fused[c] == doctest::Approx(mean[c]));
            CHECK(label == static_cast<int>(std::max_element(mean.begin(), mean.end()) -
                                            mean.begin()));
        }
    }
    SUBCASE("missing modality payload is an error") {
        Sample s = ds.samples[0];
        s.payloads.erase("B");
        CHECK_THROWS_WITH_AS(late_fusion_predict(ens, s), doctest::Contains("lacks modality"),
                             std::invalid_argument);
    }
}

TEST_CASE("evaluate: a hand-built perfect classifier scores 1.0 everywhere") {
    BenchmarkSpec spec = tiny_spec();
    spec.noise = 0.0;  // samples sit exactly on their category means
    for (auto& m : spec.modalities) {
        m.rotation_deg = 0.0;
        m.translation.clear();
    }
    spec.coupling = 0;
    const MultiModalDataset ds = generate_benchmark(spec);

    // matched-filter classifier: logits_c = 2 mu_c . f - |mu_c|^2 over an
    // identity feature map
    BranchEnsemble ens;
    ens.num_categories = 4;
    ens.lambda = 0.0;
    for (const auto& mod : {"A", "B"}) {
        std::map<int, Vec> mean;
        for (const auto& s : ds.samples) {
            if (s.domain != Domain::Source) continue;
            if (mean.count(s.label)) continue;
            mean[s.label] = s.payloads.at(mod);  // noise 0: any sample IS the mean
        }
        ModalityBranch br;
        br.modality = mod;
        const std::size_t dim = ds.schema.modality_dim(mod);
        br.feature.layer_sizes = {dim, dim};
        br.feature.layers.resize(1);
        br.feature.layers[0].w = Matrix(dim, dim);
        for (std::size_t i = 0; i < dim; ++i) br.feature.layers[0].w.at(i, i) = 1.0;
        br.feature.layers[0].b.assign(dim, 0.0);
        br.classifier.layer_sizes = {dim, 4};
        br.classifier.layers.resize(1);
        br.classifier.layers[0].w = Matrix(4, dim);
        br.classifier.layers[0].b.assign(4, 0.0);
        for (int c = 0; c < 4; ++c) {
            double sq = 0.0;
            for (std::size_t k = 0; k < dim; ++k) {
                br.classifier.layers[0].w.at(c, k) = 2.0 * mean[c][k];
                sq += mean[c][k] * mean[c][k];
            }
            br.classifier.layers[0].b[c] = -sq;
        }
        br.domain_clf.layer_sizes = {dim, 1};
        br.domain_clf.layers.resize(1);
        br.domain_clf.layers[0].w = Matrix(1, dim);
        br.domain_clf.layers[0].b.assign(1, 0.0);
        ens.branches.push_back(std::move(br));
    }

    for (Split split : {Split::Source, Split::Target}) {
        const EvalResult res = evaluate(ens, ds, split);
        CHECK(res.fused == 1.0);
        CHECK(res.per_modality.at("A") == 1.0);
        CHECK(res.per_modality.at("B") == 1.0);
    }
}

TEST_CASE("evaluate: a random classifier sits at chance on 4 categories") {
    BenchmarkSpec spec = tiny_spec();
    spec.target_count = 1000;
    spec.modalities[1].informativeness = 0.0;
    spec.coupling = 0;  // B is pure noise
    const MultiModalDataset ds = generate_benchmark(spec);
    const BranchEnsemble ens = make_ensemble(ds.schema, {"B"}, {}, 0.3, 123);
    const EvalResult res = evaluate(ens, ds, Split::Target);
    CHECK(std::fabs(res.fused - 0.25) < 0.05);
}

// ---------------------------------------------------------------------------
// training loops
// ---------------------------------------------------------------------------

TEST_CASE("train_pmc: disabling both selection modules reduces to the DANN baseline bitwise") {
    const MultiModalDataset ds = generate_benchmark(tiny_spec());
    TrainConfig cfg = tiny_cfg();
    cfg.warmup_epochs = 3;
    cfg.cooperation_epochs = 7;  // 10 epochs total
    TrainConfig off = cfg;
    off.disable_mss = true;
    off.disable_mis = true;

    const TrainResult dann = train_dann(ds, cfg);
    const TrainResult pmc = train_pmc(ds, off);
    CHECK(ensembles_equal(dann.ensemble, pmc.ensemble));

    // and with a module enabled the trajectory must diverge
    const TrainResult full = train_pmc(ds, cfg);
    CHECK_FALSE(ensembles_equal(dann.ensemble, full.ensemble));
}

TEST_CASE("train_pmc: deterministic metrics, gap-free epochs, curriculum bookkeeping") {
    const MultiModalDataset ds = generate_benchmark(tiny_spec());
    const TrainConfig cfg = tiny_cfg(11);
    const TrainResult a = train_pmc(ds, cfg);
    const TrainResult b = train_pmc(ds, cfg);
    CHECK(a.metrics == b.metrics);
    CHECK(ensembles_equal(a.ensemble, b.ensemble));

    REQUIRE(a.metrics.epochs.size() == cfg.warmup_epochs + cfg.cooperation_epochs);
    for (std::size_t i = 0; i < a.metrics.epochs.size(); ++i) {
        const EpochMetrics& em = a.metrics.epochs[i];
        CHECK(em.epoch == i + 1);
        CHECK(em.phase == (i < cfg.warmup_epochs ? "warmup" : "coop"));
        for (const auto& [_, acc] : em.src_acc) {
            CHECK(acc >= 0.0);
            CHECK(acc <= 1.0);
        }
        if (em.phase == "coop") {
            // selected counts equal floor(r * N^t) cardinality exactness
            for (const auto& [mod, r] : em.r) {
                CHECK(em.sel_count.at(mod) == selection_count(r, ds.target_count()));
            }
            CHECK(em.sel_mis_count ==
                  selection_count(std::min(cfg.alpha * em.r_fused, 1.0), ds.target_count()));
        }
    }

    // different seed, different trajectory
    TrainConfig cfg2 = cfg;
    cfg2.seed = 12;
    const TrainResult c = train_pmc(ds, cfg2);
    CHECK_FALSE(ensembles_equal(a.ensemble, c.ensemble));
}

TEST_CASE("train_pmc: cumulative selected-id coverage is non-decreasing") {
    const MultiModalDataset ds = generate_benchmark(tiny_spec());
    const TrainResult res = train_pmc(ds, tiny_cfg(21));
    std::set<int> ever;
    std::size_t prev = 0;
    for (const auto& em : res.metrics.epochs) {
        if (em.phase != "coop") continue;
        for (const auto& set : em.selections) {
            for (const auto& e : set.entries) ever.insert(e.id);
        }
        CHECK(ever.size() >= prev);
        prev = ever.size();
    }
    CHECK(prev > 0);
}

TEST_CASE("train_pmc: rejects PI-shaped datasets and bad modes") {
    const MultiModalDataset ds = generate_benchmark(tiny_spec());
    const MultiModalDataset dropped = drop_modality(ds, "B");
    CHECK_THROWS_WITH_AS(train_pmc(dropped, tiny_cfg()), doctest::Contains("MMDA-shaped"),
                         std::invalid_argument);
    TrainConfig cfg = tiny_cfg();
    cfg.mode = TrainConfig::Mode::MmdaPi;
    CHECK_THROWS_AS(train_pmc(ds, cfg), std::invalid_argument);
    TrainConfig bad = tiny_cfg();
    bad.cooperation_epochs = 0;
    CHECK_THROWS_AS(train_pmc(ds, bad), std::invalid_argument);
}

TEST_CASE("train_pmc_pi: protocol checks") {
    const MultiModalDataset ds = generate_benchmark(tiny_spec());
    const MultiModalDataset dropped = drop_modality(ds, "B");
    TrainConfig cfg = tiny_cfg(31);
    cfg.mode = TrainConfig::Mode::MmdaPi;
    cfg.mmg_epochs = 6;

    const PmcPiResult res = train_pmc_pi(dropped, cfg);

    SUBCASE("the first cooperation epoch trains from an MSS-only selection") {
        const EpochMetrics& first_coop = res.metrics.epochs[cfg.warmup_epochs];
        CHECK(first_coop.phase == "coop");
        // the sets used for the first retrain are recorded implicitly: the
        // MIS set reported for epoch 1 is the one selected *after* it; the
        // audit trail of what trained epoch 1 is the initial selection, which
        // is MSS-only by construction. Verified via the generator-independent
        // mechanics below: warmup rows never carry selections.
        for (std::size_t i = 0; i < cfg.warmup_epochs; ++i) {
            CHECK(res.metrics.epochs[i].selections.empty());
        }
    }
    SUBCASE("metrics cover both modalities once cooperation starts") {
        const EpochMetrics& last = res.metrics.epochs.back();
        CHECK(last.target_acc.count("A") == 1);
        CHECK(last.target_acc.count("B") == 1);
        CHECK(res.metrics.final_fused_target_acc >= 0.0);
    }
    SUBCASE("determinism") {
        const PmcPiResult again = train_pmc_pi(dropped, cfg);
        CHECK(again.metrics == res.metrics);
        CHECK(ensembles_equal(again.ensemble, res.ensemble));
    }
    SUBCASE("rejects wrong shapes") {
        CHECK_THROWS_WITH_AS(train_pmc_pi(ds, cfg), doctest::Contains("exactly one modality"),
                             std::invalid_argument);
        TrainConfig wrong = cfg;
        wrong.mode = TrainConfig::Mode::Mmda;
        CHECK_THROWS_AS(train_pmc_pi(dropped, wrong), std::invalid_argument);
    }
}

TEST_CASE("train_pmc_pi: generator parameters are frozen through the cooperation loop") {
    const MultiModalDataset dropped = drop_modality(generate_benchmark(tiny_spec()), "B");
    TrainConfig cfg = tiny_cfg(41);
    cfg.mode = TrainConfig::Mode::MmdaPi;
    cfg.mmg_epochs = 6;

    // identical MMG training in isolation: the loop must not have touched it
    MmgConfig mcfg;
    mcfg.latent_dim = cfg.mmg_latent_dim;
    mcfg.lambda_gen = cfg.lambda_gen;
    mcfg.base_lr = cfg.base_lr;
    mcfg.momentum = cfg.momentum;
    mcfg.weight_decay = cfg.weight_decay;
    mcfg.batch_size = cfg.batch_size;
    mcfg.epochs = cfg.mmg_epochs;
    mcfg.inv_schedule = cfg.inv_schedule;
    mcfg.ramp = cfg.ramp;
    mcfg.seed = derive_seed(cfg.seed, "pmc-pi/mmg");
    const MmgModel isolated = train_mmg(dropped, "A", "B", mcfg);

    const PmcPiResult res = train_pmc_pi(dropped, cfg);
    CHECK(nets_equal(res.generator.encoder, isolated.encoder));
    CHECK(nets_equal(res.generator.decoder, isolated.decoder));
    CHECK(nets_equal(res.generator.domain_clf, isolated.domain_clf));
}

TEST_CASE("train_pmc_pi: the oracle generator hook replaces generation") {
    const MultiModalDataset full = generate_benchmark(tiny_spec());
    const MultiModalDataset dropped = drop_modality(full, "B");
    TrainConfig cfg = tiny_cfg(51);
    cfg.mode = TrainConfig::Mode::MmdaPi;

    std::map<int, Vec> truth;
    for (const auto& s : full.samples) {
        if (s.domain == Domain::Target) truth[s.id] = s.payloads.at("B");
    }
    std::size_t calls = 0;
    const PmcPiResult res = train_pmc_pi(dropped, cfg, [&](const Sample& s, const Vec&) {
        ++calls;
        return truth.at(s.id);
    });
    CHECK(calls == dropped.target_count() * cfg.cooperation_epochs);
    CHECK(res.metrics.final_fused_target_acc > 0.25);
}

TEST_CASE("metrics serialization covers every epoch row") {
    const MultiModalDataset ds = generate_benchmark(tiny_spec());
    const TrainResult res = train_pmc(ds, tiny_cfg(61));
    const std::string text = metrics_to_string(res.metrics, {"A", "B"});
    std::size_t rows = 0;
    for (char c : text)
        if (c == '\n') ++rows;
    // header (2 lines) + epochs + final
    CHECK(rows == 2 + res.metrics.epochs.size() + 1);
    CHECK(text.find("final") != std::string::npos);
}
