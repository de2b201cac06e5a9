#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <map>

#include "oracles.hpp"
#include "pmc/io.hpp"
#include "pmc/synthdata.hpp"

using namespace pmc;

namespace {

// Test-only probe: softmax regression on one modality, full-batch gradient
// descent. Trains on source, evaluates on the requested domain (target truth
// comes from the evaluation-only labels).
double probe_accuracy(const MultiModalDataset& ds, const std::string& modality, Domain eval_on) {
    const std::size_t dim = ds.schema.modality_dim(modality);
    const std::size_t nc = ds.schema.num_categories;
    Rng rng(12345);
    DenseNet probe = make_dense_net({dim, nc}, rng);
    OptimState opt = OptimState::for_net(probe, 0.5, 0.0, 0.0, false);
    const auto sources = ds.source_samples();
    for (int iter = 0; iter < 150; ++iter) {
        NetGrads g = zero_grads(probe);
        const double scale = 1.0 / static_cast<double>(sources.size());
        for (const Sample* s : sources) {
            const auto acts = forward(probe, s->payloads.at(modality));
            const LossGrad lg =
                softmax_xent(acts.output(), static_cast<std::size_t>(s->label), 1.0);
            backward_accumulate(probe, acts, lg.grad, scale, g);
        }
        sgd_step(probe, g, opt);
    }
    std::size_t hit = 0, total = 0;
    for (const auto& s : ds.samples) {
        const bool want = eval_on == Domain::Source ? s.domain == Domain::Source
                                                    : s.domain == Domain::Target;
        if (!want || !s.payloads.count(modality)) continue;
        const int truth =
            s.domain == Domain::Source ? s.label : ds.evaluation_labels().at(s.id);
        const Vec out = forward(probe, s.payloads.at(modality)).output();
        std::size_t best = 0;
        for (std::size_t i = 1; i < out.size(); ++i)
            if (out[i] > out[best]) best = i;
        if (static_cast<int>(best) == truth) ++hit;
        ++total;
    }
    return static_cast<double>(hit) / static_cast<double>(total);
}

BenchmarkSpec simple_spec() {
    BenchmarkSpec spec;
    spec.num_categories = 4;
    spec.source_count = 200;
    spec.target_count = 200;
    spec.noise = 0.5;
    spec.seed = 3;
    ModalitySpec a;
    a.name = "A";
    a.dim = 6;
    a.informativeness = 1.5;
    ModalitySpec b;
    b.name = "B";
    b.dim = 5;
    b.informativeness = 1.0;
    spec.modalities = {a, b};
    return spec;
}

}  // namespace

TEST_CASE("generate: identity transforms and zero noise make per-category means coincide") {
    BenchmarkSpec spec = simple_spec();
    spec.noise = 0.0;
    const MultiModalDataset ds = generate_benchmark(spec);

    for (const auto& mod : {"A", "B"}) {
        std::map<int, Vec> src_mean, tgt_mean;
        std::map<int, int> src_n, tgt_n;
        for (const auto& s : ds.samples) {
            const int cat = s.domain == Domain::Source ? s.label : ds.evaluation_labels().at(s.id);
            auto& mean = s.domain == Domain::Source ? src_mean[cat] : tgt_mean[cat];
            auto& n = s.domain == Domain::Source ? src_n[cat] : tgt_n[cat];
            const Vec& x = s.payloads.at(mod);
            if (mean.empty()) mean.assign(x.size(), 0.0);
            for (std::size_t i = 0; i < x.size(); ++i) mean[i] += x[i];
            ++n;
        }
        for (auto& [cat, mean] : src_mean) {
            double gap = 0.0;
            for (std::size_t i = 0; i < mean.size(); ++i) {
                gap = std::max(gap, std::fabs(mean[i] / src_n[cat] -
                                              tgt_mean[cat][i] / tgt_n[cat]));
            }
            CHECK(gap < 1e-9);
        }
    }
}

TEST_CASE("generate: same seed twice gives bitwise-identical datasets") {
    const BenchmarkSpec spec = blobs_mm2_spec();
    const MultiModalDataset a = generate_benchmark(spec);
    const MultiModalDataset b = generate_benchmark(spec);
    CHECK(a == b);
    CHECK(dataset_to_string(a) == dataset_to_string(b));
    BenchmarkSpec other = spec;
    other.seed += 1;
    CHECK_FALSE(generate_benchmark(other) == a);
}

TEST_CASE("generate: an uninformative modality yields chance-level probe accuracy") {
    BenchmarkSpec spec = simple_spec();
    spec.modalities[1].informativeness = 0.0;
    const MultiModalDataset ds = generate_benchmark(spec);
    const double acc = probe_accuracy(ds, "B", Domain::Target);
    CHECK(acc == doctest::Approx(0.25).epsilon(0.2));  // 0.25 +- 0.05 absolute
    CHECK(std::fabs(acc - 0.25) < 0.05);
    // the informative modality stays well above chance
    CHECK(probe_accuracy(ds, "A", Domain::Target) > 0.6);
}

TEST_CASE("generate: degenerate specs are rejected by field") {
    BenchmarkSpec spec = simple_spec();
    spec.num_categories = 0;
    CHECK_THROWS_WITH_AS(generate_benchmark(spec), doctest::Contains("num_categories"),
                         std::invalid_argument);
    spec = simple_spec();
    spec.modalities[0].dim = 0;
    CHECK_THROWS_WITH_AS(generate_benchmark(spec), doctest::Contains("dim 0"),
                         std::invalid_argument);
    spec = simple_spec();
    spec.source_count = 0;
    CHECK_THROWS_WITH_AS(generate_benchmark(spec), doctest::Contains("source_count"),
                         std::invalid_argument);
    spec = simple_spec();
    spec.coupling = 1;
    spec.base_modality = "A";
    spec.derived_modality = "Z";
    CHECK_THROWS_AS(generate_benchmark(spec), std::invalid_argument);
}

TEST_CASE("shift severity monotonicity: harsher shifts never help a source-trained probe") {
    const double severities[] = {0.0, 0.6, 1.2};
    double mean_acc[3] = {0.0, 0.0, 0.0};
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        for (int k = 0; k < 3; ++k) {
            BenchmarkSpec spec = simple_spec();
            spec.source_count = 150;
            spec.target_count = 150;
            spec.seed = seed;
            for (auto& m : spec.modalities) {
                m.rotation_deg = 60.0 * severities[k];
                m.translation.assign(m.dim, 0.0);
                for (std::size_t i = 0; i < m.dim; ++i) {
                    m.translation[i] = (i % 2 == 0 ? 1.0 : -1.0) * 1.5 * severities[k];
                }
            }
            const MultiModalDataset ds = generate_benchmark(spec);
            mean_acc[k] += probe_accuracy(ds, "A", Domain::Target) / 5.0;
        }
    }
    CHECK(mean_acc[0] >= mean_acc[1]);
    CHECK(mean_acc[1] >= mean_acc[2]);
}

TEST_CASE("drop_modality: payloads, idempotence, counts") {
    const MultiModalDataset ds = generate_benchmark(simple_spec());
    const MultiModalDataset dropped = drop_modality(ds, "B");

    SUBCASE("target payload absent, source payload intact") {
        for (const auto& s : dropped.samples) {
            if (s.domain == Domain::Target) CHECK(s.payloads.count("B") == 0);
            else CHECK(s.payloads.count("B") == 1);
        }
        CHECK(dropped.schema.missing_on_target("B"));
        CHECK(dropped.available_modalities() == std::vector<std::string>{"A"});
    }
    SUBCASE("dropping twice is an error") {
        CHECK_THROWS_WITH_AS(drop_modality(dropped, "B"), doctest::Contains("already missing"),
                             std::invalid_argument);
    }
    SUBCASE("unknown modality is a schema error") {
        CHECK_THROWS_AS(drop_modality(ds, "Z"), std::invalid_argument);
    }
    SUBCASE("counts unchanged") {
        CHECK(dropped.source_count() == ds.source_count());
        CHECK(dropped.target_count() == ds.target_count());
    }
    SUBCASE("schema conformance holds after the transform") {
        CHECK_NOTHROW(dropped.validate());
    }
}

TEST_CASE("serialization: round trip is the identity") {
    const MultiModalDataset ds = generate_benchmark(simple_spec());
    const std::string text = dataset_to_string(ds);
    const MultiModalDataset back = dataset_from_string(text);
    CHECK(back == ds);
    CHECK(dataset_to_string(back) == text);

    // also through a file, and for a PI-shaped dataset
    const MultiModalDataset dropped = drop_modality(ds, "B");
    const std::string path = (std::filesystem::temp_directory_path() / "pmc_rt.pmcdata").string();
    save_dataset(dropped, path);
    const MultiModalDataset loaded = load_dataset(path);
    CHECK(loaded == dropped);
    std::filesystem::remove(path);
}

TEST_CASE("serialization: truncated input is a parse error, no partial dataset") {
    const MultiModalDataset ds = generate_benchmark(simple_spec());
    std::string text = dataset_to_string(ds);
    text.resize(text.size() / 2);
    while (!text.empty() && text.back() != '\n') text.pop_back();
    text += "sample 9999 source";  // cut mid-record
    CHECK_THROWS_WITH_AS(dataset_from_string(text), doctest::Contains("truncated"),
                         std::runtime_error);
    CHECK_THROWS_WITH_AS(dataset_from_string("garbage"), doctest::Contains("header"),
                         std::runtime_error);
}

TEST_CASE("serialization: empty sample list is a valid dataset") {
    MultiModalDataset ds;
    ds.schema.num_categories = 3;
    ds.schema.modalities = {{"A", 4}};
    const MultiModalDataset back = dataset_from_string(dataset_to_string(ds));
    CHECK(back == ds);
    CHECK(back.samples.empty());
}

TEST_CASE("serialization: parse errors carry line numbers") {
    try {
        dataset_from_string("pmc-dataset v1 categories=2 modalities=A:2\nsample 0 source x A:1,2\n");
        FAIL("expected a parse error");
    } catch (const std::runtime_error& e) {
        CHECK(std::string(e.what()).find("line 2") != std::string::npos);
    }
}

TEST_CASE("hidden labels ride along only for evaluation") {
    const MultiModalDataset ds = generate_benchmark(simple_spec());
    for (const auto& s : ds.samples) {
        if (s.domain == Domain::Target) {
            CHECK(s.label == -1);  // the sample type never exposes target truth
            CHECK(ds.evaluation_labels().has(s.id));
        }
    }
}
