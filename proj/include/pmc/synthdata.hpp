#pragma once
// synthdata.hpp
//
// Seeded synthetic multi-modality domain-shift benchmarks plus the dataset
// text format. Source samples are per-category Gaussian clusters; target
// samples come from the same clusters pushed through a per-modality shift
// transform (scale * rotate + translate). One modality can be made
// "derivable": a fixed nonlinear map of a base modality plus a
// category-dependent offset plus noise, which gives the generator module
// something learnable.
//
// Target ground-truth labels are stored off the Sample type and are only
// reachable through evaluation_labels(); training code paths never see them.

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "pmc/nncore.hpp"

namespace pmc {

enum class Domain { Source = 0, Target = 1 };

struct ModalityInfo {
    std::string name;
    std::size_t dim = 0;
};

struct DatasetSchema {
    std::size_t num_categories = 0;
    std::vector<ModalityInfo> modalities;
    // Modalities present on source samples but dropped from targets (MMDA-PI).
    std::vector<std::string> missing_target_modalities;

    bool has_modality(const std::string& name) const;
    std::size_t modality_dim(const std::string& name) const;
    bool missing_on_target(const std::string& name) const;
};

struct Sample {
    int id = 0;
    Domain domain = Domain::Source;
    int label = -1;  // category, valid only for source samples
    std::map<std::string, Vec> payloads;
};

class MultiModalDataset {
public:
    DatasetSchema schema;
    std::vector<Sample> samples;

    // Ground truth for target samples. Only the evaluation path may read
    // this; trainers and selection code work purely off `samples`.
    class HiddenLabels {
    public:
        bool has(int id) const { return by_id_.count(id) != 0; }
        int at(int id) const;
        void set(int id, int label) { by_id_[id] = label; }
        std::size_t size() const { return by_id_.size(); }
        bool operator==(const HiddenLabels& o) const { return by_id_ == o.by_id_; }

    private:
        std::unordered_map<int, int> by_id_;
    };

    const HiddenLabels& evaluation_labels() const { return hidden_; }
    HiddenLabels& mutable_hidden_labels() { return hidden_; }

    std::size_t source_count() const;
    std::size_t target_count() const;

    std::vector<const Sample*> source_samples() const;
    std::vector<const Sample*> target_samples() const;
    const Sample* find(int id) const;

    // Modalities present on both domains (the trainable set).
    std::vector<std::string> available_modalities() const;

    // Throws if any schema invariant is violated (payload dims, uniqueness,
    // modality presence per domain).
    void validate() const;

    bool operator==(const MultiModalDataset& o) const;

private:
    HiddenLabels hidden_;
};

// ---------------------------------------------------------------------------
// Benchmark generation
// ---------------------------------------------------------------------------

struct ModalitySpec {
    std::string name;
    std::size_t dim = 0;
    // Class-separation scale: category means (or offsets, for a derived
    // modality) are drawn from N(0, informativeness^2 I).
    double informativeness = 1.0;
    // Domain-shift transform applied to target features: scale * R(angle) + t.
    double rotation_deg = 0.0;
    Vec translation;  // empty means zero vector
    double scale = 1.0;
};

struct BenchmarkSpec {
    std::size_t num_categories = 0;
    std::vector<ModalitySpec> modalities;
    std::size_t source_count = 0;
    std::size_t target_count = 0;
    double noise = 1.0;
    // Coupling for the derivable modality: 0 = none (all modalities are
    // independent blobs); 1 = saturated random linear map; 2 = elementwise
    // sine of a random linear map.
    int coupling = 0;
    std::string derived_modality;  // which modality is derived (requires coupling != 0)
    std::string base_modality;     // which modality it derives from
    std::uint64_t seed = 1;
};

// The default desk-scale benchmark: 4 categories, two 8-d modalities, 400+400
// samples, strongly informative A, weak derivable B, 35 degree rotation plus
// translation on the target side.
BenchmarkSpec blobs_mm2_spec();

MultiModalDataset generate_benchmark(const BenchmarkSpec& spec);

// Removes the modality payload from target samples (source keeps it) and
// records it in the schema. Dropping a modality twice is an error.
MultiModalDataset drop_modality(const MultiModalDataset& ds, const std::string& modality);

// ---------------------------------------------------------------------------
// Serialization (format documented in README; stable across versions)
// ---------------------------------------------------------------------------

void save_dataset(const MultiModalDataset& ds, const std::string& path);
MultiModalDataset load_dataset(const std::string& path);

std::string dataset_to_string(const MultiModalDataset& ds);
MultiModalDataset dataset_from_string(const std::string& text);

}  // namespace pmc
