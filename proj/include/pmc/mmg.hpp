#pragma once
// mmg.hpp
//
// Domain-adaptive missing-modality generator: an encoder-decoder pair with
// an adversarial domain classifier on the latent code and a category
// probability vector concatenated into the decoder input. Trained on paired
// source samples (reconstruction, conditioned on the one-hot label) plus
// target available-modality samples (latent domain alignment only); frozen
// afterwards, generation is a pure function.

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "pmc/nncore.hpp"
#include "pmc/synthdata.hpp"

namespace pmc {

struct MmgModel {
    std::string available_modality;
    std::string missing_modality;
    DenseNet encoder;     // x_available -> latent (d_z)
    DenseNet decoder;     // latent ++ conditioning (d_z + N_c) -> x_missing
    DenseNet domain_clf;  // latent -> 1 logit (pre-concatenation, Eq. 7 path)
    double lambda_gen = 0.1;
    std::size_t num_categories = 0;
    // false = the CV ablation: the conditioning block is a constant zero
    // vector at both training and generation time (dims preserved).
    bool conditioned = true;

    std::size_t latent_dim() const { return encoder.out_dim(); }
};

struct MmgConfig {
    std::size_t latent_dim = 4;
    std::vector<std::size_t> encoder_hidden{64};
    std::vector<std::size_t> decoder_hidden{64};
    std::vector<std::size_t> domain_hidden{16};
    double lambda_gen = 0.1;
    double base_lr = 0.03;
    double momentum = 0.9;
    double weight_decay = 3e-4;
    double grad_clip = 5.0;
    std::size_t batch_size = 16;
    std::size_t epochs = 240;
    bool inv_schedule = true;
    bool ramp = true;
    bool conditioned = true;     // CV module
    bool adversarial = true;     // GenD module; false forces lambda_gen to 0
    std::uint64_t seed = 1;
};

MmgModel make_mmg_model(const DatasetSchema& schema, const std::string& available,
                        const std::string& missing, const MmgConfig& cfg);

Vec encode(const MmgModel& model, const Vec& x_available);
// The decoder input: latent ++ v (or latent ++ zeros when unconditioned).
Vec decoder_input(const MmgModel& model, const Vec& latent, const Vec& v);

// DE(E(x) ++ v). v must be a length-N_c probability vector (one-hot is the
// special case used at training time).
Vec generate(const MmgModel& model, const Vec& x_available, const Vec& v);

// Trains on the dataset's source pairs (available + missing payloads and the
// label) and target available-modality samples. Throws if a source sample
// lacks either payload.
MmgModel train_mmg(const MultiModalDataset& ds, const std::string& available,
                   const std::string& missing, const MmgConfig& cfg);

// Mean L1 distance between generate(x, onehot(c1)) and generate(x, onehot(c2))
// over all inputs and unordered category pairs. Exactly 0 when unconditioned.
double conditioning_sensitivity(const MmgModel& model, const std::vector<Vec>& inputs);

void save_mmg(const std::string& path, const MmgModel& model);
MmgModel load_mmg(const std::string& path);

}  // namespace pmc
