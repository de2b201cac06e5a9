#include "pmc/mmg.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "pmc/branches.hpp"
#include "pmc/io.hpp"
#include "pmc/serialize.hpp"

namespace pmc {

MmgModel make_mmg_model(const DatasetSchema& schema, const std::string& available,
                        const std::string& missing, const MmgConfig& cfg) {
    if (available == missing) throw std::invalid_argument("mmg: available == missing modality");
    const std::size_t in_dim = schema.modality_dim(available);
    const std::size_t out_dim = schema.modality_dim(missing);
    if (cfg.latent_dim == 0) throw std::invalid_argument("mmg: latent_dim must be positive");

    MmgModel model;
    model.available_modality = available;
    model.missing_modality = missing;
    model.lambda_gen = cfg.adversarial ? cfg.lambda_gen : 0.0;
    model.num_categories = schema.num_categories;
    model.conditioned = cfg.conditioned;

    std::vector<std::size_t> enc{in_dim};
    enc.insert(enc.end(), cfg.encoder_hidden.begin(), cfg.encoder_hidden.end());
    enc.push_back(cfg.latent_dim);
    std::vector<std::size_t> dec{cfg.latent_dim + schema.num_categories};
    dec.insert(dec.end(), cfg.decoder_hidden.begin(), cfg.decoder_hidden.end());
    dec.push_back(out_dim);
    std::vector<std::size_t> dom{cfg.latent_dim};
    dom.insert(dom.end(), cfg.domain_hidden.begin(), cfg.domain_hidden.end());
    dom.push_back(1);

    Rng e_rng(derive_seed(cfg.seed, "mmg/encoder"));
    Rng d_rng(derive_seed(cfg.seed, "mmg/decoder"));
    Rng a_rng(derive_seed(cfg.seed, "mmg/domain"));
    model.encoder = make_dense_net(enc, e_rng);
    model.decoder = make_dense_net(dec, d_rng);
    model.domain_clf = make_dense_net(dom, a_rng);
    return model;
}

Vec encode(const MmgModel& model, const Vec& x_available) {
    return forward(model.encoder, x_available).output();
}

namespace {

void check_conditioning(const MmgModel& model, const Vec& v) {
    if (v.size() != model.num_categories) {
        throw std::invalid_argument("mmg: conditioning vector has dim " + std::to_string(v.size()) +
                                    ", expected " + std::to_string(model.num_categories));
    }
    double sum = 0.0;
    for (double x : v) {
        if (!std::isfinite(x) || x < -1e-12) {
            throw std::invalid_argument("mmg: conditioning vector must be a probability vector");
        }
        sum += x;
    }
    if (std::fabs(sum - 1.0) > 1e-6) {
        throw std::invalid_argument("mmg: conditioning vector must sum to 1");
    }
}

Vec concat_latent(const MmgModel& model, const Vec& latent, const Vec& v) {
    Vec in;
    in.reserve(latent.size() + model.num_categories);
    in.insert(in.end(), latent.begin(), latent.end());
    if (model.conditioned) {
        in.insert(in.end(), v.begin(), v.end());
    } else {
        in.insert(in.end(), model.num_categories, 0.0);
    }
    return in;
}

Vec onehot(std::size_t label, std::size_t n) {
    Vec v(n, 0.0);
    v[label] = 1.0;
    return v;
}

}  // namespace

Vec decoder_input(const MmgModel& model, const Vec& latent, const Vec& v) {
    check_conditioning(model, v);
    if (latent.size() != model.latent_dim()) {
        throw std::invalid_argument("mmg: latent dim mismatch");
    }
    return concat_latent(model, latent, v);
}

Vec generate(const MmgModel& model, const Vec& x_available, const Vec& v) {
    check_conditioning(model, v);
    const Vec z = encode(model, x_available);
    return forward(model.decoder, concat_latent(model, z, v)).output();
}

MmgModel train_mmg(const MultiModalDataset& ds, const std::string& available,
                   const std::string& missing, const MmgConfig& cfg) {
    MmgModel model = make_mmg_model(ds.schema, available, missing, cfg);

    // paired source samples and target available-modality samples
    std::vector<const Sample*> source, target;
    for (const auto& s : ds.samples) {
        if (s.domain == Domain::Source) {
            if (!s.payloads.count(available) || !s.payloads.count(missing)) {
                throw std::invalid_argument("train_mmg: source sample " + std::to_string(s.id) +
                                            " is not a complete (available, missing) pair");
            }
            source.push_back(&s);
        } else {
            if (!s.payloads.count(available)) {
                throw std::invalid_argument("train_mmg: target sample " + std::to_string(s.id) +
                                            " lacks the available modality");
            }
            target.push_back(&s);
        }
    }
    if (source.empty()) throw std::invalid_argument("train_mmg: no source pairs");
    if (target.empty()) throw std::invalid_argument("train_mmg: no target samples");

    OptimState opt_e = OptimState::for_net(model.encoder, cfg.base_lr, cfg.momentum,
                                           cfg.weight_decay, cfg.inv_schedule);
    OptimState opt_d = OptimState::for_net(model.decoder, cfg.base_lr, cfg.momentum,
                                           cfg.weight_decay, cfg.inv_schedule);
    OptimState opt_a = OptimState::for_net(model.domain_clf, cfg.base_lr, cfg.momentum,
                                           cfg.weight_decay, cfg.inv_schedule);

    const std::size_t half = std::max<std::size_t>(1, cfg.batch_size / 2);
    const std::size_t smallest = std::min(source.size(), target.size());
    const std::size_t steps_per_epoch = std::max<std::size_t>(1, (smallest + half - 1) / half);
    const std::size_t total_steps = steps_per_epoch * cfg.epochs;
    std::size_t step_counter = 0;

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        Rng rng(derive_seed(cfg.seed, "mmg/epoch-batches", epoch));
        std::vector<const Sample*> src_order = source;
        std::vector<const Sample*> tgt_order = target;
        rng.shuffle(src_order);
        rng.shuffle(tgt_order);

        for (std::size_t step = 0; step < steps_per_epoch; ++step, ++step_counter) {
            const double p = static_cast<double>(step_counter) / static_cast<double>(total_steps);
            opt_e.set_progress(p);
            opt_d.set_progress(p);
            opt_a.set_progress(p);

            NetGrads ge = zero_grads(model.encoder);
            NetGrads gd = zero_grads(model.decoder);
            NetGrads ga = zero_grads(model.domain_clf);

            // reconstruction on the source half, conditioned on one-hot labels
            const double rec_scale = 1.0 / static_cast<double>(half);
            for (std::size_t i = 0; i < half; ++i) {
                const Sample* s = src_order[(step * half + i) % src_order.size()];
                const Activations e = forward(model.encoder, s->payloads.at(available));
                const Vec v = onehot(static_cast<std::size_t>(s->label), model.num_categories);
                const Activations de = forward(model.decoder, concat_latent(model, e.output(), v));
                const LossGrad lg = l1_loss(de.output(), s->payloads.at(missing));
                NetGrads gdec = zero_grads(model.decoder);
                backward_accumulate(model.decoder, de, lg.grad, rec_scale, gdec);
                gd.add_scaled(gdec, 1.0);
                // only the latent block flows back into the encoder
                Vec to_latent(gdec.input.begin(), gdec.input.begin() + model.latent_dim());
                backward_accumulate(model.encoder, e, to_latent, 1.0, ge);
            }

            // latent domain alignment over both halves
            const double factor =
                model.lambda_gen * (cfg.ramp ? adaptation_ramp(p) : 1.0);
            if (cfg.adversarial) {
                std::vector<const Sample*> both;
                both.reserve(2 * half);
                for (std::size_t i = 0; i < half; ++i) {
                    both.push_back(src_order[(step * half + i) % src_order.size()]);
                }
                for (std::size_t i = 0; i < half; ++i) {
                    both.push_back(tgt_order[(step * half + i) % tgt_order.size()]);
                }
                const double adv_scale = 1.0 / static_cast<double>(both.size());
                for (const Sample* s : both) {
                    const Activations e = forward(model.encoder, s->payloads.at(available));
                    const Activations a = forward(model.domain_clf, e.output());
                    const ScalarLossGrad lg =
                        binary_xent(a.output()[0], s->domain == Domain::Target ? 1 : 0);
                    NetGrads gdom = zero_grads(model.domain_clf);
                    backward_accumulate(model.domain_clf, a, Vec{lg.grad}, adv_scale, gdom);
                    ga.add_scaled(gdom, 1.0);
                    if (factor != 0.0) {
                        backward_accumulate(model.encoder, e, grl_backward(gdom.input, factor),
                                            1.0, ge);
                    }
                }
            }

            clip_grad_norm(ge, cfg.grad_clip);
            clip_grad_norm(gd, cfg.grad_clip);
            clip_grad_norm(ga, cfg.grad_clip);
            sgd_step(model.encoder, ge, opt_e);
            sgd_step(model.decoder, gd, opt_d);
            if (cfg.adversarial) sgd_step(model.domain_clf, ga, opt_a);
        }
    }
    return model;
}

double conditioning_sensitivity(const MmgModel& model, const std::vector<Vec>& inputs) {
    if (inputs.empty()) throw std::invalid_argument("conditioning_sensitivity: no inputs");
    if (model.num_categories < 2) return 0.0;
    double total = 0.0;
    std::size_t pairs = 0;
    for (const Vec& x : inputs) {
        const Vec z = encode(model, x);
        std::vector<Vec> outs(model.num_categories);
        for (std::size_t c = 0; c < model.num_categories; ++c) {
            outs[c] = forward(model.decoder,
                              concat_latent(model, z, onehot(c, model.num_categories)))
                          .output();
        }
        for (std::size_t c1 = 0; c1 < model.num_categories; ++c1) {
            for (std::size_t c2 = c1 + 1; c2 < model.num_categories; ++c2) {
                double l1 = 0.0;
                for (std::size_t k = 0; k < outs[c1].size(); ++k) {
                    l1 += std::fabs(outs[c1][k] - outs[c2][k]);
                }
                total += l1 / static_cast<double>(outs[c1].size());
                ++pairs;
            }
        }
    }
    return total / static_cast<double>(pairs);
}

void save_mmg(const std::string& path, const MmgModel& model) {
    std::ostringstream out;
    out << "pmc-mmg v1\n";
    out << "available " << model.available_modality << '\n';
    out << "missing " << model.missing_modality << '\n';
    out << "lambda_gen " << fmt_double_hex(model.lambda_gen) << '\n';
    out << "categories " << model.num_categories << '\n';
    out << "conditioned " << (model.conditioned ? 1 : 0) << '\n';
    write_net(out, "encoder", model.encoder);
    write_net(out, "decoder", model.decoder);
    write_net(out, "domain", model.domain_clf);
    atomic_write_file(path, out.str());
}

MmgModel load_mmg(const std::string& path) {
    std::istringstream in(read_file(path));
    std::string line;
    if (!std::getline(in, line) || line != "pmc-mmg v1") {
        throw std::runtime_error("checkpoint: bad mmg header in " + path);
    }
    auto read_kv = [&](const std::string& key) {
        if (!std::getline(in, line)) throw std::runtime_error("checkpoint: truncated " + path);
        const auto toks = split_ws(line);
        if (toks.size() != 2 || toks[0] != key) {
            throw std::runtime_error("checkpoint: expected '" + key + "' in " + path);
        }
        return toks[1];
    };
    MmgModel model;
    model.available_modality = read_kv("available");
    model.missing_modality = read_kv("missing");
    model.lambda_gen = parse_double(read_kv("lambda_gen"));
    model.num_categories = static_cast<std::size_t>(parse_long(read_kv("categories")));
    model.conditioned = parse_long(read_kv("conditioned")) != 0;
    model.encoder = read_net(in, "encoder");
    model.decoder = read_net(in, "decoder");
    model.domain_clf = read_net(in, "domain");
    return model;
}

}  // namespace pmc
