#include "pmc/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>
#include <stdexcept>

#include "pmc/io.hpp"

namespace pmc {

// ---------------------------------------------------------------------------
// Schema / dataset basics
// ---------------------------------------------------------------------------

bool DatasetSchema::has_modality(const std::string& name) const {
    for (const auto& m : modalities)
        if (m.name == name) return true;
    return false;
}

std::size_t DatasetSchema::modality_dim(const std::string& name) const {
    for (const auto& m : modalities)
        if (m.name == name) return m.dim;
    throw std::invalid_argument("schema: unknown modality '" + name + "'");
}

bool DatasetSchema::missing_on_target(const std::string& name) const {
    return std::find(missing_target_modalities.begin(), missing_target_modalities.end(), name) !=
           missing_target_modalities.end();
}

int MultiModalDataset::HiddenLabels::at(int id) const {
    auto it = by_id_.find(id);
    if (it == by_id_.end()) {
        throw std::invalid_argument("no hidden label for sample " + std::to_string(id));
    }
    return it->second;
}

std::size_t MultiModalDataset::source_count() const {
    std::size_t n = 0;
    for (const auto& s : samples)
        if (s.domain == Domain::Source) ++n;
    return n;
}

std::size_t MultiModalDataset::target_count() const { return samples.size() - source_count(); }

std::vector<const Sample*> MultiModalDataset::source_samples() const {
    std::vector<const Sample*> out;
    for (const auto& s : samples)
        if (s.domain == Domain::Source) out.push_back(&s);
    return out;
}

std::vector<const Sample*> MultiModalDataset::target_samples() const {
    std::vector<const Sample*> out;
    for (const auto& s : samples)
        if (s.domain == Domain::Target) out.push_back(&s);
    return out;
}

const Sample* MultiModalDataset::find(int id) const {
    for (const auto& s : samples)
        if (s.id == id) return &s;
    return nullptr;
}

std::vector<std::string> MultiModalDataset::available_modalities() const {
    std::vector<std::string> out;
    for (const auto& m : schema.modalities) {
        if (!schema.missing_on_target(m.name)) out.push_back(m.name);
    }
    return out;
}

void MultiModalDataset::validate() const {
    if (schema.num_categories == 0) throw std::invalid_argument("dataset: zero categories");
    std::set<int> ids;
    for (const auto& s : samples) {
        if (!ids.insert(s.id).second) {
            throw std::invalid_argument("dataset: duplicate sample id " + std::to_string(s.id));
        }
        for (const auto& m : schema.modalities) {
            const bool expected = s.domain == Domain::Source || !schema.missing_on_target(m.name);
            const auto it = s.payloads.find(m.name);
            if (expected) {
                if (it == s.payloads.end()) {
                    throw std::invalid_argument("dataset: sample " + std::to_string(s.id) +
                                                " lacks modality '" + m.name + "'");
                }
                if (it->second.size() != m.dim) {
                    throw std::invalid_argument("dataset: sample " + std::to_string(s.id) +
                                                " modality '" + m.name + "' has dim " +
                                                std::to_string(it->second.size()) + ", schema says " +
                                                std::to_string(m.dim));
                }
            } else if (it != s.payloads.end()) {
                throw std::invalid_argument("dataset: target sample " + std::to_string(s.id) +
                                            " carries dropped modality '" + m.name + "'");
            }
        }
        for (const auto& [name, _] : s.payloads) {
            if (!schema.has_modality(name)) {
                throw std::invalid_argument("dataset: sample " + std::to_string(s.id) +
                                            " carries unknown modality '" + name + "'");
            }
        }
        if (s.domain == Domain::Source) {
            if (s.label < 0 || static_cast<std::size_t>(s.label) >= schema.num_categories) {
                throw std::invalid_argument("dataset: source sample " + std::to_string(s.id) +
                                            " has label " + std::to_string(s.label));
            }
        } else if (s.label != -1) {
            throw std::invalid_argument("dataset: target sample " + std::to_string(s.id) +
                                        " exposes a label");
        }
    }
}

bool MultiModalDataset::operator==(const MultiModalDataset& o) const {
    if (schema.num_categories != o.schema.num_categories) return false;
    if (schema.missing_target_modalities != o.schema.missing_target_modalities) return false;
    if (schema.modalities.size() != o.schema.modalities.size()) return false;
    for (std::size_t i = 0; i < schema.modalities.size(); ++i) {
        if (schema.modalities[i].name != o.schema.modalities[i].name ||
            schema.modalities[i].dim != o.schema.modalities[i].dim)
            return false;
    }
    if (samples.size() != o.samples.size()) return false;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const Sample& a = samples[i];
        const Sample& b = o.samples[i];
        if (a.id != b.id || a.domain != b.domain || a.label != b.label || a.payloads != b.payloads)
            return false;
    }
    return hidden_ == o.hidden_;
}

// ---------------------------------------------------------------------------
// Benchmark generation
// ---------------------------------------------------------------------------

namespace {

void check_spec(const BenchmarkSpec& spec) {
    if (spec.num_categories == 0) throw std::invalid_argument("benchmark spec: num_categories is 0");
    if (spec.modalities.empty()) throw std::invalid_argument("benchmark spec: no modalities");
    if (spec.source_count == 0) throw std::invalid_argument("benchmark spec: source_count is 0");
    if (spec.target_count == 0) throw std::invalid_argument("benchmark spec: target_count is 0");
    if (spec.noise < 0.0) throw std::invalid_argument("benchmark spec: negative noise");
    std::set<std::string> names;
    for (const auto& m : spec.modalities) {
        if (m.dim == 0) throw std::invalid_argument("benchmark spec: modality '" + m.name + "' has dim 0");
        if (m.name.empty()) throw std::invalid_argument("benchmark spec: empty modality name");
        if (m.informativeness < 0.0) {
            throw std::invalid_argument("benchmark spec: modality '" + m.name +
                                        "' has negative informativeness");
        }
        if (!m.translation.empty() && m.translation.size() != m.dim) {
            throw std::invalid_argument("benchmark spec: modality '" + m.name +
                                        "' translation dim mismatch");
        }
        if (!names.insert(m.name).second) {
            throw std::invalid_argument("benchmark spec: duplicate modality '" + m.name + "'");
        }
    }
    if (spec.coupling != 0) {
        if (spec.coupling != 1 && spec.coupling != 2) {
            throw std::invalid_argument("benchmark spec: unknown coupling id " +
                                        std::to_string(spec.coupling));
        }
        if (!names.count(spec.derived_modality) || !names.count(spec.base_modality)) {
            throw std::invalid_argument("benchmark spec: coupling names unknown modalities");
        }
        if (spec.derived_modality == spec.base_modality) {
            throw std::invalid_argument("benchmark spec: a modality cannot derive from itself");
        }
    }
}

// Rotation by angle on coordinate pairs (0,1), (2,3), ...; an odd final
// coordinate is left unrotated.
Vec apply_shift(const ModalitySpec& m, const Vec& u) {
    const double th = m.rotation_deg * 3.14159265358979323846 / 180.0;
    const double c = std::cos(th), s = std::sin(th);
    Vec x(u.size());
    for (std::size_t i = 0; i + 1 < u.size(); i += 2) {
        x[i] = c * u[i] - s * u[i + 1];
        x[i + 1] = s * u[i] + c * u[i + 1];
    }
    if (u.size() % 2 == 1) x[u.size() - 1] = u[u.size() - 1];
    for (std::size_t i = 0; i < x.size(); ++i) {
        x[i] *= m.scale;
        if (!m.translation.empty()) x[i] += m.translation[i];
    }
    return x;
}

constexpr double kCouplingGain = 2.0;
// The derived modality is mostly determined by the base view; only a small
// independent-noise share rides on top of the coupled map and the offsets.
constexpr double kDerivedNoiseShare = 0.25;

Vec apply_coupling(int id, const Matrix& w, const Vec& base) {
    Vec y(w.rows, 0.0);
    for (std::size_t r = 0; r < w.rows; ++r) {
        double acc = 0.0;
        for (std::size_t c = 0; c < w.cols; ++c) acc += w.at(r, c) * base[c];
        // id 1: smooth blend, mildly saturating; id 2: periodic
        y[r] = id == 1 ? kCouplingGain * (0.6 * acc + 0.4 * std::tanh(acc))
                       : kCouplingGain * std::sin(acc);
    }
    return y;
}

}  // namespace

BenchmarkSpec blobs_mm2_spec() {
    BenchmarkSpec spec;
    spec.num_categories = 10;
    spec.source_count = 400;
    spec.target_count = 400;
    spec.noise = 0.55;
    spec.coupling = 1;
    spec.base_modality = "A";
    spec.derived_modality = "B";
    spec.seed = 7;

    // Calibrated so the shift hurts a source-only model without breaking
    // cluster correspondence: adversarial alignment recovers most of the gap
    // on A, while B needs pseudo-label rescue.
    ModalitySpec a;
    a.name = "A";
    a.dim = 8;
    a.informativeness = 1.2;
    a.rotation_deg = 25.0;
    a.translation = {1.2, -0.75, 0.9, 0.0, -0.6, 0.75, 0.0, 0.45};
    ModalitySpec b;
    b.name = "B";
    b.dim = 8;
    b.informativeness = 0.45;
    b.rotation_deg = 55.0;
    b.translation = {-1.08, 0.72, 0.0, 0.9, -0.54, 0.0, 0.72, -0.9};
    spec.modalities = {a, b};
    return spec;
}

MultiModalDataset generate_benchmark(const BenchmarkSpec& spec) {
    check_spec(spec);

    Rng means_rng(derive_seed(spec.seed, "benchmark/means"));
    Rng coupling_rng(derive_seed(spec.seed, "benchmark/coupling"));
    Rng sample_rng(derive_seed(spec.seed, "benchmark/samples"));

    const std::size_t nc = spec.num_categories;

    // Per-category means for independent modalities; per-category offsets for
    // the derived one.
    std::map<std::string, std::vector<Vec>> means;
    for (const auto& m : spec.modalities) {
        std::vector<Vec> per_cat(nc, Vec(m.dim, 0.0));
        for (std::size_t c = 0; c < nc; ++c) {
            for (std::size_t k = 0; k < m.dim; ++k) {
                per_cat[c][k] = m.informativeness * means_rng.gaussian();
            }
        }
        means[m.name] = std::move(per_cat);
    }

    Matrix coupling_w;
    if (spec.coupling != 0) {
        const std::size_t din = spec.modalities[0].dim;  // resolved below
        (void)din;
        std::size_t base_dim = 0, derived_dim = 0;
        for (const auto& m : spec.modalities) {
            if (m.name == spec.base_modality) base_dim = m.dim;
            if (m.name == spec.derived_modality) derived_dim = m.dim;
        }
        coupling_w = Matrix(derived_dim, base_dim);
        // mildly saturating: keeps the map invertible enough to learn
        const double sc = 0.7 / std::sqrt(static_cast<double>(base_dim));
        for (double& v : coupling_w.v) v = sc * coupling_rng.gaussian();
    }

    MultiModalDataset ds;
    ds.schema.num_categories = nc;
    for (const auto& m : spec.modalities) ds.schema.modalities.push_back({m.name, m.dim});

    const std::size_t total = spec.source_count + spec.target_count;
    ds.samples.reserve(total);
    for (std::size_t i = 0; i < total; ++i) {
        const bool is_source = i < spec.source_count;
        const std::size_t cat = (is_source ? i : i - spec.source_count) % nc;

        // Canonical (pre-shift) payloads, in schema order; the derived
        // modality reads the base's canonical value.
        std::map<std::string, Vec> canonical;
        for (const auto& m : spec.modalities) {
            if (spec.coupling != 0 && m.name == spec.derived_modality) continue;
            Vec u = means[m.name][cat];
            for (double& v : u) v += spec.noise * sample_rng.gaussian();
            canonical[m.name] = std::move(u);
        }
        if (spec.coupling != 0) {
            const ModalitySpec* dm = nullptr;
            for (const auto& m : spec.modalities)
                if (m.name == spec.derived_modality) dm = &m;
            Vec u = apply_coupling(spec.coupling, coupling_w, canonical.at(spec.base_modality));
            const Vec& offset = means[dm->name][cat];
            for (std::size_t k = 0; k < u.size(); ++k) {
                u[k] += offset[k] + kDerivedNoiseShare * spec.noise * sample_rng.gaussian();
            }
            canonical[dm->name] = std::move(u);
        }

        Sample s;
        s.id = static_cast<int>(i);
        s.domain = is_source ? Domain::Source : Domain::Target;
        s.label = is_source ? static_cast<int>(cat) : -1;
        for (const auto& m : spec.modalities) {
            const Vec& u = canonical.at(m.name);
            s.payloads[m.name] = is_source ? u : apply_shift(m, u);
        }
        if (!is_source) ds.mutable_hidden_labels().set(s.id, static_cast<int>(cat));
        ds.samples.push_back(std::move(s));
    }
    ds.validate();
    return ds;
}

MultiModalDataset drop_modality(const MultiModalDataset& ds, const std::string& modality) {
    if (!ds.schema.has_modality(modality)) {
        throw std::invalid_argument("drop_modality: unknown modality '" + modality + "'");
    }
    if (ds.schema.missing_on_target(modality)) {
        throw std::invalid_argument("drop_modality: modality '" + modality +
                                    "' is already missing from targets");
    }
    MultiModalDataset out = ds;
    out.schema.missing_target_modalities.push_back(modality);
    for (auto& s : out.samples) {
        if (s.domain == Domain::Target) s.payloads.erase(modality);
    }
    out.validate();
    return out;
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

namespace {

std::string join_vec(const Vec& v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) out.push_back(',');
        out += fmt_double(v[i]);
    }
    return out;
}

Vec parse_vec(const std::string& s, std::size_t line_no, const std::string& field) {
    Vec out;
    for (const auto& tok : split(s, ',')) {
        try {
            out.push_back(parse_double(tok));
        } catch (const std::exception&) {
            throw std::runtime_error("dataset parse error: line " + std::to_string(line_no) +
                                     ", field '" + field + "': bad number '" + tok + "'");
        }
    }
    return out;
}

[[noreturn]] void parse_fail(std::size_t line_no, const std::string& why) {
    throw std::runtime_error("dataset parse error: line " + std::to_string(line_no) + ": " + why);
}

}  // namespace

std::string dataset_to_string(const MultiModalDataset& ds) {
    std::ostringstream out;
    out << "pmc-dataset v1 categories=" << ds.schema.num_categories << " modalities=";
    for (std::size_t i = 0; i < ds.schema.modalities.size(); ++i) {
        if (i) out << ',';
        out << ds.schema.modalities[i].name << ':' << ds.schema.modalities[i].dim;
    }
    if (!ds.schema.missing_target_modalities.empty()) {
        out << " missing=";
        for (std::size_t i = 0; i < ds.schema.missing_target_modalities.size(); ++i) {
            if (i) out << ',';
            out << ds.schema.missing_target_modalities[i];
        }
    }
    out << '\n';
    const auto& hidden = ds.evaluation_labels();
    for (const auto& s : ds.samples) {
        out << "sample " << s.id << ' ' << (s.domain == Domain::Source ? "source" : "target") << ' ';
        if (s.domain == Domain::Source) {
            out << s.label;
        } else if (hidden.has(s.id)) {
            out << '~' << hidden.at(s.id);
        } else {
            out << '-';
        }
        for (const auto& m : ds.schema.modalities) {
            auto it = s.payloads.find(m.name);
            if (it != s.payloads.end()) out << ' ' << m.name << ':' << join_vec(it->second);
        }
        out << '\n';
    }
    return out.str();
}

MultiModalDataset dataset_from_string(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;

    if (!std::getline(in, line)) parse_fail(1, "empty file");
    ++line_no;
    auto head = split_ws(line);
    if (head.size() < 2 || head[0] != "pmc-dataset" || head[1] != "v1") {
        parse_fail(line_no, "expected header 'pmc-dataset v1 ...'");
    }
    MultiModalDataset ds;
    for (std::size_t i = 2; i < head.size(); ++i) {
        const auto kv = split(head[i], '=');
        if (kv.size() != 2) parse_fail(line_no, "bad header token '" + head[i] + "'");
        if (kv[0] == "categories") {
            long n = 0;
            try {
                n = parse_long(kv[1]);
            } catch (const std::exception&) {
                parse_fail(line_no, "bad category count '" + kv[1] + "'");
            }
            if (n <= 0) parse_fail(line_no, "category count must be positive");
            ds.schema.num_categories = static_cast<std::size_t>(n);
        } else if (kv[0] == "modalities") {
            for (const auto& spec : split(kv[1], ',')) {
                const auto nd = split(spec, ':');
                if (nd.size() != 2) parse_fail(line_no, "bad modality spec '" + spec + "'");
                long d = 0;
                try {
                    d = parse_long(nd[1]);
                } catch (const std::exception&) {
                    parse_fail(line_no, "bad modality dim in '" + spec + "'");
                }
                if (d <= 0) parse_fail(line_no, "modality dim must be positive");
                ds.schema.modalities.push_back({nd[0], static_cast<std::size_t>(d)});
            }
        } else if (kv[0] == "missing") {
            for (const auto& name : split(kv[1], ',')) {
                ds.schema.missing_target_modalities.push_back(name);
            }
        } else {
            parse_fail(line_no, "unknown header field '" + kv[0] + "'");
        }
    }
    if (ds.schema.num_categories == 0) parse_fail(line_no, "header lacks categories");
    if (ds.schema.modalities.empty()) parse_fail(line_no, "header lacks modalities");

    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const auto toks = split_ws(line);
        if (toks[0] != "sample") parse_fail(line_no, "expected 'sample', got '" + toks[0] + "'");
        if (toks.size() < 4) parse_fail(line_no, "truncated sample record");
        Sample s;
        try {
            s.id = static_cast<int>(parse_long(toks[1]));
        } catch (const std::exception&) {
            parse_fail(line_no, "bad sample id '" + toks[1] + "'");
        }
        if (toks[2] == "source") {
            s.domain = Domain::Source;
        } else if (toks[2] == "target") {
            s.domain = Domain::Target;
        } else {
            parse_fail(line_no, "bad domain '" + toks[2] + "'");
        }
        const std::string& cat = toks[3];
        if (s.domain == Domain::Source) {
            try {
                s.label = static_cast<int>(parse_long(cat));
            } catch (const std::exception&) {
                parse_fail(line_no, "bad category '" + cat + "'");
            }
        } else if (cat == "-") {
            s.label = -1;
        } else if (cat.size() > 1 && cat[0] == '~') {
            s.label = -1;
            int hidden = 0;
            try {
                hidden = static_cast<int>(parse_long(cat.substr(1)));
            } catch (const std::exception&) {
                parse_fail(line_no, "bad hidden category '" + cat + "'");
            }
            ds.mutable_hidden_labels().set(s.id, hidden);
        } else {
            parse_fail(line_no, "bad category field '" + cat + "'");
        }
        for (std::size_t i = 4; i < toks.size(); ++i) {
            const auto pos = toks[i].find(':');
            if (pos == std::string::npos) parse_fail(line_no, "bad payload token '" + toks[i] + "'");
            const std::string name = toks[i].substr(0, pos);
            if (!ds.schema.has_modality(name)) {
                parse_fail(line_no, "payload for unknown modality '" + name + "'");
            }
            s.payloads[name] = parse_vec(toks[i].substr(pos + 1), line_no, name);
        }
        ds.samples.push_back(std::move(s));
    }
    try {
        ds.validate();
    } catch (const std::exception& e) {
        throw std::runtime_error(std::string("dataset parse error: ") + e.what());
    }
    return ds;
}

void save_dataset(const MultiModalDataset& ds, const std::string& path) {
    atomic_write_file(path, dataset_to_string(ds));
}

MultiModalDataset load_dataset(const std::string& path) {
    return dataset_from_string(read_file(path));
}

}  // namespace pmc
