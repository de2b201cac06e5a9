#include "pmc/serialize.hpp"

#include <sstream>
#include <stdexcept>

#include "pmc/io.hpp"

namespace pmc {

namespace {

void write_values(std::ostream& out, const Vec& v) {
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) out << ' ';
        out << fmt_double_hex(v[i]);
    }
    out << '\n';
}

Vec read_values(std::istream& in, std::size_t n, const std::string& what) {
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("checkpoint: truncated at " + what);
    const auto toks = split_ws(line);
    if (toks.size() != n) {
        throw std::runtime_error("checkpoint: " + what + " expected " + std::to_string(n) +
                                 " values, got " + std::to_string(toks.size()));
    }
    Vec v(n);
    for (std::size_t i = 0; i < n; ++i) v[i] = parse_double(toks[i]);
    return v;
}

std::vector<std::string> expect_line(std::istream& in, const std::string& head) {
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("checkpoint: truncated, expected " + head);
    auto toks = split_ws(line);
    if (toks.empty() || toks[0] != head) {
        throw std::runtime_error("checkpoint: expected '" + head + "', got '" + line + "'");
    }
    return toks;
}

}  // namespace

void write_net(std::ostream& out, const std::string& name, const DenseNet& net) {
    out << "net " << name;
    for (std::size_t s : net.layer_sizes) out << ' ' << s;
    out << '\n';
    for (const auto& l : net.layers) {
        write_values(out, l.w.v);
        write_values(out, l.b);
    }
}

DenseNet read_net(std::istream& in, const std::string& expected_name) {
    const auto toks = expect_line(in, "net");
    if (toks.size() < 4 || toks[1] != expected_name) {
        throw std::runtime_error("checkpoint: expected net '" + expected_name + "'");
    }
    DenseNet net;
    for (std::size_t i = 2; i < toks.size(); ++i) {
        const long s = parse_long(toks[i]);
        if (s <= 0) throw std::runtime_error("checkpoint: bad layer size");
        net.layer_sizes.push_back(static_cast<std::size_t>(s));
    }
    net.layers.resize(net.layer_sizes.size() - 1);
    for (std::size_t i = 0; i + 1 < net.layer_sizes.size(); ++i) {
        const std::size_t nin = net.layer_sizes[i];
        const std::size_t nout = net.layer_sizes[i + 1];
        net.layers[i].w = Matrix(nout, nin);
        net.layers[i].w.v = read_values(in, nin * nout, expected_name + " weights");
        net.layers[i].b = read_values(in, nout, expected_name + " biases");
    }
    return net;
}

void write_optim(std::ostream& out, const std::string& name, const OptimState& o) {
    out << "optim " << name << ' ' << fmt_double_hex(o.base_lr) << ' ' << fmt_double_hex(o.momentum)
        << ' ' << fmt_double_hex(o.weight_decay) << ' ' << (o.inv_schedule ? 1 : 0) << ' '
        << fmt_double_hex(o.progress()) << '\n';
    for (const auto& l : o.velocity) {
        write_values(out, l.w.v);
        write_values(out, l.b);
    }
}

OptimState read_optim(std::istream& in, const std::string& expected_name, const DenseNet& net) {
    const auto toks = expect_line(in, "optim");
    if (toks.size() != 7 || toks[1] != expected_name) {
        throw std::runtime_error("checkpoint: expected optim '" + expected_name + "'");
    }
    OptimState o = OptimState::for_net(net, parse_double(toks[2]), parse_double(toks[3]),
                                       parse_double(toks[4]), parse_long(toks[5]) != 0);
    o.set_progress(parse_double(toks[6]));
    for (std::size_t i = 0; i < o.velocity.size(); ++i) {
        o.velocity[i].w.v = read_values(in, o.velocity[i].w.v.size(), "velocity");
        o.velocity[i].b = read_values(in, o.velocity[i].b.size(), "velocity bias");
    }
    return o;
}

}  // namespace pmc
