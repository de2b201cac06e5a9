#pragma once
// serialize.hpp — line-based exact (hex-float) serialization for nets and
// optimizer state, shared by the ensemble and generator checkpoint formats.

#include <istream>
#include <ostream>

#include "pmc/nncore.hpp"

namespace pmc {

void write_net(std::ostream& out, const std::string& name, const DenseNet& net);
DenseNet read_net(std::istream& in, const std::string& expected_name);

void write_optim(std::ostream& out, const std::string& name, const OptimState& o);
OptimState read_optim(std::istream& in, const std::string& expected_name, const DenseNet& net);

}  // namespace pmc
