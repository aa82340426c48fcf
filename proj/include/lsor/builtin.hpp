#pragma once

#include <string>

#include "lsor/sysdef.hpp"

namespace lsor::builtin {

// f = -2x + z, g = x - z
SingularSystem lts1(double eps = 0.1);
// f = -x + z + u, g = x - z - z^3
SingularSystem nls1(double eps = 0.1);
// LTS-1 with the fast sign flipped: g = z - x
SingularSystem lts1_flipped(double eps = 0.1);

// lookup by name: lts1, nls1, lts1_flipped
SingularSystem by_name(const std::string& name, double eps);

} // namespace lsor::builtin
