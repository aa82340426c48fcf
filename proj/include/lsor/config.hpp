#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include <json.hpp>

#include "lsor/harness.hpp"
#include "lsor/microgrid.hpp"

namespace lsor {

// command-line values that win over the file
struct Overrides {
    std::optional<double> rtol, atol;
    std::optional<std::uint64_t> seed;
    std::optional<int> grid, repeats;
    std::optional<std::string> solver;
};

nlohmann::json read_json(const std::string& path);

DerParams der_params_from_json(const nlohmann::json& j, DerParams base = {});
std::shared_ptr<MicrogridModel> microgrid_from_json(const nlohmann::json& j);

// builtin or microgrid case
CaseSetup case_from_json(const nlohmann::json& j, const Overrides& o = {});
CaseSetup load_case(const std::string& path, const Overrides& o = {});

} // namespace lsor
