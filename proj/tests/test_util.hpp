#pragma once

#include <string>

#include "fgse/grid_model.hpp"

inline fgse::PowerSystem load_fixture(const std::string& name) {
    return fgse::load_case(std::string(FGSE_CASE_DIR) + "/" + name + ".json");
}
