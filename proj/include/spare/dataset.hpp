#pragma once

#include "spare/relational.hpp"

#include <iosfwd>
#include <string>
#include <vector>

namespace spare {

// Line-delimited JSON, one experience per line:
//   {"instance":..., "objects":[...], "props":[...], "state":[[...]],
//    "action":{"template":..., "alpha":[...], "targets":[...]}, "next_state":[[...]]}
// state[i][j] is property j of object i (rows follow the objects array).
// Field order is fixed and reals are printed with 17 significant digits, so a
// dataset serializes byte-identically for identical contents.

std::string experience_to_json_line(const Experience& e);
void write_dataset(const std::string& path, const std::vector<Experience>& experiences);

Experience experience_from_json_line(const Domain& domain, const std::string& line);
std::vector<Experience> read_dataset(const std::string& path, const Domain& domain);

}  // namespace spare
