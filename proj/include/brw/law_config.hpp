#pragma once

// JSON (de)serialisation of reproduction laws.
//
// A law is described by a nested key/value document:
//   {"family": "gaussian-binary"}
//   {"family": "gaussian-pair", "mu": 1.2, "s2": 0.9}
//   {"family": "lattice-binary"}
//   {"family": "heavy-mixture", "epsilon": 0.05, "y_min": 3.0, "c0": 3.0}
//   {"family": "user-table",
//    "entries": [{"prob": 0.125, "displacements": []},
//                {"prob": 0.875, "displacements": [0.5, -0.25]}]}
// Serialising and re-parsing reproduces an identical law: only defining
// parameters are stored, derived tables are rebuilt deterministically.

#include <string>

#include "brw/laws.hpp"

namespace brw::laws {

ReproductionLaw law_from_json(const std::string& text);
ReproductionLaw law_from_json_file(const std::string& path);
std::string law_to_json(const ReproductionLaw& law);

// Built-in law for a shorthand name: "gaussian-binary", "lattice-binary",
// "heavy-mixture" (default parameters 0.05 / 3.0 / 3.0), or "mortal-table"
// (death 1/8, one child at acosh(2) with prob 1/2, two children at log(16/9)
// with prob 3/8; extinction probability exactly 1/3).
ReproductionLaw law_from_name(const std::string& name);

}  // namespace brw::laws
