#include "brw/law_config.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "brw/errors.hpp"
#include "brw/quad.hpp"

namespace brw::laws {

namespace {

using nlohmann::json;

double require_number(const json& j, const char* key) {
  if (!j.contains(key) || !j.at(key).is_number()) {
    throw ConfigError(std::string("law config: missing numeric field '") + key + "'");
  }
  return j.at(key).get<double>();
}

}  // namespace

ReproductionLaw law_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("law config: ") + e.what());
  }
  if (!j.is_object() || !j.contains("family") || !j.at("family").is_string()) {
    throw ConfigError("law config: top-level object with a 'family' string required");
  }
  const std::string family = j.at("family").get<std::string>();
  if (family == "gaussian-binary") return make_gaussian_binary();
  if (family == "lattice-binary") return make_lattice_binary();
  if (family == "gaussian-pair") {
    return make_gaussian_pair(require_number(j, "mu"), require_number(j, "s2"));
  }
  if (family == "heavy-mixture") {
    return make_heavy_mixture(require_number(j, "epsilon"), require_number(j, "y_min"),
                              require_number(j, "c0"));
  }
  if (family == "user-table") {
    if (!j.contains("entries") || !j.at("entries").is_array()) {
      throw ConfigError("law config: user-table needs an 'entries' array");
    }
    std::vector<UserTableSpec> entries;
    for (const json& je : j.at("entries")) {
      if (!je.is_object()) throw ConfigError("law config: entries must be objects");
      UserTableSpec spec;
      spec.prob = require_number(je, "prob");
      if (!je.contains("displacements") || !je.at("displacements").is_array()) {
        throw ConfigError("law config: entry needs a 'displacements' array");
      }
      for (const json& jd : je.at("displacements")) {
        if (!jd.is_number()) {
          throw ConfigError("law config: displacements must be numbers");
        }
        spec.displacements.push_back(jd.get<double>());
      }
      entries.push_back(std::move(spec));
    }
    return make_user_table(entries);
  }
  throw ConfigError("law config: unknown family '" + family + "'");
}

ReproductionLaw law_from_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("law config: cannot open '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return law_from_json(buf.str());
}

std::string law_to_json(const ReproductionLaw& law) {
  json j;
  switch (law.family()) {
    case Family::GaussianBinary: {
      const GaussianComponent& g = law.gaussian_data();
      if (law.id() == "gaussian-pair") {
        j = {{"family", "gaussian-pair"}, {"mu", g.mu}, {"s2", g.s2}};
      } else {
        j = {{"family", "gaussian-binary"}};
      }
      break;
    }
    case Family::LatticeBinary:
      j = {{"family", "lattice-binary"}};
      break;
    case Family::HeavyMixture: {
      const HeavyMixtureData& h = law.heavy_data();
      j = {{"family", "heavy-mixture"},
           {"epsilon", h.epsilon},
           {"y_min", h.y_min},
           {"c0", h.c0}};
      break;
    }
    case Family::UserTable: {
      json entries = json::array();
      for (const TableEntry& e : law.table_data().entries) {
        entries.push_back(
            {{"prob", e.prob}, {"displacements", e.displacements}});
      }
      j = {{"family", "user-table"}, {"entries", std::move(entries)}};
      break;
    }
  }
  return j.dump(2);
}

ReproductionLaw law_from_name(const std::string& name) {
  if (name == "gaussian-binary") return make_gaussian_binary();
  if (name == "lattice-binary") return make_lattice_binary();
  if (name == "heavy-mixture") return make_heavy_mixture(0.05, 3.0, 3.0);
  if (name == "mortal-table") {
    // Critical three-entry table: death with probability 1/8, one child at a
    // with probability 1/2, two children at b with probability 3/8.  With
    // x = exp(-a), y = exp(-b) the boundary constraints reduce to
    // 2x + 3y = 4 and 2 x log x + 3 y log y = 0.
    const double y = solve_bracketed(
        [](double t) {
          const double x = 2.0 - 1.5 * t;
          return 2.0 * x * std::log(x) + 3.0 * t * std::log(t);
        },
        0.05, 0.9, 1e-16);
    const double x = 2.0 - 1.5 * y;
    const double a = -std::log(x);
    const double b = -std::log(y);
    return make_user_table({{0.125, {}}, {0.5, {a}}, {0.375, {b, b}}});
  }
  throw ConfigError("unknown law name '" + name +
                    "' (expected gaussian-binary, lattice-binary, heavy-mixture "
                    "or mortal-table)");
}

}  // namespace brw::laws
