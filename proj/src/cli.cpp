#include "brw/cli.hpp"

#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "brw/corridor.hpp"
#include "brw/csv.hpp"
#include "brw/errors.hpp"
#include "brw/forward_sim.hpp"
#include "brw/law_config.hpp"
#include "brw/laws.hpp"
#include "brw/num_util.hpp"
#include "brw/parallel.hpp"
#include "brw/rng.hpp"
#include "brw/spine.hpp"
#include "brw/tail.hpp"

namespace brw::cli {

namespace {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Field parsing helpers.  Every failure names the offending flag and value.

[[noreturn]] void bad_field(const std::string& flag, const std::string& value,
                            const std::string& expect) {
  throw ConfigError(flag + ": cannot parse '" + value + "' (expected " + expect + ")");
}

std::vector<std::string> split(const std::string& s, char delim) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, delim)) out.push_back(item);
  if (!s.empty() && s.back() == delim) out.push_back("");
  return out;
}

double parse_real(const std::string& flag, const std::string& s) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) bad_field(flag, s, "a real number");
    return v;
  } catch (const std::logic_error&) {
    bad_field(flag, s, "a real number");
  }
}

std::uint64_t parse_u64(const std::string& flag, const std::string& s) {
  try {
    std::size_t used = 0;
    const unsigned long long v = std::stoull(s, &used);
    if (used != s.size() || (!s.empty() && s.front() == '-'))
      bad_field(flag, s, "a nonnegative integer");
    return v;
  } catch (const std::logic_error&) {
    bad_field(flag, s, "a nonnegative integer");
  }
}

std::vector<double> parse_reals(const std::string& flag, const std::string& s) {
  std::vector<double> out;
  for (const auto& tok : split(s, ',')) out.push_back(parse_real(flag, tok));
  if (out.empty()) bad_field(flag, s, "a comma-separated list of reals");
  return out;
}

std::vector<std::uint64_t> parse_u64s(const std::string& flag, const std::string& s) {
  std::vector<std::uint64_t> out;
  for (const auto& tok : split(s, ',')) out.push_back(parse_u64(flag, tok));
  if (out.empty()) bad_field(flag, s, "a comma-separated list of integers");
  return out;
}

// A law flag accepts inline JSON, a path to a JSON config file, or a
// built-in shorthand name.
laws::ReproductionLaw resolve_law(const std::string& spec) {
  if (spec.find('{') != std::string::npos) return laws::law_from_json(spec);
  if (std::ifstream probe(spec); probe.good()) return laws::law_from_json_file(spec);
  return laws::law_from_name(spec);
}

json law_json(const laws::ReproductionLaw& law) {
  return json::parse(laws::law_to_json(law));
}

// ---------------------------------------------------------------------------
// Corridor instance parsing.

corridor::Band parse_band(const std::string& s) {
  const auto knots = split(s, ',');
  const auto head = split(knots.front(), ':');
  if (head.front() == "const") {
    if (head.size() != 3 || knots.size() != 1)
      bad_field("--band", s, "const:<lo>:<hi>");
    return corridor::make_constant_band(parse_real("--band", head[1]),
                                        parse_real("--band", head[2]));
  }
  if (head.front() == "profile") {
    if ((head.size() != 3 && head.size() != 4) || knots.size() != 1)
      bad_field("--band", s, "profile:<lambda>:<lambda_star>[:<min_width>]");
    const double min_width = head.size() == 4 ? parse_real("--band", head[3]) : 0.0;
    return corridor::make_profile_band(parse_real("--band", head[1]),
                                       parse_real("--band", head[2]), min_width);
  }
  if (knots.size() < 2)
    bad_field("--band", s, "const:..., profile:..., or >= 2 knots <s>:<lo>:<hi>");
  std::vector<double> sk, lo, hi;
  for (const auto& k : knots) {
    const auto f = split(k, ':');
    if (f.size() != 3) bad_field("--band", k, "<s>:<lo>:<hi>");
    sk.push_back(parse_real("--band", f[0]));
    lo.push_back(parse_real("--band", f[1]));
    hi.push_back(parse_real("--band", f[2]));
  }
  return corridor::make_piecewise_band(std::move(sk), std::move(lo), std::move(hi));
}

corridor::WalkLaw parse_walk(const std::string& s) {
  const auto f = split(s, ':');
  if (f.front() == "pm1" && f.size() == 1) return corridor::make_lattice_walk(1.0);
  if (f.front() == "acosh2" && f.size() == 1)
    return corridor::make_lattice_walk(std::acosh(2.0));
  if (f.front() == "lattice" && f.size() == 2)
    return corridor::make_lattice_walk(parse_real("--walk", f[1]));
  if (f.front() == "gauss" && f.size() == 2)
    return corridor::make_gaussian_walk(parse_real("--walk", f[1]));
  bad_field("--walk", s, "pm1 | acosh2 | lattice:<h> | gauss:<sigma2>");
}

corridor::MarkRule parse_mark(const std::string& flag, const std::string& s) {
  const auto f = split(s, ':');
  corridor::MarkRule m;
  if (f.front() == "none" && f.size() == 1) {
    m.kind = corridor::MarkRule::Kind::None;
    return m;
  }
  if (f.front() == "uniform" && f.size() == 2) {
    m.kind = corridor::MarkRule::Kind::BoundedUniform;
    m.bound = parse_real(flag, f[1]);
    return m;
  }
  if (f.front() == "twopoint" && f.size() == 2) {
    m.kind = corridor::MarkRule::Kind::TwoPoint;
    m.c = parse_real(flag, f[1]);
    return m;
  }
  if (f.front() == "diverging" && f.size() == 1) {
    m.kind = corridor::MarkRule::Kind::Diverging;
    return m;
  }
  bad_field(flag, s, "none | uniform:<bound> | twopoint:<c> | diverging");
}

corridor::ThresholdRule parse_tau(const std::string& s) {
  const auto f = split(s, ':');
  corridor::ThresholdRule t;
  if (f.front() == "inf" && f.size() == 1) {
    t.kind = corridor::ThresholdRule::Kind::Infinite;
    return t;
  }
  if (f.front() == "const" && f.size() == 2) {
    t.kind = corridor::ThresholdRule::Kind::Constant;
    t.value = parse_real("--tau", f[1]);
    return t;
  }
  if (f.front() == "deltaan" && f.size() == 2) {
    t.kind = corridor::ThresholdRule::Kind::DeltaAn;
    t.value = parse_real("--tau", f[1]);
    return t;
  }
  if (f.front() == "horizon" && f.size() == 1) {
    t.kind = corridor::ThresholdRule::Kind::Horizon;
    return t;
  }
  bad_field("--tau", s, "inf | const:<v> | deltaan:<A> | horizon");
}

corridor::ScalingRule parse_an(const std::string& s) {
  corridor::ScalingRule r;
  if (s == "cuberoot") {
    r.kind = corridor::ScalingRule::Kind::CubeRoot;
    return r;
  }
  if (s == "fourthroot") {
    r.kind = corridor::ScalingRule::Kind::FourthRoot;
    return r;
  }
  if (s.rfind("table:", 0) == 0) {
    r.kind = corridor::ScalingRule::Kind::Table;
    for (const auto& tok : split(s.substr(6), ',')) {
      const auto kv = split(tok, '=');
      if (kv.size() != 2) bad_field("--an-rule", tok, "<n>=<a>");
      r.table.emplace_back(parse_u64("--an-rule", kv[0]), parse_real("--an-rule", kv[1]));
    }
    return r;
  }
  bad_field("--an-rule", s, "cuberoot | fourthroot | table:<n>=<a>,...");
}

// ---------------------------------------------------------------------------
// Output plumbing.

struct RunContext {
  std::string subcommand;
  json config = json::object();
  std::uint64_t seed = 0;
  std::string out_path;
  std::string csv;
  json result;  // optional per-subcommand summary
  bool budget_exhausted = false;
  std::string budget_note;
};

std::string digest_hex(const std::string& bytes) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "fnv1a64:%016llx",
                static_cast<unsigned long long>(fnv1a64(bytes)));
  return buf;
}

void write_file(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("--out: cannot open '" + path + "' for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw ConfigError("--out: write to '" + path + "' failed");
}

int finish(const RunContext& ctx, double runtime_seconds) {
  if (ctx.out_path.empty()) {
    std::fputs(ctx.csv.c_str(), stdout);
  } else {
    write_file(ctx.out_path, ctx.csv);
    json manifest = {
        {"subcommand", ctx.subcommand},
        {"config", ctx.config},
        {"seed", ctx.seed},
        {"version", kVersion},
        {"runtime_seconds", runtime_seconds},
        {"outputs", {{ctx.out_path, digest_hex(ctx.csv)}}},
        {"budget_exhausted", ctx.budget_exhausted},
    };
    if (!ctx.budget_note.empty()) manifest["budget_note"] = ctx.budget_note;
    if (!ctx.result.is_null()) manifest["result"] = ctx.result;
    write_file(ctx.out_path + ".manifest", manifest.dump(2) + "\n");
  }
  return ctx.budget_exhausted ? 3 : 0;
}

// ---------------------------------------------------------------------------
// Flag bundles.

struct CommonOpts {
  std::string law;
  std::string out;
  std::uint64_t seed = 0;
  unsigned threads = 0;  // 0 = all hardware threads
  std::uint64_t budget = sim::kDefaultNodeBudget;
};

void add_common(CLI::App* sub, CommonOpts& c, bool with_law = true,
                bool with_budget = false) {
  if (with_law)
    sub->add_option("--law", c.law,
                    "law config: JSON file path, inline JSON, or builtin name")
        ->required();
  sub->add_option("--out", c.out, "CSV output path (manifest at <out>.manifest)");
  sub->add_option("--seed", c.seed, "master seed")->capture_default_str();
  sub->add_option("--threads", c.threads, "worker threads, 0 = all")->capture_default_str();
  if (with_budget)
    sub->add_option("--budget-nodes", c.budget, "node budget per replicate")->capture_default_str();
}

json common_json(const CommonOpts& c) {
  return json{{"seed", c.seed}, {"threads", c.threads}};
}

// ---------------------------------------------------------------------------
// Subcommand handlers.  Each fills ctx.csv / ctx.config / ctx.result.

void handle_laws_check(RunContext& ctx, const CommonOpts& c, std::uint64_t mc_draws,
                       const std::string& phi_grid) {
  const auto law = resolve_law(c.law);
  const auto closed = laws::boundary_residuals(law, laws::MomentRoute::ClosedForm);
  const auto quad = laws::boundary_residuals(law, laws::MomentRoute::Quadrature);
  const double s2_closed = laws::sigma_squared(law, laws::MomentRoute::ClosedForm);
  const double s2_quad = laws::sigma_squared(law, laws::MomentRoute::Quadrature);
  const std::vector<double> phis = parse_reals("--phi-grid", phi_grid);

  CsvWriter w;
  w.field("x").field("value").field("se");
  w.end_row();
  auto row = [&](std::string_view name, double v, double se) {
    w.field(name).field(v).field(se);
    w.end_row();
  };
  row("w1_residual_closed", closed.martingale, 0.0);
  row("vw_residual_closed", closed.centering, 0.0);
  row("w1_residual_quadrature", quad.martingale, 0.0);
  row("vw_residual_quadrature", quad.centering, 0.0);
  row("sigma2_closed", s2_closed, 0.0);
  row("sigma2_quadrature", s2_quad, 0.0);
  row("lambda_star", law.lambda_star(), 0.0);
  row("mean_offspring", law.mean_offspring(), 0.0);
  row("extinction_probability", laws::extinction_probability(law), 0.0);
  if (mc_draws > 0) {
    const auto mc = laws::mc_boundary_moments(law, mc_draws, c.seed, c.threads);
    row("mc_w1_minus_1", mc.mean_w1 - 1.0, mc.se_w1);
    row("mc_vw", mc.mean_vw, mc.se_vw);
    row("mc_v2w_minus_sigma2", mc.mean_v2w - s2_closed, mc.se_v2w);
  }
  for (double x : phis) {
    const auto phi = laws::integrability_functional(law, x);
    row("integrability:" + format_double(x), phi.estimate, 0.0);
  }
  ctx.csv = w.str();
  ctx.config = common_json(c);
  ctx.config["law"] = law_json(law);
  ctx.config["mc_draws"] = mc_draws;
  ctx.config["phi_grid"] = phis;
  ctx.result = {{"sigma2", s2_closed}, {"lambda_star", law.lambda_star()}};
}

void handle_simulate_cmd(RunContext& ctx, const CommonOpts& c, std::uint64_t n,
                         double cap, std::uint64_t replicates) {
  const auto law = resolve_law(c.law);
  if (n == 0 || n > 0xFFFFFFFFull) throw ConfigError("--n: need 1 <= n < 2^32");
  if (replicates == 0) throw ConfigError("--replicates: need >= 1");

  struct Row {
    sim::CmdResult res;
    bool budget_hit = false;
  };
  std::vector<Row> rows(replicates);
  run_replicates<char>(
      replicates, c.threads,
      [&](std::uint64_t begin, std::uint64_t end, char&) {
        for (std::uint64_t r = begin; r < end; ++r) {
          RngStream rng = make_stream(c.seed, "sim.cmd", r);
          try {
            rows[r].res =
                sim::exact_cmd(law, static_cast<std::uint32_t>(n), cap, rng, c.budget);
          } catch (const BudgetExceeded&) {
            rows[r].budget_hit = true;
          }
        }
      },
      [](char&, const char&) {});

  CsvWriter w;
  w.field("replicate").field("L_n").field("censored").field("extinct").field(
      "nodes_expanded");
  w.end_row();
  std::uint64_t n_budget_hit = 0;
  for (std::uint64_t r = 0; r < replicates; ++r) {
    if (rows[r].budget_hit) {
      ++n_budget_hit;
      continue;
    }
    const auto& res = rows[r].res;
    w.field(r).field(res.value).field(res.censored).field(res.extinct_before_n);
    w.field(res.nodes_expanded);
    w.end_row();
  }
  ctx.csv = w.str();
  ctx.config = common_json(c);
  ctx.config["law"] = law_json(law);
  ctx.config["n"] = n;
  ctx.config["cap"] = cap;
  ctx.config["replicates"] = replicates;
  ctx.config["budget_nodes"] = c.budget;
  if (n_budget_hit > 0) {
    ctx.budget_exhausted = true;
    ctx.budget_note = std::to_string(n_budget_hit) + " replicates exceeded the node budget";
  }
}

void handle_simulate_trend(RunContext& ctx, const CommonOpts& c, const std::string& n_grid,
                           double quantile, std::uint64_t replicates, double cap_scale) {
  const auto law = resolve_law(c.law);
  std::vector<std::uint32_t> ns;
  for (std::uint64_t n : parse_u64s("--n-grid", n_grid)) {
    if (n == 0 || n > 0xFFFFFFFFull) throw ConfigError("--n-grid: need 1 <= n < 2^32");
    ns.push_back(static_cast<std::uint32_t>(n));
  }
  const auto rows =
      sim::cmd_trend(law, ns, quantile, replicates, c.seed, c.threads, cap_scale, c.budget);

  CsvWriter w;
  w.field("n").field("cap").field("quantile_scaled").field("n_censored");
  w.field("n_extinct").field("replicates");
  w.end_row();
  for (const auto& r : rows) {
    w.field(std::uint64_t{r.n}).field(r.cap).field(r.quantile_scaled);
    w.field(r.n_censored).field(r.n_extinct).field(r.replicates);
    w.end_row();
  }
  ctx.csv = w.str();
  ctx.config = common_json(c);
  ctx.config["law"] = law_json(law);
  ctx.config["n_grid"] = ns;
  ctx.config["quantile"] = quantile;
  ctx.config["replicates"] = replicates;
  ctx.config["cap_scale"] = cap_scale;
  ctx.config["budget_nodes"] = c.budget;
  bool increasing = true;
  for (std::size_t i = 1; i < rows.size(); ++i)
    increasing = increasing && rows[i].quantile_scaled > rows[i - 1].quantile_scaled;
  ctx.result = {{"strictly_increasing", increasing},
                {"lambda_star", law.lambda_star()}};
}

void handle_spine_check(RunContext& ctx, const CommonOpts& c, std::uint64_t n,
                        const std::string& functional, std::uint64_t replicates) {
  const auto law = resolve_law(c.law);
  const auto f = spine::PathFunctional::parse(functional);
  const auto check =
      spine::many_to_one_check(law, n, f, replicates, c.seed, c.threads, c.budget);

  CsvWriter w;
  w.field("side").field("estimate").field("se");
  w.end_row();
  w.field("forward").field(check.forward.estimate).field(check.forward.se);
  w.end_row();
  w.field("spine").field(check.spine.estimate).field(check.spine.se);
  w.end_row();
  json result;
  if (law.family() == laws::Family::LatticeBinary) {
    const auto exact = spine::many_to_one_exact(law, n, f);
    w.field("forward_exact").field(exact.forward).field(0.0);
    w.end_row();
    w.field("spine_exact").field(exact.spine).field(0.0);
    w.end_row();
    result["exact_route_diff"] = exact.forward - exact.spine;
  }
  const double diff = check.forward.estimate - check.spine.estimate;
  const double se =
      std::sqrt(check.forward.se * check.forward.se + check.spine.se * check.spine.se);
  result["diff"] = diff;
  result["combined_se"] = se;
  result["t"] = se > 0.0 ? diff / se : 0.0;
  ctx.csv = w.str();
  ctx.config = common_json(c);
  ctx.config["law"] = law_json(law);
  ctx.config["n"] = n;
  ctx.config["functional"] = f.describe();
  ctx.config["replicates"] = replicates;
  ctx.config["budget_nodes"] = c.budget;
  ctx.result = result;
}

void handle_spine_zmean(RunContext& ctx, const CommonOpts& c, double lambda, double delta,
                        std::uint64_t n, const std::string& method,
                        std::uint64_t replicates) {
  const auto law = resolve_law(c.law);
  spine::MomentMethod m;
  if (method == "dp")
    m = spine::MomentMethod::Dp;
  else if (method == "mc")
    m = spine::MomentMethod::Mc;
  else
    bad_field("--method", method, "dp | mc");
  if (m == spine::MomentMethod::Mc && replicates == 0)
    throw ConfigError("--replicates: mc method needs >= 1");

  const double a_n = std::cbrt(static_cast<double>(n));
  const double lstar = law.lambda_star();
  const auto mean =
      spine::corridor_population_mean(law, lambda, delta, n, m, replicates, c.seed, c.threads);
  const auto bound =
      spine::corridor_population_bound(law, lambda, delta, n, m, replicates, c.seed, c.threads);
  // The raw mean and the endpoint-floored bound have different scaled-log
  // limits; each row carries its own.
  const double target_mean =
      lambda - lstar * (std::cbrt(1.0 + delta) - std::cbrt(delta));
  const double target_bound = lambda - lstar * std::cbrt(1.0 + delta);

  CsvWriter w;
  w.field("quantity").field("estimate").field("se").field("log_over_n13");
  w.field("target_exponent");
  w.end_row();
  w.field("population_mean").field(mean.estimate).field(mean.se);
  w.field(mean.log_estimate / a_n).field(target_mean);
  w.end_row();
  w.field("population_bound").field(bound.estimate).field(bound.se);
  w.field(bound.log_estimate / a_n).field(target_bound);
  w.end_row();
  ctx.csv = w.str();
  ctx.config = common_json(c);
  ctx.config["law"] = law_json(law);
  ctx.config["lambda"] = lambda;
  ctx.config["delta"] = delta;
  ctx.config["n"] = n;
  ctx.config["method"] = method;
  ctx.config["replicates"] = replicates;
  ctx.result = {{"estimate", bound.estimate},
                {"se", bound.se},
                {"log_over_n13", bound.log_estimate / a_n},
                {"target_exponent", target_bound}};
}

struct CorridorOpts {
  std::string band;
  std::string walk;
  std::string mark = "none";
  std::string tau = "inf";
  std::string an_rule = "cuberoot";
  std::string window;
  double z = 0.0;
};

void add_corridor(CLI::App* sub, CorridorOpts& o) {
  sub->add_option("--band", o.band,
                  "const:<lo>:<hi> | profile:<lambda>:<lstar>[:<w0>] | knots <s>:<lo>:<hi>,...")
      ->required();
  sub->add_option("--walk", o.walk, "pm1 | acosh2 | lattice:<h> | gauss:<sigma2>")
      ->required();
  sub->add_option("--mark", o.mark, "none | uniform:<b> | twopoint:<c> | diverging")->capture_default_str();
  sub->add_option("--tau", o.tau, "inf | const:<v> | deltaan:<A> | horizon")->capture_default_str();
  sub->add_option("--an-rule", o.an_rule, "cuberoot | fourthroot | table:<n>=<a>,...")
      ->capture_default_str();
  sub->add_option("--window", o.window, "endpoint window <lo>:<hi> in a_n units");
  sub->add_option("--z", o.z, "start position in a_n units")->capture_default_str();
}

corridor::CorridorSpec build_corridor(const CorridorOpts& o) {
  corridor::CorridorSpec spec;
  spec.band = parse_band(o.band);
  spec.walk = parse_walk(o.walk);
  spec.mark = parse_mark("--mark", o.mark);
  spec.threshold = parse_tau(o.tau);
  spec.scaling = parse_an(o.an_rule);
  if (!o.window.empty()) {
    const auto f = split(o.window, ':');
    if (f.size() != 2) bad_field("--window", o.window, "<lo>:<hi>");
    spec.has_endpoint_window = true;
    spec.y_lo = parse_real("--window", f[0]);
    spec.y_hi = parse_real("--window", f[1]);
  }
  corridor::validate(spec);
  return spec;
}

json corridor_json(const CorridorOpts& o) {
  json j = {{"band", o.band},     {"walk", o.walk},       {"mark", o.mark},
            {"tau", o.tau},       {"an_rule", o.an_rule}, {"z", o.z}};
  if (!o.window.empty()) j["window"] = o.window;
  return j;
}

void corridor_row(CsvWriter& w, std::uint64_t n, double a_n, double log_p) {
  w.field(n).field(a_n).field(log_p).field(a_n * a_n / static_cast<double>(n) * log_p);
  w.end_row();
}

void handle_corridor_point(RunContext& ctx, const CommonOpts& c, const CorridorOpts& o,
                           std::uint64_t n, bool monte_carlo, std::uint64_t replicates) {
  const auto spec = build_corridor(o);
  if (n == 0) throw ConfigError("--n: need >= 1");
  EstimateReport rep;
  if (monte_carlo) {
    if (replicates == 0) throw ConfigError("--replicates: need >= 1");
    rep = corridor::mc_corridor(spec, n, replicates, c.seed, c.threads, o.z);
  } else {
    rep = corridor::dp_corridor(spec, n, o.z);
  }
  const double a_n = spec.scaling.a(n);
  CsvWriter w;
  w.field("n").field("a_n").field("p").field("log_p").field("scaled_log_p");
  w.end_row();
  w.field(n).field(a_n).field(rep.estimate).field(rep.log_estimate);
  w.field(a_n * a_n / static_cast<double>(n) * rep.log_estimate);
  w.end_row();
  ctx.csv = w.str();
  ctx.config = common_json(c);
  ctx.config["corridor"] = corridor_json(o);
  ctx.config["n"] = n;
  if (monte_carlo) ctx.config["replicates"] = replicates;
  ctx.result = {{"estimate", rep.estimate},
                {"log_estimate", rep.log_estimate},
                {"se", rep.se},
                {"exact", rep.exact}};
}

json fit_json(const corridor::ExponentFit& fit) {
  return json{{"fitted_limit", fit.fitted_limit},
              {"slope", fit.slope},
              {"max_abs_residual", fit.max_abs_residual},
              {"diverging", fit.diverging}};
}

void handle_corridor_fit(RunContext& ctx, const CommonOpts& c, const CorridorOpts& o,
                         const std::string& n_grid) {
  const auto spec = build_corridor(o);
  const auto ns = parse_u64s("--n-grid", n_grid);
  const auto fit = corridor::fit_exponent(spec, ns, o.z);
  CsvWriter w;
  w.field("n").field("a_n").field("log_p").field("scaled_log_p");
  w.end_row();
  for (std::size_t i = 0; i < fit.n_grid.size(); ++i)
    corridor_row(w, fit.n_grid[i], fit.a_n[i], fit.log_p[i]);
  ctx.csv = w.str();
  ctx.config = common_json(c);
  ctx.config["corridor"] = corridor_json(o);
  ctx.config["n_grid"] = ns;
  ctx.result = fit_json(fit);
  ctx.result["mogulskii_exponent"] =
      corridor::mogulskii_exponent(spec.band, spec.walk.sigma2);
}

void handle_corridor_gap(RunContext& ctx, const CommonOpts& c, const CorridorOpts& o,
                         const std::string& mark_nice, const std::string& n_grid) {
  corridor::CorridorSpec heavy = build_corridor(o);
  corridor::CorridorSpec nice = heavy;
  nice.mark = parse_mark("--mark-nice", mark_nice);
  corridor::validate(nice);
  const auto ns = parse_u64s("--n-grid", n_grid);
  const auto gap = corridor::heavy_tail_gap(nice, heavy, ns);
  CsvWriter w;
  w.field("side").field("n").field("a_n").field("log_p").field("scaled_log_p");
  w.end_row();
  auto side_rows = [&](std::string_view side, const corridor::ExponentFit& fit) {
    for (std::size_t i = 0; i < fit.n_grid.size(); ++i) {
      w.field(side);
      w.field(fit.n_grid[i]).field(fit.a_n[i]).field(fit.log_p[i]);
      w.field(fit.a_n[i] * fit.a_n[i] / static_cast<double>(fit.n_grid[i]) * fit.log_p[i]);
      w.end_row();
    }
  };
  side_rows("nice", gap.nice);
  side_rows("heavy", gap.heavy);
  ctx.csv = w.str();
  ctx.config = common_json(c);
  ctx.config["corridor"] = corridor_json(o);
  ctx.config["mark_nice"] = mark_nice;
  ctx.config["n_grid"] = ns;
  ctx.result = {{"gap", gap.gap},
                {"heavy_diverging", gap.heavy_diverging},
                {"nice", fit_json(gap.nice)},
                {"heavy", fit_json(gap.heavy)}};
}

void handle_tail_curve(RunContext& ctx, const CommonOpts& c, std::uint64_t n,
                       const std::string& lambdas, const std::string& mode_str,
                       double delta, std::uint64_t replicates) {
  const auto law = resolve_law(c.law);
  tail::TailMode mode;
  if (mode_str == "direct")
    mode = tail::TailMode::Direct;
  else if (mode_str == "moment_dp")
    mode = tail::TailMode::MomentDp;
  else
    bad_field("--mode", mode_str, "direct | moment_dp");
  const auto grid = parse_reals("--lambdas", lambdas);
  const auto curve =
      tail::tail_curve(law, n, grid, mode, replicates, c.seed, c.threads, delta, c.budget);

  const double a_n = std::cbrt(static_cast<double>(n));
  CsvWriter w;
  w.field("lambda").field("estimate").field("se_or_exact").field("target");
  w.end_row();
  json points = json::array();
  for (const auto& p : curve.points) {
    w.field(p.lambda).field(p.scaled_log);
    if (mode == tail::TailMode::Direct) {
      // Delta-method SE of the scaled log-probability.
      const double se =
          p.probability > 0.0 ? p.prob_se / (p.probability * a_n) : kPosInf;
      w.field(se);
    } else {
      w.field("exact");
    }
    w.field(p.target);
    w.end_row();
    json pj = {{"lambda", p.lambda}, {"scaled_log", p.scaled_log}, {"target", p.target}};
    if (mode == tail::TailMode::Direct) {
      pj["probability"] = p.probability;
      pj["prob_se"] = p.prob_se;
      pj["censored"] = p.censored;
      pj["extinct"] = p.extinct;
    } else {
      pj["upper_proxy"] = p.upper_proxy;
    }
    points.push_back(std::move(pj));
  }
  ctx.csv = w.str();
  ctx.config = common_json(c);
  ctx.config["law"] = law_json(law);
  ctx.config["n"] = n;
  ctx.config["lambdas"] = grid;
  ctx.config["mode"] = mode_str;
  ctx.config["delta"] = curve.delta;
  ctx.config["replicates"] = replicates;
  ctx.config["budget_nodes"] = c.budget;
  ctx.result = {{"points", std::move(points)}};
}

void handle_tail_contrast(RunContext& ctx, const CommonOpts& c, const std::string& nice_spec,
                          const std::string& heavy_spec, const std::string& n_grid,
                          std::uint64_t replicates, double xi_cap, double band_width,
                          double synthetic_c) {
  const auto nice = resolve_law(nice_spec);
  const auto heavy = resolve_law(heavy_spec);
  const auto ns = parse_u64s("--n-grid", n_grid);
  const auto rep = tail::nonintegrable_contrast(nice, heavy, ns, replicates, c.seed,
                                                c.threads, xi_cap, band_width, synthetic_c);
  CsvWriter w;
  w.field("side").field("n").field("a_n").field("log_p_plain").field("log_p_constrained");
  w.field("deficit_scaled").field("hits_plain").field("hits_constrained");
  w.end_row();
  auto side_rows = [&](std::string_view side, const tail::ContrastSide& s) {
    for (const auto& p : s.points) {
      w.field(side).field(p.n).field(p.a_n).field(p.log_p_plain);
      w.field(p.log_p_constrained).field(p.deficit_scaled);
      w.field(p.hits_plain).field(p.hits_constrained);
      w.end_row();
    }
  };
  side_rows("nice", rep.nice);
  side_rows("heavy", rep.heavy);
  ctx.csv = w.str();
  ctx.config = common_json(c);
  ctx.config["nice"] = law_json(nice);
  ctx.config["heavy"] = law_json(heavy);
  ctx.config["n_grid"] = ns;
  ctx.config["replicates"] = replicates;
  ctx.config["xi_cap"] = xi_cap;
  ctx.config["band_width"] = band_width;
  ctx.config["synthetic_c"] = synthetic_c;
  ctx.result = {{"nice_deficit_fit", rep.nice.deficit_fit},
                {"heavy_deficit_fit", rep.heavy.deficit_fit}};
}

}  // namespace

int run(const std::vector<std::string>& args) {
  CLI::App app{"branching random walk boundary-case workbench"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(kVersion));

  // laws -----------------------------------------------------------------
  auto* laws_app = app.add_subcommand("laws", "reproduction-law diagnostics");
  laws_app->require_subcommand(1);
  auto* laws_check = laws_app->add_subcommand(
      "check", "boundary residuals, sigma^2, lambda*, integrability table");
  CommonOpts laws_c;
  std::uint64_t laws_mc_draws = 0;
  std::string laws_phi = "4,8,16,32";
  add_common(laws_check, laws_c);
  laws_check->add_option("--mc-draws", laws_mc_draws,
                         "Monte Carlo cross-check draws (0 = skip)")->capture_default_str();
  laws_check->add_option("--phi-grid", laws_phi, "thresholds x for x^2 E[W1; log W1 >= x]")
      ->capture_default_str();

  // simulate ---------------------------------------------------------------
  auto* sim_app = app.add_subcommand("simulate", "forward tree simulation");
  sim_app->require_subcommand(1);
  auto* sim_cmd = sim_app->add_subcommand("cmd", "per-replicate consistent maximal displacement");
  CommonOpts sim_c;
  std::uint64_t sim_n = 0, sim_reps = 0;
  double sim_cap = 0.0;
  add_common(sim_cmd, sim_c, true, true);
  sim_cmd->add_option("--n", sim_n, "generation horizon")->required();
  sim_cmd->add_option("--cap", sim_cap, "absolute branch-and-bound cap")->required();
  sim_cmd->add_option("--replicates", sim_reps, "independent replicates")->required();

  auto* sim_trend = sim_app->add_subcommand("trend", "quantile of L_n / n^{1/3} over an n grid");
  CommonOpts trend_c;
  std::string trend_grid;
  double trend_q = 0.5, trend_cap_scale = -1.0;
  std::uint64_t trend_reps = 0;
  add_common(sim_trend, trend_c, true, true);
  sim_trend->add_option("--n-grid", trend_grid, "comma list of horizons")->required();
  sim_trend->add_option("--quantile", trend_q, "empirical quantile")->capture_default_str();
  sim_trend->add_option("--replicates", trend_reps, "replicates per horizon")->required();
  sim_trend
      ->add_option("--cap-scale", trend_cap_scale,
                   "cap = cap-scale * n^{1/3}; <= 0 picks lambda* + 0.5")
      ->capture_default_str();

  // spine ------------------------------------------------------------------
  auto* spine_app = app.add_subcommand("spine", "size-biased spine experiments");
  spine_app->require_subcommand(1);
  auto* spine_check = spine_app->add_subcommand("check", "two-route many-to-one comparison");
  CommonOpts spc_c;
  std::uint64_t spc_n = 0, spc_reps = 0;
  std::string spc_functional = "one";
  add_common(spine_check, spc_c, true, true);
  spine_check->add_option("--n", spc_n, "generation horizon")->required();
  spine_check->add_option("--functional", spc_functional,
                          "one | corridor | corridor:<lo>,<hi> | runmax-penalty")->capture_default_str();
  spine_check->add_option("--replicates", spc_reps, "replicates per side")->required();

  auto* spine_zmean =
      spine_app->add_subcommand("zmean", "corridor population mean and floored bound");
  CommonOpts spz_c;
  double spz_lambda = 0.0, spz_delta = 0.05;
  std::uint64_t spz_n = 0, spz_reps = 0;
  std::string spz_method = "dp";
  add_common(spine_zmean, spz_c);
  spine_zmean->add_option("--lambda", spz_lambda, "corridor top in n^{1/3} units")->required();
  spine_zmean->add_option("--delta", spz_delta, "floor offset / xi cap parameter")->capture_default_str();
  spine_zmean->add_option("--n", spz_n, "generation horizon")->required();
  spine_zmean->add_option("--method", spz_method, "dp | mc")->capture_default_str();
  spine_zmean->add_option("--replicates", spz_reps, "mc replicates")->capture_default_str();

  // corridor -----------------------------------------------------------------
  auto* corr_app = app.add_subcommand("corridor", "small-deviation corridor probabilities");
  corr_app->require_subcommand(1);
  auto* corr_dp = corr_app->add_subcommand("dp", "exact transfer-matrix probability");
  CommonOpts cdp_c;
  CorridorOpts cdp_o;
  std::uint64_t cdp_n = 0;
  add_common(corr_dp, cdp_c, false);
  add_corridor(corr_dp, cdp_o);
  corr_dp->add_option("--n", cdp_n, "number of steps")->required();

  auto* corr_mc = corr_app->add_subcommand("mc", "Monte Carlo corridor probability");
  CommonOpts cmc_c;
  CorridorOpts cmc_o;
  std::uint64_t cmc_n = 0, cmc_reps = 0;
  add_common(corr_mc, cmc_c, false);
  add_corridor(corr_mc, cmc_o);
  corr_mc->add_option("--n", cmc_n, "number of steps")->required();
  corr_mc->add_option("--replicates", cmc_reps, "replicates")->required();

  auto* corr_fit = corr_app->add_subcommand("fit", "exponent extrapolation over an n grid");
  CommonOpts cft_c;
  CorridorOpts cft_o;
  std::string cft_grid;
  add_common(corr_fit, cft_c, false);
  add_corridor(corr_fit, cft_o);
  corr_fit->add_option("--n-grid", cft_grid, "comma list of n")->required();

  auto* corr_gap = corr_app->add_subcommand("gap", "mark-induced exponent gap");
  CommonOpts cgp_c;
  CorridorOpts cgp_o;
  std::string cgp_grid, cgp_mark_nice = "none";
  add_common(corr_gap, cgp_c, false);
  add_corridor(corr_gap, cgp_o);
  corr_gap->add_option("--n-grid", cgp_grid, "comma list of n")->required();
  corr_gap->add_option("--mark-nice", cgp_mark_nice, "baseline mark rule")->capture_default_str();

  // tail ---------------------------------------------------------------------
  auto* tail_app = app.add_subcommand("tail", "left-tail exponent experiments");
  tail_app->require_subcommand(1);
  auto* tail_curve = tail_app->add_subcommand("curve", "exponent curve over a lambda grid");
  CommonOpts tcv_c;
  std::uint64_t tcv_n = 0, tcv_reps = 0;
  std::string tcv_lambdas, tcv_mode = "moment_dp";
  double tcv_delta = tail::kDefaultDelta;
  add_common(tail_curve, tcv_c, true, true);
  tail_curve->add_option("--n", tcv_n, "generation horizon")->required();
  tail_curve->add_option("--lambdas", tcv_lambdas, "comma list of lambda values")->required();
  tail_curve->add_option("--mode", tcv_mode, "direct | moment_dp")->capture_default_str();
  tail_curve->add_option("--delta", tcv_delta, "floor offset for moment_dp")->capture_default_str();
  tail_curve->add_option("--replicates", tcv_reps, "direct-mode replicates")->capture_default_str();

  auto* tail_contrast =
      tail_app->add_subcommand("contrast", "constrained-brood corridor survival contrast");
  CommonOpts tct_c;
  std::string tct_nice, tct_heavy, tct_grid;
  std::uint64_t tct_reps = 0;
  double tct_xi_cap = tail::kDefaultXiCap;
  double tct_width = tail::kDefaultBandWidth;
  double tct_syn = -1.0;
  add_common(tail_contrast, tct_c, false);
  tail_contrast->add_option("--nice", tct_nice, "light-tailed law config")->required();
  tail_contrast->add_option("--heavy", tct_heavy, "heavy-mixture law config")->required();
  tail_contrast->add_option("--n-grid", tct_grid, "comma list of horizons")->required();
  tail_contrast->add_option("--replicates", tct_reps, "replicates per horizon")->required();
  tail_contrast->add_option("--xi-cap", tct_xi_cap, "A in the constraint xi <= A n^{1/3}")
      ->capture_default_str();
  tail_contrast->add_option("--band-width", tct_width, "corridor width in a_n units")->capture_default_str();
  tail_contrast->add_option("--synthetic-c", tct_syn,
                            "replace xi constraint by c/a_n^2 thinning (< 0 = off)")->capture_default_str();

  std::vector<const char*> argv;
  argv.reserve(args.size() + 1);
  argv.push_back(kToolName);
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  RunContext ctx;
  const auto t0 = std::chrono::steady_clock::now();
  try {
    if (laws_check->parsed()) {
      ctx.subcommand = "laws check";
      ctx.seed = laws_c.seed;
      ctx.out_path = laws_c.out;
      handle_laws_check(ctx, laws_c, laws_mc_draws, laws_phi);
    } else if (sim_cmd->parsed()) {
      ctx.subcommand = "simulate cmd";
      ctx.seed = sim_c.seed;
      ctx.out_path = sim_c.out;
      handle_simulate_cmd(ctx, sim_c, sim_n, sim_cap, sim_reps);
    } else if (sim_trend->parsed()) {
      ctx.subcommand = "simulate trend";
      ctx.seed = trend_c.seed;
      ctx.out_path = trend_c.out;
      handle_simulate_trend(ctx, trend_c, trend_grid, trend_q, trend_reps, trend_cap_scale);
    } else if (spine_check->parsed()) {
      ctx.subcommand = "spine check";
      ctx.seed = spc_c.seed;
      ctx.out_path = spc_c.out;
      handle_spine_check(ctx, spc_c, spc_n, spc_functional, spc_reps);
    } else if (spine_zmean->parsed()) {
      ctx.subcommand = "spine zmean";
      ctx.seed = spz_c.seed;
      ctx.out_path = spz_c.out;
      handle_spine_zmean(ctx, spz_c, spz_lambda, spz_delta, spz_n, spz_method, spz_reps);
    } else if (corr_dp->parsed()) {
      ctx.subcommand = "corridor dp";
      ctx.seed = cdp_c.seed;
      ctx.out_path = cdp_c.out;
      handle_corridor_point(ctx, cdp_c, cdp_o, cdp_n, false, 0);
    } else if (corr_mc->parsed()) {
      ctx.subcommand = "corridor mc";
      ctx.seed = cmc_c.seed;
      ctx.out_path = cmc_c.out;
      handle_corridor_point(ctx, cmc_c, cmc_o, cmc_n, true, cmc_reps);
    } else if (corr_fit->parsed()) {
      ctx.subcommand = "corridor fit";
      ctx.seed = cft_c.seed;
      ctx.out_path = cft_c.out;
      handle_corridor_fit(ctx, cft_c, cft_o, cft_grid);
    } else if (corr_gap->parsed()) {
      ctx.subcommand = "corridor gap";
      ctx.seed = cgp_c.seed;
      ctx.out_path = cgp_c.out;
      handle_corridor_gap(ctx, cgp_c, cgp_o, cgp_mark_nice, cgp_grid);
    } else if (tail_curve->parsed()) {
      ctx.subcommand = "tail curve";
      ctx.seed = tcv_c.seed;
      ctx.out_path = tcv_c.out;
      handle_tail_curve(ctx, tcv_c, tcv_n, tcv_lambdas, tcv_mode, tcv_delta, tcv_reps);
    } else if (tail_contrast->parsed()) {
      ctx.subcommand = "tail contrast";
      ctx.seed = tct_c.seed;
      ctx.out_path = tct_c.out;
      handle_tail_contrast(ctx, tct_c, tct_nice, tct_heavy, tct_grid, tct_reps, tct_xi_cap,
                           tct_width, tct_syn);
    } else {
      std::fprintf(stderr, "no subcommand selected\n");
      return 2;
    }
  } catch (const BudgetExceeded& e) {
    // Partial results (if any were assembled) are still written, flagged.
    ctx.budget_exhausted = true;
    ctx.budget_note = e.what();
    const double dt =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    try {
      finish(ctx, dt);
    } catch (const std::exception& io) {
      std::fprintf(stderr, "error: %s\n", io.what());
    }
    std::fprintf(stderr, "budget exhausted: %s\n", e.what());
    return 3;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }

  const double dt =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  try {
    return finish(ctx, dt);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
}

int run(int argc, const char* const* argv) {
  std::vector<std::string> args;
  args.reserve(argc > 0 ? static_cast<std::size_t>(argc - 1) : 0);
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run(args);
}

}  // namespace brw::cli
