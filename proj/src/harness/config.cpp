#include "sinebeta/harness/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <numbers>
#include <set>
#include <sstream>

#include <yaml-cpp/yaml.h>

namespace sinebeta::harness {

std::string to_string(Mode m) {
  switch (m) {
    case Mode::simulate: return "simulate";
    case Mode::welltime: return "welltime";
    case Mode::verify: return "verify";
    case Mode::report: return "report";
  }
  return "?";
}

Mode parse_mode(const std::string& s) {
  if (s == "simulate") return Mode::simulate;
  if (s == "welltime") return Mode::welltime;
  if (s == "verify") return Mode::verify;
  if (s == "report") return Mode::report;
  throw ConfigError("unknown mode '" + s + "' (simulate, welltime, verify, report)");
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

double parse_number(const std::string& s, const std::string& whole) {
  double v = 0.0;
  const char* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || ptr != end) {
    throw ConfigError("cannot read '" + whole + "' as a number (examples: 0.5, 2pi, -4pi)");
  }
  return v;
}

std::vector<std::string> split(const std::string& text, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, sep)) out.push_back(trim(item));
  return out;
}

}  // namespace

double parse_real(const std::string& token) {
  std::string t = trim(token);
  if (t.empty()) throw ConfigError("empty number");
  std::string lower = t;
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (lower.size() >= 2 && lower.ends_with("pi")) {
    std::string coef = trim(lower.substr(0, lower.size() - 2));
    if (!coef.empty() && coef.back() == '*') coef = trim(coef.substr(0, coef.size() - 1));
    double c = 1.0;
    if (coef == "-") {
      c = -1.0;
    } else if (coef == "+") {
      c = 1.0;
    } else if (!coef.empty()) {
      c = parse_number(coef.front() == '+' ? coef.substr(1) : coef, t);
    }
    return c * std::numbers::pi;
  }
  return parse_number(lower.front() == '+' ? lower.substr(1) : lower, t);
}

std::vector<double> parse_reals(const std::string& text) {
  std::vector<double> out;
  for (const auto& item : split(text, ',')) {
    if (!item.empty()) out.push_back(parse_real(item));
  }
  return out;
}

std::vector<stats::Interval> parse_intervals(const std::string& text) {
  std::vector<stats::Interval> out;
  for (const auto& item : split(text, ',')) {
    if (item.empty()) continue;
    const auto colon = item.find(':');
    if (colon == std::string::npos) {
      throw ConfigError("interval '" + item + "' must look like lo:hi, e.g. 0:2pi");
    }
    out.push_back({parse_real(item.substr(0, colon)), parse_real(item.substr(colon + 1))});
  }
  return out;
}

namespace {

using Errors = std::vector<std::string>;

double yaml_real(const YAML::Node& n, const std::string& key) {
  if (!n.IsScalar()) throw ConfigError("'" + key + "' must be a number");
  return parse_real(n.Scalar());
}

template <class T>
T yaml_int(const YAML::Node& n, const std::string& key) {
  if (!n.IsScalar()) throw ConfigError("'" + key + "' must be an integer");
  const std::string s = trim(n.Scalar());
  T v{};
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw ConfigError("'" + key + "' must be a nonnegative integer, got '" + s + "'");
  }
  return v;
}

bool yaml_bool(const YAML::Node& n, const std::string& key) {
  try {
    return n.as<bool>();
  } catch (const YAML::Exception&) {
    throw ConfigError("'" + key + "' must be true or false");
  }
}

void check_keys(const YAML::Node& map, const std::set<std::string>& allowed,
                const std::string& where, Errors& errors) {
  for (const auto& kv : map) {
    const auto key = kv.first.as<std::string>();
    if (!allowed.count(key)) {
      std::string list;
      for (const auto& a : allowed) list += (list.empty() ? "" : ", ") + a;
      errors.push_back("unknown key '" + key + "' in " + where + " (known: " + list + ")");
    }
  }
}

std::vector<std::string> expand_suites(const std::vector<std::string>& names, Errors& errors) {
  std::vector<std::string> out;
  for (const auto& n : names) {
    if (n == "all") {
      out = all_suites;
      return out;
    }
    if (std::find(all_suites.begin(), all_suites.end(), n) == all_suites.end()) {
      errors.push_back("unknown suite '" + n +
                       "' (marginal, intensity, exit, independence, coupling, all)");
      continue;
    }
    if (std::find(out.begin(), out.end(), n) == out.end()) out.push_back(n);
  }
  // Canonical order.
  std::vector<std::string> ordered;
  for (const auto& s : all_suites) {
    if (std::find(out.begin(), out.end(), s) != out.end()) ordered.push_back(s);
  }
  return ordered;
}

void read_yaml(const std::filesystem::path& file, RunConfig& c, bool& lambdas_given,
               Errors& errors) {
  YAML::Node root;
  try {
    root = YAML::LoadFile(file.string());
  } catch (const YAML::Exception& e) {
    throw ConfigError("cannot read config " + file.string() + ": " + e.what());
  }
  if (root.IsNull()) return;
  if (!root.IsMap()) throw ConfigError("config " + file.string() + " must be a mapping");
  check_keys(root,
             {"mode", "beta", "lambdas", "intervals", "replicates", "seed", "output_dir",
              "suites", "workers", "integrator", "checkpoints", "thresholds", "welltime",
              "coupling"},
             "the config root", errors);
  auto get = [&](const char* key, auto&& fn) {
    if (root[key]) {
      try {
        fn(root[key]);
      } catch (const ConfigError& e) {
        errors.push_back(e.what());
      }
    }
  };
  get("mode", [&](const YAML::Node& n) { c.mode = parse_mode(n.as<std::string>()); });
  get("beta", [&](const YAML::Node& n) { c.params.beta = yaml_real(n, "beta"); });
  get("lambdas", [&](const YAML::Node& n) {
    if (!n.IsSequence()) throw ConfigError("'lambdas' must be a list, e.g. [0, 2pi, 4pi]");
    c.params.lambdas.clear();
    for (const auto& v : n) c.params.lambdas.push_back(yaml_real(v, "lambdas"));
    lambdas_given = true;
  });
  get("intervals", [&](const YAML::Node& n) {
    if (!n.IsSequence()) {
      throw ConfigError("'intervals' must be a list of pairs, e.g. [[0, 2pi], [4pi, 6pi]]");
    }
    c.intervals.clear();
    for (const auto& v : n) {
      if (!v.IsSequence() || v.size() != 2) {
        throw ConfigError("each interval must be a pair [lo, hi]");
      }
      c.intervals.push_back({yaml_real(v[0], "intervals"), yaml_real(v[1], "intervals")});
    }
  });
  get("replicates", [&](const YAML::Node& n) { c.replicates = yaml_int<std::uint64_t>(n, "replicates"); });
  get("seed", [&](const YAML::Node& n) { c.seed = yaml_int<std::uint64_t>(n, "seed"); });
  get("output_dir", [&](const YAML::Node& n) { c.output_dir = n.as<std::string>(); });
  get("suites", [&](const YAML::Node& n) {
    std::vector<std::string> names;
    if (n.IsScalar()) {
      names = split(n.Scalar(), ',');
    } else {
      for (const auto& v : n) names.push_back(v.as<std::string>());
    }
    c.suites = expand_suites(names, errors);
  });
  get("workers", [&](const YAML::Node& n) { c.workers = yaml_int<int>(n, "workers"); });
  get("checkpoints", [&](const YAML::Node& n) { c.checkpoints = yaml_int<std::size_t>(n, "checkpoints"); });
  get("integrator", [&](const YAML::Node& n) {
    check_keys(n, {"step", "horizon", "settle_band"}, "integrator", errors);
    if (n["step"]) c.settings.step = yaml_real(n["step"], "integrator.step");
    if (n["horizon"]) c.settings.horizon_rescaled = yaml_real(n["horizon"], "integrator.horizon");
    if (n["settle_band"]) c.settings.settle_band = yaml_real(n["settle_band"], "integrator.settle_band");
  });
  get("thresholds", [&](const YAML::Node& n) {
    check_keys(n, {"max_tv", "intensity_tolerance", "max_unsettled_fraction"}, "thresholds", errors);
    if (n["max_tv"]) c.max_tv = yaml_real(n["max_tv"], "thresholds.max_tv");
    if (n["intensity_tolerance"]) c.intensity_tolerance = yaml_real(n["intensity_tolerance"], "thresholds.intensity_tolerance");
    if (n["max_unsettled_fraction"]) c.max_unsettled_fraction = yaml_real(n["max_unsettled_fraction"], "thresholds.max_unsettled_fraction");
  });
  get("welltime", [&](const YAML::Node& n) {
    check_keys(n, {"method", "beta", "lambda", "r", "theta0", "samples", "xi", "ks_margin", "rel_tol"},
               "welltime", errors);
    auto& w = c.welltime;
    if (n["method"]) w.method = n["method"].as<std::string>();
    if (n["beta"]) w.beta = yaml_real(n["beta"], "welltime.beta");
    if (n["lambda"]) w.lambda = yaml_real(n["lambda"], "welltime.lambda");
    if (n["r"]) w.r = yaml_real(n["r"], "welltime.r");
    if (n["theta0"]) w.theta0 = yaml_real(n["theta0"], "welltime.theta0");
    if (n["samples"]) w.samples = yaml_int<std::size_t>(n["samples"], "welltime.samples");
    if (n["xi"]) w.xi = yaml_real(n["xi"], "welltime.xi");
    if (n["ks_margin"]) w.ks_margin = yaml_real(n["ks_margin"], "welltime.ks_margin");
    if (n["rel_tol"]) w.rel_tol = yaml_real(n["rel_tol"], "welltime.rel_tol");
  });
  get("coupling", [&](const YAML::Node& n) {
    check_keys(n, {"pair", "min_inclusion", "fast_reach", "reach_epsilon", "reach_samples",
                   "reach_min_probability"},
               "coupling", errors);
    auto& k = c.coupling;
    if (n["pair"]) {
      const auto& p = n["pair"];
      if (!p.IsSequence() || p.size() != 2) throw ConfigError("coupling.pair must be [lambda, lambda']");
      k.pair = std::make_pair(yaml_real(p[0], "coupling.pair"), yaml_real(p[1], "coupling.pair"));
    }
    if (n["min_inclusion"]) k.min_inclusion = yaml_real(n["min_inclusion"], "coupling.min_inclusion");
    if (n["fast_reach"]) k.fast_reach = yaml_bool(n["fast_reach"], "coupling.fast_reach");
    if (n["reach_epsilon"]) k.reach_epsilon = yaml_real(n["reach_epsilon"], "coupling.reach_epsilon");
    if (n["reach_samples"]) k.reach_samples = yaml_int<std::size_t>(n["reach_samples"], "coupling.reach_samples");
    if (n["reach_min_probability"]) k.reach_min_probability = yaml_real(n["reach_min_probability"], "coupling.reach_min_probability");
  });
}

bool needs_simulation(const RunConfig& c) {
  if (c.mode == Mode::simulate) return true;
  if (c.mode != Mode::verify) return false;
  return std::any_of(c.suites.begin(), c.suites.end(),
                     [](const std::string& s) { return s != "exit"; });
}

bool has_suite(const RunConfig& c, const std::string& s) {
  return std::find(c.suites.begin(), c.suites.end(), s) != c.suites.end();
}

void finalize_impl(RunConfig& c, bool lambdas_given, Errors& errors) {
  if (c.mode == Mode::verify && c.suites.empty()) c.suites = all_suites;

  c.effective_intervals.clear();
  for (const auto& iv : c.intervals) {
    if (!(iv.hi >= iv.lo)) {
      errors.push_back("interval [" + std::to_string(iv.lo) + ", " + std::to_string(iv.hi) +
                       "] has hi < lo");
      continue;
    }
    // Counts are translation invariant in law, so [l, l'] with l < 0 is
    // simulated as [0, l' - l].
    if (iv.lo < 0.0) {
      c.effective_intervals.push_back({0.0, iv.hi - iv.lo});
    } else {
      c.effective_intervals.push_back(iv);
    }
  }

  auto& grid = c.params.lambdas;
  if (!lambdas_given) {
    std::vector<double> pts;
    for (const auto& iv : c.effective_intervals) {
      pts.push_back(iv.lo);
      pts.push_back(iv.hi);
    }
    if (c.coupling.pair && has_suite(c, "coupling")) {
      pts.push_back(c.coupling.pair->first);
      pts.push_back(c.coupling.pair->second);
    }
    std::sort(pts.begin(), pts.end());
    grid.clear();
    for (double p : pts) {
      if (grid.empty() || !stats::grid_index(grid, p)) grid.push_back(p);
    }
  } else {
    for (const auto& iv : c.effective_intervals) {
      for (double e : {iv.lo, iv.hi}) {
        if (!stats::grid_index(grid, e)) {
          errors.push_back("interval endpoint " + std::to_string(e) +
                           " is not in the lambda grid; add it to 'lambdas'");
        }
      }
    }
  }

  if (!needs_simulation(c)) {
    if (c.mode == Mode::welltime) {
      if (c.welltime.method != "quadrature" && c.welltime.method != "mc") {
        errors.push_back("welltime.method must be 'quadrature' or 'mc'");
      }
      if (c.welltime.method == "mc" && !c.seed) {
        errors.push_back("a seed is required for Monte Carlo runs (--seed or 'seed:')");
      }
    }
    if (c.mode == Mode::verify && has_suite(c, "exit") && !c.seed) {
      errors.push_back("a seed is required (--seed or 'seed:'); there is no clock default");
    }
    return;
  }

  if (!c.seed) errors.push_back("a seed is required (--seed or 'seed:'); there is no clock default");
  if (c.replicates < 1) errors.push_back("replicates must be at least 1");
  try {
    for (const auto& w : sde::validate(c.params)) (void)w;
    sde::validate(c.settings);
  } catch (const std::invalid_argument& e) {
    errors.push_back(e.what());
  }
  if (c.mode != Mode::verify) return;

  if (has_suite(c, "marginal")) {
    if (c.effective_intervals.empty()) errors.push_back("suite 'marginal' needs at least one interval");
    if (c.replicates < 500) errors.push_back("suite 'marginal' needs at least 500 replicates");
  }
  if (has_suite(c, "independence")) {
    bool any = false;
    for (std::size_t i = 0; i < c.effective_intervals.size(); ++i) {
      for (std::size_t j = i + 1; j < c.effective_intervals.size(); ++j) {
        const auto& a = c.effective_intervals[i];
        const auto& b = c.effective_intervals[j];
        any = any || !(std::max(a.lo, b.lo) < std::min(a.hi, b.hi));
      }
    }
    if (!any) errors.push_back("suite 'independence' needs two disjoint intervals");
    if (c.replicates < 1000) errors.push_back("suite 'independence' needs at least 1000 replicates");
  }
  if (has_suite(c, "intensity")) {
    if (std::none_of(grid.begin(), grid.end(), [](double l) { return l > 0.0; })) {
      errors.push_back("suite 'intensity' needs a positive lambda in the grid");
    }
    if (c.replicates < 2) errors.push_back("suite 'intensity' needs at least 2 replicates");
  }
  if (has_suite(c, "coupling")) {
    if (c.coupling.pair) {
      for (double e : {c.coupling.pair->first, c.coupling.pair->second}) {
        if (!stats::grid_index(grid, e)) {
          errors.push_back("coupling.pair value " + std::to_string(e) + " is not in the lambda grid");
        }
      }
      if (!(c.coupling.pair->first < c.coupling.pair->second)) {
        errors.push_back("coupling.pair must be ascending");
      }
    } else if (std::count_if(grid.begin(), grid.end(), [](double l) { return l > 0.0; }) < 2) {
      errors.push_back("suite 'coupling' needs two positive lambdas or coupling.pair");
    }
    if (c.coupling.fast_reach &&
        !(c.coupling.reach_epsilon > 0.0 && c.coupling.reach_epsilon < 1.0)) {
      errors.push_back("coupling.reach_epsilon must lie in (0, 1)");
    }
    if (c.coupling.fast_reach && !(c.params.beta < 1.0)) {
      errors.push_back("the fast reach probe needs beta < 1");
    }
  }
}

void throw_if(const Errors& errors) {
  if (errors.empty()) return;
  std::string msg = "invalid configuration:";
  for (const auto& e : errors) msg += "\n  - " + e;
  throw ConfigError(msg);
}

}  // namespace

void finalize(RunConfig& config) {
  Errors errors;
  finalize_impl(config, !config.params.lambdas.empty(), errors);
  throw_if(errors);
}

RunConfig load_config(const std::optional<std::filesystem::path>& file,
                      const Overrides& o) {
  RunConfig c;
  Errors errors;
  bool lambdas_given = false;
  if (file) read_yaml(*file, c, lambdas_given, errors);

  auto apply = [&](auto&& fn) {
    try {
      fn();
    } catch (const ConfigError& e) {
      errors.push_back(e.what());
    }
  };
  if (o.mode) c.mode = *o.mode;
  if (o.beta) c.params.beta = *o.beta;
  if (o.lambdas) apply([&] {
      c.params.lambdas = parse_reals(*o.lambdas);
      lambdas_given = true;
    });
  if (o.intervals) apply([&] { c.intervals = parse_intervals(*o.intervals); });
  if (o.replicates) c.replicates = *o.replicates;
  if (o.seed) c.seed = *o.seed;
  if (o.output_dir) c.output_dir = *o.output_dir;
  if (o.suites) c.suites = expand_suites(split(*o.suites, ','), errors);
  if (o.workers) c.workers = *o.workers;
  if (o.step) c.settings.step = *o.step;
  if (o.horizon) c.settings.horizon_rescaled = *o.horizon;
  if (o.welltime_method) c.welltime.method = *o.welltime_method;
  if (o.welltime_beta) c.welltime.beta = *o.welltime_beta;
  if (o.welltime_lambda) c.welltime.lambda = *o.welltime_lambda;
  if (o.welltime_r) apply([&] { c.welltime.r = parse_real(*o.welltime_r); });
  if (o.welltime_theta0) apply([&] { c.welltime.theta0 = parse_real(*o.welltime_theta0); });
  if (o.welltime_samples) c.welltime.samples = *o.welltime_samples;
  if (o.welltime_xi) c.welltime.xi = *o.welltime_xi;
  if (const char* env = std::getenv("SINEBETA_OUTPUT_DIR"); env && *env) c.output_dir = env;

  if (errors.empty()) finalize_impl(c, lambdas_given, errors);
  throw_if(errors);
  return c;
}

nlohmann::json canonical_json(const RunConfig& c) {
  nlohmann::json j;
  j["mode"] = to_string(c.mode);
  j["beta"] = c.params.beta;
  j["lambdas"] = c.params.lambdas;
  auto ivs = nlohmann::json::array();
  for (const auto& iv : c.intervals) ivs.push_back({iv.lo, iv.hi});
  j["intervals"] = ivs;
  j["replicates"] = c.replicates;
  j["seed"] = c.seed ? nlohmann::json(*c.seed) : nlohmann::json(nullptr);
  j["suites"] = c.suites;
  j["integrator"] = {{"step", c.settings.step},
                     {"horizon", c.settings.horizon_rescaled},
                     {"settle_band", c.settings.settle_band}};
  j["checkpoints"] = c.checkpoints;
  j["thresholds"] = {{"max_tv", c.max_tv},
                     {"intensity_tolerance", c.intensity_tolerance},
                     {"max_unsettled_fraction", c.max_unsettled_fraction}};
  const auto& w = c.welltime;
  j["welltime"] = {{"method", w.method},   {"beta", w.beta},
                   {"lambda", w.lambda},   {"r", w.r ? nlohmann::json(*w.r) : nullptr},
                   {"theta0", w.theta0 ? nlohmann::json(*w.theta0) : nullptr},
                   {"samples", w.samples}, {"xi", w.xi},
                   {"ks_margin", w.ks_margin}, {"rel_tol", w.rel_tol}};
  const auto& k = c.coupling;
  j["coupling"] = {
      {"pair", k.pair ? nlohmann::json({k.pair->first, k.pair->second}) : nlohmann::json(nullptr)},
      {"min_inclusion", k.min_inclusion},
      {"fast_reach", k.fast_reach},
      {"reach_epsilon", k.reach_epsilon},
      {"reach_samples", k.reach_samples},
      {"reach_min_probability", k.reach_min_probability}};
  return j;
}

std::string config_hash(const RunConfig& config) {
  const std::string text = canonical_json(config).dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace sinebeta::harness
