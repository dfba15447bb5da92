#ifndef SEMIPAR_TOOLS_CLI_APP_HPP
#define SEMIPAR_TOOLS_CLI_APP_HPP

#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "semipar/semipar.hpp"

namespace semipar::cli {

using nlohmann::json;

enum ExitCode : int { ok = 0, config_error = 2, numerical_error = 3 };

/// Invalid configuration; `field()` is the dotted path of the culprit.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string field, const std::string& message)
      : std::runtime_error("field '" + field + "': " + message), field_(std::move(field)) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

// ---------------------------------------------------------------------------
// Number formatting
// ---------------------------------------------------------------------------

inline std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

namespace detail {

inline void emit(const json& j, std::ostream& os, int indent, int depth) {
  const std::string pad(static_cast<std::size_t>(indent * (depth + 1)), ' ');
  const std::string close(static_cast<std::size_t>(indent * depth), ' ');
  switch (j.type()) {
    case json::value_t::object: {
      if (j.empty()) { os << "{}"; return; }
      os << "{\n";
      bool first = true;
      for (auto it = j.begin(); it != j.end(); ++it) {
        if (!first) os << ",\n";
        first = false;
        os << pad << json(it.key()).dump() << ": ";
        emit(it.value(), os, indent, depth + 1);
      }
      os << "\n" << close << "}";
      return;
    }
    case json::value_t::array: {
      if (j.empty()) { os << "[]"; return; }
      os << "[";
      for (std::size_t i = 0; i < j.size(); ++i) {
        if (i) os << ", ";
        emit(j[i], os, indent, depth + 1);
      }
      os << "]";
      return;
    }
    case json::value_t::number_float: {
      const double v = j.get<double>();
      if (std::isfinite(v)) os << format_double(v);
      else os << "null";
      return;
    }
    default:
      os << j.dump();
  }
}

}  // namespace detail

/// JSON text with every float at 17 significant digits.
inline std::string dump_json(const json& j) {
  std::ostringstream os;
  detail::emit(j, os, 2, 0);
  os << "\n";
  return os.str();
}

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

struct Truncation {
  std::optional<std::size_t> s;
  std::optional<int> q;
  std::optional<std::size_t> p;
};

struct RunConfig {
  json object;  // validated source description, kept for re-emission
  PsfKind psf = PsfKind::gaussian;
  double tau = 1.0;
  std::string measurement = "spade";  // direct | spade | both
  std::vector<std::size_t> indices;
  std::optional<std::vector<double>> weights;
  std::size_t trials = 0;
  std::uint64_t seed = 0;
  Truncation truncation;
  std::string format = "json";
  std::string path;  // empty = stdout

  ObjectModel model() const;
  PointSpreadFunction point_spread() const { return {psf, tau}; }

  /// One estimand per index, or a single combination when weights are given.
  std::vector<EstimandSpec> estimands() const {
    std::vector<EstimandSpec> out;
    if (weights) {
      std::size_t top = 0;
      for (auto i : indices) top = std::max(top, i);
      std::vector<double> u(top + 1, 0.0);
      for (std::size_t n = 0; n < indices.size(); ++n) u[indices[n]] += (*weights)[n];
      out.emplace_back(std::move(u));
    } else {
      for (auto i : indices) out.push_back(EstimandSpec::unit(i));
    }
    return out;
  }
};

namespace detail {

inline const json& field(const json& j, const std::string& key, const std::string& path) {
  if (!j.is_object() || !j.contains(key)) throw ConfigError(path + key, "missing");
  return j.at(key);
}

inline double number(const json& j, const std::string& path) {
  if (!j.is_number()) throw ConfigError(path, "must be a number");
  const double v = j.get<double>();
  if (!std::isfinite(v)) throw ConfigError(path, "must be finite");
  return v;
}

inline std::uint64_t count(const json& j, const std::string& path) {
  if (j.is_number_unsigned()) return j.get<std::uint64_t>();
  if (j.is_number_integer()) {
    if (j.get<std::int64_t>() < 0) throw ConfigError(path, "must be >= 0");
    return static_cast<std::uint64_t>(j.get<std::int64_t>());
  }
  if (j.is_number_float()) {
    const double v = j.get<double>();
    if (v >= 0.0 && v == std::floor(v) && v < 1.8e19) return static_cast<std::uint64_t>(v);
  }
  throw ConfigError(path, "must be a nonnegative integer");
}

inline std::vector<double> number_array(const json& j, const std::string& path) {
  if (!j.is_array()) throw ConfigError(path, "must be an array of numbers");
  std::vector<double> out;
  for (std::size_t i = 0; i < j.size(); ++i)
    out.push_back(number(j[i], path + "[" + std::to_string(i) + "]"));
  return out;
}

inline std::string string(const json& j, const std::string& path) {
  if (!j.is_string()) throw ConfigError(path, "must be a string");
  return j.get<std::string>();
}

inline ObjectModel build_object(const json& o) {
  const std::string type = string(field(o, "type", "object."), "object.type");
  try {
    if (type == "flat_top") {
      const double theta0 = number(field(o, "theta0", "object."), "object.theta0");
      const double delta = number(field(o, "delta", "object."), "object.delta");
      if (!(theta0 > 0.0)) throw ConfigError("object.theta0", "must be > 0");
      if (delta < 0.0) throw ConfigError("object.delta", "must be >= 0");
      return ObjectModel::flat_top(theta0, delta);
    }
    if (type == "point_sources") {
      auto pos = number_array(field(o, "positions", "object."), "object.positions");
      auto w = number_array(field(o, "weights", "object."), "object.weights");
      if (pos.size() != w.size()) throw ConfigError("object.weights", "length must match positions");
      return ObjectModel::point_sources(std::move(pos), std::move(w));
    }
    if (type == "tabulated") {
      auto grid = number_array(field(o, "grid", "object."), "object.grid");
      auto density = number_array(field(o, "density", "object."), "object.density");
      if (grid.size() != density.size()) throw ConfigError("object.density", "length must match grid");
      return ObjectModel::tabulated(std::move(grid), std::move(density));
    }
  } catch (const Error& e) {
    throw ConfigError("object", e.what());
  }
  throw ConfigError("object.type", "must be flat_top, point_sources or tabulated");
}

}  // namespace detail

inline ObjectModel RunConfig::model() const { return detail::build_object(object); }

/// Parses and validates a RunConfig document.
inline RunConfig parse_run_config(const json& j) {
  using namespace detail;
  if (!j.is_object()) throw ConfigError("<root>", "must be a JSON object");
  RunConfig c;

  c.object = field(j, "object", "");
  build_object(c.object);

  const json& psf = field(j, "psf", "");
  const std::string kind = string(field(psf, "type", "psf."), "psf.type");
  if (kind == "gaussian") c.psf = PsfKind::gaussian;
  else if (kind == "bandlimited") c.psf = PsfKind::bandlimited;
  else throw ConfigError("psf.type", "must be gaussian or bandlimited");
  c.tau = number(field(psf, "tau", "psf."), "psf.tau");
  if (!(c.tau > 0.0)) throw ConfigError("psf.tau", "must be > 0");

  if (j.contains("measurement")) {
    c.measurement = string(j["measurement"], "measurement");
    if (c.measurement != "direct" && c.measurement != "spade" && c.measurement != "both")
      throw ConfigError("measurement", "must be direct, spade or both");
  }

  const json& est = field(j, "estimand", "");
  const json& idx = field(est, "indices", "estimand.");
  if (!idx.is_array() || idx.empty()) throw ConfigError("estimand.indices", "must be a nonempty array");
  for (std::size_t i = 0; i < idx.size(); ++i) {
    const auto k = count(idx[i], "estimand.indices[" + std::to_string(i) + "]");
    if (k > 40) throw ConfigError("estimand.indices[" + std::to_string(i) + "]", "must be <= 40");
    c.indices.push_back(static_cast<std::size_t>(k));
  }
  if (est.contains("weights") && !est["weights"].is_null()) {
    c.weights = number_array(est["weights"], "estimand.weights");
    if (c.weights->size() != c.indices.size())
      throw ConfigError("estimand.weights", "length must match estimand.indices");
  }

  if (j.contains("trials")) c.trials = count(j["trials"], "trials");
  if (j.contains("seed")) c.seed = count(j["seed"], "seed");

  if (j.contains("truncation")) {
    const json& t = j["truncation"];
    if (!t.is_object()) throw ConfigError("truncation", "must be an object");
    if (t.contains("s") && !t["s"].is_null()) {
      c.truncation.s = count(t["s"], "truncation.s");
      if (*c.truncation.s < 1) throw ConfigError("truncation.s", "must be >= 1");
    }
    if (t.contains("Q") && !t["Q"].is_null()) {
      const auto q = count(t["Q"], "truncation.Q");
      if (q > 5000) throw ConfigError("truncation.Q", "must be <= 5000");
      c.truncation.q = static_cast<int>(q);
    }
    if (t.contains("p") && !t["p"].is_null()) {
      c.truncation.p = count(t["p"], "truncation.p");
      if (*c.truncation.p < 1 || *c.truncation.p > 40) throw ConfigError("truncation.p", "must be in [1, 40]");
    }
  }

  if (j.contains("output")) {
    const json& o = j["output"];
    if (!o.is_object()) throw ConfigError("output", "must be an object");
    if (o.contains("format")) {
      c.format = string(o["format"], "output.format");
      if (c.format != "json" && c.format != "csv") throw ConfigError("output.format", "must be json or csv");
    }
    if (o.contains("path") && !o["path"].is_null()) c.path = string(o["path"], "output.path");
  }
  return c;
}

inline json to_json(const RunConfig& c) {
  json j;
  j["object"] = c.object;
  j["psf"] = {{"type", to_string(c.psf)}, {"tau", c.tau}};
  j["measurement"] = c.measurement;
  j["estimand"] = {{"indices", c.indices}};
  if (c.weights) j["estimand"]["weights"] = *c.weights;
  j["trials"] = c.trials;
  j["seed"] = c.seed;
  json t = json::object();
  if (c.truncation.s) t["s"] = *c.truncation.s;
  if (c.truncation.q) t["Q"] = *c.truncation.q;
  if (c.truncation.p) t["p"] = *c.truncation.p;
  j["truncation"] = t;
  j["output"] = {{"format", c.format}};
  if (!c.path.empty()) j["output"]["path"] = c.path;
  return j;
}

inline json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("--config", "cannot open '" + path + "'");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("--config", std::string("malformed JSON: ") + e.what());
  }
}

inline RunConfig load_run_config(const std::string& path) {
  return parse_run_config(read_json_file(path));
}

// ---------------------------------------------------------------------------
// Trial reports
// ---------------------------------------------------------------------------

inline json to_json(const TrialReport& r) {
  return {{"trials", r.trials},
          {"beta", r.beta},
          {"mean", r.mean},
          {"variance", r.variance},
          {"standard_error", r.standard_error},
          {"crb", r.crb},
          {"variance_to_crb", r.variance_to_crb},
          {"master_seed", r.master_seed},
          {"seeds", r.seeds}};
}

inline TrialReport parse_trial_report(const json& j) {
  using namespace detail;
  TrialReport r;
  r.trials = count(field(j, "trials", ""), "trials");
  if (r.trials < 2) throw ConfigError("trials", "must be >= 2");
  r.beta = number(field(j, "beta", ""), "beta");
  r.mean = number(field(j, "mean", ""), "mean");
  r.variance = number(field(j, "variance", ""), "variance");
  if (r.variance < 0.0) throw ConfigError("variance", "must be >= 0");
  r.standard_error = number(field(j, "standard_error", ""), "standard_error");
  r.crb = number(field(j, "crb", ""), "crb");
  r.variance_to_crb = number(field(j, "variance_to_crb", ""), "variance_to_crb");
  r.master_seed = count(field(j, "master_seed", ""), "master_seed");
  const json& seeds = field(j, "seeds", "");
  if (!seeds.is_array() || seeds.size() != r.trials) throw ConfigError("seeds", "must hold one seed per trial");
  for (std::size_t i = 0; i < seeds.size(); ++i)
    r.seeds.push_back(count(seeds[i], "seeds[" + std::to_string(i) + "]"));
  return r;
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

inline unsigned thread_count() {
  if (const char* env = std::getenv("SEMIPAR_THREADS")) {
    char* end = nullptr;
    const long n = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && n > 0) return static_cast<unsigned>(n);
    throw ConfigError("SEMIPAR_THREADS", "must be a positive integer");
  }
  return hardware_threads();
}

namespace detail {

inline std::vector<Measurement> measurements(const RunConfig& c) {
  if (c.measurement == "direct") return {Measurement::direct};
  if (c.measurement == "spade") return {Measurement::spade};
  return {Measurement::direct, Measurement::spade};
}

inline json nullable(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

inline std::string csv_cell(const std::optional<double>& v) { return v ? format_double(*v) : ""; }

}  // namespace detail

/// {method, k, crb, constrained_crb} per estimand and measurement.
inline std::string cmd_crb(const RunConfig& c) {
  const ObjectModel model = c.model();
  const PointSpreadFunction psf = c.point_spread();
  json rows = json::array();
  std::ostringstream csv;
  csv << "method,k,crb,constrained_crb\n";
  for (const auto& spec : c.estimands()) {
    const std::size_t k = spec.highest_index();
    if (c.truncation.s && *c.truncation.s < k + 1)
      throw ConfigError("truncation.s", "must exceed the highest estimand index");
    for (Measurement m : detail::measurements(c)) {
      double crb = 0.0;
      std::optional<double> constrained;
      if (m == Measurement::direct) {
        if (c.psf != PsfKind::gaussian)
          throw ConfigError("psf.type", "direct imaging needs the gaussian PSF");
        if (c.truncation.s) {
          const Eigen::MatrixXd inv = inverse_information_direct(model, psf, *c.truncation.s);
          Eigen::VectorXd u = Eigen::VectorXd::Zero(inv.rows());
          for (Eigen::Index j = 0; j < u.size(); ++j) u(j) = spec.weight(static_cast<std::size_t>(j));
          crb = u.dot(inv * u);
        } else {
          crb = crb_direct(model, psf, spec);
        }
        if (spec.weight(0) == 0.0) constrained = constrained_crb_direct(model, psf, spec);
      } else {
        if (!spec.is_even()) throw ConfigError("estimand.indices", "SPADE bounds need even indices");
        const int q = c.truncation.q.value_or(default_truncation(model, psf));
        crb = crb_spade(model, psf, spec, q);
        if (spec.weight(0) == 0.0) constrained = constrained_crb_spade(model, psf, spec, q);
      }
      rows.push_back({{"method", to_string(m)},
                      {"k", k},
                      {"crb", crb},
                      {"constrained_crb", detail::nullable(constrained)}});
      csv << to_string(m) << ',' << k << ',' << format_double(crb) << ','
          << detail::csv_cell(constrained) << '\n';
    }
  }
  if (c.format == "csv") return csv.str();
  return dump_json({{"command", "crb"}, {"rows", rows}});
}

/// Runs the Monte Carlo trials of one estimand under one measurement.
inline std::pair<TrialReport, Measurement> simulate(const RunConfig& c) {
  if (c.trials < 2) throw ConfigError("trials", "must be >= 2");
  if (c.measurement == "both") throw ConfigError("measurement", "simulate needs direct or spade");
  const auto specs = c.estimands();
  if (specs.size() != 1)
    throw ConfigError("estimand.indices", "simulate needs a single estimand (one index, or weights)");
  const Measurement m = c.measurement == "direct" ? Measurement::direct : Measurement::spade;
  if (m == Measurement::spade && !specs[0].is_even())
    throw ConfigError("estimand.indices", "SPADE estimators need even indices");
  if (m == Measurement::direct && c.psf != PsfKind::gaussian)
    throw ConfigError("psf.type", "direct imaging needs the gaussian PSF");
  TrialConfig tc{c.model(), c.point_spread(), m, specs[0], c.trials, c.seed, c.truncation.q};
  return {run_trials(tc, thread_count()), m};
}

inline std::string cmd_simulate(const RunConfig& c) {
  const auto [report, m] = simulate(c);
  if (c.format == "csv") {
    std::ostringstream os;
    os << "method,trials,beta,mean,variance,standard_error,crb,variance_to_crb,master_seed\n"
       << to_string(m) << ',' << report.trials << ',' << format_double(report.beta) << ','
       << format_double(report.mean) << ',' << format_double(report.variance) << ','
       << format_double(report.standard_error) << ',' << format_double(report.crb) << ','
       << format_double(report.variance_to_crb) << ',' << report.master_seed << '\n';
    return os.str();
  }
  json j = to_json(report);
  j["method"] = to_string(m);
  j["config"] = to_json(c);
  return dump_json(j);
}

struct Fig3Options {
  double delta_min = 0.01;
  double delta_max = 3.0;
  std::size_t points = 100;
  double tau = 1e4;
  double theta0 = 1.0;
};

inline std::string comparison_csv(const std::vector<ComparisonRow>& rows, bool with_ratio) {
  std::ostringstream os;
  os << (with_ratio ? "delta,crb_direct,crb_spade,ratio\n" : "delta,crb_direct,crb_spade\n");
  for (const auto& r : rows) {
    os << format_double(r.delta) << ',' << format_double(r.crb_direct) << ','
       << format_double(r.crb_spade);
    if (with_ratio) os << ',' << format_double(r.ratio);
    os << '\n';
  }
  return os.str();
}

/// Both second-moment bounds over a log-spaced delta grid (Gaussian PSF).
inline std::string cmd_reproduce_fig3(const Fig3Options& o) {
  if (!(o.delta_min > 0.0)) throw ConfigError("--delta-min", "must be > 0");
  if (!(o.delta_max > o.delta_min)) throw ConfigError("--delta-max", "must exceed --delta-min");
  if (o.points < 2) throw ConfigError("--points", "must be >= 2");
  if (!(o.tau > 0.0)) throw ConfigError("--tau", "must be > 0");
  if (!(o.theta0 > 0.0)) throw ConfigError("--theta0", "must be > 0");
  const auto grid = log_spaced(o.delta_min, o.delta_max, o.points);
  const auto rows = compare_methods(o.theta0, PointSpreadFunction::gaussian(o.tau),
                                    EstimandSpec::unit(2), grid);
  return comparison_csv(rows, false);
}

/// Method comparison for the configured flat-top object, over the delta grid
/// given by the optional "compare" block.
inline std::string cmd_compare(const RunConfig& c, const json& raw) {
  if (c.object.value("type", "") != "flat_top")
    throw ConfigError("object.type", "compare needs a flat_top object");
  const double theta0 = c.object["theta0"].get<double>();
  std::vector<double> grid{c.object["delta"].get<double>()};
  if (raw.contains("compare")) {
    const json& cmp = raw["compare"];
    const double lo = detail::number(detail::field(cmp, "delta_min", "compare."), "compare.delta_min");
    const double hi = detail::number(detail::field(cmp, "delta_max", "compare."), "compare.delta_max");
    const auto n = detail::count(detail::field(cmp, "points", "compare."), "compare.points");
    if (!(lo > 0.0)) throw ConfigError("compare.delta_min", "must be > 0");
    if (!(hi > lo)) throw ConfigError("compare.delta_max", "must exceed compare.delta_min");
    if (n < 2) throw ConfigError("compare.points", "must be >= 2");
    grid = log_spaced(lo, hi, static_cast<std::size_t>(n));
  }
  const auto specs = c.estimands();
  if (specs.size() != 1) throw ConfigError("estimand.indices", "compare needs a single estimand");
  if (!specs[0].is_even()) throw ConfigError("estimand.indices", "compare needs even indices");
  if (c.psf != PsfKind::gaussian) throw ConfigError("psf.type", "compare needs the gaussian PSF");
  const auto rows = compare_methods(theta0, c.point_spread(), specs[0], grid);
  if (c.format == "csv") return comparison_csv(rows, true);
  json out = json::array();
  for (const auto& r : rows)
    out.push_back({{"delta", r.delta}, {"crb_direct", r.crb_direct}, {"crb_spade", r.crb_spade},
                   {"ratio", r.ratio}});
  return dump_json({{"command", "compare"}, {"rows", out}, {"gap_monotone", gap_is_monotone(rows)}});
}

// ---------------------------------------------------------------------------
// Entry point
// ---------------------------------------------------------------------------

inline void write_output(const std::string& text, const std::string& path, std::ostream& out) {
  if (path.empty()) {
    out << text;
    return;
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ConfigError("output.path", "cannot write '" + path + "'");
  f << text;
}

/// Parses argv and runs one subcommand; returns the process exit code.
inline int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Semiparametric Cramer-Rao bounds for direct imaging and SPADE"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::uint64_t> trials;
  std::string out_path;
  auto add_common = [&](CLI::App* sub, bool needs_config) {
    auto* opt = sub->add_option("--config", config_path, "JSON run configuration");
    if (needs_config) opt->required();
    sub->add_option("--seed", seed, "master seed override");
    sub->add_option("--trials", trials, "trial count override");
    sub->add_option("--out", out_path, "output path override");
  };
  auto* crb = app.add_subcommand("crb", "semiparametric CRBs");
  auto* sim = app.add_subcommand("simulate", "Monte Carlo trials");
  auto* cmp = app.add_subcommand("compare", "direct vs. SPADE over a delta grid");
  auto* fig = app.add_subcommand("reproduce-fig3", "CSV of both second-moment bounds vs. delta");
  add_common(crb, true);
  add_common(sim, true);
  add_common(cmp, true);
  add_common(fig, false);
  Fig3Options fig3;
  fig->add_option("--delta-min", fig3.delta_min, "smallest delta");
  fig->add_option("--delta-max", fig3.delta_max, "largest delta");
  fig->add_option("--points", fig3.points, "grid size");
  fig->add_option("--tau", fig3.tau, "photons per unit mass");
  fig->add_option("--theta0", fig3.theta0, "object mass");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return config_error;
  }

  try {
    if (fig->parsed()) {
      write_output(cmd_reproduce_fig3(fig3), out_path, out);
      return ok;
    }
    const json raw_config = read_json_file(config_path);
    RunConfig c = parse_run_config(raw_config);
    if (seed) c.seed = *seed;
    if (trials) c.trials = static_cast<std::size_t>(*trials);
    if (!out_path.empty()) c.path = out_path;

    std::string text;
    if (crb->parsed()) text = cmd_crb(c);
    else if (sim->parsed()) text = cmd_simulate(c);
    else text = cmd_compare(c, raw_config);
    write_output(text, c.path, out);
    return ok;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return config_error;
  } catch (const Error& e) {
    err << "numerical error: " << e.what() << '\n';
    return numerical_error;
  } catch (const std::exception& e) {
    err << "numerical error: " << e.what() << '\n';
    return numerical_error;
  }
}

}  // namespace semipar::cli

#endif  // SEMIPAR_TOOLS_CLI_APP_HPP
