#include "ascpipe/dgp.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "ascpipe/csv.hpp"

namespace ascpipe {

namespace {

double surface_variable(const std::string& var, const CovariateRecord& cov, double wetness) {
  if (var == "elevation") return cov.elevation_m;
  if (var == "slope") return cov.slope_deg;
  if (var == "pop_density") return cov.pop_density;
  if (var == "road_density") return cov.road_density;
  if (var == "protected_share") return cov.protected_share;
  if (var == "forest_pct") return cov.forest_pct_base;
  if (var == "forest_ha") return cov.forest_ha_base;
  if (var == "wetness") return wetness;
  if (var == "precPC1") return -wetness;  // higher = drier
  throw std::runtime_error("unknown surface variable '" + var + "'");
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : s) {
    if (ch == sep) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(ch);
    }
  }
  out.push_back(cur);
  return out;
}

}  // namespace

double Surface::eval(const CovariateRecord& cov, double wetness) const {
  switch (kind) {
    case Kind::Constant:
      return value;
    case Kind::Linear:
      return coefficient * surface_variable(var, cov, wetness);
    case Kind::Threshold:
      return surface_variable(var, cov, wetness) < threshold ? below : above;
  }
  throw std::runtime_error("invalid surface");
}

Surface Surface::parse(const std::string& text) {
  auto parts = split(text, ':');
  Surface s;
  if (parts[0] == "const" && parts.size() == 2) {
    s.kind = Kind::Constant;
    s.value = csv::parse_double(parts[1], "surface " + text);
    return s;
  }
  if (parts[0] == "linear" && parts.size() == 3) {
    s.kind = Kind::Linear;
    s.var = parts[1];
    surface_variable(s.var, CovariateRecord{}, 0.0);  // reject unknown names early
    s.coefficient = csv::parse_double(parts[2], "surface " + text);
    return s;
  }
  if (parts[0] == "threshold" && parts.size() == 5) {
    s.kind = Kind::Threshold;
    s.var = parts[1];
    surface_variable(s.var, CovariateRecord{}, 0.0);
    s.threshold = csv::parse_double(parts[2], "surface " + text);
    s.below = csv::parse_double(parts[3], "surface " + text);
    s.above = csv::parse_double(parts[4], "surface " + text);
    return s;
  }
  throw std::runtime_error("cannot parse surface '" + text +
                           "' (expected const:V | linear:VAR:C | threshold:VAR:T:LO:HI)");
}

std::string Surface::describe() const {
  std::ostringstream ss;
  switch (kind) {
    case Kind::Constant:
      ss << "const:" << value;
      break;
    case Kind::Linear:
      ss << "linear:" << var << ":" << coefficient;
      break;
    case Kind::Threshold:
      ss << "threshold:" << var << ":" << threshold << ":" << below << ":" << above;
      break;
  }
  return ss.str();
}

void DgpSpec::validate() const {
  if (n_treated < 1 || n_donors < 1) throw std::runtime_error("DgpSpec: unit counts must be >= 1");
  if (factor_count < 1) throw std::runtime_error("DgpSpec: factor count must be >= 1");
  if (sigma_eps < 0.0 || sigma_nu < 0.0) throw std::runtime_error("DgpSpec: negative noise scale");
  if (shock_year <= year_start || shock_year > year_end) {
    throw std::runtime_error("DgpSpec: shock year must lie within (year_start, year_end]");
  }
  if (shock_year - year_start < 2) throw std::runtime_error("DgpSpec: need >= 2 pre periods");
  if (factor_mode != "walk" && factor_mode != "white") {
    throw std::runtime_error("DgpSpec: factor_mode must be 'walk' or 'white'");
  }
  if (loading_mode != "hull" && loading_mode != "violate") {
    throw std::runtime_error("DgpSpec: loading_mode must be 'hull' or 'violate'");
  }
}

DgpSpec parse_dgp_spec(const std::string& text) {
  DgpSpec spec;
  std::istringstream in(text);
  std::string line;
  auto trim = [](std::string s) {
    size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return std::string();
    size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
  };
  while (std::getline(in, line)) {
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    auto eq = line.find('=');
    if (eq == std::string::npos) throw std::runtime_error("spec line without '=': " + line);
    const std::string key = trim(line.substr(0, eq));
    const std::string val = trim(line.substr(eq + 1));
    if (key == "n1") spec.n_treated = csv::parse_int(val, "spec n1");
    else if (key == "n0") spec.n_donors = csv::parse_int(val, "spec n0");
    else if (key == "year_start") spec.year_start = csv::parse_int(val, "spec year_start");
    else if (key == "year_end") spec.year_end = csv::parse_int(val, "spec year_end");
    else if (key == "shock_year") spec.shock_year = csv::parse_int(val, "spec shock_year");
    else if (key == "factors") spec.factor_count = csv::parse_int(val, "spec factors");
    else if (key == "sigma_eps") spec.sigma_eps = csv::parse_double(val, "spec sigma_eps");
    else if (key == "sigma_nu") spec.sigma_nu = csv::parse_double(val, "spec sigma_nu");
    else if (key == "gamma") spec.gamma = Surface::parse(val);
    else if (key == "delta") spec.delta = Surface::parse(val);
    else if (key == "factor_scale") spec.factor_scale = csv::parse_double(val, "spec factor_scale");
    else if (key == "factor_mode") spec.factor_mode = val;
    else if (key == "loading_mode") spec.loading_mode = val;
    else if (key == "treated_shift") spec.treated_shift = csv::parse_double(val, "spec treated_shift");
    else throw std::runtime_error("unknown spec key '" + key + "'");
  }
  spec.validate();
  return spec;
}

DgpSpec load_dgp_spec(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open spec '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_dgp_spec(ss.str());
}

namespace {

// Madagascar-like seasonal precipitation shape (mm), wet austral summer.
constexpr std::array<double, 12> kSeasonalBase = {250, 240, 200, 120, 60,  30,
                                                  25,  30,  50,  90,  150, 220};

CovariateRecord draw_covariates(std::mt19937_64& rng, bool treated, double treated_shift,
                                double& wetness_out) {
  std::normal_distribution<double> stdnorm(0.0, 1.0);
  CovariateRecord c;
  const double wetness = stdnorm(rng) + (treated ? treated_shift : 0.0);
  wetness_out = wetness;
  for (int m = 0; m < 12; ++m) {
    c.prec_monthly[m] = kSeasonalBase[m] * std::exp(0.35 * wetness + 0.08 * stdnorm(rng));
  }
  const double elev_z = stdnorm(rng) - (treated ? treated_shift : 0.0);
  c.elevation_m = 350.0 * std::exp(0.4 * elev_z);
  c.slope_deg = std::abs(8.0 + 3.0 * stdnorm(rng));
  c.pop_density = std::exp(4.0 + 0.6 * stdnorm(rng));
  c.road_density = std::abs(0.1 + 0.05 * stdnorm(rng));
  c.protected_share = std::clamp(0.06 + 0.05 * stdnorm(rng), 0.0, 1.0);
  c.forest_pct_base = std::clamp(20.0 + 8.0 * stdnorm(rng), 1.0, 95.0);
  const double land_km2 = std::exp(5.3 + 0.4 * stdnorm(rng));
  c.forest_ha_base = land_km2 * c.forest_pct_base;  // km^2 * pct = hectares
  return c;
}

}  // namespace

SimulatedPanel simulate_panel(const DgpSpec& spec, std::uint64_t seed) {
  spec.validate();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> stdnorm(0.0, 1.0);

  const int n1 = spec.n_treated;
  const int n0 = spec.n_donors;
  const int n = n1 + n0;
  const int r = spec.factor_count;
  const int t_count = spec.year_end - spec.year_start + 1;

  SimulatedPanel sim;
  PanelDataset& panel = sim.panel;
  panel.year_start = spec.year_start;
  panel.year_end = spec.year_end;
  panel.shock_year = spec.shock_year;

  // Treated units first, then donors.
  sim.truth.wetness.resize(n);
  for (int i = 0; i < n; ++i) {
    const bool treated = i < n1;
    char id[16];
    std::snprintf(id, sizeof(id), "%c%04d", treated ? 'T' : 'D', treated ? i + 1 : i - n1 + 1);
    panel.units.emplace_back(id);
    panel.exposure.push_back(treated ? 1 : 0);
    panel.covariates.push_back(
        draw_covariates(rng, treated, spec.treated_shift, sim.truth.wetness[i]));
  }

  // Factor loadings: donors first so treated hull draws can reference them.
  std::vector<Eigen::VectorXd> loadings(n);
  for (int j = n1; j < n; ++j) {
    Eigen::VectorXd phi(r);
    for (int k = 0; k < r; ++k) phi[k] = stdnorm(rng);
    loadings[j] = phi;
  }
  for (int i = 0; i < n1; ++i) {
    if (spec.loading_mode == "hull") {
      // Convex combination of a few random donors keeps A5(i) satisfied.
      const int support = std::min(n0, r + 2);
      std::vector<int> pool(n0);
      std::iota(pool.begin(), pool.end(), n1);
      for (int s = 0; s < support; ++s) {
        std::uniform_int_distribution<int> pick(s, n0 - 1);
        std::swap(pool[s], pool[pick(rng)]);
      }
      std::exponential_distribution<double> expo(1.0);
      Eigen::VectorXd phi = Eigen::VectorXd::Zero(r);
      double total = 0.0;
      std::vector<double> w(support);
      for (int s = 0; s < support; ++s) {
        w[s] = expo(rng);
        total += w[s];
      }
      for (int s = 0; s < support; ++s) phi += (w[s] / total) * loadings[pool[s]];
      loadings[i] = phi;
    } else {
      Eigen::VectorXd phi(r);
      for (int k = 0; k < r; ++k) phi[k] = stdnorm(rng) + 3.0;
      loadings[i] = phi;
    }
  }

  // Common factor paths.
  std::vector<Eigen::VectorXd> factors(t_count, Eigen::VectorXd::Zero(r));
  if (spec.factor_mode == "walk") {
    Eigen::VectorXd cur = Eigen::VectorXd::Zero(r);
    double max_norm = 0.0;
    for (int t = 0; t < t_count; ++t) {
      for (int k = 0; k < r; ++k) cur[k] += stdnorm(rng);
      factors[t] = cur;
      max_norm = std::max(max_norm, cur.norm());
    }
    if (max_norm > 0.0) {
      const double target = spec.factor_scale * std::sqrt(static_cast<double>(r));
      for (auto& f : factors) f *= target / max_norm;
    }
  } else {
    for (int t = 0; t < t_count; ++t) {
      for (int k = 0; k < r; ++k) factors[t][k] = spec.factor_scale * stdnorm(rng);
    }
  }

  // Effect surfaces on generated covariates.
  sim.truth.tau_unit.resize(n1);
  sim.truth.delta_unit.resize(n1);
  double delta_sum = 0.0;
  for (int i = 0; i < n1; ++i) {
    const double g = spec.gamma.eval(panel.covariates[i], sim.truth.wetness[i]);
    const double d = spec.delta.eval(panel.covariates[i], sim.truth.wetness[i]);
    if (d < 0.0) {
      throw std::runtime_error("DgpSpec: delta surface negative on a treated unit (violates A3)");
    }
    sim.truth.treated_ids.push_back(panel.units[i]);
    sim.truth.tau_unit[i] = g * d;
    sim.truth.delta_unit[i] = d;
    delta_sum += d;
  }
  if (delta_sum <= 0.0) {
    throw std::runtime_error("DgpSpec: delta surface must be positive on average (violates A3)");
  }
  sim.truth.att = std::accumulate(sim.truth.tau_unit.begin(), sim.truth.tau_unit.end(), 0.0) /
                  static_cast<double>(n1);

  const Eigen::VectorXd rho = Eigen::VectorXd::Ones(r);  // first-stage factor loading
  panel.outcome.assign(n, std::vector<double>(t_count, 0.0));
  sim.truth.income.assign(n, std::vector<double>(t_count, 0.0));
  for (int i = 0; i < n; ++i) {
    const bool treated = i < n1;
    const double g = spec.gamma.eval(panel.covariates[i], sim.truth.wetness[i]);
    const double d = treated ? sim.truth.delta_unit[i] : 0.0;  // delta = 0 off treatment
    for (int t = 0; t < t_count; ++t) {
      const bool post = spec.year_start + t >= spec.shock_year;
      const double nu = spec.sigma_nu > 0.0 ? spec.sigma_nu * stdnorm(rng) : 0.0;
      const double eps = spec.sigma_eps > 0.0 ? spec.sigma_eps * stdnorm(rng) : 0.0;
      const double shock = (treated && post) ? d : 0.0;
      sim.truth.income[i][t] = rho.dot(factors[t]) + shock + nu;
      panel.outcome[i][t] = factors[t].dot(loadings[i]) + g * shock + g * nu + eps;
    }
  }
  panel.validate();
  return sim;
}

std::vector<double> true_att(const SimulatedPanel& sim) {
  const int t1 = sim.panel.year_end - sim.panel.shock_year + 1;
  return std::vector<double>(t1, sim.truth.att);
}

std::vector<SignCell> sign_identification_check(const DgpSpec& spec, const SimulatedPanel& sim) {
  const int n1 = static_cast<int>(sim.truth.treated_ids.size());
  auto sign = [](double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); };

  // Cells induced by the gamma surface.
  struct CellDef {
    std::string label;
    std::function<bool(int)> member;
  };
  std::vector<CellDef> defs;
  if (spec.gamma.kind == Surface::Kind::Constant) {
    defs.push_back({"all", [](int) { return true; }});
  } else {
    const std::string var = spec.gamma.var;
    const double split =
        spec.gamma.kind == Surface::Kind::Threshold ? spec.gamma.threshold : 0.0;
    auto value = [&, var](int i) {
      return surface_variable(var, sim.panel.covariates[i], sim.truth.wetness[i]);
    };
    defs.push_back({var + "<" + std::to_string(split), [=](int i) { return value(i) < split; }});
    defs.push_back({var + ">=" + std::to_string(split), [=](int i) { return value(i) >= split; }});
  }

  std::vector<SignCell> cells;
  for (const auto& def : defs) {
    SignCell cell;
    cell.label = def.label;
    double gamma_sum = 0.0, tau_sum = 0.0, delta_sum = 0.0;
    for (int i = 0; i < n1; ++i) {
      if (!def.member(i)) continue;
      ++cell.n_units;
      gamma_sum += spec.gamma.eval(sim.panel.covariates[i], sim.truth.wetness[i]);
      tau_sum += sim.truth.tau_unit[i];
      delta_sum += sim.truth.delta_unit[i];
    }
    if (cell.n_units == 0) continue;
    cell.gamma_sign = sign(gamma_sum);
    cell.tau_sign = sign(tau_sum);
    cell.informative = delta_sum > 0.0;
    cell.pass = !cell.informative || cell.tau_sign == cell.gamma_sign;
    cells.push_back(std::move(cell));
  }
  return cells;
}

SimulatedFiles to_csv(const SimulatedPanel& sim) {
  SimulatedFiles files;
  {
    std::ostringstream ss;
    ss << "unit_id,year,outcome_pp\n";
    for (int i = 0; i < sim.panel.n_units(); ++i) {
      for (int t = 0; t < sim.panel.n_years(); ++t) {
        ss << sim.panel.units[i] << ',' << (sim.panel.year_start + t) << ','
           << csv::format_double(sim.panel.outcome[i][t]) << '\n';
      }
    }
    files.panel_csv = ss.str();
  }
  {
    std::ostringstream ss;
    ss << "unit_id,exposure,elevation_m,slope_deg,pop_density,road_density,protected_share,"
          "forest_pct_base,forest_ha_base";
    for (int m = 1; m <= 12; ++m) {
      char buf[12];
      std::snprintf(buf, sizeof(buf), ",prec_m%02d", m);
      ss << buf;
    }
    ss << '\n';
    for (int i = 0; i < sim.panel.n_units(); ++i) {
      const auto& c = sim.panel.covariates[i];
      ss << sim.panel.units[i] << ',' << sim.panel.exposure[i] << ','
         << csv::format_double(c.elevation_m) << ',' << csv::format_double(c.slope_deg) << ','
         << csv::format_double(c.pop_density) << ',' << csv::format_double(c.road_density) << ','
         << csv::format_double(c.protected_share) << ',' << csv::format_double(c.forest_pct_base)
         << ',' << csv::format_double(c.forest_ha_base);
      for (int m = 0; m < 12; ++m) ss << ',' << csv::format_double(c.prec_monthly[m]);
      ss << '\n';
    }
    files.covariates_csv = ss.str();
  }
  {
    std::ostringstream ss;
    ss << "unit_id,tau_true\n";
    for (size_t i = 0; i < sim.truth.treated_ids.size(); ++i) {
      ss << sim.truth.treated_ids[i] << ',' << csv::format_double(sim.truth.tau_unit[i]) << '\n';
    }
    files.truth_csv = ss.str();
  }
  return files;
}

}  // namespace ascpipe
