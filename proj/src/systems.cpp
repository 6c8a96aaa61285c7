#include "metassm/systems.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

namespace metassm {

using json = nlohmann::json;

void Trajectory::validate() const {
  if (dt <= 0.0) throw Error("trajectory: dt must be positive");
  if (nx > 0 && x.size() != len * static_cast<std::size_t>(nx))
    throw Error("trajectory: x length mismatch");
  if (nu > 0 && u.size() != len * static_cast<std::size_t>(nu))
    throw Error("trajectory: u length mismatch");
  if (y.size() != len * static_cast<std::size_t>(ny))
    throw Error("trajectory: y length mismatch");
}

void save_trajectory(const Trajectory& tr, const std::string& stem) {
  tr.validate();
  std::ofstream csv(stem + ".csv");
  if (!csv) throw Error("cannot open " + stem + ".csv");
  csv.precision(17);
  csv << "t";
  for (int c = 0; c < tr.nx; ++c) csv << ",x" << c;
  for (int c = 0; c < tr.nu; ++c) csv << ",u" << c;
  for (int c = 0; c < tr.ny; ++c) csv << ",y" << c;
  csv << "\n";
  for (std::size_t t = 0; t < tr.len; ++t) {
    csv << static_cast<double>(t) * tr.dt;
    for (int c = 0; c < tr.nx; ++c) csv << "," << tr.xv(t, c);
    for (int c = 0; c < tr.nu; ++c) csv << "," << tr.uv(t, c);
    for (int c = 0; c < tr.ny; ++c) csv << "," << tr.yv(t, c);
    csv << "\n";
  }
  json manifest;
  manifest["dt"] = tr.dt;
  manifest["len"] = tr.len;
  manifest["nx"] = tr.nx;
  manifest["nu"] = tr.nu;
  manifest["ny"] = tr.ny;
  manifest["seed"] = tr.seed;
  manifest["params"] = json::parse(tr.params_json);
  manifest["columns"] = "t, x0..x{nx-1}, u0..u{nu-1}, y0..y{ny-1}";
  std::ofstream mf(stem + ".json");
  if (!mf) throw Error("cannot open " + stem + ".json");
  mf << manifest.dump(2) << "\n";
}

Trajectory load_trajectory(const std::string& stem) {
  std::ifstream mf(stem + ".json");
  if (!mf) throw Error("cannot open " + stem + ".json");
  json manifest = json::parse(mf);
  Trajectory tr;
  tr.dt = manifest.at("dt").get<double>();
  tr.len = manifest.at("len").get<std::size_t>();
  tr.nx = manifest.at("nx").get<int>();
  tr.nu = manifest.at("nu").get<int>();
  tr.ny = manifest.at("ny").get<int>();
  tr.seed = manifest.value("seed", 0ull);
  tr.params_json = manifest.value("params", json::object()).dump();

  std::ifstream csv(stem + ".csv");
  if (!csv) throw Error("cannot open " + stem + ".csv");
  std::string line;
  std::getline(csv, line);  // header
  tr.x.reserve(tr.len * static_cast<std::size_t>(tr.nx));
  tr.u.reserve(tr.len * static_cast<std::size_t>(tr.nu));
  tr.y.reserve(tr.len * static_cast<std::size_t>(tr.ny));
  while (std::getline(csv, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::getline(ss, cell, ',');  // t column
    for (int c = 0; c < tr.nx; ++c) {
      std::getline(ss, cell, ',');
      tr.x.push_back(std::stod(cell));
    }
    for (int c = 0; c < tr.nu; ++c) {
      std::getline(ss, cell, ',');
      tr.u.push_back(std::stod(cell));
    }
    for (int c = 0; c < tr.ny; ++c) {
      std::getline(ss, cell, ',');
      tr.y.push_back(std::stod(cell));
    }
  }
  if (tr.y.size() != tr.len * static_cast<std::size_t>(tr.ny))
    throw Error("trajectory csv row count does not match manifest len for " + stem);
  tr.validate();
  return tr;
}

}  // namespace metassm

namespace metassm::sys {

std::vector<std::vector<double>> sample_family(const std::vector<ParamRange>& ranges,
                                               int n, uint64_t seed) {
  if (n < 1) throw Error("sample_family: n must be >= 1");
  for (const auto& r : ranges)
    if (!(r.hi > r.lo)) throw Error("sample_family: empty range for '" + r.name + "'");
  std::vector<std::vector<double>> out;
  out.reserve(static_cast<std::size_t>(n));
  Rng rng(seed);
  for (int i = 0; i < n; ++i) {
    std::vector<double> p;
    p.reserve(ranges.size());
    for (const auto& r : ranges) p.push_back(rng.uniform(r.lo, r.hi));
    out.push_back(std::move(p));
  }
  return out;
}

// --- Bouc-Wen -------------------------------------------------------------------

std::vector<ParamRange> boucwen_ranges() {
  return {{"mL", 1.0, 3.0},        {"cL", 5.0, 15.0},      {"kL", 2.5e4, 7.5e4},
          {"alpha", 2.5e4, 7.5e4}, {"beta", 500.0, 4500.0}, {"gamma", 0.5, 0.9},
          {"delta", -1.5, -0.5}};
}

BoucWenParams boucwen_target() { return BoucWenParams{}; }

BoucWenParams boucwen_from_vector(const std::vector<double>& v) {
  if (v.size() != 7) throw Error("boucwen_from_vector: expected 7 parameters");
  BoucWenParams p;
  p.mL = v[0];
  p.cL = v[1];
  p.kL = v[2];
  p.alpha = v[3];
  p.beta = v[4];
  p.gamma = v[5];
  p.delta = v[6];
  return p;
}

void boucwen_check_range(const BoucWenParams& p) {
  const auto ranges = boucwen_ranges();
  const double vals[7] = {p.mL, p.cL, p.kL, p.alpha, p.beta, p.gamma, p.delta};
  for (int i = 0; i < 7; ++i)
    if (vals[i] < ranges[static_cast<std::size_t>(i)].lo ||
        vals[i] > ranges[static_cast<std::size_t>(i)].hi)
      throw Error("bouc-wen parameter '" + ranges[static_cast<std::size_t>(i)].name +
                  "' = " + std::to_string(vals[i]) + " outside admissible range");
}

namespace {

std::array<double, 3> boucwen_rhs(const BoucWenParams& p, const std::array<double, 3>& s,
                                  double u) {
  const double x1 = s[0], x2 = s[1], x3 = s[2];
  const double absx3 = std::fabs(x3);
  const double pow_nu1 = p.nu == 1.0 ? 1.0 : std::pow(absx3, p.nu - 1.0);
  const double pow_nu = p.nu == 1.0 ? absx3 : std::pow(absx3, p.nu);
  return {x2, (u - p.kL * x1 - p.cL * x2 - x3) / p.mL,
          p.alpha * x2 - p.beta * (p.gamma * std::fabs(x2) * pow_nu1 * x3 + p.delta * x2 * pow_nu)};
}

}  // namespace

Trajectory simulate_boucwen(const BoucWenParams& p,
                            const std::function<double(double)>& excitation, int steps,
                            uint64_t noise_seed, double noise_std, double dt) {
  if (steps < 1) throw Error("simulate_boucwen: steps must be >= 1");
  Trajectory tr;
  tr.dt = dt;
  tr.len = static_cast<std::size_t>(steps);
  tr.nx = 0;
  tr.nu = 1;
  tr.ny = 1;
  tr.seed = noise_seed;
  tr.u.reserve(tr.len);
  tr.y.reserve(tr.len);
  Rng rng(noise_seed);
  std::array<double, 3> s = {0.0, 0.0, 0.0};
  for (int k = 0; k < steps; ++k) {
    const double t = k * dt;
    const double uk = excitation(t);
    tr.u.push_back(uk);
    tr.y.push_back(s[0] + (noise_std > 0.0 ? noise_std * rng.normal() : 0.0));
    // classical RK4 with the excitation sampled at substage times
    const auto k1 = boucwen_rhs(p, s, excitation(t));
    const auto at = [&](const std::array<double, 3>& base, const std::array<double, 3>& d,
                        double h) {
      return std::array<double, 3>{base[0] + h * d[0], base[1] + h * d[1], base[2] + h * d[2]};
    };
    const auto k2 = boucwen_rhs(p, at(s, k1, dt / 2), excitation(t + dt / 2));
    const auto k3 = boucwen_rhs(p, at(s, k2, dt / 2), excitation(t + dt / 2));
    const auto k4 = boucwen_rhs(p, at(s, k3, dt), excitation(t + dt));
    for (int i = 0; i < 3; ++i)
      s[static_cast<std::size_t>(i)] +=
          dt / 6.0 *
          (k1[static_cast<std::size_t>(i)] + 2 * k2[static_cast<std::size_t>(i)] +
           2 * k3[static_cast<std::size_t>(i)] + k4[static_cast<std::size_t>(i)]);
    for (double v : s)
      if (!std::isfinite(v) || std::fabs(v) > 1e9)
        throw NumericalError("simulate_boucwen: state blow-up at step " + std::to_string(k));
  }
  json params = {{"system", "boucwen"}, {"mL", p.mL},      {"cL", p.cL},
                 {"kL", p.kL},          {"alpha", p.alpha}, {"beta", p.beta},
                 {"gamma", p.gamma},    {"delta", p.delta}, {"nu", p.nu},
                 {"noise_std", noise_std}};
  tr.params_json = params.dump();
  return tr;
}

std::function<double(double)> boucwen_source_excitation() {
  return [](double t) { return 120.0 * std::sin(2.0 * M_PI * t); };
}

std::function<double(double)> multisine_excitation(double amplitude, double f_lo, double f_hi,
                                                   int tones, uint64_t seed) {
  Rng rng(seed);
  std::vector<double> freqs, phases;
  for (int i = 0; i < tones; ++i) {
    freqs.push_back(rng.uniform(f_lo, f_hi));
    phases.push_back(rng.uniform(0.0, 2.0 * M_PI));
  }
  const double norm = amplitude / std::sqrt(static_cast<double>(tones));
  return [freqs, phases, norm](double t) {
    double s = 0.0;
    for (std::size_t i = 0; i < freqs.size(); ++i)
      s += std::sin(2.0 * M_PI * freqs[i] * t + phases[i]);
    return norm * s;
  };
}

// --- van der Pol ----------------------------------------------------------------

Trajectory simulate_vdp(double theta, std::array<double, 2> x0, int steps, double dt) {
  if (steps < 1) throw Error("simulate_vdp: steps must be >= 1");
  Trajectory tr;
  tr.dt = dt;
  tr.len = static_cast<std::size_t>(steps);
  tr.nx = 0;
  tr.nu = 0;
  tr.ny = 2;
  double x1 = x0[0], x2 = x0[1];
  tr.y.reserve(tr.len * 2);
  for (int k = 0; k < steps; ++k) {
    tr.y.push_back(x1);
    tr.y.push_back(x2);
    const double d1 = x2;
    const double d2 = theta * x2 * (1.0 - x1 * x1) - x1;
    x1 += dt * d1;
    x2 += dt * d2;
    if (!std::isfinite(x1) || !std::isfinite(x2) || std::fabs(x1) + std::fabs(x2) > 1e9)
      throw NumericalError("simulate_vdp: state blow-up at step " + std::to_string(k));
  }
  json params = {{"system", "vdp"}, {"theta", theta}, {"x0", {x0[0], x0[1]}}};
  tr.params_json = params.dump();
  return tr;
}

// --- dipole field ---------------------------------------------------------------

std::array<double, 2> dipole_field(const std::array<double, 2>& p,
                                   const std::array<double, 2>& m, double r0) {
  const double r = std::sqrt(p[0] * p[0] + p[1] * p[1]);
  if (r < r0) return {-m[0] / 3.0, -m[1] / 3.0};
  const double m0 = 4.0 / 3.0 * M_PI * r0 * r0 * r0;
  const double r3 = r * r * r;
  const double r5 = r3 * r * r;
  const double mtp = m[0] * p[0] + m[1] * p[1];
  const double c = m0 / (4.0 * M_PI);
  return {c * (3.0 * mtp * p[0] / r5 - m[0] / r3), c * (3.0 * mtp * p[1] / r5 - m[1] / r3)};
}

// --- vehicle --------------------------------------------------------------------

std::vector<ParamRange> vehicle_ranges() {
  return {{"lf", 0.02, 0.25}, {"lr", 0.02, 0.25}, {"delta_max", 10.0, 20.0},
          {"mX", -1.5, 1.5},  {"mY", -1.5, 1.5},  {"r0", 1.5, 4.5}};
}

VehicleParams vehicle_from_vector(const std::vector<double>& v) {
  if (v.size() != 6) throw Error("vehicle_from_vector: expected 6 parameters");
  VehicleParams p;
  p.lf = v[0];
  p.lr = v[1];
  p.delta_max_deg = v[2];
  p.mX = v[3];
  p.mY = v[4];
  p.r0 = v[5];
  return p;
}

std::vector<std::array<double, 2>> default_waypoint_loop() {
  // rounded rectangle skirting the magnetized region
  return {{5.5, -5.5}, {5.5, 5.5}, {-5.5, 5.5}, {-5.5, -5.5}};
}

Trajectory simulate_vehicle(const VehicleParams& vp,
                            const std::vector<std::array<double, 2>>& waypoints, int steps,
                            uint64_t seed, const VehicleSimOptions& opt, double dt) {
  if (waypoints.empty()) throw Error("simulate_vehicle: empty waypoint list");
  if (steps < 1) throw Error("simulate_vehicle: steps must be >= 1");
  Trajectory tr;
  tr.dt = dt;
  tr.len = static_cast<std::size_t>(steps);
  tr.nx = 3;
  tr.nu = 3;
  tr.ny = 2;
  tr.seed = seed;
  Rng rng(seed);
  const double L = vp.lf + vp.lr;
  const double dmax = vp.delta_max_deg * M_PI / 180.0;
  double pX = opt.x0[0], pY = opt.x0[1], psi = opt.x0[2];
  std::size_t wp = 0;
  const double wq = std::sqrt(opt.process_noise);
  const double mq = std::sqrt(opt.meas_noise);
  for (int k = 0; k < steps; ++k) {
    // advance the waypoint when close, looping around the circuit
    for (std::size_t guard = 0; guard < waypoints.size(); ++guard) {
      const double dx = waypoints[wp][0] - pX, dy = waypoints[wp][1] - pY;
      if (std::hypot(dx, dy) > std::max(opt.lookahead, 1e-6)) break;
      wp = (wp + 1) % waypoints.size();
    }
    // pure pursuit: steer toward the current waypoint seen in body frame
    const double dx = waypoints[wp][0] - pX, dy = waypoints[wp][1] - pY;
    const double alpha = std::atan2(dy, dx) - psi;
    double delta = std::atan2(2.0 * L * std::sin(alpha), std::max(opt.lookahead, 1e-6));
    delta = std::clamp(delta, -dmax, dmax);

    const double vX = opt.speed;
    const double omega = vX / vp.Rw;  // both axles at the common wheel speed
    tr.x.insert(tr.x.end(), {pX, pY, psi});
    tr.u.insert(tr.u.end(), {delta, omega, omega});
    const auto field = dipole_field({pX, pY}, {vp.mX, vp.mY}, vp.r0);
    tr.y.push_back(field[0] + (mq > 0.0 ? mq * rng.normal() : 0.0));
    tr.y.push_back(field[1] + (mq > 0.0 ? mq * rng.normal() : 0.0));

    const double beta = std::atan(vp.lr * std::tan(delta) / L);
    pX += dt * vX * std::cos(psi + beta) / std::cos(beta) + (wq > 0.0 ? wq * rng.normal() : 0.0);
    pY += dt * vX * std::sin(psi + beta) / std::cos(beta) + (wq > 0.0 ? wq * rng.normal() : 0.0);
    psi += dt * vX * std::tan(delta) / L + (wq > 0.0 ? wq * rng.normal() : 0.0);
    if (!std::isfinite(pX) || !std::isfinite(pY) || !std::isfinite(psi))
      throw NumericalError("simulate_vehicle: state blow-up at step " + std::to_string(k));
  }
  json params = {{"system", "vehicle"},        {"lf", vp.lf},
                 {"lr", vp.lr},                {"delta_max_deg", vp.delta_max_deg},
                 {"Rw", vp.Rw},                {"mX", vp.mX},
                 {"mY", vp.mY},                {"r0", vp.r0},
                 {"speed", opt.speed},         {"lookahead", opt.lookahead},
                 {"process_noise", opt.process_noise}, {"meas_noise", opt.meas_noise}};
  tr.params_json = params.dump();
  return tr;
}

// --- synthetic cone system ------------------------------------------------------

std::vector<ParamRange> cone_ranges() {
  return {{"a11", 0.6, 0.9}, {"a22", 0.55, 0.85}, {"a12", 0.02, 0.15}, {"a21", 0.02, 0.12}};
}

ConeSystemParams cone_from_vector(const std::vector<double>& v) {
  if (v.size() != 4) throw Error("cone_from_vector: expected 4 parameters");
  ConeSystemParams p;
  p.a11 = v[0];
  p.a22 = v[1];
  p.a12 = v[2];
  p.a21 = v[3];
  return p;
}

Trajectory simulate_cone_system(const ConeSystemParams& p, int steps, uint64_t seed,
                                double meas_noise, double dt) {
  if (steps < 1) throw Error("simulate_cone_system: steps must be >= 1");
  Trajectory tr;
  tr.dt = dt;
  tr.len = static_cast<std::size_t>(steps);
  tr.nx = 2;
  tr.nu = 1;
  tr.ny = 1;
  tr.seed = seed;
  Rng rng(seed);
  double x1 = rng.uniform(0.5, 2.0), x2 = rng.uniform(0.5, 2.0);
  const double mq = std::sqrt(std::max(meas_noise, 0.0));
  for (int k = 0; k < steps; ++k) {
    const double t = k * dt;
    const double u = 0.5 + 0.5 * std::fabs(std::sin(0.7 * t + 0.3));  // nonnegative input
    tr.x.insert(tr.x.end(), {x1, x2});
    tr.u.push_back(u);
    tr.y.push_back(x1 + (mq > 0.0 ? mq * rng.normal() : 0.0));
    const double n1 = p.a11 * x1 + p.a12 * x2 + p.b1 * u;
    const double n2 = p.a21 * x1 + p.a22 * x2 + p.b2 * u;
    x1 = n1;
    x2 = n2;
  }
  json params = {{"system", "cone"}, {"a11", p.a11}, {"a22", p.a22}, {"a12", p.a12},
                 {"a21", p.a21},     {"b1", p.b1},   {"b2", p.b2}};
  tr.params_json = params.dump();
  return tr;
}

}  // namespace metassm::sys
