#pragma once

#include <array>
#include <functional>
#include <string>
#include <vector>

#include "metassm/rng.hpp"
#include "metassm/trajectory.hpp"

namespace metassm::sys {

// --- family sampling ----------------------------------------------------------

struct ParamRange {
  std::string name;
  double lo = 0.0, hi = 0.0;
};

// uniform i.i.d. per coordinate, reproducible under seed
std::vector<std::vector<double>> sample_family(const std::vector<ParamRange>& ranges,
                                               int n, uint64_t seed);

// --- Bouc-Wen hysteretic oscillator ---------------------------------------------

struct BoucWenParams {
  double mL = 2.0;      // mass
  double cL = 10.0;     // damping
  double kL = 5.0e4;    // stiffness
  double alpha = 5.0e4;
  double beta = 1000.0;
  double gamma = 0.8;
  double delta = -1.1;
  double nu = 1.0;  // benchmark nominal exponent; not part of the sampled range
};

// Table-style admissible ranges and the target parameter set.
std::vector<ParamRange> boucwen_ranges();
BoucWenParams boucwen_target();
BoucWenParams boucwen_from_vector(const std::vector<double>& v);
void boucwen_check_range(const BoucWenParams& p);

inline constexpr double kBoucWenDt = 1.0 / 750.0;   // 750 Hz sampling
inline constexpr double kBoucWenNoiseStd = 8.0e-6;  // 8e-3 mm, stored in meters

// RK4 integration of the 3-state hysteretic oscillator; y = x1 + noise.
// The excitation is a continuous function of time so RK4 substages see it.
Trajectory simulate_boucwen(const BoucWenParams& p,
                            const std::function<double(double)>& excitation, int steps,
                            uint64_t noise_seed, double noise_std = kBoucWenNoiseStd,
                            double dt = kBoucWenDt);

// source excitation u(t) = 120 sin(2 pi t); multisine for target runs
std::function<double(double)> boucwen_source_excitation();
std::function<double(double)> multisine_excitation(double amplitude, double f_lo, double f_hi,
                                                   int tones, uint64_t seed);

// --- van der Pol oscillator -----------------------------------------------------

inline constexpr double kVdpDt = 0.01;

// forward-Euler family member; y = x (both states observed), no input
Trajectory simulate_vdp(double theta, std::array<double, 2> x0, int steps,
                        double dt = kVdpDt);

// --- magnetic dipole field ------------------------------------------------------

// Field of a uniformly magnetized sphere of radius r0 at planar position p:
// constant -M/3 inside, dipole decay outside; curl-free away from the shell.
std::array<double, 2> dipole_field(const std::array<double, 2>& p,
                                   const std::array<double, 2>& m, double r0);

// --- kinematic single-track vehicle ---------------------------------------------

struct VehicleParams {
  double lf = 0.1, lr = 0.1;    // axle distances [m]
  double delta_max_deg = 15.0;  // steering limit [deg]
  double Rw = 0.05;             // wheel radius [m]
  double mX = 1.0, mY = 1.0;    // magnetization [A/m]
  double r0 = 3.0;              // magnetized-sphere radius [m]
};

std::vector<ParamRange> vehicle_ranges();
VehicleParams vehicle_from_vector(const std::vector<double>& v);

inline constexpr double kVehicleDt = 0.1;

struct VehicleSimOptions {
  double speed = 1.0;           // commanded body velocity [m/s]
  double lookahead = 0.5;       // pure-pursuit lookahead [m]
  double process_noise = 1e-6;  // diagonal Qw entries added to the state
  double meas_noise = 1e-4;     // diagonal Qeta entries on the field output
  std::array<double, 3> x0 = {0.0, -5.5, 0.0};
};

// Pure-pursuit tracking of a waypoint loop; x = (pX, pY, psi),
// u = (delta, omega_f, omega_r), y = dipole field at position + noise.
Trajectory simulate_vehicle(const VehicleParams& vp,
                            const std::vector<std::array<double, 2>>& waypoints, int steps,
                            uint64_t seed, const VehicleSimOptions& opt = {},
                            double dt = kVehicleDt);

std::vector<std::array<double, 2>> default_waypoint_loop();

// --- synthetic cone-constrained linear system ------------------------------------

// Stable positive system confined to the nonnegative orthant (G = -I,
// rays R = I): x+ = A x + b u with elementwise nonnegative A, b and u >= 0.
struct ConeSystemParams {
  double a11 = 0.8, a22 = 0.7;
  double a12 = 0.1, a21 = 0.05;
  double b1 = 0.5, b2 = 0.3;
};

std::vector<ParamRange> cone_ranges();
ConeSystemParams cone_from_vector(const std::vector<double>& v);

Trajectory simulate_cone_system(const ConeSystemParams& p, int steps, uint64_t seed,
                                double meas_noise = 1e-3, double dt = 0.1);

}  // namespace metassm::sys
