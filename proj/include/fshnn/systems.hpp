// Licensed under the Apache License, Version 2.0 (the "License"); you
// may not use this file except in compliance with the License.  You
// may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or
// implied.  See the License for the specific language governing
// permissions and limitations under the License.

#pragma once

#include "fshnn/integrators.hpp"
#include "fshnn/rng.hpp"
#include "fshnn/state.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace fshnn::sys {

// ---------------------------------------------------------------------------
// Ideal pendulum, state (theta, omega).

struct PendulumParams {
    double g = 1.0;
    double L = 1.0;
};

void pendulum_rhs(const PendulumParams& p, std::span<const double> state,
                  std::span<double> out);
// E = (1/2) L^2 omega^2 - g L cos(theta), unit mass.
double pendulum_energy(const PendulumParams& p, std::span<const double> state);
SplitSystemFn pendulum_split(const PendulumParams& p);

// ---------------------------------------------------------------------------
// Double pendulum, state (theta1, omega1, theta2, omega2).

struct DoublePendulumParams {
    double m1 = 1.0, m2 = 1.0;
    double L1 = 1.0, L2 = 1.0;
    double g = 1.0;
};

void double_pendulum_rhs(const DoublePendulumParams& p, std::span<const double> state,
                         std::span<double> out);
double double_pendulum_energy(const DoublePendulumParams& p, std::span<const double> state);
// Semi-implicit update: velocities first, then angles from the new
// velocities; angles wrapped back to (-pi, pi].
void double_pendulum_step(const DoublePendulumParams& p, std::span<double> state, double dt);
double wrap_angle(double x); // into (-pi, pi]

// ---------------------------------------------------------------------------
// Fermi-Pasta-Ulam-Tsingou chain, periodic, state (q_1..q_N, p_1..p_N).

struct FputParams {
    int n = 8;
    double m = 1.0;
    double k = 1.0;
    double alpha = 0.0;
    double beta = 0.7;
    double sigma_q = 0.1;
    double sigma_p = 0.1;
};

// Particle forces F_i = f_i - f_{i-1} with bond force
// f_i = k r_i + alpha r_i^2 + beta r_i^3, r_i = q_{i+1} - q_i (periodic).
void fput_force(const FputParams& p, std::span<const double> q, std::span<double> out);
double fput_energy(const FputParams& p, std::span<const double> q, std::span<const double> mom);
SplitSystemFn fput_split(const FputParams& p);

// ---------------------------------------------------------------------------
// 2D shallow water equations on a periodic square, channels (h, mx, my).

struct SweParams {
    double L = 1.0e6;    // domain edge length [m]
    double g = 9.81;     // gravity [m/s^2]
    double depth = 100.0; // mean depth H [m]
    int n = 64;          // grid points per edge
    double cfl = 0.1;
};

double swe_dx(const SweParams& p);
double swe_dt(const SweParams& p); // cfl * min(dx, dy) / sqrt(g H)

// Flux-divergence form with hydrostatic pressure (1/2) g h^2; periodic
// centered differences. Throws if h drops below the depth floor 1e-6 * H.
void swe_rhs(const SweParams& p, std::span<const double> state, std::span<double> out);

double swe_total_mass(const SweParams& p, std::span<const double> state);
double swe_energy(const SweParams& p, std::span<const double> state);

// h = H + A exp(-((i-ic)^2 + (j-jc)^2) / (2 sigma^2)), momenta zero.
FieldState swe_init_pulse(const SweParams& p, double amplitude, double sigma_cells,
                          int center_i, int center_j);

// Average of two Gaussian random fields, smoothed by a normalized 3x3 kernel
// until the largest nearest-neighbor jump falls below `jump_threshold`.
FieldState swe_init_random(const SweParams& p, double amplitude, double jump_threshold,
                           Rng& rng);

double swe_max_neighbor_jump(std::span<const double> eta, int n);

// ---------------------------------------------------------------------------
// 2D incompressible Taylor-Green vortex, vorticity form, domain L = 2 pi.

struct TaylorGreenParams {
    int n = 128;     // power of two
    double u0 = 1.0; // velocity scale
    double re = 100.0;
    int k = 1;       // wavenumber
    double nu() const; // u0 * L / Re with L = 2 pi
};

double taylor_green_dt(const TaylorGreenParams& p);

// Initial vorticity from the classical velocity pattern via periodic
// centered differences.
std::vector<double> taylor_green_init(const TaylorGreenParams& p);

// d omega/dt = -(u dx(omega) + v dy(omega)) + nu Laplacian(omega), with the
// streamfunction obtained spectrally and a 5-point Laplacian stencil.
void taylor_green_rhs(const TaylorGreenParams& p, std::span<const double> omega,
                      std::span<double> out);

// (u, v) recovered from the spectral streamfunction by centered differences.
void taylor_green_velocity(const TaylorGreenParams& p, std::span<const double> omega,
                           std::vector<double>& u, std::vector<double>& v);

double taylor_green_kinetic_energy(const TaylorGreenParams& p, std::span<const double> u,
                                   std::span<const double> v);

// Analytic pressure p = (u0^2/4)(cos 2kx + cos 2ky) e^{-4 nu k^2 t}.
std::vector<double> taylor_green_pressure(const TaylorGreenParams& p, double t);

// ---------------------------------------------------------------------------
// Two-scale slow-fast toy: state (q_s, q_f, p_s, p_f), scalar coordinates,
// V = (1/2) slow_k q_s^2, Wbar = (1/2) fast_k (q_f - fast_center)^2.

struct TwoScaleParams {
    double eps = 1.0e-2; // stiffness ratio, 0 < eps << 1
    double mass_s = 1.0;
    double mass_f = 1.0;
    double slow_k = 1.0;
    double fast_k = 1.0;
    double fast_center = 0.0;
};

void two_scale_rhs(const TwoScaleParams& p, std::span<const double> state,
                   std::span<double> out);
double two_scale_energy(const TwoScaleParams& p, std::span<const double> state);

// Fast frequency measured from zero crossings of q_f - fast_center over
// `n_periods` expected periods (RK4, internally chosen step).
double two_scale_measured_fast_frequency(const TwoScaleParams& p, double qf_amplitude,
                                         int n_periods);

// ---------------------------------------------------------------------------
// Dataset generation.

enum class SystemKind {
    Pendulum,
    DoublePendulum,
    Fput,
    SwePulse,
    SweRandom,
    TaylorGreen,
    TwoScale,
};

SystemKind system_from_name(const std::string& name);
std::string system_name(SystemKind kind);

struct SystemSpec {
    SystemKind kind = SystemKind::Pendulum;
    PendulumParams pendulum;
    DoublePendulumParams double_pendulum;
    FputParams fput;
    SweParams swe;
    TaylorGreenParams taylor_green;
    TwoScaleParams two_scale;
    // SWE initialization options
    double pulse_amplitude = 0.1;
    double pulse_sigma = 2.0;
    bool randomize_center = false;
    double random_amplitude = 0.1;
    double random_jump_threshold = 0.02;
};

struct GenSettings {
    int n_traj = 1;
    long n_steps = 100;   // integrator steps per trajectory segment
    double dt = 0.01;     // ignored for SWE (CFL) and TaylorGreen (stability)
    long save_every = 1;
    std::uint64_t seed = 0;
    double noise_sigma = 0.0;
};

// ODE systems: one long seeded rollout reshaped into n_traj segments that
// share their boundary frames. PDE systems: n_traj independent rollouts with
// per-trajectory RNG streams. Per-frame energies are recorded from the clean
// states; observation noise (if any) is added afterwards.
TrajectoryDataset generate_dataset(const SystemSpec& spec, const GenSettings& gen);

// Physical energy of a single dataset frame (used by evaluation).
double frame_energy(const SystemSpec& spec, std::span<const double> state);

int state_dim(const SystemSpec& spec);

} // namespace fshnn::sys
