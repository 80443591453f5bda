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

#include "fshnn/systems.hpp"

#include "fshnn/fft.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace fshnn::sys {

namespace {

constexpr double kPi = std::numbers::pi;

inline int wrap_idx(int i, int n)
{
    if (i < 0) return i + n;
    if (i >= n) return i - n;
    return i;
}

} // namespace

// --- pendulum ---------------------------------------------------------------

void pendulum_rhs(const PendulumParams& p, std::span<const double> state,
                  std::span<double> out)
{
    out[0] = state[1];
    out[1] = -(p.g / p.L) * std::sin(state[0]);
}

double pendulum_energy(const PendulumParams& p, std::span<const double> state)
{
    return 0.5 * p.L * p.L * state[1] * state[1] - p.g * p.L * std::cos(state[0]);
}

SplitSystemFn pendulum_split(const PendulumParams& p)
{
    SplitSystemFn sys;
    const double gl = p.g / p.L;
    sys.force = [gl](std::span<const double> q, std::span<double> f) {
        f[0] = -gl * std::sin(q[0]);
    };
    sys.velocity = [](std::span<const double> mom, std::span<double> v) { v[0] = mom[0]; };
    return sys;
}

// --- double pendulum ----------------------------------------------------------

double wrap_angle(double x)
{
    return x - 2.0 * kPi * std::ceil((x - kPi) / (2.0 * kPi));
}

void double_pendulum_rhs(const DoublePendulumParams& p, std::span<const double> state,
                         std::span<double> out)
{
    const double th1 = state[0], w1 = state[1], th2 = state[2], w2 = state[3];
    const double delta = th1 - th2;
    const double den = 2.0 * p.m1 + p.m2 - p.m2 * std::cos(2.0 * delta);
    if (std::fabs(den) < 1.0e-12)
        throw std::runtime_error("double_pendulum_rhs: singular denominator");

    const double a1 =
        (-p.g * (2.0 * p.m1 + p.m2) * std::sin(th1) - p.m2 * p.g * std::sin(th1 - 2.0 * th2)
         - 2.0 * std::sin(delta) * p.m2
               * (w2 * w2 * p.L2 + w1 * w1 * p.L1 * std::cos(delta)))
        / (p.L1 * den);
    const double a2 = (2.0 * std::sin(delta)
                       * (w1 * w1 * p.L1 * (p.m1 + p.m2) + p.g * (p.m1 + p.m2) * std::cos(th1)
                          + w2 * w2 * p.L2 * p.m2 * std::cos(delta)))
                      / (p.L2 * den);

    out[0] = w1;
    out[1] = a1;
    out[2] = w2;
    out[3] = a2;
}

double double_pendulum_energy(const DoublePendulumParams& p, std::span<const double> state)
{
    const double th1 = state[0], w1 = state[1], th2 = state[2], w2 = state[3];
    const double kinetic = 0.5 * (p.m1 + p.m2) * p.L1 * p.L1 * w1 * w1
                           + 0.5 * p.m2 * p.L2 * p.L2 * w2 * w2
                           + p.m2 * p.L1 * p.L2 * w1 * w2 * std::cos(th1 - th2);
    const double potential = -(p.m1 + p.m2) * p.g * p.L1 * std::cos(th1)
                             - p.m2 * p.g * p.L2 * std::cos(th2);
    return kinetic + potential;
}

void double_pendulum_step(const DoublePendulumParams& p, std::span<double> state, double dt)
{
    double deriv[4];
    double_pendulum_rhs(p, state, deriv);
    state[1] += dt * deriv[1];
    state[3] += dt * deriv[3];
    state[0] = wrap_angle(state[0] + dt * state[1]);
    state[2] = wrap_angle(state[2] + dt * state[3]);
}

// --- FPUT ---------------------------------------------------------------------

void fput_force(const FputParams& p, std::span<const double> q, std::span<double> out)
{
    const int n = p.n;
    std::vector<double> bond(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        const double r = q[wrap_idx(i + 1, n)] - q[i];
        bond[i] = p.k * r + p.alpha * r * r + p.beta * r * r * r;
    }
    for (int i = 0; i < n; ++i) out[i] = bond[i] - bond[wrap_idx(i - 1, n)];
}

double fput_energy(const FputParams& p, std::span<const double> q, std::span<const double> mom)
{
    double e = 0.0;
    for (int i = 0; i < p.n; ++i) e += mom[i] * mom[i] / (2.0 * p.m);
    for (int i = 0; i < p.n; ++i) {
        const double r = q[wrap_idx(i + 1, p.n)] - q[i];
        e += 0.5 * p.k * r * r + p.alpha / 3.0 * r * r * r + 0.25 * p.beta * r * r * r * r;
    }
    return e;
}

SplitSystemFn fput_split(const FputParams& p)
{
    SplitSystemFn sys;
    sys.force = [p](std::span<const double> q, std::span<double> f) { fput_force(p, q, f); };
    const double inv_m = 1.0 / p.m;
    sys.velocity = [inv_m](std::span<const double> mom, std::span<double> v) {
        for (std::size_t i = 0; i < mom.size(); ++i) v[i] = mom[i] * inv_m;
    };
    return sys;
}

// --- shallow water ------------------------------------------------------------

double swe_dx(const SweParams& p) { return p.L / p.n; }

double swe_dt(const SweParams& p)
{
    return p.cfl * swe_dx(p) / std::sqrt(p.g * p.depth);
}

void swe_rhs(const SweParams& p, std::span<const double> state, std::span<double> out)
{
    const int n = p.n;
    const std::size_t cells = static_cast<std::size_t>(n) * n;
    const double* h = state.data();
    const double* mx = state.data() + cells;
    const double* my = state.data() + 2 * cells;
    double* dh = out.data();
    double* dmx = out.data() + cells;
    double* dmy = out.data() + 2 * cells;

    const double floor = 1.0e-6 * p.depth;
    for (std::size_t c = 0; c < cells; ++c)
        if (h[c] < floor)
            throw std::runtime_error("swe_rhs: layer depth fell below the depth floor");

    const double inv2dx = 1.0 / (2.0 * swe_dx(p));
    auto idx = [n](int i, int j) { return static_cast<std::size_t>(i) * n + j; };

    // Fluxes: x-momentum (mx^2/h + g h^2/2, mx my/h), y-momentum transposed.
    std::vector<double> fxx(cells), fxy(cells), fyy(cells);
    for (std::size_t c = 0; c < cells; ++c) {
        fxx[c] = mx[c] * mx[c] / h[c] + 0.5 * p.g * h[c] * h[c];
        fxy[c] = mx[c] * my[c] / h[c];
        fyy[c] = my[c] * my[c] / h[c] + 0.5 * p.g * h[c] * h[c];
    }

    for (int i = 0; i < n; ++i) {
        const int ip = wrap_idx(i + 1, n), im = wrap_idx(i - 1, n);
        for (int j = 0; j < n; ++j) {
            const int jp = wrap_idx(j + 1, n), jm = wrap_idx(j - 1, n);
            const std::size_t c = idx(i, j);
            const double dmx_dx = (mx[idx(i, jp)] - mx[idx(i, jm)]) * inv2dx;
            const double dmy_dy = (my[idx(ip, j)] - my[idx(im, j)]) * inv2dx;
            dh[c] = -(dmx_dx + dmy_dy);
            dmx[c] = -((fxx[idx(i, jp)] - fxx[idx(i, jm)]) * inv2dx
                       + (fxy[idx(ip, j)] - fxy[idx(im, j)]) * inv2dx);
            dmy[c] = -((fxy[idx(i, jp)] - fxy[idx(i, jm)]) * inv2dx
                       + (fyy[idx(ip, j)] - fyy[idx(im, j)]) * inv2dx);
        }
    }
}

double swe_total_mass(const SweParams& p, std::span<const double> state)
{
    const std::size_t cells = static_cast<std::size_t>(p.n) * p.n;
    const double area = swe_dx(p) * swe_dx(p);
    double mass = 0.0;
    for (std::size_t c = 0; c < cells; ++c) mass += state[c];
    return mass * area;
}

double swe_energy(const SweParams& p, std::span<const double> state)
{
    const std::size_t cells = static_cast<std::size_t>(p.n) * p.n;
    const double* h = state.data();
    const double* mx = state.data() + cells;
    const double* my = state.data() + 2 * cells;
    const double area = swe_dx(p) * swe_dx(p);
    double e = 0.0;
    for (std::size_t c = 0; c < cells; ++c)
        e += 0.5 * (mx[c] * mx[c] + my[c] * my[c]) / h[c] + 0.5 * p.g * h[c] * h[c];
    return e * area;
}

FieldState swe_init_pulse(const SweParams& p, double amplitude, double sigma_cells,
                          int center_i, int center_j)
{
    FieldState f(3, p.n, p.n, swe_dx(p));
    const double inv2s2 = 1.0 / (2.0 * sigma_cells * sigma_cells);
    for (int i = 0; i < p.n; ++i)
        for (int j = 0; j < p.n; ++j) {
            const double di = i - center_i, dj = j - center_j;
            f.at(0, i, j) = p.depth + amplitude * std::exp(-(di * di + dj * dj) * inv2s2);
        }
    return f;
}

double swe_max_neighbor_jump(std::span<const double> eta, int n)
{
    double jump = 0.0;
    auto idx = [n](int i, int j) { return static_cast<std::size_t>(i) * n + j; };
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            jump = std::max(jump,
                            std::fabs(eta[idx(wrap_idx(i + 1, n), j)] - eta[idx(i, j)]));
            jump = std::max(jump,
                            std::fabs(eta[idx(i, wrap_idx(j + 1, n))] - eta[idx(i, j)]));
        }
    return jump;
}

FieldState swe_init_random(const SweParams& p, double amplitude, double jump_threshold,
                           Rng& rng)
{
    const int n = p.n;
    const std::size_t cells = static_cast<std::size_t>(n) * n;
    std::vector<double> eta(cells);
    for (std::size_t c = 0; c < cells; ++c)
        eta[c] = 0.5 * (rng.normal(0.0, amplitude) + rng.normal(0.0, amplitude));

    // 3x3 Gaussian kernel (1 2 1; 2 4 2; 1 2 1)/16; sums to one, so the mean
    // of eta is preserved.
    std::vector<double> next(cells);
    auto idx = [n](int i, int j) { return static_cast<std::size_t>(i) * n + j; };
    int iters = 0;
    while (swe_max_neighbor_jump(eta, n) >= jump_threshold) {
        if (++iters > 10000)
            throw std::runtime_error("swe_init_random: smoothing did not converge");
        for (int i = 0; i < n; ++i) {
            const int ip = wrap_idx(i + 1, n), im = wrap_idx(i - 1, n);
            for (int j = 0; j < n; ++j) {
                const int jp = wrap_idx(j + 1, n), jm = wrap_idx(j - 1, n);
                next[idx(i, j)] =
                    (eta[idx(im, jm)] + 2.0 * eta[idx(im, j)] + eta[idx(im, jp)]
                     + 2.0 * eta[idx(i, jm)] + 4.0 * eta[idx(i, j)] + 2.0 * eta[idx(i, jp)]
                     + eta[idx(ip, jm)] + 2.0 * eta[idx(ip, j)] + eta[idx(ip, jp)])
                    / 16.0;
            }
        }
        eta.swap(next);
    }

    FieldState f(3, n, n, swe_dx(p));
    for (std::size_t c = 0; c < cells; ++c) f.data[c] = p.depth + eta[c];
    return f;
}

// --- Taylor-Green -------------------------------------------------------------

double TaylorGreenParams::nu() const { return u0 * (2.0 * kPi) / re; }

double taylor_green_dt(const TaylorGreenParams& p)
{
    const double dx = 2.0 * kPi / p.n;
    const double adv = dx / std::max(p.u0, 1.0e-12);
    const double diff = dx * dx / (4.0 * std::max(p.nu(), 1.0e-12));
    return 0.25 * std::min(adv, diff);
}

namespace {

void centered_gradient(std::span<const double> f, int n, double dx,
                       std::vector<double>& ddx, std::vector<double>& ddy)
{
    const double inv2dx = 1.0 / (2.0 * dx);
    ddx.resize(f.size());
    ddy.resize(f.size());
    auto idx = [n](int i, int j) { return static_cast<std::size_t>(i) * n + j; };
    for (int i = 0; i < n; ++i) {
        const int ip = wrap_idx(i + 1, n), im = wrap_idx(i - 1, n);
        for (int j = 0; j < n; ++j) {
            const int jp = wrap_idx(j + 1, n), jm = wrap_idx(j - 1, n);
            ddx[idx(i, j)] = (f[idx(i, jp)] - f[idx(i, jm)]) * inv2dx;
            ddy[idx(i, j)] = (f[idx(ip, j)] - f[idx(im, j)]) * inv2dx;
        }
    }
}

} // namespace

std::vector<double> taylor_green_init(const TaylorGreenParams& p)
{
    const int n = p.n;
    const double dx = 2.0 * kPi / n;
    std::vector<double> u(static_cast<std::size_t>(n) * n), v(u.size());
    auto idx = [n](int i, int j) { return static_cast<std::size_t>(i) * n + j; };
    for (int i = 0; i < n; ++i) {
        const double y = i * dx;
        for (int j = 0; j < n; ++j) {
            const double x = j * dx;
            u[idx(i, j)] = p.u0 * std::sin(p.k * x) * std::cos(p.k * y);
            v[idx(i, j)] = -p.u0 * std::cos(p.k * x) * std::sin(p.k * y);
        }
    }
    // omega = dv/dx - du/dy, periodic centered differences
    std::vector<double> dvdx, dvdy, dudx, dudy;
    centered_gradient(v, n, dx, dvdx, dvdy);
    centered_gradient(u, n, dx, dudx, dudy);
    std::vector<double> omega(u.size());
    for (std::size_t c = 0; c < u.size(); ++c) omega[c] = dvdx[c] - dudy[c];
    return omega;
}

void taylor_green_velocity(const TaylorGreenParams& p, std::span<const double> omega,
                           std::vector<double>& u, std::vector<double>& v)
{
    const int n = p.n;
    const double dx = 2.0 * kPi / n;
    const std::vector<double> psi = solve_poisson_spectral(omega, n, 2.0 * kPi);
    std::vector<double> dpsidx, dpsidy;
    centered_gradient(psi, n, dx, dpsidx, dpsidy);
    u = dpsidy;
    v.resize(dpsidx.size());
    for (std::size_t c = 0; c < dpsidx.size(); ++c) v[c] = -dpsidx[c];
}

void taylor_green_rhs(const TaylorGreenParams& p, std::span<const double> omega,
                      std::span<double> out)
{
    const int n = p.n;
    if ((n & (n - 1)) != 0)
        throw std::invalid_argument("taylor_green_rhs: grid must be a power of two");
    const double dx = 2.0 * kPi / n;
    std::vector<double> u, v;
    taylor_green_velocity(p, omega, u, v);

    std::vector<double> dwdx, dwdy;
    centered_gradient(omega, n, dx, dwdx, dwdy);

    const double nu = p.nu();
    const double invdx2 = 1.0 / (dx * dx);
    auto idx = [n](int i, int j) { return static_cast<std::size_t>(i) * n + j; };
    for (int i = 0; i < n; ++i) {
        const int ip = wrap_idx(i + 1, n), im = wrap_idx(i - 1, n);
        for (int j = 0; j < n; ++j) {
            const int jp = wrap_idx(j + 1, n), jm = wrap_idx(j - 1, n);
            const std::size_t c = idx(i, j);
            const double lap = (omega[idx(i, jp)] + omega[idx(i, jm)] + omega[idx(ip, j)]
                                + omega[idx(im, j)] - 4.0 * omega[c])
                               * invdx2;
            out[c] = -(u[c] * dwdx[c] + v[c] * dwdy[c]) + nu * lap;
        }
    }
}

double taylor_green_kinetic_energy(const TaylorGreenParams& p, std::span<const double> u,
                                   std::span<const double> v)
{
    const double dx = 2.0 * kPi / p.n;
    double e = 0.0;
    for (std::size_t c = 0; c < u.size(); ++c) e += 0.5 * (u[c] * u[c] + v[c] * v[c]);
    return e * dx * dx;
}

std::vector<double> taylor_green_pressure(const TaylorGreenParams& p, double t)
{
    const int n = p.n;
    const double dx = 2.0 * kPi / n;
    const double decay = std::exp(-4.0 * p.nu() * p.k * p.k * t);
    std::vector<double> pr(static_cast<std::size_t>(n) * n);
    for (int i = 0; i < n; ++i) {
        const double y = i * dx;
        for (int j = 0; j < n; ++j) {
            const double x = j * dx;
            pr[static_cast<std::size_t>(i) * n + j] =
                0.25 * p.u0 * p.u0 * (std::cos(2.0 * p.k * x) + std::cos(2.0 * p.k * y))
                * decay;
        }
    }
    return pr;
}

// --- two-scale toy ------------------------------------------------------------

void two_scale_rhs(const TwoScaleParams& p, std::span<const double> state,
                   std::span<double> out)
{
    const double qs = state[0], qf = state[1], ps = state[2], pf = state[3];
    out[0] = ps / p.mass_s;
    out[1] = pf / p.mass_f;
    out[2] = -p.slow_k * qs;
    out[3] = -(p.fast_k / p.eps) * (qf - p.fast_center);
}

double two_scale_energy(const TwoScaleParams& p, std::span<const double> state)
{
    const double qs = state[0], qf = state[1], ps = state[2], pf = state[3];
    return 0.5 * ps * ps / p.mass_s + 0.5 * pf * pf / p.mass_f + 0.5 * p.slow_k * qs * qs
           + 0.5 * (p.fast_k / p.eps) * (qf - p.fast_center) * (qf - p.fast_center);
}

double two_scale_measured_fast_frequency(const TwoScaleParams& p, double qf_amplitude,
                                         int n_periods)
{
    const double omega_est = std::sqrt(p.fast_k / (p.mass_f * p.eps));
    const double period_est = 2.0 * kPi / omega_est;
    const double dt = period_est / 200.0;
    const double t_end = n_periods * period_est;

    std::vector<double> z{0.0, p.fast_center + qf_amplitude, 0.0, 0.0};
    auto field = [&](std::span<const double> s, double, std::span<double> d) {
        two_scale_rhs(p, s, d);
    };

    long crossings = 0;
    double prev = z[1] - p.fast_center;
    double t_first = -1.0, t_last = -1.0;
    const long n_steps = static_cast<long>(std::ceil(t_end / dt));
    for (long s = 0; s < n_steps; ++s) {
        rk4_step(field, std::span<double>(z), s * dt, dt);
        const double cur = z[1] - p.fast_center;
        if ((prev < 0.0 && cur >= 0.0) || (prev > 0.0 && cur <= 0.0)) {
            // linear interpolation of the crossing time
            const double frac = prev / (prev - cur);
            const double tc = (s + frac) * dt;
            if (t_first < 0.0)
                t_first = tc;
            else {
                t_last = tc;
                ++crossings;
            }
        }
        prev = cur;
    }
    if (crossings < 2 || t_last <= t_first)
        throw std::runtime_error("two_scale_measured_fast_frequency: too few crossings");
    // consecutive zero crossings are half a period apart
    const double period = 2.0 * (t_last - t_first) / crossings;
    return 2.0 * kPi / period;
}

// --- dataset generation --------------------------------------------------------

SystemKind system_from_name(const std::string& name)
{
    if (name == "pendulum") return SystemKind::Pendulum;
    if (name == "double_pendulum") return SystemKind::DoublePendulum;
    if (name == "fput") return SystemKind::Fput;
    if (name == "swe_pulse") return SystemKind::SwePulse;
    if (name == "swe_random") return SystemKind::SweRandom;
    if (name == "taylor_green") return SystemKind::TaylorGreen;
    if (name == "two_scale") return SystemKind::TwoScale;
    throw std::invalid_argument("unknown system '" + name + "'");
}

std::string system_name(SystemKind kind)
{
    switch (kind) {
    case SystemKind::Pendulum: return "pendulum";
    case SystemKind::DoublePendulum: return "double_pendulum";
    case SystemKind::Fput: return "fput";
    case SystemKind::SwePulse: return "swe_pulse";
    case SystemKind::SweRandom: return "swe_random";
    case SystemKind::TaylorGreen: return "taylor_green";
    case SystemKind::TwoScale: return "two_scale";
    }
    return "?";
}

int state_dim(const SystemSpec& spec)
{
    switch (spec.kind) {
    case SystemKind::Pendulum: return 2;
    case SystemKind::DoublePendulum: return 4;
    case SystemKind::Fput: return 2 * spec.fput.n;
    case SystemKind::SwePulse:
    case SystemKind::SweRandom: return 3 * spec.swe.n * spec.swe.n;
    case SystemKind::TaylorGreen: return 3 * spec.taylor_green.n * spec.taylor_green.n;
    case SystemKind::TwoScale: return 4;
    }
    return 0;
}

double frame_energy(const SystemSpec& spec, std::span<const double> state)
{
    switch (spec.kind) {
    case SystemKind::Pendulum: return pendulum_energy(spec.pendulum, state);
    case SystemKind::DoublePendulum:
        return double_pendulum_energy(spec.double_pendulum, state);
    case SystemKind::Fput: {
        const int n = spec.fput.n;
        return fput_energy(spec.fput, state.subspan(0, n), state.subspan(n, n));
    }
    case SystemKind::SwePulse:
    case SystemKind::SweRandom: return swe_energy(spec.swe, state);
    case SystemKind::TaylorGreen: {
        // dataset channels are (u, v, p)
        const std::size_t cells =
            static_cast<std::size_t>(spec.taylor_green.n) * spec.taylor_green.n;
        return taylor_green_kinetic_energy(spec.taylor_green, state.subspan(0, cells),
                                           state.subspan(cells, cells));
    }
    case SystemKind::TwoScale: return two_scale_energy(spec.two_scale, state);
    }
    return 0.0;
}

namespace {

// Long rollout of an ODE system, reshaped into segments sharing boundary
// frames: segment t covers saved frames [t*fps, t*fps + fps], fps = steps
// per segment / save_every.
TrajectoryDataset reshape_ode(const SystemSpec& spec, const GenSettings& gen,
                              const std::vector<std::vector<double>>& frames)
{
    const int dim = state_dim(spec);
    if (gen.n_steps % gen.save_every != 0)
        throw std::invalid_argument("generate_dataset: n_steps must be divisible by save_every");
    const long fps = gen.n_steps / gen.save_every;

    TrajectoryDataset ds;
    ds.n_traj = gen.n_traj;
    ds.n_frames = static_cast<int>(fps + 1);
    ds.state_dim = dim;
    ds.dt = gen.dt * gen.save_every;
    ds.allocate();
    for (int t = 0; t < gen.n_traj; ++t)
        for (long k = 0; k <= fps; ++k) {
            const auto& src = frames[static_cast<std::size_t>(t) * fps + k];
            std::copy(src.begin(), src.end(), ds.frame(t, static_cast<int>(k)));
            ds.energy_at(t, static_cast<int>(k)) = frame_energy(spec, src);
        }
    return ds;
}

void add_noise(TrajectoryDataset& ds, double sigma, Rng& rng)
{
    if (sigma <= 0.0) return;
    for (double& x : ds.data) x += rng.normal(0.0, sigma);
}

} // namespace

TrajectoryDataset generate_dataset(const SystemSpec& spec, const GenSettings& gen)
{
    if (gen.n_traj < 1 || gen.n_steps < 1)
        throw std::invalid_argument("generate_dataset: n_traj and n_steps must be positive");

    const bool pde = spec.kind == SystemKind::SwePulse || spec.kind == SystemKind::SweRandom
                     || spec.kind == SystemKind::TaylorGreen;

    if (!pde) {
        Rng ic_rng = Rng::split(gen.seed, 0);
        const int dim = state_dim(spec);
        std::vector<double> z(static_cast<std::size_t>(dim));
        switch (spec.kind) {
        case SystemKind::Pendulum:
            z[0] = ic_rng.uniform(-kPi, kPi);
            z[1] = ic_rng.uniform(-1.0, 1.0);
            break;
        case SystemKind::DoublePendulum:
            z[0] = ic_rng.uniform(-kPi, kPi);
            z[2] = ic_rng.uniform(-kPi, kPi);
            z[1] = ic_rng.uniform(-1.0, 1.0);
            z[3] = ic_rng.uniform(-1.0, 1.0);
            break;
        case SystemKind::Fput:
            for (int i = 0; i < spec.fput.n; ++i) z[i] = ic_rng.normal(0.0, spec.fput.sigma_q);
            for (int i = 0; i < spec.fput.n; ++i)
                z[spec.fput.n + i] = ic_rng.normal(0.0, spec.fput.sigma_p);
            break;
        case SystemKind::TwoScale:
            z[0] = ic_rng.uniform(-1.0, 1.0);
            z[1] = spec.two_scale.fast_center + 0.1 * ic_rng.uniform(-1.0, 1.0);
            z[2] = ic_rng.uniform(-1.0, 1.0);
            z[3] = 0.1 * ic_rng.uniform(-1.0, 1.0);
            break;
        default: break;
        }

        const long total_steps = static_cast<long>(gen.n_traj) * gen.n_steps;
        std::vector<std::vector<double>> frames;
        frames.reserve(static_cast<std::size_t>(total_steps / gen.save_every) + 1);
        frames.push_back(z);

        switch (spec.kind) {
        case SystemKind::Pendulum: {
            SplitSystemFn sys = pendulum_split(spec.pendulum);
            for (long s = 1; s <= total_steps; ++s) {
                leapfrog_step(sys, std::span<double>(z.data(), 1),
                              std::span<double>(z.data() + 1, 1), gen.dt, s);
                if (s % gen.save_every == 0) frames.push_back(z);
            }
            break;
        }
        case SystemKind::DoublePendulum:
            for (long s = 1; s <= total_steps; ++s) {
                double_pendulum_step(spec.double_pendulum, std::span<double>(z), gen.dt);
                if (s % gen.save_every == 0) frames.push_back(z);
            }
            break;
        case SystemKind::Fput: {
            SplitSystemFn sys = fput_split(spec.fput);
            const int n = spec.fput.n;
            for (long s = 1; s <= total_steps; ++s) {
                velocity_verlet_step(sys, spec.fput.m, std::span<double>(z.data(), n),
                                     std::span<double>(z.data() + n, n), gen.dt, s);
                if (s % gen.save_every == 0) frames.push_back(z);
            }
            break;
        }
        case SystemKind::TwoScale: {
            auto field = [&](std::span<const double> s, double, std::span<double> d) {
                two_scale_rhs(spec.two_scale, s, d);
            };
            for (long s = 1; s <= total_steps; ++s) {
                rk4_step(field, std::span<double>(z), (s - 1) * gen.dt, gen.dt);
                if (s % gen.save_every == 0) frames.push_back(z);
            }
            break;
        }
        default: break;
        }

        TrajectoryDataset ds = reshape_ode(spec, gen, frames);
        Rng noise_rng = Rng::split(gen.seed, 1);
        add_noise(ds, gen.noise_sigma, noise_rng);
        return ds;
    }

    // PDE systems: independent rollouts, one RNG stream per trajectory.
    const bool is_swe = spec.kind != SystemKind::TaylorGreen;
    const int n = is_swe ? spec.swe.n : spec.taylor_green.n;
    const std::size_t cells = static_cast<std::size_t>(n) * n;
    const double dt = is_swe ? swe_dt(spec.swe) : taylor_green_dt(spec.taylor_green);
    if (gen.n_steps % gen.save_every != 0)
        throw std::invalid_argument("generate_dataset: n_steps must be divisible by save_every");
    const long fps = gen.n_steps / gen.save_every;

    TrajectoryDataset ds;
    ds.n_traj = gen.n_traj;
    ds.n_frames = static_cast<int>(fps + 1);
    ds.state_dim = static_cast<int>(3 * cells);
    ds.dt = dt * gen.save_every;
    ds.field_channels = 3;
    ds.field_ny = n;
    ds.field_nx = n;
    ds.field_dx = is_swe ? swe_dx(spec.swe) : 2.0 * kPi / n;
    ds.allocate();

    for (int t = 0; t < gen.n_traj; ++t) {
        Rng traj_rng = Rng::split(gen.seed, static_cast<std::uint64_t>(t));
        if (is_swe) {
            FieldState f =
                spec.kind == SystemKind::SwePulse
                    ? swe_init_pulse(spec.swe, spec.pulse_amplitude, spec.pulse_sigma,
                                     spec.randomize_center
                                         ? static_cast<int>(traj_rng.index(n))
                                         : n / 2,
                                     spec.randomize_center
                                         ? static_cast<int>(traj_rng.index(n))
                                         : n / 2)
                    : swe_init_random(spec.swe, spec.random_amplitude,
                                      spec.random_jump_threshold, traj_rng);
            std::vector<double> z = f.data;
            auto field = [&](std::span<const double> s, double, std::span<double> d) {
                swe_rhs(spec.swe, s, d);
            };
            auto save = [&](int k) {
                std::copy(z.begin(), z.end(), ds.frame(t, k));
                ds.energy_at(t, k) = swe_energy(spec.swe, z);
            };
            save(0);
            for (long s = 1; s <= gen.n_steps; ++s) {
                heun_rk2_step(field, std::span<double>(z), (s - 1) * dt, dt);
                if (s % gen.save_every == 0) save(static_cast<int>(s / gen.save_every));
            }
        } else {
            std::vector<double> omega = taylor_green_init(spec.taylor_green);
            auto field = [&](std::span<const double> s, double, std::span<double> d) {
                taylor_green_rhs(spec.taylor_green, s, d);
            };
            std::vector<double> u, v;
            auto save = [&](int k, double time) {
                taylor_green_velocity(spec.taylor_green, omega, u, v);
                const std::vector<double> pr = taylor_green_pressure(spec.taylor_green, time);
                double* dst = ds.frame(t, k);
                std::copy(u.begin(), u.end(), dst);
                std::copy(v.begin(), v.end(), dst + cells);
                std::copy(pr.begin(), pr.end(), dst + 2 * cells);
                ds.energy_at(t, k) = taylor_green_kinetic_energy(spec.taylor_green, u, v);
            };
            save(0, 0.0);
            for (long s = 1; s <= gen.n_steps; ++s) {
                rk4_step(field, std::span<double>(omega), (s - 1) * dt, dt);
                if (s % gen.save_every == 0)
                    save(static_cast<int>(s / gen.save_every), s * dt);
            }
        }
    }

    Rng noise_rng = Rng::split(gen.seed, 0x6e6f6973ULL);
    add_noise(ds, gen.noise_sigma, noise_rng);
    return ds;
}

} // namespace fshnn::sys
