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

#include <cmath>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace fshnn {

// f(state, t, out): time-derivative of a flat state vector.
using VectorFieldFn =
    std::function<void(std::span<const double>, double, std::span<double>)>;

// Separable system maps: force(q) = -dV/dq, velocity(p) = dT/dp.
struct SplitSystemFn {
    std::function<void(std::span<const double>, std::span<double>)> force;
    std::function<void(std::span<const double>, std::span<double>)> velocity;
};

namespace detail {

inline void require_finite(std::span<const double> v, const char* what, long step)
{
    for (double x : v)
        if (!std::isfinite(x))
            throw std::runtime_error(std::string(what) + " produced a non-finite value at step "
                                     + std::to_string(step));
}

} // namespace detail

// Kick-drift-kick leapfrog. Negative dt is allowed (reversibility tests).
inline void leapfrog_step(const SplitSystemFn& sys, std::span<double> q,
                          std::span<double> p, double dt, long step = 0)
{
    const std::size_t n = q.size();
    std::vector<double> f(n), v(n);
    sys.force(q, f);
    detail::require_finite(f, "leapfrog force", step);
    for (std::size_t i = 0; i < n; ++i) p[i] += 0.5 * dt * f[i];
    sys.velocity(p, v);
    for (std::size_t i = 0; i < n; ++i) q[i] += dt * v[i];
    sys.force(q, f);
    detail::require_finite(f, "leapfrog force", step);
    for (std::size_t i = 0; i < n; ++i) p[i] += 0.5 * dt * f[i];
}

// Semi-implicit Euler: momentum first, then position from the new momentum.
inline void symplectic_euler_step(const SplitSystemFn& sys, std::span<double> q,
                                  std::span<double> p, double dt, long step = 0)
{
    const std::size_t n = q.size();
    std::vector<double> f(n), v(n);
    sys.force(q, f);
    detail::require_finite(f, "symplectic Euler force", step);
    for (std::size_t i = 0; i < n; ++i) p[i] += dt * f[i];
    sys.velocity(p, v);
    for (std::size_t i = 0; i < n; ++i) q[i] += dt * v[i];
}

// Velocity Verlet for unit-form kinetic energy T = p^2 / (2m).
inline void velocity_verlet_step(const SplitSystemFn& sys, double mass,
                                 std::span<double> q, std::span<double> p, double dt,
                                 long step = 0)
{
    const std::size_t n = q.size();
    std::vector<double> f0(n), f1(n);
    sys.force(q, f0);
    detail::require_finite(f0, "velocity Verlet force", step);
    const double inv_m = 1.0 / mass;
    for (std::size_t i = 0; i < n; ++i)
        q[i] += p[i] * inv_m * dt + 0.5 * f0[i] * inv_m * dt * dt;
    sys.force(q, f1);
    detail::require_finite(f1, "velocity Verlet force", step);
    for (std::size_t i = 0; i < n; ++i) p[i] += 0.5 * (f0[i] + f1[i]) * dt;
}

// Explicit Euler; kept for the energy-drift contrast tests.
inline void explicit_euler_step(const SplitSystemFn& sys, std::span<double> q,
                                std::span<double> p, double dt, long step = 0)
{
    const std::size_t n = q.size();
    std::vector<double> f(n), v(n);
    sys.force(q, f);
    detail::require_finite(f, "explicit Euler force", step);
    sys.velocity(p, v);
    for (std::size_t i = 0; i < n; ++i) {
        q[i] += dt * v[i];
        p[i] += dt * f[i];
    }
}

// Second-order Heun (RK2).
template <typename Field>
void heun_rk2_step(Field&& f, std::span<double> z, double t, double dt)
{
    const std::size_t n = z.size();
    std::vector<double> k1(n), z1(n), k2(n);
    f(std::span<const double>(z.data(), n), t, std::span<double>(k1));
    for (std::size_t i = 0; i < n; ++i) z1[i] = z[i] + dt * k1[i];
    f(std::span<const double>(z1.data(), n), t + dt, std::span<double>(k2));
    for (std::size_t i = 0; i < n; ++i) z[i] += 0.5 * dt * (k1[i] + k2[i]);
}

// Classical four-stage Runge-Kutta.
template <typename Field>
void rk4_step(Field&& f, std::span<double> z, double t, double dt)
{
    const std::size_t n = z.size();
    std::vector<double> k1(n), k2(n), k3(n), k4(n), zs(n);
    f(std::span<const double>(z.data(), n), t, std::span<double>(k1));
    for (std::size_t i = 0; i < n; ++i) zs[i] = z[i] + 0.5 * dt * k1[i];
    f(std::span<const double>(zs.data(), n), t + 0.5 * dt, std::span<double>(k2));
    for (std::size_t i = 0; i < n; ++i) zs[i] = z[i] + 0.5 * dt * k2[i];
    f(std::span<const double>(zs.data(), n), t + 0.5 * dt, std::span<double>(k3));
    for (std::size_t i = 0; i < n; ++i) zs[i] = z[i] + dt * k3[i];
    f(std::span<const double>(zs.data(), n), t + dt, std::span<double>(k4));
    for (std::size_t i = 0; i < n; ++i)
        z[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
}

// Saved frames of a rollout, including the initial state; frame k holds the
// state at t = k * save_every * dt.
struct RolloutFrames {
    int state_dim = 0;
    double frame_dt = 0.0;            // save_every * dt
    std::vector<double> states;       // [n_saved * state_dim]
    int n_saved() const { return state_dim ? static_cast<int>(states.size()) / state_dim : 0; }
    double* frame(int k) { return states.data() + static_cast<std::size_t>(k) * state_dim; }
    const double* frame(int k) const
    {
        return states.data() + static_cast<std::size_t>(k) * state_dim;
    }
};

// Generic rollout: `step(z, t, dt)` advances the flat state in place.
template <typename Step>
RolloutFrames rollout(Step&& step, std::span<const double> state0, double dt,
                      long n_steps, long save_every)
{
    if (n_steps < 1) throw std::invalid_argument("rollout: n_steps must be >= 1");
    if (save_every < 1) throw std::invalid_argument("rollout: save_every must be >= 1");
    RolloutFrames out;
    out.state_dim = static_cast<int>(state0.size());
    out.frame_dt = save_every * dt;
    out.states.reserve(static_cast<std::size_t>(n_steps / save_every + 1) * state0.size());
    std::vector<double> z(state0.begin(), state0.end());
    out.states.insert(out.states.end(), z.begin(), z.end());
    for (long k = 1; k <= n_steps; ++k) {
        try {
            step(std::span<double>(z), (k - 1) * dt, dt);
        } catch (const std::exception& e) {
            throw std::runtime_error("rollout: step " + std::to_string(k) + " failed: "
                                     + e.what());
        }
        detail::require_finite(z, "rollout state", k);
        if (k % save_every == 0) out.states.insert(out.states.end(), z.begin(), z.end());
    }
    return out;
}

} // namespace fshnn
