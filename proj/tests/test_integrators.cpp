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

#include "fshnn/integrators.hpp"
#include "fshnn/systems.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>

using namespace fshnn;

namespace {
constexpr double kPi = std::numbers::pi;
}

TEST_CASE("leapfrog: pendulum examples")
{
    const sys::PendulumParams p;
    SplitSystemFn sysfn = sys::pendulum_split(p);

    double q = 0.0, mom = 0.0;
    leapfrog_step(sysfn, {&q, 1}, {&mom, 1}, 0.1);
    CHECK(q == doctest::Approx(0.0));
    CHECK(mom == doctest::Approx(0.0));

    // hand-evaluated kick-drift-kick from (pi/2, 0), dt = 0.1
    q = kPi / 2.0;
    mom = 0.0;
    leapfrog_step(sysfn, {&q, 1}, {&mom, 1}, 0.1);
    CHECK(q == doctest::Approx(kPi / 2.0 - 0.005).epsilon(1e-12));
    CHECK(mom == doctest::Approx(-0.05 - 0.05 * std::sin(kPi / 2.0 - 0.005)).epsilon(1e-12));

    // one step forward, one step back
    double q2 = 0.9, p2 = -0.3;
    leapfrog_step(sysfn, {&q2, 1}, {&p2, 1}, 0.1);
    leapfrog_step(sysfn, {&q2, 1}, {&p2, 1}, -0.1);
    CHECK(std::fabs(q2 - 0.9) < 1e-12);
    CHECK(std::fabs(p2 + 0.3) < 1e-12);
}

TEST_CASE("leapfrog: 1000 steps forward then back returns the state")
{
    const sys::PendulumParams p;
    SplitSystemFn sysfn = sys::pendulum_split(p);
    double q = 1.2, mom = 0.4;
    for (int s = 0; s < 1000; ++s) leapfrog_step(sysfn, {&q, 1}, {&mom, 1}, 0.01);
    for (int s = 0; s < 1000; ++s) leapfrog_step(sysfn, {&q, 1}, {&mom, 1}, -0.01);
    CHECK(std::fabs(q - 1.2) < 1e-8);
    CHECK(std::fabs(mom - 0.4) < 1e-8);
}

TEST_CASE("symplectic Euler: examples")
{
    // harmonic oscillator T = p^2/2, V = q^2/2
    SplitSystemFn harm;
    harm.force = [](std::span<const double> q, std::span<double> f) { f[0] = -q[0]; };
    harm.velocity = [](std::span<const double> p, std::span<double> v) { v[0] = p[0]; };

    double q = 1.0, p = 0.0;
    symplectic_euler_step(harm, {&q, 1}, {&p, 1}, 0.1);
    CHECK(p == doctest::Approx(-0.1));
    CHECK(q == doctest::Approx(0.99));

    // determinant of the one-step linear map is exactly 1
    const double dt = 0.1;
    auto map = [&](double q0, double p0, double& q1, double& p1) {
        p1 = p0 - dt * q0;
        q1 = q0 + dt * p1;
    };
    double q10, p10, q01, p01, q00, p00;
    map(1.0, 0.0, q10, p10);
    map(0.0, 1.0, q01, p01);
    map(0.0, 0.0, q00, p00);
    const double det = (q10 - q00) * (p01 - p00) - (q01 - q00) * (p10 - p00);
    CHECK(det == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("double pendulum equilibrium stays put")
{
    const sys::DoublePendulumParams p;
    double state[4] = {0.0, 0.0, 0.0, 0.0};
    sys::double_pendulum_step(p, state, 1e-3);
    for (double v : state) CHECK(v == doctest::Approx(0.0));
}

TEST_CASE("velocity Verlet: examples")
{
    // zero force: uniform drift
    SplitSystemFn freefn;
    freefn.force = [](std::span<const double>, std::span<double> f) { f[0] = 0.0; };
    freefn.velocity = [](std::span<const double> p, std::span<double> v) { v[0] = p[0]; };
    double q = 0.5, p = 2.0;
    velocity_verlet_step(freefn, 1.0, {&q, 1}, {&p, 1}, 0.1);
    CHECK(q == doctest::Approx(0.5 + 2.0 * 0.1));
    CHECK(p == doctest::Approx(2.0));

    // FPUT equilibrium stays
    sys::FputParams fp;
    fp.n = 4;
    SplitSystemFn chain = sys::fput_split(fp);
    std::vector<double> qc(4, 0.0), pc(4, 0.0);
    velocity_verlet_step(chain, fp.m, qc, pc, 0.01);
    for (double v : qc) CHECK(v == doctest::Approx(0.0));
    for (double v : pc) CHECK(v == doctest::Approx(0.0));

    // one harmonic step agrees with leapfrog to round-off
    SplitSystemFn harm;
    harm.force = [](std::span<const double> qv, std::span<double> f) { f[0] = -qv[0]; };
    harm.velocity = [](std::span<const double> pv, std::span<double> v) { v[0] = pv[0]; };
    double qa = 0.7, pa = -0.2, qb = 0.7, pb = -0.2;
    velocity_verlet_step(harm, 1.0, {&qa, 1}, {&pa, 1}, 0.05);
    leapfrog_step(harm, {&qb, 1}, {&pb, 1}, 0.05);
    CHECK(qa == doctest::Approx(qb).epsilon(1e-14));
    CHECK(pa == doctest::Approx(pb).epsilon(1e-14));
}

TEST_CASE("heun: examples")
{
    auto zero = [](std::span<const double>, double, std::span<double> d) { d[0] = 0.0; };
    auto one = [](std::span<const double>, double, std::span<double> d) { d[0] = 1.0; };
    auto lin = [](std::span<const double> z, double, std::span<double> d) { d[0] = z[0]; };

    double z = 3.0;
    heun_rk2_step(zero, {&z, 1}, 0.0, 0.1);
    CHECK(z == doctest::Approx(3.0));
    z = 3.0;
    heun_rk2_step(one, {&z, 1}, 0.0, 0.1);
    CHECK(z == doctest::Approx(3.1).epsilon(1e-15));
    z = 1.0;
    heun_rk2_step(lin, {&z, 1}, 0.0, 0.1);
    CHECK(z == doctest::Approx(1.105).epsilon(1e-15));
}

TEST_CASE("rk4: examples and Richardson ratio")
{
    auto zero = [](std::span<const double>, double, std::span<double> d) { d[0] = 0.0; };
    auto lin = [](std::span<const double> z, double, std::span<double> d) { d[0] = z[0]; };

    double z = 2.0;
    rk4_step(zero, {&z, 1}, 0.0, 0.1);
    CHECK(z == doctest::Approx(2.0));

    z = 1.0;
    rk4_step(lin, {&z, 1}, 0.0, 0.1);
    CHECK(z == doctest::Approx(1.1051708333333333).epsilon(1e-12));

    // single-step error halves by ~2^5 when dt halves
    auto err = [&](double dt) {
        double y = 1.0;
        rk4_step(lin, {&y, 1}, 0.0, dt);
        return std::fabs(y - std::exp(dt));
    };
    const double ratio = err(0.2) / err(0.1);
    CHECK(ratio > 24.0);
    CHECK(ratio < 40.0);
}

TEST_CASE("empirical convergence orders on zdot = z")
{
    auto lin = [](std::span<const double> z, double, std::span<double> d) { d[0] = z[0]; };
    auto global_err = [&](int order2, double h) {
        double z = 1.0;
        const long n = static_cast<long>(std::llround(1.0 / h));
        for (long s = 0; s < n; ++s) {
            if (order2)
                heun_rk2_step(lin, {&z, 1}, s * h, h);
            else
                rk4_step(lin, {&z, 1}, s * h, h);
        }
        return std::fabs(z - std::exp(1.0));
    };
    const double slope_heun =
        std::log2(global_err(1, 0.02) / global_err(1, 0.01));
    const double slope_rk4 = std::log2(global_err(0, 0.02) / global_err(0, 0.01));
    CHECK(std::fabs(slope_heun - 2.0) < 0.1);
    CHECK(std::fabs(slope_rk4 - 4.0) < 0.1);
}

TEST_CASE("rollout: frame counting and timestamps")
{
    auto one = [](std::span<const double>, double, std::span<double> d) { d[0] = 1.0; };
    auto step = [&](std::span<double> z, double t, double dt) { heun_rk2_step(one, z, t, dt); };

    const std::vector<double> z0{0.0};
    const RolloutFrames a = rollout(step, z0, 0.1, 10, 1);
    CHECK(a.n_saved() == 11);

    const RolloutFrames b = rollout(step, z0, 0.1, 10, 5);
    CHECK(b.n_saved() == 3);
    CHECK(b.frame_dt == doctest::Approx(0.5));
    CHECK(b.frame(1)[0] == doctest::Approx(0.5).epsilon(1e-14));
    CHECK(b.frame(2)[0] == doctest::Approx(1.0).epsilon(1e-14));

    const RolloutFrames c = rollout(step, z0, 1.0, 3, 1);
    for (int k = 0; k <= 3; ++k) CHECK(c.frame(k)[0] == doctest::Approx(double(k)));
}

TEST_CASE("rollout: step failure reports the frame index")
{
    auto bad = [](std::span<double>, double, double) {
        throw std::runtime_error("boom");
    };
    const std::vector<double> z0{0.0};
    CHECK_THROWS_WITH_AS(rollout(bad, z0, 0.1, 5, 1), doctest::Contains("step 1"),
                         std::runtime_error);
}

TEST_CASE("pendulum energy: leapfrog bounded, explicit Euler grows")
{
    const sys::PendulumParams p;
    SplitSystemFn sysfn = sys::pendulum_split(p);
    const double e0 = sys::pendulum_energy(p, std::vector<double>{1.2, 0.4});

    double q = 1.2, mom = 0.4;
    double max_dev = 0.0;
    for (int s = 0; s < 10000; ++s) {
        leapfrog_step(sysfn, {&q, 1}, {&mom, 1}, 0.01);
        const double e = sys::pendulum_energy(p, std::vector<double>{q, mom});
        max_dev = std::max(max_dev, std::fabs(e - e0) / std::fabs(e0));
    }
    CHECK(max_dev < 1e-3);

    q = 1.2;
    mom = 0.4;
    double e_prev = e0;
    bool monotone = true;
    for (int chunk = 0; chunk < 10; ++chunk) {
        for (int s = 0; s < 1000; ++s) explicit_euler_step(sysfn, {&q, 1}, {&mom, 1}, 0.01);
        const double e = sys::pendulum_energy(p, std::vector<double>{q, mom});
        if (e <= e_prev) monotone = false;
        e_prev = e;
    }
    CHECK(monotone);
    CHECK(std::fabs(e_prev - e0) / std::fabs(e0) > 1e-2);
}
