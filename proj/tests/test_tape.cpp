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

#include "fshnn/nets.hpp"
#include "fshnn/rng.hpp"
#include "fshnn/tape.hpp"

#include <doctest.h>

#include <cmath>
#include <vector>

using namespace fshnn;

namespace {

// Central-difference oracle on evaluate(); h = 1e-5 on 64-bit reals.
std::vector<double> fd_gradient(const ad::Tape& tape, std::vector<double> leaves,
                                double h = 1.0e-5)
{
    std::vector<double> g(leaves.size());
    for (std::size_t i = 0; i < leaves.size(); ++i) {
        const double keep = leaves[i];
        leaves[i] = keep + h;
        const double up = ad::evaluate(tape, leaves)[0];
        leaves[i] = keep - h;
        const double dn = ad::evaluate(tape, leaves)[0];
        leaves[i] = keep;
        g[i] = (up - dn) / (2.0 * h);
    }
    return g;
}

std::vector<double> recorded_leaf_values(const ad::Tape& tape)
{
    std::vector<double> v;
    for (int id : tape.leaves()) {
        const ad::Node& n = tape.node(id);
        for (int i = 0; i < n.size; ++i)
            v.push_back(tape.recorded()[static_cast<std::size_t>(n.offset + i)]);
    }
    return v;
}

// Scale-aware comparison: relative above one, absolute below.
void check_close(double got, double want, double tol)
{
    CHECK(std::fabs(got - want) <= tol * std::max(1.0, std::fabs(want)));
}

} // namespace

TEST_CASE("evaluate: spec examples")
{
    {
        ad::Tape t;
        const int x = t.input(std::vector<double>{3.0});
        t.mark_output(t.square(x));
        CHECK(ad::evaluate(t, std::vector<double>{3.0})[0] == doctest::Approx(9.0));
    }
    {
        ad::Tape t;
        const int x = t.input(std::vector<double>{5.0});
        t.mark_output(x);
        CHECK(ad::evaluate(t, std::vector<double>{5.0})[0] == doctest::Approx(5.0));
    }
    {
        ad::Tape t;
        const int x = t.input(std::vector<double>{2.0});
        const int y = t.input(std::vector<double>{7.0});
        t.mark_output(t.mul(x, y));
        CHECK(ad::evaluate(t, std::vector<double>{2.0, 7.0})[0] == doctest::Approx(14.0));
    }
}

TEST_CASE("evaluate: non-finite intermediate names the node")
{
    ad::Tape t;
    const int x = t.input(std::vector<double>{1.0});
    t.mark_output(t.reciprocal(x));
    CHECK_THROWS_WITH_AS(ad::evaluate(t, std::vector<double>{0.0}),
                         doctest::Contains("node"), std::runtime_error);
}

TEST_CASE("evaluate: deterministic bitwise")
{
    Rng rng(7);
    ad::Tape t;
    const int x = t.input(std::vector<double>{0.3, -0.8});
    const int s = t.sin(x);
    const int e = t.exp(s);
    t.mark_output(t.sum(t.mul(e, x)));
    std::vector<double> leaves{rng.uniform(-2.0, 2.0), rng.uniform(-2.0, 2.0)};
    const auto a = ad::evaluate(t, leaves);
    const auto b = ad::evaluate(t, leaves);
    CHECK(a[0] == b[0]); // exact equality intended
}

TEST_CASE("recording caches primals bitwise")
{
    ad::Tape t;
    const int x = t.input(std::vector<double>{0.7});
    const int y = t.tanh(t.scale(x, 3.0));
    t.mark_output(y);
    const auto out = ad::evaluate(t, recorded_leaf_values(t));
    CHECK(out[0] == t.recorded()[static_cast<std::size_t>(t.node(y).offset)]);
}

TEST_CASE("grad: spec examples")
{
    {
        ad::Tape t;
        const int x = t.input(std::vector<double>{3.0});
        t.mark_output(t.square(x));
        CHECK(ad::grad(t, {x})[0] == doctest::Approx(6.0));
    }
    {
        // f(q, p) = (q^2 + p^2) / 2 at (1, 2)
        ad::Tape t;
        const int z = t.input(std::vector<double>{1.0, 2.0});
        t.mark_output(t.scale(t.sum(t.square(z)), 0.5));
        const auto g = ad::grad(t, {z});
        CHECK(g[0] == doctest::Approx(1.0));
        CHECK(g[1] == doctest::Approx(2.0));
    }
}

TEST_CASE("grad: requires a single scalar output")
{
    ad::Tape t;
    const int x = t.input(std::vector<double>{1.0, 2.0});
    t.mark_output(t.square(x)); // vector output
    CHECK_THROWS_AS(ad::grad(t, {x}), std::invalid_argument);
}

TEST_CASE("grad: every opcode matches the central-difference oracle")
{
    Rng rng(42);
    for (int trial = 0; trial < 100; ++trial) {
        ad::Tape t;
        std::vector<double> x0(4), y0(4);
        for (auto& v : x0) v = rng.uniform(-2.0, 2.0);
        for (auto& v : y0) v = rng.uniform(-2.0, 2.0);
        const int x = t.input(x0);
        const int y = t.input(y0);

        // run every elementwise opcode; keep reciprocal away from zero
        const int safe = t.add(t.square(x), t.constant(std::vector<double>(4, 1.5)));
        int acc = t.sum(t.reciprocal(safe));
        acc = t.add(acc, t.sum(t.sin(x)));
        acc = t.add(acc, t.sum(t.cos(y)));
        acc = t.add(acc, t.sum(t.mul(x, y)));
        acc = t.add(acc, t.sum(t.exp(t.scale(x, 0.3))));
        acc = t.add(acc, t.sum(t.tanh(y)));
        acc = t.add(acc, t.sum(t.softplus(x)));
        acc = t.add(acc, t.dot(x, y));
        acc = t.add(acc, t.sum(t.neg(t.concat(x, y))));
        acc = t.add(acc, t.sum(t.repeat(x, 3)));
        t.mark_output(acc);

        const auto g = ad::grad(t, {x, y});
        auto leaves = recorded_leaf_values(t);
        // the const leaf participates in the flat leaf vector; restrict FD to x,y
        const auto fd = fd_gradient(t, leaves);
        for (int i = 0; i < 8; ++i) check_close(g[i], fd[i], 1.0e-6);
    }
}

TEST_CASE("grad: affine, conv2d and avg_pool2d match the oracle")
{
    Rng rng(3);
    // affine with batch
    {
        ad::Tape t;
        std::vector<double> w0(6), b0(2), x0(6);
        for (auto& v : w0) v = rng.uniform(-1.0, 1.0);
        for (auto& v : b0) v = rng.uniform(-1.0, 1.0);
        for (auto& v : x0) v = rng.uniform(-1.0, 1.0);
        const int w = t.input(w0);
        const int x = t.input(x0);
        const int b = t.input(b0);
        t.mark_output(t.sum(t.tanh(t.affine(w, x, b, 2, 3, 2))));
        const auto g = ad::grad(t, {w, x, b});
        const auto fd = fd_gradient(t, recorded_leaf_values(t));
        for (std::size_t i = 0; i < g.size(); ++i) check_close(g[i], fd[i], 1.0e-6);
    }
    // periodic conv + pool
    {
        ad::Tape t;
        std::vector<double> w0(2 * 1 * 9), b0(2), x0(16);
        for (auto& v : w0) v = rng.uniform(-1.0, 1.0);
        for (auto& v : b0) v = rng.uniform(-1.0, 1.0);
        for (auto& v : x0) v = rng.uniform(-1.0, 1.0);
        const int w = t.input(w0);
        const int x = t.input(x0);
        const int b = t.input(b0);
        const int conv = t.conv2d(w, x, b, 1, 2, 4, 4, 3);
        const int pooled = t.avg_pool2d(t.tanh(conv), 2, 4, 4, 2);
        t.mark_output(t.sum(pooled));
        const auto g = ad::grad(t, {w, x, b});
        const auto fd = fd_gradient(t, recorded_leaf_values(t));
        for (std::size_t i = 0; i < g.size(); ++i) check_close(g[i], fd[i], 1.0e-6);
    }
}

TEST_CASE("grad: linearity holds to round-off")
{
    Rng rng(11);
    std::vector<double> x0(3);
    for (auto& v : x0) v = rng.uniform(-2.0, 2.0);

    auto grad_of = [&](double a, double b) {
        ad::Tape t;
        const int x = t.input(x0);
        const int f = t.sum(t.sin(x));
        const int g = t.sum(t.square(x));
        t.mark_output(t.add(t.scale(f, a), t.scale(g, b)));
        return ad::grad(t, {x});
    };
    const auto gf = grad_of(1.0, 0.0);
    const auto gg = grad_of(0.0, 1.0);
    const auto combined = grad_of(2.0, -0.5);
    for (int i = 0; i < 3; ++i)
        CHECK(combined[i] == doctest::Approx(2.0 * gf[i] - 0.5 * gg[i]).epsilon(1e-12));
}

TEST_CASE("grad: random 2-layer tanh MLP matches the oracle")
{
    Rng rng(123);
    nn::MlpSpec spec;
    spec.widths = {2, 2, 1}; // 2*2+2 + 2*1+1 = 9 params, close to the 10 in the example
    ParamVector params;
    init_mlp(spec, params, "net", rng);

    ad::Tape t;
    const int z = t.input(std::vector<double>{0.4, -1.1});
    nn::RecordCursor cur{&params, 0};
    t.mark_output(record_mlp(t, spec, cur, z));

    const auto g = ad::grad(t, {z});
    const auto fd = fd_gradient(t, recorded_leaf_values(t));
    check_close(g[0], fd[0], 1.0e-6);
    check_close(g[1], fd[1], 1.0e-6);
}

TEST_CASE("mixed_second: spec examples")
{
    // H(q, p; theta) = theta * q * p, direction (0, 1): d/dtheta dH/dp = q = 3
    {
        ad::Tape t;
        const int q = t.input(std::vector<double>{3.0});
        const int p = t.input(std::vector<double>{-0.7});
        const int theta = t.param("theta", std::vector<double>{2.0}, {1});
        t.mark_output(t.mul(theta, t.mul(q, p)));
        const auto d = ad::mixed_second(t, std::vector<double>{0.0, 1.0});
        CHECK(d[0] == doctest::Approx(3.0));
    }
    // H independent of theta -> zero
    {
        ad::Tape t;
        const int q = t.input(std::vector<double>{1.2});
        const int theta = t.param("theta", std::vector<double>{0.5}, {1});
        (void)theta;
        t.mark_output(t.square(q));
        const auto d = ad::mixed_second(t, std::vector<double>{1.0});
        CHECK(d[0] == doctest::Approx(0.0));
    }
    // direction length mismatch
    {
        ad::Tape t;
        const int q = t.input(std::vector<double>{1.0, 2.0});
        t.mark_output(t.sum(q));
        CHECK_THROWS_AS(ad::mixed_second(t, std::vector<double>{1.0}), std::invalid_argument);
    }
}

TEST_CASE("mixed_second: matches finite difference of grad() in theta")
{
    Rng rng(2024);
    for (int trial = 0; trial < 5; ++trial) {
        nn::MlpSpec spec;
        spec.widths = {4, 3, 1};
        spec.activation = trial % 2 == 0 ? nn::Activation::Tanh : nn::Activation::Softplus;
        ParamVector params;
        init_mlp(spec, params, "net", rng);

        std::vector<double> z0(4), dir(4);
        for (auto& v : z0) v = rng.uniform(-1.5, 1.5);
        for (auto& v : dir) v = rng.uniform(-1.0, 1.0);

        ad::Tape t;
        const int z = t.input(z0);
        nn::RecordCursor cur{&params, 0};
        t.mark_output(record_mlp(t, spec, cur, z));

        const auto got = ad::mixed_second(t, dir);

        // oracle: d/dtheta [dir . grad_z H] by central differences in theta
        const double h = 1.0e-5;
        auto leaves = recorded_leaf_values(t);
        std::vector<double> fd(params.size());
        for (std::size_t i = 0; i < params.size(); ++i) {
            auto probe = [&](double delta) {
                ad::Tape t2;
                const int z2 = t2.input(z0);
                ParamVector p2 = params;
                p2.values()[i] += delta;
                nn::RecordCursor cur2{&p2, 0};
                t2.mark_output(record_mlp(t2, spec, cur2, z2));
                const auto g = ad::grad(t2, {z2});
                double acc = 0.0;
                for (int j = 0; j < 4; ++j) acc += dir[j] * g[j];
                return acc;
            };
            fd[i] = (probe(h) - probe(-h)) / (2.0 * h);
        }
        for (std::size_t i = 0; i < params.size(); ++i) check_close(got[i], fd[i], 1.0e-5);
    }
}

TEST_CASE("mixed_second: conv and pooling participate")
{
    Rng rng(5);
    // scalar output through conv + pool with trainable kernel
    std::vector<double> w0(9), b0(1), x0(16), dir(16);
    for (auto& v : w0) v = rng.uniform(-1.0, 1.0);
    for (auto& v : x0) v = rng.uniform(-1.0, 1.0);
    for (auto& v : dir) v = rng.uniform(-1.0, 1.0);
    b0[0] = 0.1;

    ad::Tape t;
    const int x = t.input(x0);
    const int w = t.param("w", w0, {1, 1, 3, 3});
    const int b = t.param("b", b0, {1});
    const int conv = t.tanh(t.conv2d(w, x, b, 1, 1, 4, 4, 3));
    t.mark_output(t.sum(t.avg_pool2d(conv, 1, 4, 4, 2)));

    const auto got = ad::mixed_second(t, dir);

    const double h = 1.0e-5;
    for (std::size_t i = 0; i < 10; ++i) {
        auto probe = [&](double delta) {
            ad::Tape t2;
            const int x2 = t2.input(x0);
            auto w2 = w0;
            auto b2 = b0;
            if (i < 9)
                w2[i] += delta;
            else
                b2[0] += delta;
            const int wn = t2.param("w", w2, {1, 1, 3, 3});
            const int bn = t2.param("b", b2, {1});
            const int c = t2.tanh(t2.conv2d(wn, x2, bn, 1, 1, 4, 4, 3));
            t2.mark_output(t2.sum(t2.avg_pool2d(c, 1, 4, 4, 2)));
            const auto g = ad::grad(t2, {x2});
            double acc = 0.0;
            for (int j = 0; j < 16; ++j) acc += dir[j] * g[j];
            return acc;
        };
        const double fd = (probe(h) - probe(-h)) / (2.0 * h);
        check_close(got[i], fd, 1.0e-5);
    }
}
