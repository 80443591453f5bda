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

#include <cmath>
#include <stdexcept>

namespace fshnn::nn {

long MlpSpec::param_count() const
{
    long count = 0;
    for (std::size_t l = 0; l + 1 < widths.size(); ++l)
        count += static_cast<long>(widths[l]) * widths[l + 1] + widths[l + 1];
    return count;
}

void MlpSpec::validate() const
{
    if (widths.size() < 3)
        throw std::invalid_argument("MlpSpec: at least one hidden layer required");
    for (int w : widths)
        if (w < 1) throw std::invalid_argument("MlpSpec: widths must be >= 1");
}

void DeepONetSpec::validate() const
{
    branch.validate();
    trunk.validate();
    if (branch.output_width() != latent || trunk.output_width() != latent)
        throw std::invalid_argument("DeepONetSpec: branch and trunk must both output `latent`");
    if (trunk.input_width() != 2)
        throw std::invalid_argument("DeepONetSpec: trunk consumes 2D coordinates");
    if (stencil < 1) throw std::invalid_argument("DeepONetSpec: stencil must be positive");
}

void ResConvSpec::validate() const
{
    if (state_channels < 1 || hidden_channels < 1 || depth < 0)
        throw std::invalid_argument("ResConvSpec: channels and depth must be positive");
    if (kernel < 1 || kernel % 2 == 0)
        throw std::invalid_argument("ResConvSpec: kernel must be odd and positive");
}

long ResConvSpec::param_count() const
{
    const long lift = static_cast<long>(hidden_channels) * state_channels + hidden_channels;
    const long blk = 2L * (static_cast<long>(hidden_channels) * hidden_channels * kernel * kernel
                           + hidden_channels);
    const long proj = static_cast<long>(state_channels) * hidden_channels + state_channels;
    return lift + blk * depth + proj;
}

namespace {

void fill_glorot(std::span<double> w, int fan_in, int fan_out, Rng& rng)
{
    const double bound = std::sqrt(6.0 / (fan_in + fan_out));
    for (double& x : w) x = rng.uniform(-bound, bound);
}

} // namespace

void init_mlp(const MlpSpec& spec, ParamVector& params, const std::string& prefix, Rng& rng,
              bool zero_output_layer)
{
    spec.validate();
    for (int l = 0; l < spec.layer_count(); ++l) {
        const int fan_in = spec.widths[l];
        const int fan_out = spec.widths[l + 1];
        const std::size_t w =
            params.entries().size();
        params.add(prefix + "/w" + std::to_string(l), {fan_out, fan_in});
        params.add(prefix + "/b" + std::to_string(l), {fan_out});
        const bool zero = zero_output_layer && l == spec.layer_count() - 1;
        if (!zero) fill_glorot(params.slot(w), fan_in, fan_out, rng);
    }
}

void init_deeponet(const DeepONetSpec& spec, ParamVector& params, const std::string& prefix,
                   Rng& rng)
{
    spec.validate();
    init_mlp(spec.branch, params, prefix + "/branch", rng);
    init_mlp(spec.trunk, params, prefix + "/trunk", rng);
}

void init_resconv(const ResConvSpec& spec, ParamVector& params, const std::string& prefix,
                  Rng& rng)
{
    spec.validate();
    const int f = spec.hidden_channels, c = spec.state_channels, k = spec.kernel;
    std::size_t e = params.entries().size();
    params.add(prefix + "/lift_w", {f, c, 1, 1});
    fill_glorot(params.slot(e), c, f, rng);
    params.add(prefix + "/lift_b", {f});
    for (int d = 0; d < spec.depth; ++d) {
        e = params.entries().size();
        params.add(prefix + "/blk" + std::to_string(d) + "_w1", {f, f, k, k});
        fill_glorot(params.slot(e), f * k * k, f * k * k, rng);
        params.add(prefix + "/blk" + std::to_string(d) + "_b1", {f});
        e = params.entries().size();
        params.add(prefix + "/blk" + std::to_string(d) + "_w2", {f, f, k, k});
        fill_glorot(params.slot(e), f * k * k, f * k * k, rng);
        params.add(prefix + "/blk" + std::to_string(d) + "_b2", {f});
    }
    e = params.entries().size();
    params.add(prefix + "/proj_w", {c, f, 1, 1});
    fill_glorot(params.slot(e), f, c, rng);
    params.add(prefix + "/proj_b", {c});
}

namespace {

int next_param_leaf(ad::Tape& tape, RecordCursor& cur)
{
    const auto& e = cur.params->entries().at(cur.entry);
    const int node = tape.param(e.name, cur.params->slot(cur.entry), e.shape);
    ++cur.entry;
    return node;
}

int record_activation(ad::Tape& tape, Activation act, int node)
{
    return act == Activation::Tanh ? tape.tanh(node) : tape.softplus(node);
}

} // namespace

int record_mlp(ad::Tape& tape, const MlpSpec& spec, RecordCursor& cur, int input_node,
               int batch)
{
    spec.validate();
    int x = input_node;
    for (int l = 0; l < spec.layer_count(); ++l) {
        const int w = next_param_leaf(tape, cur);
        const int b = next_param_leaf(tape, cur);
        x = tape.affine(w, x, b, spec.widths[l + 1], spec.widths[l], batch);
        if (l + 1 < spec.layer_count()) x = record_activation(tape, spec.activation, x);
    }
    return x;
}

int record_deeponet(ad::Tape& tape, const DeepONetSpec& spec, RecordCursor& cur,
                    int field_node, int channels, int ny, int nx, double cell_area)
{
    spec.validate();
    if (ny % spec.stencil != 0 || nx % spec.stencil != 0)
        throw std::invalid_argument("deeponet: grid does not match the configured sample stencil");
    const int pool = ny / spec.stencil;
    if (nx / spec.stencil != pool)
        throw std::invalid_argument("deeponet: grid does not match the configured sample stencil");
    if (spec.branch.input_width() != channels * spec.stencil * spec.stencil)
        throw std::invalid_argument("deeponet: branch input width does not match stencil");

    const int pooled = pool == 1 ? field_node
                                 : tape.avg_pool2d(field_node, channels, ny, nx, pool);
    const int branch_out = record_mlp(tape, spec.branch, cur, pooled);

    // Fixed trunk inputs: normalized cell centers, row-major grid order.
    std::vector<double> coords;
    coords.reserve(static_cast<std::size_t>(ny) * nx * 2);
    for (int i = 0; i < ny; ++i)
        for (int j = 0; j < nx; ++j) {
            coords.push_back((j + 0.5) / nx);
            coords.push_back((i + 0.5) / ny);
        }
    const int coord_node = tape.constant(coords);
    const int trunk_out = record_mlp(tape, spec.trunk, cur, coord_node, ny * nx);

    const int tiled = tape.repeat(branch_out, ny * nx);
    const int h = tape.dot(tiled, trunk_out);
    return cell_area == 1.0 ? h : tape.scale(h, cell_area);
}

int record_resconv(ad::Tape& tape, const ResConvSpec& spec, RecordCursor& cur,
                   int field_node, int ny, int nx)
{
    spec.validate();
    const int f = spec.hidden_channels, c = spec.state_channels, k = spec.kernel;
    int w = next_param_leaf(tape, cur);
    int b = next_param_leaf(tape, cur);
    int h = tape.conv2d(w, field_node, b, c, f, ny, nx, 1);
    for (int d = 0; d < spec.depth; ++d) {
        const int w1 = next_param_leaf(tape, cur);
        const int b1 = next_param_leaf(tape, cur);
        const int w2 = next_param_leaf(tape, cur);
        const int b2 = next_param_leaf(tape, cur);
        int t = tape.conv2d(w1, h, b1, f, f, ny, nx, k);
        t = tape.tanh(t);
        t = tape.conv2d(w2, t, b2, f, f, ny, nx, k);
        h = tape.add(h, t);
    }
    w = next_param_leaf(tape, cur);
    b = next_param_leaf(tape, cur);
    return tape.conv2d(w, h, b, f, c, ny, nx, 1);
}

std::vector<double> mlp_forward(const MlpSpec& spec, const ParamVector& params,
                                std::size_t first_entry, std::span<const double> x)
{
    spec.validate();
    if (static_cast<int>(x.size()) != spec.input_width())
        throw std::invalid_argument("mlp_forward: input width mismatch");
    std::vector<double> cur(x.begin(), x.end());
    std::size_t e = first_entry;
    for (int l = 0; l < spec.layer_count(); ++l) {
        const auto w = params.slot(e++);
        const auto b = params.slot(e++);
        const int rows = spec.widths[l + 1], cols = spec.widths[l];
        std::vector<double> next(static_cast<std::size_t>(rows));
        for (int i = 0; i < rows; ++i) {
            double s = b[i];
            for (int j = 0; j < cols; ++j) s += w[static_cast<std::size_t>(i) * cols + j] * cur[j];
            next[i] = s;
        }
        if (l + 1 < spec.layer_count())
            for (double& v : next)
                v = spec.activation == Activation::Tanh
                        ? std::tanh(v)
                        : (v > 30.0 ? v : std::log1p(std::exp(v)));
        cur = std::move(next);
    }
    return cur;
}

double deeponet_hamiltonian(const DeepONetSpec& spec, const ParamVector& params,
                            std::size_t first_entry, const FieldState& z)
{
    ad::Tape tape;
    const int field = tape.input(z.data);
    RecordCursor cur{&params, first_entry};
    const int h = record_deeponet(tape, spec, cur, field, z.channels, z.ny, z.nx,
                                  z.cell_area());
    tape.mark_output(h);
    return tape.recorded()[static_cast<std::size_t>(tape.node(h).offset)];
}

FieldState resconv_forward(const ResConvSpec& spec, const ParamVector& params,
                           std::size_t first_entry, const FieldState& g)
{
    if (g.channels != spec.state_channels)
        throw std::invalid_argument("resconv_forward: channel count mismatch");
    ad::Tape tape;
    const int field = tape.input(g.data);
    RecordCursor cur{&params, first_entry};
    const int out = record_resconv(tape, spec, cur, field, g.ny, g.nx);
    tape.mark_output(out);
    FieldState result(g.channels, g.ny, g.nx, g.dx);
    const auto& rec = tape.recorded();
    const int off = tape.node(out).offset;
    for (int i = 0; i < result.dim(); ++i) result.data[static_cast<std::size_t>(i)] =
        rec[static_cast<std::size_t>(off + i)];
    return result;
}

} // namespace fshnn::nn
