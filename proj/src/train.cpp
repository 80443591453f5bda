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

#include "fshnn/train.hpp"

#include "fshnn/rng.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace fshnn::train {

// --- data preparation ---------------------------------------------------------

TrajectoryDataset subsample(const TrajectoryDataset& traj, int interval)
{
    if (interval < 1) throw std::invalid_argument("subsample: interval must be positive");
    TrajectoryDataset out;
    out.n_traj = traj.n_traj;
    out.n_frames = (traj.n_frames - 1) / interval + 1;
    out.state_dim = traj.state_dim;
    out.dt = traj.dt * interval;
    out.field_channels = traj.field_channels;
    out.field_ny = traj.field_ny;
    out.field_nx = traj.field_nx;
    out.field_dx = traj.field_dx;
    out.allocate();
    for (int t = 0; t < traj.n_traj; ++t)
        for (int k = 0; k < out.n_frames; ++k) {
            const double* src = traj.frame(t, k * interval);
            std::copy(src, src + traj.state_dim, out.frame(t, k));
            out.energy_at(t, k) = traj.energy_at(t, k * interval);
        }
    return out;
}

std::vector<double> derivative_estimate(const TrajectoryDataset& traj, int t, int frame)
{
    if (frame < 0 || frame >= traj.n_frames)
        throw std::invalid_argument("derivative_estimate: frame out of range");
    std::vector<double> out(static_cast<std::size_t>(traj.state_dim));
    const int last = traj.n_frames - 1;
    const double* lo;
    const double* hi;
    double denom;
    if (frame == 0) {
        lo = traj.frame(t, 0);
        hi = traj.frame(t, 1);
        denom = traj.dt;
    } else if (frame == last) {
        lo = traj.frame(t, last - 1);
        hi = traj.frame(t, last);
        denom = traj.dt;
    } else {
        lo = traj.frame(t, frame - 1);
        hi = traj.frame(t, frame + 1);
        denom = 2.0 * traj.dt;
    }
    for (int i = 0; i < traj.state_dim; ++i) out[i] = (hi[i] - lo[i]) / denom;
    return out;
}

GradSamples build_grad_samples(const TrajectoryDataset& traj, int interval, int window)
{
    if (window < 2)
        throw std::invalid_argument("build_grad_samples: window must cover >= 2 transitions");
    if (window * interval > traj.n_frames - 1)
        throw std::invalid_argument("build_grad_samples: trajectories too short for window "
                                    + std::to_string(window) + " at interval "
                                    + std::to_string(interval));
    GradSamples s;
    s.effective_dt = traj.dt * interval;
    const double inv2dt = 1.0 / (2.0 * s.effective_dt);
    for (int t = 0; t < traj.n_traj; ++t)
        for (int j = 1; j < window; ++j) {
            const double* z = traj.frame(t, j * interval);
            const double* prev = traj.frame(t, (j - 1) * interval);
            const double* next = traj.frame(t, (j + 1) * interval);
            s.z.emplace_back(z, z + traj.state_dim);
            std::vector<double> d(static_cast<std::size_t>(traj.state_dim));
            for (int i = 0; i < traj.state_dim; ++i) d[i] = (next[i] - prev[i]) * inv2dt;
            s.zdot.push_back(std::move(d));
        }
    return s;
}

PairSamples build_pair_samples(const TrajectoryDataset& traj, int interval, int window)
{
    if (window < 1) throw std::invalid_argument("build_pair_samples: window must be >= 1");
    if (window * interval > traj.n_frames - 1)
        throw std::invalid_argument("build_pair_samples: trajectories too short for window "
                                    + std::to_string(window) + " at interval "
                                    + std::to_string(interval));
    PairSamples s;
    s.effective_dt = traj.dt * interval;
    for (int t = 0; t < traj.n_traj; ++t)
        for (int j = 0; j < window; ++j) {
            const double* a = traj.frame(t, j * interval);
            const double* b = traj.frame(t, (j + 1) * interval);
            s.z0.emplace_back(a, a + traj.state_dim);
            s.z1.emplace_back(b, b + traj.state_dim);
        }
    return s;
}

// --- losses --------------------------------------------------------------------

namespace {

void ensure_prepared(const ad::Tape& tape, ad::Workspace& ws)
{
    if (ws.val.size() != static_cast<std::size_t>(tape.value_count())) tape.prepare(ws);
}

} // namespace

double hnn_grad_loss(const ad::Tape& tape, ad::Workspace& ws,
                     std::span<const double> param_values, int dof,
                     const std::vector<const double*>& zs,
                     const std::vector<const double*>& zdots, std::span<double> grad_out)
{
    if (zs.empty()) throw std::invalid_argument("hnn_grad_loss: empty batch");
    if (zs.size() != zdots.size())
        throw std::invalid_argument("hnn_grad_loss: batch size mismatch");
    const bool want_grad = !grad_out.empty();
    if (want_grad && static_cast<int>(grad_out.size()) != tape.param_dim())
        throw std::invalid_argument("hnn_grad_loss: gradient buffer size mismatch");

    ensure_prepared(tape, ws);
    tape.set_params(ws, param_values);
    const int dim = 2 * dof;
    const ad::Node& in_leaf = tape.node(tape.input_leaves()[0]);
    if (in_leaf.size != dim) throw std::invalid_argument("hnn_grad_loss: state width mismatch");

    std::vector<double> dir(static_cast<std::size_t>(dim));
    if (want_grad) std::fill(grad_out.begin(), grad_out.end(), 0.0);

    double loss = 0.0;
    const double one = 1.0;
    for (std::size_t s = 0; s < zs.size(); ++s) {
        tape.set_inputs(ws, std::span<const double>(zs[s], static_cast<std::size_t>(dim)));
        tape.forward(ws);
        tape.backward(ws, std::span<const double>(&one, 1));

        const double* g = ws.adj.data() + in_leaf.offset; // (dH/dq, dH/dp)
        const double* zdot = zdots[s];
        double l = 0.0;
        for (int i = 0; i < dof; ++i) {
            const double rq = g[dof + i] - zdot[i];       // dH/dp - qdot
            const double rp = g[i] + zdot[dof + i];       // dH/dq + pdot
            l += rq * rq + rp * rp;
            dir[i] = 2.0 * rp;
            dir[dof + i] = 2.0 * rq;
        }
        loss += l;

        if (want_grad) {
            tape.forward_tangent(ws, dir);
            tape.backward_tangent(ws);
            std::size_t pos = 0;
            for (int id : tape.param_leaves()) {
                const ad::Node& n = tape.node(id);
                for (int i = 0; i < n.size; ++i)
                    grad_out[pos++] += ws.adj_tan[static_cast<std::size_t>(n.offset + i)];
            }
        }
    }

    const double inv_b = 1.0 / static_cast<double>(zs.size());
    if (want_grad)
        for (double& g : grad_out) g *= inv_b;
    loss *= inv_b;
    if (!std::isfinite(loss)) throw std::runtime_error("hnn_grad_loss: non-finite loss");
    return loss;
}

double pde_onestep_loss(model::FsHnnPdeModel& model, int component,
                        ad::Workspace& ws_h, ad::Workspace& ws_op,
                        const std::vector<const double*>& z0,
                        const std::vector<const double*>& z1, double factor,
                        std::span<double> grad_out)
{
    if (z0.empty()) throw std::invalid_argument("pde_onestep_loss: empty batch");
    if (z0.size() != z1.size())
        throw std::invalid_argument("pde_onestep_loss: batch size mismatch");
    const bool want_grad = !grad_out.empty();
    if (want_grad && grad_out.size() != model.params().size())
        throw std::invalid_argument("pde_onestep_loss: gradient buffer size mismatch");

    const ad::Tape& htape =
        component < 0 ? model.combined_tape() : model.component_tape(component);
    const ad::Tape& optape = model.operator_tape();
    const std::size_t h_base =
        component < 0 ? 0 : model.component_section(component).value_begin;
    const auto& ops = model.operator_section();
    const double* pv = model.params().values().data();

    ensure_prepared(htape, ws_h);
    ensure_prepared(optape, ws_op);
    htape.set_params(ws_h, std::span<const double>(pv + h_base,
                                                   static_cast<std::size_t>(htape.param_dim())));
    optape.set_params(ws_op, std::span<const double>(pv + ops.value_begin, ops.value_count()));

    const int n = model.field_dim();
    const double xi = model.spec().xi;
    const ad::Node& h_in = htape.node(htape.input_leaves()[0]);
    const ad::Node& op_in = optape.node(optape.input_leaves()[0]);
    const ad::Node& op_out = optape.node(optape.outputs()[0]);

    std::vector<double> g(static_cast<std::size_t>(n)), raw(g.size()), w(g.size()),
        wr(g.size()), u(g.size());
    if (want_grad) std::fill(grad_out.begin(), grad_out.end(), 0.0);

    double loss = 0.0;
    const double one = 1.0;
    for (std::size_t s = 0; s < z0.size(); ++s) {
        // grad H at z_t
        htape.set_inputs(ws_h, std::span<const double>(z0[s], static_cast<std::size_t>(n)));
        htape.forward(ws_h);
        htape.backward(ws_h, std::span<const double>(&one, 1));
        for (int i = 0; i < n; ++i)
            g[static_cast<std::size_t>(i)] = ws_h.adj[static_cast<std::size_t>(h_in.offset + i)];

        // raw increment
        optape.set_inputs(ws_op, g);
        optape.forward(ws_op);
        for (int i = 0; i < n; ++i)
            raw[static_cast<std::size_t>(i)] =
                ws_op.val[static_cast<std::size_t>(op_out.offset + i)];

        double gr = 0.0, gg = 0.0;
        for (int i = 0; i < n; ++i) {
            gr += g[i] * raw[i];
            gg += g[i] * g[i];
        }
        const double denom = gg + xi;
        const double lambda = gr / denom;

        // residual r = z_t + factor * (raw - lambda g) - z_{t+1}
        double l = 0.0;
        const double inv_n = 1.0 / n;
        for (int i = 0; i < n; ++i) {
            const double delta = raw[i] - lambda * g[i];
            const double r = z0[s][i] + factor * delta - z1[s][i];
            l += r * r;
            w[i] = 2.0 * factor * r * inv_n; // dL/d(delta)
        }
        loss += l * inv_n;
        if (!want_grad) continue;

        // through the projection: dL/draw and the direct dL/dg part
        double wg = 0.0;
        for (int i = 0; i < n; ++i) wg += w[i] * g[i];
        const double a1 = wg / denom;
        const double a2 = 2.0 * gr * wg / (denom * denom);
        for (int i = 0; i < n; ++i) {
            wr[i] = w[i] - a1 * g[i];
            u[i] = -a1 * raw[i] + a2 * g[i] - lambda * w[i];
        }

        // operator VJP: parameter grads plus the path through its input
        optape.backward(ws_op, wr);
        std::size_t pos = ops.value_begin;
        for (int id : optape.param_leaves()) {
            const ad::Node& nn = optape.node(id);
            for (int i = 0; i < nn.size; ++i)
                grad_out[pos++] += ws_op.adj[static_cast<std::size_t>(nn.offset + i)];
        }
        for (int i = 0; i < n; ++i)
            u[i] += ws_op.adj[static_cast<std::size_t>(op_in.offset + i)];

        // d/dtheta [u . grad H] via the tangent-through-reverse sweep
        htape.forward_tangent(ws_h, u);
        htape.backward_tangent(ws_h);
        pos = h_base;
        for (int id : htape.param_leaves()) {
            const ad::Node& nn = htape.node(id);
            for (int i = 0; i < nn.size; ++i)
                grad_out[pos++] += ws_h.adj_tan[static_cast<std::size_t>(nn.offset + i)];
        }
    }

    const double inv_b = 1.0 / static_cast<double>(z0.size());
    if (want_grad)
        for (double& x : grad_out) x *= inv_b;
    loss *= inv_b;
    if (!std::isfinite(loss)) throw std::runtime_error("pde_onestep_loss: non-finite loss");
    return loss;
}

double mlp_onestep_loss(model::MlpDynamicsModel& model,
                        const std::vector<const double*>& z0,
                        const std::vector<const double*>& z1, std::span<double> grad_out)
{
    if (z0.empty()) throw std::invalid_argument("mlp_onestep_loss: empty batch");
    const bool want_grad = !grad_out.empty();
    const ad::Tape& tape = model.tape();
    if (want_grad && static_cast<int>(grad_out.size()) != tape.param_dim())
        throw std::invalid_argument("mlp_onestep_loss: gradient buffer size mismatch");

    static thread_local ad::Workspace ws;
    ensure_prepared(tape, ws);
    tape.set_params(ws, model.params().values());
    const int dim = model.spec().dim;
    const ad::Node& out_node = tape.node(tape.outputs()[0]);
    std::vector<double> seed(static_cast<std::size_t>(dim));
    if (want_grad) std::fill(grad_out.begin(), grad_out.end(), 0.0);

    double loss = 0.0;
    const double inv_n = 1.0 / dim;
    for (std::size_t s = 0; s < z0.size(); ++s) {
        tape.set_inputs(ws, std::span<const double>(z0[s], static_cast<std::size_t>(dim)));
        tape.forward(ws);
        double l = 0.0;
        for (int i = 0; i < dim; ++i) {
            const double r = ws.val[static_cast<std::size_t>(out_node.offset + i)] - z1[s][i];
            l += r * r;
            seed[i] = 2.0 * r * inv_n;
        }
        loss += l * inv_n;
        if (want_grad) {
            tape.backward(ws, seed);
            std::size_t pos = 0;
            for (int id : tape.param_leaves()) {
                const ad::Node& n = tape.node(id);
                for (int i = 0; i < n.size; ++i)
                    grad_out[pos++] += ws.adj[static_cast<std::size_t>(n.offset + i)];
            }
        }
    }

    const double inv_b = 1.0 / static_cast<double>(z0.size());
    if (want_grad)
        for (double& g : grad_out) g *= inv_b;
    loss *= inv_b;
    if (!std::isfinite(loss)) throw std::runtime_error("mlp_onestep_loss: non-finite loss");
    return loss;
}

// --- optimizer -------------------------------------------------------------------

void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state,
               const AdamConfig& config)
{
    if (params.size() != grads.size())
        throw std::invalid_argument("adam_step: size mismatch");
    if (state.m.size() != params.size()) {
        state.m.assign(params.size(), 0.0);
        state.v.assign(params.size(), 0.0);
        state.t = 0;
    }
    ++state.t;
    const double c1 = 1.0 - std::pow(config.beta1, static_cast<double>(state.t));
    const double c2 = 1.0 - std::pow(config.beta2, static_cast<double>(state.t));
    for (std::size_t i = 0; i < params.size(); ++i) {
        state.m[i] = config.beta1 * state.m[i] + (1.0 - config.beta1) * grads[i];
        state.v[i] = config.beta2 * state.v[i] + (1.0 - config.beta2) * grads[i] * grads[i];
        const double mhat = state.m[i] / c1;
        const double vhat = state.v[i] / c2;
        params[i] -= config.lr * mhat / (std::sqrt(vhat) + config.eps);
    }
}

// --- training pipeline --------------------------------------------------------------

namespace {

// Contiguous global index ranges whose union is the trainable set.
struct Trainable {
    std::vector<std::pair<std::size_t, std::size_t>> ranges;
    std::size_t total = 0;

    void add(std::size_t begin, std::size_t end)
    {
        ranges.emplace_back(begin, end);
        total += end - begin;
    }
    void gather(std::span<const double> src, std::vector<double>& dst) const
    {
        dst.resize(total);
        std::size_t pos = 0;
        for (auto [b, e] : ranges)
            for (std::size_t i = b; i < e; ++i) dst[pos++] = src[i];
    }
    void scatter(std::span<const double> src, std::span<double> dst) const
    {
        std::size_t pos = 0;
        for (auto [b, e] : ranges)
            for (std::size_t i = b; i < e; ++i) dst[i] = src[pos++];
    }
};

void shuffle_indices(std::vector<std::size_t>& idx, Rng& rng)
{
    for (std::size_t i = idx.size(); i > 1; --i)
        std::swap(idx[i - 1], idx[static_cast<std::size_t>(rng.index(i))]);
}

// One optimization phase over precollected samples. `eval` maps a batch
// (index list) to (loss, global gradient).
template <typename Eval>
void run_phase(Eval&& eval, std::size_t n_samples, std::size_t n_params,
               const Trainable& trainable, std::vector<double>& param_values,
               const TrainConfig& config, int epochs, Rng& rng,
               std::vector<double>& history, const std::string& phase_label)
{
    std::vector<std::size_t> order(n_samples);
    for (std::size_t i = 0; i < n_samples; ++i) order[i] = i;
    std::vector<double> grad(n_params), packed_p, packed_g;
    AdamState adam;

    for (int epoch = 0; epoch < epochs; ++epoch) {
        shuffle_indices(order, rng);
        for (std::size_t at = 0; at < n_samples; at += static_cast<std::size_t>(config.batch)) {
            const std::size_t stop = std::min(n_samples, at + static_cast<std::size_t>(config.batch));
            double loss;
            try {
                loss = eval(std::span<const std::size_t>(order.data() + at, stop - at), grad);
            } catch (const std::exception& e) {
                throw std::runtime_error("training aborted in " + phase_label + ", epoch "
                                         + std::to_string(epoch) + ": " + e.what());
            }
            if (!std::isfinite(loss))
                throw std::runtime_error("training aborted in " + phase_label + ", epoch "
                                         + std::to_string(epoch) + ": non-finite loss");
            history.push_back(loss);
            trainable.gather(param_values, packed_p);
            trainable.gather(grad, packed_g);
            adam_step(packed_p, packed_g, adam, config.adam);
            trainable.scatter(packed_p, param_values);
        }
    }
}

std::vector<const double*> view(const std::vector<std::vector<double>>& v,
                                std::span<const std::size_t> idx)
{
    std::vector<const double*> out(idx.size());
    for (std::size_t i = 0; i < idx.size(); ++i) out[i] = v[idx[i]].data();
    return out;
}

} // namespace

TrainResult train_fs_hnn_ode(model::FsHnnOdeModel& model, const TrajectoryDataset& data,
                             const TrainConfig& config)
{
    TrainResult result;
    Rng rng(config.seed);
    const auto& spec = model.spec();

    for (int k = 0; k < spec.k; ++k) {
        const GradSamples samples = build_grad_samples(data, spec.intervals[k], config.window);
        const auto& sec = model.component_section(k);
        Trainable trainable;
        trainable.add(sec.value_begin, sec.value_end);
        const ad::Tape& tape = model.component_tape(k);
        ad::Workspace ws;
        std::vector<double> tape_grad(static_cast<std::size_t>(tape.param_dim()));

        auto eval = [&](std::span<const std::size_t> idx, std::vector<double>& grad) {
            const auto zs = view(samples.z, idx);
            const auto zd = view(samples.zdot, idx);
            const double loss = hnn_grad_loss(
                tape, ws,
                std::span<const double>(model.params().values().data() + sec.value_begin,
                                        sec.value_count()),
                spec.dof, zs, zd, tape_grad);
            std::fill(grad.begin(), grad.end(), 0.0);
            std::copy(tape_grad.begin(), tape_grad.end(), grad.begin() + static_cast<long>(sec.value_begin));
            return loss;
        };
        run_phase(eval, samples.size(), model.params().size(), trainable,
                  model.params().values(), config, config.epochs_phase1, rng,
                  result.loss_history, "phase 1 (component " + std::to_string(k) + ")");
        result.phase_bounds.push_back(result.loss_history.size());
    }

    if (config.epochs_phase2 > 0) {
        const GradSamples samples = build_grad_samples(data, 1, config.window);
        Trainable trainable;
        if (!config.freeze_components)
            for (int k = 0; k < spec.k; ++k)
                trainable.add(model.component_section(k).value_begin,
                              model.component_section(k).value_end);
        trainable.add(model.combiner_section().value_begin, model.combiner_section().value_end);

        const ad::Tape& tape = model.combined_tape();
        ad::Workspace ws;
        std::vector<double> tape_grad(static_cast<std::size_t>(tape.param_dim()));
        auto eval = [&](std::span<const std::size_t> idx, std::vector<double>& grad) {
            const auto zs = view(samples.z, idx);
            const auto zd = view(samples.zdot, idx);
            const double loss = hnn_grad_loss(
                tape, ws,
                std::span<const double>(model.params().values().data(),
                                        model.combiner_section().value_end),
                spec.dof, zs, zd, tape_grad);
            std::fill(grad.begin(), grad.end(), 0.0);
            std::copy(tape_grad.begin(), tape_grad.end(), grad.begin());
            return loss;
        };
        run_phase(eval, samples.size(), model.params().size(), trainable,
                  model.params().values(), config, config.epochs_phase2, rng,
                  result.loss_history, "phase 2 (combiner)");
        result.phase_bounds.push_back(result.loss_history.size());
    }
    return result;
}

TrainResult train_hnn_ode(model::FsHnnOdeModel& model, const TrajectoryDataset& data,
                          const TrainConfig& config, const std::vector<int>& union_intervals)
{
    if (model.spec().k != 1)
        throw std::invalid_argument("train_hnn_ode: expected a single-component model");
    TrainResult result;
    Rng rng(config.seed);

    GradSamples samples;
    const std::vector<int> intervals =
        union_intervals.empty() ? std::vector<int>{1} : union_intervals;
    for (int interval : intervals) {
        GradSamples part = build_grad_samples(data, interval, config.window);
        for (std::size_t i = 0; i < part.size(); ++i) {
            samples.z.push_back(std::move(part.z[i]));
            samples.zdot.push_back(std::move(part.zdot[i]));
        }
    }

    const auto& sec = model.component_section(0);
    Trainable trainable;
    trainable.add(sec.value_begin, sec.value_end);
    const ad::Tape& tape = model.component_tape(0);
    ad::Workspace ws;
    std::vector<double> tape_grad(static_cast<std::size_t>(tape.param_dim()));
    auto eval = [&](std::span<const std::size_t> idx, std::vector<double>& grad) {
        const auto zs = view(samples.z, idx);
        const auto zd = view(samples.zdot, idx);
        const double loss = hnn_grad_loss(
            tape, ws,
            std::span<const double>(model.params().values().data() + sec.value_begin,
                                    sec.value_count()),
            model.spec().dof, zs, zd, tape_grad);
        std::fill(grad.begin(), grad.end(), 0.0);
        std::copy(tape_grad.begin(), tape_grad.end(), grad.begin() + static_cast<long>(sec.value_begin));
        return loss;
    };
    run_phase(eval, samples.size(), model.params().size(), trainable, model.params().values(),
              config, config.epochs_phase1, rng, result.loss_history, "hnn training");
    result.phase_bounds.push_back(result.loss_history.size());
    return result;
}

TrainResult train_mlp(model::MlpDynamicsModel& model, const TrajectoryDataset& data,
                      const TrainConfig& config, int interval)
{
    TrainResult result;
    Rng rng(config.seed);
    const PairSamples samples = build_pair_samples(data, interval, config.window);
    Trainable trainable;
    trainable.add(0, model.params().size());
    auto eval = [&](std::span<const std::size_t> idx, std::vector<double>& grad) {
        const auto a = view(samples.z0, idx);
        const auto b = view(samples.z1, idx);
        return mlp_onestep_loss(model, a, b, grad);
    };
    run_phase(eval, samples.size(), model.params().size(), trainable, model.params().values(),
              config, config.epochs_phase1, rng, result.loss_history, "mlp training");
    result.phase_bounds.push_back(result.loss_history.size());
    return result;
}

TrainResult train_fs_hnn_pde(model::FsHnnPdeModel& model, const TrajectoryDataset& data,
                             const TrainConfig& config)
{
    TrainResult result;
    Rng rng(config.seed);
    const auto& spec = model.spec();

    auto normalized_pairs = [&](int interval) {
        PairSamples raw = build_pair_samples(data, interval, config.window);
        PairSamples out = raw;
        for (std::size_t i = 0; i < raw.size(); ++i) {
            model.normalize(raw.z0[i], out.z0[i]);
            model.normalize(raw.z1[i], out.z1[i]);
        }
        return out;
    };

    ad::Workspace ws_h, ws_op;
    for (int k = 0; k < spec.k; ++k) {
        const PairSamples samples = normalized_pairs(spec.intervals[k]);
        const double factor = samples.effective_dt / spec.dt_model;
        Trainable trainable;
        trainable.add(model.component_section(k).value_begin,
                      model.component_section(k).value_end);
        trainable.add(model.operator_section().value_begin, model.operator_section().value_end);
        auto eval = [&](std::span<const std::size_t> idx, std::vector<double>& grad) {
            const auto a = view(samples.z0, idx);
            const auto b = view(samples.z1, idx);
            return pde_onestep_loss(model, k, ws_h, ws_op, a, b, factor, grad);
        };
        run_phase(eval, samples.size(), model.params().size(), trainable,
                  model.params().values(), config, config.epochs_phase1, rng,
                  result.loss_history, "phase 1 (component " + std::to_string(k) + ")");
        result.phase_bounds.push_back(result.loss_history.size());
    }

    if (config.epochs_phase2 > 0) {
        const PairSamples samples = normalized_pairs(1);
        const double factor = samples.effective_dt / spec.dt_model;
        Trainable trainable;
        if (!config.freeze_components)
            for (int k = 0; k < spec.k; ++k)
                trainable.add(model.component_section(k).value_begin,
                              model.component_section(k).value_end);
        trainable.add(model.combiner_section().value_begin, model.combiner_section().value_end);
        trainable.add(model.operator_section().value_begin, model.operator_section().value_end);
        ad::Workspace ws_h2;
        auto eval = [&](std::span<const std::size_t> idx, std::vector<double>& grad) {
            const auto a = view(samples.z0, idx);
            const auto b = view(samples.z1, idx);
            return pde_onestep_loss(model, -1, ws_h2, ws_op, a, b, factor, grad);
        };
        run_phase(eval, samples.size(), model.params().size(), trainable,
                  model.params().values(), config, config.epochs_phase2, rng,
                  result.loss_history, "phase 2 (combiner)");
        result.phase_bounds.push_back(result.loss_history.size());
    }
    return result;
}

// --- metrics ---------------------------------------------------------------------

double rollout_mse(std::span<const double> pred, std::span<const double> truth, int state_dim)
{
    const std::size_t frames =
        std::min(pred.size(), truth.size()) / static_cast<std::size_t>(state_dim);
    if (frames == 0) throw std::invalid_argument("rollout_mse: no overlapping frames");
    double acc = 0.0;
    for (std::size_t i = 0; i < frames * static_cast<std::size_t>(state_dim); ++i) {
        const double d = pred[i] - truth[i];
        acc += d * d;
    }
    return acc / (static_cast<double>(frames) * state_dim);
}

std::vector<double> per_step_mse(std::span<const double> pred, std::span<const double> truth,
                                 int state_dim)
{
    const std::size_t frames =
        std::min(pred.size(), truth.size()) / static_cast<std::size_t>(state_dim);
    std::vector<double> out(frames, 0.0);
    for (std::size_t f = 0; f < frames; ++f) {
        double acc = 0.0;
        for (int i = 0; i < state_dim; ++i) {
            const double d = pred[f * state_dim + i] - truth[f * state_dim + i];
            acc += d * d;
        }
        out[f] = acc / state_dim;
    }
    return out;
}

EnergyDeviation energy_deviation(std::span<const double> energies)
{
    EnergyDeviation out;
    if (energies.empty()) return out;
    const double e0 = energies[0];
    out.absolute_fallback = std::fabs(e0) < 1.0e-12;
    out.curve.resize(energies.size());
    for (std::size_t i = 0; i < energies.size(); ++i)
        out.curve[i] = out.absolute_fallback ? energies[i] - e0 : (energies[i] - e0) / std::fabs(e0);
    return out;
}

} // namespace fshnn::train
