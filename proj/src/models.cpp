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

#include "fshnn/models.hpp"

#include "fshnn/integrators.hpp"

#include <cmath>
#include <stdexcept>

namespace fshnn::model {

void project_orthogonal(std::span<const double> grad_h, std::span<const double> raw,
                        double xi, std::span<double> out)
{
    if (grad_h.size() != raw.size() || out.size() != raw.size())
        throw std::invalid_argument("project_orthogonal: shape mismatch");
    if (xi <= 0.0) throw std::invalid_argument("project_orthogonal: xi must be positive");
    double gr = 0.0, gg = 0.0;
    for (std::size_t i = 0; i < raw.size(); ++i) {
        gr += grad_h[i] * raw[i];
        gg += grad_h[i] * grad_h[i];
    }
    const double lambda = gr / (gg + xi);
    for (std::size_t i = 0; i < raw.size(); ++i) out[i] = raw[i] - lambda * grad_h[i];
}

namespace {

void apply_canonical_j(std::span<const double> grad, std::span<double> out, int dof)
{
    // (q_dot, p_dot) = (dH/dp, -dH/dq), never materializing J
    for (int i = 0; i < dof; ++i) {
        out[i] = grad[dof + i];
        out[dof + i] = -grad[i];
    }
}

ParamSection close_section(const ParamVector& params, std::size_t value_begin,
                           std::size_t entry_begin)
{
    return {value_begin, params.size(), entry_begin, params.entries().size()};
}

// Combiner: H = <skip_w, m> + correction(m), skip weights start at one and
// the correction MLP output layer starts at zero, so training begins at the
// plain sum of components.
int record_combiner(ad::Tape& tape, const nn::MlpSpec& corr, nn::RecordCursor& cur,
                    int m_node)
{
    const int skip_w = tape.param(cur.params->entries().at(cur.entry).name,
                                  cur.params->slot(cur.entry),
                                  cur.params->entries().at(cur.entry).shape);
    ++cur.entry;
    const int skip = tape.dot(skip_w, m_node);
    const int corr_out = record_mlp(tape, corr, cur, m_node);
    return tape.add(skip, corr_out);
}

void init_combiner(const nn::MlpSpec& corr, ParamVector& params, const std::string& prefix,
                   int k, Rng& rng)
{
    const std::size_t e = params.entries().size();
    params.add(prefix + "/skip_w", {k});
    for (double& w : params.slot(e)) w = 1.0;
    init_mlp(corr, params, prefix + "/corr", rng, /*zero_output_layer=*/true);
}

} // namespace

// --- FS-HNN (ODE) ------------------------------------------------------------

nn::MlpSpec FsHnnOdeSpec::component_mlp() const
{
    nn::MlpSpec m;
    m.widths.push_back(2 * dof);
    for (int h : hidden) m.widths.push_back(h);
    m.widths.push_back(1);
    m.activation = activation;
    return m;
}

nn::MlpSpec FsHnnOdeSpec::combiner_mlp() const
{
    nn::MlpSpec m;
    m.widths.push_back(k);
    for (int h : combiner_hidden) m.widths.push_back(h);
    m.widths.push_back(1);
    m.activation = activation;
    return m;
}

void FsHnnOdeSpec::validate() const
{
    if (dof < 1) throw std::invalid_argument("FsHnnOdeSpec: dof must be positive");
    if (k < 1 || static_cast<int>(intervals.size()) != k)
        throw std::invalid_argument("FsHnnOdeSpec: need K strictly increasing intervals");
    for (std::size_t i = 0; i + 1 < intervals.size(); ++i)
        if (intervals[i] >= intervals[i + 1])
            throw std::invalid_argument("FsHnnOdeSpec: intervals must be strictly increasing");
    if (intervals.front() < 1)
        throw std::invalid_argument("FsHnnOdeSpec: intervals must be positive");
    component_mlp().validate();
    combiner_mlp().validate();
}

FsHnnOdeModel::FsHnnOdeModel(FsHnnOdeSpec spec, std::uint64_t init_seed) : spec_(std::move(spec))
{
    spec_.validate();
    Rng rng(init_seed);
    comp_sections_.resize(static_cast<std::size_t>(spec_.k));
    for (int k = 0; k < spec_.k; ++k) {
        const std::size_t vb = params_.size(), eb = params_.entries().size();
        init_mlp(spec_.component_mlp(), params_, "component" + std::to_string(k), rng);
        comp_sections_[k] = close_section(params_, vb, eb);
    }
    const std::size_t vb = params_.size(), eb = params_.entries().size();
    init_combiner(spec_.combiner_mlp(), params_, "combiner", spec_.k, rng);
    combiner_section_ = close_section(params_, vb, eb);
    build_tapes();
}

void FsHnnOdeModel::build_tapes()
{
    const std::vector<double> z0(static_cast<std::size_t>(2 * spec_.dof), 0.0);
    comp_tapes_.clear();
    comp_tapes_.resize(static_cast<std::size_t>(spec_.k));
    comp_ws_.assign(static_cast<std::size_t>(spec_.k), {});
    for (int k = 0; k < spec_.k; ++k) {
        ad::Tape& t = comp_tapes_[k];
        const int z = t.input(z0);
        nn::RecordCursor cur{&params_, comp_sections_[k].entry_begin};
        const int h = record_mlp(t, spec_.component_mlp(), cur, z);
        t.mark_output(h);
        t.prepare(comp_ws_[k]);
    }

    combined_tape_ = ad::Tape();
    ad::Tape& t = combined_tape_;
    const int z = t.input(z0);
    nn::RecordCursor cur{&params_, 0};
    std::vector<int> m(static_cast<std::size_t>(spec_.k));
    for (int k = 0; k < spec_.k; ++k) m[k] = record_mlp(t, spec_.component_mlp(), cur, z);
    int mc = m[0];
    for (int k = 1; k < spec_.k; ++k) mc = t.concat(mc, m[k]);
    const int h = record_combiner(t, spec_.combiner_mlp(), cur, mc);
    t.mark_output(h);
    t.prepare(combined_ws_);
    scratch_.resize(static_cast<std::size_t>(2 * spec_.dof));
}

double FsHnnOdeModel::hamiltonian(std::span<const double> z, int component)
{
    const ad::Tape& t = component < 0 ? combined_tape_ : comp_tapes_[component];
    ad::Workspace& ws = component < 0 ? combined_ws_ : comp_ws_[component];
    if (component < 0)
        t.set_params(ws, std::span<const double>(params_.values().data(),
                                                 combiner_section_.value_end));
    else {
        const auto& s = comp_sections_[component];
        t.set_params(ws, std::span<const double>(params_.values().data() + s.value_begin,
                                                 s.value_count()));
    }
    t.set_inputs(ws, z);
    t.forward(ws);
    return ws.val[static_cast<std::size_t>(t.node(t.outputs()[0]).offset)];
}

void FsHnnOdeModel::grad_z(std::span<const double> z, std::span<double> out, int component)
{
    const ad::Tape& t = component < 0 ? combined_tape_ : comp_tapes_[component];
    ad::Workspace& ws = component < 0 ? combined_ws_ : comp_ws_[component];
    hamiltonian(z, component); // forward pass with current params
    const double one = 1.0;
    t.backward(ws, std::span<const double>(&one, 1));
    const ad::Node& leaf = t.node(t.input_leaves()[0]);
    for (int i = 0; i < leaf.size; ++i) out[i] = ws.adj[static_cast<std::size_t>(leaf.offset + i)];
}

void FsHnnOdeModel::vector_field(std::span<const double> z, std::span<double> out,
                                 int component)
{
    grad_z(z, scratch_, component);
    apply_canonical_j(scratch_, out, spec_.dof);
}

// --- FS-HNN (PDE) ------------------------------------------------------------

nn::DeepONetSpec FsHnnPdeSpec::component_net() const
{
    nn::DeepONetSpec d;
    d.latent = latent;
    d.stencil = stencil;
    d.branch.widths.push_back(channels * stencil * stencil);
    for (int h : branch_hidden) d.branch.widths.push_back(h);
    d.branch.widths.push_back(latent);
    d.trunk.widths.push_back(2);
    for (int h : trunk_hidden) d.trunk.widths.push_back(h);
    d.trunk.widths.push_back(latent);
    return d;
}

nn::MlpSpec FsHnnPdeSpec::combiner_mlp() const
{
    nn::MlpSpec m;
    m.widths.push_back(k);
    for (int h : combiner_hidden) m.widths.push_back(h);
    m.widths.push_back(1);
    return m;
}

void FsHnnPdeSpec::validate() const
{
    if (channels < 1 || ny < 1 || nx < 1)
        throw std::invalid_argument("FsHnnPdeSpec: bad field shape");
    if (k < 1 || static_cast<int>(intervals.size()) != k)
        throw std::invalid_argument("FsHnnPdeSpec: need K intervals");
    if (xi <= 0.0) throw std::invalid_argument("FsHnnPdeSpec: xi must be positive");
    if (dt_model <= 0.0) throw std::invalid_argument("FsHnnPdeSpec: dt_model must be positive");
    component_net().validate();
    combiner_mlp().validate();
    op.validate();
    if (op.state_channels != channels)
        throw std::invalid_argument("FsHnnPdeSpec: operator channels must match state");
    if (!shift.empty() && static_cast<int>(shift.size()) != channels)
        throw std::invalid_argument("FsHnnPdeSpec: shift size mismatch");
    if (!scale.empty() && static_cast<int>(scale.size()) != channels)
        throw std::invalid_argument("FsHnnPdeSpec: scale size mismatch");
}

FsHnnPdeModel::FsHnnPdeModel(FsHnnPdeSpec spec, std::uint64_t init_seed) : spec_(std::move(spec))
{
    if (spec_.shift.empty()) spec_.shift.assign(static_cast<std::size_t>(spec_.channels), 0.0);
    if (spec_.scale.empty()) spec_.scale.assign(static_cast<std::size_t>(spec_.channels), 1.0);
    spec_.validate();
    Rng rng(init_seed);
    comp_sections_.resize(static_cast<std::size_t>(spec_.k));
    for (int k = 0; k < spec_.k; ++k) {
        const std::size_t vb = params_.size(), eb = params_.entries().size();
        init_deeponet(spec_.component_net(), params_, "component" + std::to_string(k), rng);
        comp_sections_[k] = close_section(params_, vb, eb);
    }
    {
        const std::size_t vb = params_.size(), eb = params_.entries().size();
        init_combiner(spec_.combiner_mlp(), params_, "combiner", spec_.k, rng);
        combiner_section_ = close_section(params_, vb, eb);
    }
    {
        const std::size_t vb = params_.size(), eb = params_.entries().size();
        init_resconv(spec_.op, params_, "operator", rng);
        op_section_ = close_section(params_, vb, eb);
    }
    build_tapes();
}

void FsHnnPdeModel::build_tapes()
{
    const std::vector<double> z0(static_cast<std::size_t>(field_dim()), 0.0);
    // The model Hamiltonian sums the learned density over the grid with unit
    // cell weight; physical scaling lives in the normalization.
    const double cell_area = 1.0;

    comp_tapes_.clear();
    comp_tapes_.resize(static_cast<std::size_t>(spec_.k));
    comp_ws_.assign(static_cast<std::size_t>(spec_.k), {});
    for (int k = 0; k < spec_.k; ++k) {
        ad::Tape& t = comp_tapes_[k];
        const int z = t.input(z0);
        nn::RecordCursor cur{&params_, comp_sections_[k].entry_begin};
        const int h = record_deeponet(t, spec_.component_net(), cur, z, spec_.channels,
                                      spec_.ny, spec_.nx, cell_area);
        t.mark_output(h);
        t.prepare(comp_ws_[k]);
    }

    combined_tape_ = ad::Tape();
    {
        ad::Tape& t = combined_tape_;
        const int z = t.input(z0);
        nn::RecordCursor cur{&params_, 0};
        std::vector<int> m(static_cast<std::size_t>(spec_.k));
        for (int k = 0; k < spec_.k; ++k)
            m[k] = record_deeponet(t, spec_.component_net(), cur, z, spec_.channels,
                                   spec_.ny, spec_.nx, cell_area);
        int mc = m[0];
        for (int k = 1; k < spec_.k; ++k) mc = t.concat(mc, m[k]);
        const int h = record_combiner(t, spec_.combiner_mlp(), cur, mc);
        t.mark_output(h);
        t.prepare(combined_ws_);
    }

    op_tape_ = ad::Tape();
    {
        ad::Tape& t = op_tape_;
        const int g = t.input(z0);
        nn::RecordCursor cur{&params_, op_section_.entry_begin};
        const int out = record_resconv(t, spec_.op, cur, g, spec_.ny, spec_.nx);
        t.mark_output(out);
        t.prepare(op_ws_);
    }

    grad_buf_.resize(static_cast<std::size_t>(field_dim()));
    raw_buf_.resize(static_cast<std::size_t>(field_dim()));
}

void FsHnnPdeModel::normalize(std::span<const double> raw, std::span<double> out) const
{
    const std::size_t cells = static_cast<std::size_t>(spec_.ny) * spec_.nx;
    for (int c = 0; c < spec_.channels; ++c) {
        const double s = spec_.scale[c] != 0.0 ? 1.0 / spec_.scale[c] : 1.0;
        for (std::size_t i = 0; i < cells; ++i)
            out[c * cells + i] = (raw[c * cells + i] - spec_.shift[c]) * s;
    }
}

void FsHnnPdeModel::denormalize(std::span<const double> model, std::span<double> out) const
{
    const std::size_t cells = static_cast<std::size_t>(spec_.ny) * spec_.nx;
    for (int c = 0; c < spec_.channels; ++c)
        for (std::size_t i = 0; i < cells; ++i)
            out[c * cells + i] = model[c * cells + i] * spec_.scale[c] + spec_.shift[c];
}

double FsHnnPdeModel::hamiltonian(std::span<const double> z_model, int component)
{
    const ad::Tape& t = component < 0 ? combined_tape_ : comp_tapes_[component];
    ad::Workspace& ws = component < 0 ? combined_ws_ : comp_ws_[component];
    if (component < 0)
        t.set_params(ws, std::span<const double>(params_.values().data(),
                                                 combiner_section_.value_end));
    else {
        const auto& s = comp_sections_[component];
        t.set_params(ws, std::span<const double>(params_.values().data() + s.value_begin,
                                                 s.value_count()));
    }
    t.set_inputs(ws, z_model);
    t.forward(ws);
    return ws.val[static_cast<std::size_t>(t.node(t.outputs()[0]).offset)];
}

void FsHnnPdeModel::grad_h(std::span<const double> z_model, std::span<double> out,
                           int component)
{
    const ad::Tape& t = component < 0 ? combined_tape_ : comp_tapes_[component];
    ad::Workspace& ws = component < 0 ? combined_ws_ : comp_ws_[component];
    hamiltonian(z_model, component);
    const double one = 1.0;
    t.backward(ws, std::span<const double>(&one, 1));
    const ad::Node& leaf = t.node(t.input_leaves()[0]);
    for (int i = 0; i < leaf.size; ++i) out[i] = ws.adj[static_cast<std::size_t>(leaf.offset + i)];
}

void FsHnnPdeModel::increment(std::span<const double> z_model, std::span<double> out,
                              int component)
{
    grad_h(z_model, grad_buf_, component);
    const auto& s = op_section_;
    op_tape_.set_params(op_ws_, std::span<const double>(params_.values().data() + s.value_begin,
                                                        s.value_count()));
    op_tape_.set_inputs(op_ws_, grad_buf_);
    op_tape_.forward(op_ws_);
    const ad::Node& out_node = op_tape_.node(op_tape_.outputs()[0]);
    for (int i = 0; i < out_node.size; ++i)
        raw_buf_[static_cast<std::size_t>(i)] =
            op_ws_.val[static_cast<std::size_t>(out_node.offset + i)];
    project_orthogonal(grad_buf_, raw_buf_, spec_.xi, out);
}

void FsHnnPdeModel::step(std::span<double> z_model, int component)
{
    std::vector<double> dz(z_model.size());
    increment(z_model, dz, component);
    for (std::size_t i = 0; i < z_model.size(); ++i) z_model[i] += dz[i];
}

// --- MLP baseline --------------------------------------------------------------

nn::MlpSpec MlpDynamicsSpec::mlp() const
{
    nn::MlpSpec m;
    m.widths.push_back(dim);
    for (int h : hidden) m.widths.push_back(h);
    m.widths.push_back(dim);
    m.activation = activation;
    return m;
}

MlpDynamicsModel::MlpDynamicsModel(MlpDynamicsSpec spec, std::uint64_t init_seed)
    : spec_(std::move(spec))
{
    Rng rng(init_seed);
    init_mlp(spec_.mlp(), params_, "net", rng);
    const std::vector<double> z0(static_cast<std::size_t>(spec_.dim), 0.0);
    const int z = tape_.input(z0);
    nn::RecordCursor cur{&params_, 0};
    const int out = record_mlp(tape_, spec_.mlp(), cur, z);
    tape_.mark_output(out);
    tape_.prepare(ws_);
}

void MlpDynamicsModel::forward(std::span<const double> z, std::span<double> out)
{
    tape_.set_params(ws_, params_.values());
    tape_.set_inputs(ws_, z);
    tape_.forward(ws_);
    const ad::Node& n = tape_.node(tape_.outputs()[0]);
    for (int i = 0; i < n.size; ++i) out[i] = ws_.val[static_cast<std::size_t>(n.offset + i)];
}

// --- rollouts --------------------------------------------------------------------

namespace {

bool all_finite(std::span<const double> v)
{
    for (double x : v)
        if (!std::isfinite(x)) return false;
    return true;
}

} // namespace

ModelRollout rollout_ode(FsHnnOdeModel& model, std::span<const double> z0, long n_steps,
                         double dt, int component)
{
    ModelRollout out;
    out.state_dim = static_cast<int>(z0.size());
    out.frame_dt = dt;
    std::vector<double> z(z0.begin(), z0.end());
    out.states.insert(out.states.end(), z.begin(), z.end());
    out.model_energy.push_back(model.hamiltonian(z, component));
    auto field = [&](std::span<const double> s, double, std::span<double> d) {
        model.vector_field(s, d, component);
    };
    for (long k = 1; k <= n_steps; ++k) {
        try {
            rk4_step(field, std::span<double>(z), (k - 1) * dt, dt);
        } catch (const std::exception&) {
            out.divergence_step = static_cast<int>(k);
            return out;
        }
        if (!all_finite(z)) {
            out.divergence_step = static_cast<int>(k);
            return out;
        }
        out.states.insert(out.states.end(), z.begin(), z.end());
        out.model_energy.push_back(model.hamiltonian(z, component));
    }
    return out;
}

ModelRollout rollout_mlp(MlpDynamicsModel& model, std::span<const double> z0, long n_steps,
                         double base_dt)
{
    ModelRollout out;
    out.state_dim = static_cast<int>(z0.size());
    out.frame_dt = base_dt * model.spec().stride;
    std::vector<double> z(z0.begin(), z0.end()), next(z0.size());
    out.states.insert(out.states.end(), z.begin(), z.end());
    for (long k = 1; k <= n_steps; ++k) {
        try {
            model.forward(z, next);
        } catch (const std::exception&) {
            out.divergence_step = static_cast<int>(k);
            return out;
        }
        if (!all_finite(next)) {
            out.divergence_step = static_cast<int>(k);
            return out;
        }
        z = next;
        out.states.insert(out.states.end(), z.begin(), z.end());
    }
    return out;
}

ModelRollout rollout_pde(FsHnnPdeModel& model, std::span<const double> z0_raw, long n_steps,
                         double base_dt, int component)
{
    ModelRollout out;
    out.state_dim = static_cast<int>(z0_raw.size());
    out.frame_dt = base_dt;
    std::vector<double> z(z0_raw.size()), raw(z0_raw.size());
    model.normalize(z0_raw, z);
    out.states.insert(out.states.end(), z0_raw.begin(), z0_raw.end());
    out.model_energy.push_back(model.hamiltonian(z, component));
    for (long k = 1; k <= n_steps; ++k) {
        try {
            model.step(z, component);
        } catch (const std::exception&) {
            out.divergence_step = static_cast<int>(k);
            return out;
        }
        if (!all_finite(z)) {
            out.divergence_step = static_cast<int>(k);
            return out;
        }
        model.denormalize(z, raw);
        out.states.insert(out.states.end(), raw.begin(), raw.end());
        out.model_energy.push_back(model.hamiltonian(z, component));
    }
    return out;
}

} // namespace fshnn::model
