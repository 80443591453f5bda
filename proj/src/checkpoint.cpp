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

#include "fshnn/checkpoint.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>

namespace fshnn::io {

using nlohmann::json;

namespace {

std::vector<Record> param_records(const ParamVector& params)
{
    std::vector<Record> records;
    records.reserve(params.entries().size());
    for (std::size_t e = 0; e < params.entries().size(); ++e) {
        const auto& entry = params.entries()[e];
        Record r;
        r.kind = RecordKind::Params;
        r.name = entry.name;
        for (int s : entry.shape) r.dims.push_back(static_cast<std::uint64_t>(s));
        const auto slot = params.slot(e);
        r.data.assign(slot.begin(), slot.end());
        records.push_back(std::move(r));
    }
    return records;
}

void restore_params(ParamVector& params, const std::vector<Record>& records)
{
    if (records.size() != params.entries().size())
        throw std::runtime_error("checkpoint: parameter record count mismatch");
    for (std::size_t e = 0; e < params.entries().size(); ++e) {
        const auto& entry = params.entries()[e];
        const Record& r = records[e];
        if (r.name != entry.name || r.element_count() != params.slot_size(e))
            throw std::runtime_error("checkpoint: parameter record '" + r.name
                                     + "' does not match the model layout");
        auto slot = params.slot(e);
        std::copy(r.data.begin(), r.data.end(), slot.begin());
    }
}

json meta_to_json(const CheckpointMeta& meta)
{
    json j;
    j["family"] = meta.family;
    j["system"] = meta.system;
    j["base_dt"] = meta.base_dt;
    j["extra"] = meta.extra;
    return j;
}

CheckpointMeta meta_from_json(const json& j)
{
    CheckpointMeta meta;
    meta.family = j.at("family").get<std::string>();
    meta.system = j.at("system").get<std::string>();
    meta.base_dt = j.at("base_dt").get<double>();
    if (j.contains("extra")) meta.extra = j.at("extra");
    return meta;
}

std::string activation_name(nn::Activation a)
{
    return a == nn::Activation::Tanh ? "tanh" : "softplus";
}

nn::Activation activation_from(const std::string& s)
{
    if (s == "tanh") return nn::Activation::Tanh;
    if (s == "softplus") return nn::Activation::Softplus;
    throw std::runtime_error("checkpoint: unknown activation '" + s + "'");
}

} // namespace

void write_text_atomic(const std::string& path, const std::string& text)
{
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw std::runtime_error("cannot open " + tmp);
        out << text;
        if (!out) throw std::runtime_error("short write to " + tmp);
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        std::remove(tmp.c_str());
        throw std::runtime_error("rename failed for " + path + ": " + ec.message());
    }
}

void write_json_atomic(const std::string& path, const json& j)
{
    write_text_atomic(path, j.dump(2) + "\n");
}

void save_checkpoint(const std::string& path, const model::FsHnnOdeModel& model,
                     const CheckpointMeta& meta)
{
    write_container(path, param_records(model.params()));
    json j = meta_to_json(meta);
    const auto& s = model.spec();
    j["kind"] = "ode";
    j["spec"] = {
        {"dof", s.dof},
        {"k", s.k},
        {"intervals", s.intervals},
        {"hidden", s.hidden},
        {"combiner_hidden", s.combiner_hidden},
        {"activation", activation_name(s.activation)},
    };
    write_json_atomic(path + ".json", j);
}

void save_checkpoint(const std::string& path, const model::FsHnnPdeModel& model,
                     const CheckpointMeta& meta)
{
    write_container(path, param_records(model.params()));
    json j = meta_to_json(meta);
    const auto& s = model.spec();
    j["kind"] = "pde";
    j["spec"] = {
        {"channels", s.channels},
        {"ny", s.ny},
        {"nx", s.nx},
        {"k", s.k},
        {"intervals", s.intervals},
        {"branch_hidden", s.branch_hidden},
        {"trunk_hidden", s.trunk_hidden},
        {"latent", s.latent},
        {"stencil", s.stencil},
        {"combiner_hidden", s.combiner_hidden},
        {"op_hidden_channels", s.op.hidden_channels},
        {"op_depth", s.op.depth},
        {"op_kernel", s.op.kernel},
        {"xi", s.xi},
        {"dt_model", s.dt_model},
        {"shift", s.shift},
        {"scale", s.scale},
    };
    write_json_atomic(path + ".json", j);
}

void save_checkpoint(const std::string& path, const model::MlpDynamicsModel& model,
                     const CheckpointMeta& meta)
{
    write_container(path, param_records(model.params()));
    json j = meta_to_json(meta);
    const auto& s = model.spec();
    j["kind"] = "mlp";
    j["spec"] = {
        {"dim", s.dim},
        {"stride", s.stride},
        {"hidden", s.hidden},
        {"activation", activation_name(s.activation)},
    };
    write_json_atomic(path + ".json", j);
}

LoadedModel load_checkpoint(const std::string& path)
{
    std::ifstream in(path + ".json");
    if (!in) throw std::runtime_error("checkpoint: cannot open sidecar " + path + ".json");
    json j;
    in >> j;

    LoadedModel out;
    out.meta = meta_from_json(j);
    const std::string kind = j.at("kind").get<std::string>();
    const json& s = j.at("spec");
    const auto records = read_container(path);

    if (kind == "ode") {
        model::FsHnnOdeSpec spec;
        spec.dof = s.at("dof").get<int>();
        spec.k = s.at("k").get<int>();
        spec.intervals = s.at("intervals").get<std::vector<int>>();
        spec.hidden = s.at("hidden").get<std::vector<int>>();
        spec.combiner_hidden = s.at("combiner_hidden").get<std::vector<int>>();
        spec.activation = activation_from(s.at("activation").get<std::string>());
        out.ode = std::make_unique<model::FsHnnOdeModel>(spec, 0);
        restore_params(out.ode->params(), records);
    } else if (kind == "pde") {
        model::FsHnnPdeSpec spec;
        spec.channels = s.at("channels").get<int>();
        spec.ny = s.at("ny").get<int>();
        spec.nx = s.at("nx").get<int>();
        spec.k = s.at("k").get<int>();
        spec.intervals = s.at("intervals").get<std::vector<int>>();
        spec.branch_hidden = s.at("branch_hidden").get<std::vector<int>>();
        spec.trunk_hidden = s.at("trunk_hidden").get<std::vector<int>>();
        spec.latent = s.at("latent").get<int>();
        spec.stencil = s.at("stencil").get<int>();
        spec.combiner_hidden = s.at("combiner_hidden").get<std::vector<int>>();
        spec.op.state_channels = spec.channels;
        spec.op.hidden_channels = s.at("op_hidden_channels").get<int>();
        spec.op.depth = s.at("op_depth").get<int>();
        spec.op.kernel = s.at("op_kernel").get<int>();
        spec.xi = s.at("xi").get<double>();
        spec.dt_model = s.at("dt_model").get<double>();
        spec.shift = s.at("shift").get<std::vector<double>>();
        spec.scale = s.at("scale").get<std::vector<double>>();
        out.pde = true;
        out.pde_model = std::make_unique<model::FsHnnPdeModel>(spec, 0);
        restore_params(out.pde_model->params(), records);
    } else if (kind == "mlp") {
        model::MlpDynamicsSpec spec;
        spec.dim = s.at("dim").get<int>();
        spec.stride = s.at("stride").get<int>();
        spec.hidden = s.at("hidden").get<std::vector<int>>();
        spec.activation = activation_from(s.at("activation").get<std::string>());
        out.mlp = std::make_unique<model::MlpDynamicsModel>(spec, 0);
        restore_params(out.mlp->params(), records);
    } else {
        throw std::runtime_error("checkpoint: unknown kind '" + kind + "'");
    }
    return out;
}

void save_dataset(const std::string& path, const TrajectoryDataset& ds,
                  const json& sidecar_extra)
{
    std::vector<Record> records(2);
    records[0].kind = RecordKind::Dataset;
    records[0].name = "data";
    records[0].dims = {static_cast<std::uint64_t>(ds.n_traj),
                       static_cast<std::uint64_t>(ds.n_frames),
                       static_cast<std::uint64_t>(ds.state_dim)};
    records[0].data = ds.data;
    records[1].kind = RecordKind::Dataset;
    records[1].name = "energy";
    records[1].dims = {static_cast<std::uint64_t>(ds.n_traj),
                       static_cast<std::uint64_t>(ds.n_frames)};
    records[1].data = ds.energy;
    write_container(path, records);

    json j = sidecar_extra;
    j["dt"] = ds.dt;
    j["n_traj"] = ds.n_traj;
    j["n_frames"] = ds.n_frames;
    j["state_dim"] = ds.state_dim;
    if (ds.is_field()) {
        j["field"] = {{"channels", ds.field_channels},
                      {"ny", ds.field_ny},
                      {"nx", ds.field_nx},
                      {"dx", ds.field_dx}};
    }
    write_json_atomic(path + ".json", j);
}

TrajectoryDataset load_dataset(const std::string& path)
{
    const auto records = read_container(path);
    const Record& data = find_record(records, "data");
    if (data.dims.size() != 3)
        throw std::runtime_error("dataset: 'data' record must have rank 3");

    TrajectoryDataset ds;
    ds.n_traj = static_cast<int>(data.dims[0]);
    ds.n_frames = static_cast<int>(data.dims[1]);
    ds.state_dim = static_cast<int>(data.dims[2]);
    ds.data = data.data;
    const Record* energy = find_record_opt(records, "energy");
    if (energy)
        ds.energy = energy->data;
    else
        ds.energy.assign(static_cast<std::size_t>(ds.n_traj) * ds.n_frames, 0.0);

    const json j = load_sidecar(path);
    ds.dt = j.at("dt").get<double>();
    if (j.contains("field")) {
        ds.field_channels = j.at("field").at("channels").get<int>();
        ds.field_ny = j.at("field").at("ny").get<int>();
        ds.field_nx = j.at("field").at("nx").get<int>();
        ds.field_dx = j.at("field").at("dx").get<double>();
    }
    return ds;
}

json load_sidecar(const std::string& path)
{
    std::ifstream in(path + ".json");
    if (!in) throw std::runtime_error("cannot open sidecar " + path + ".json");
    json j;
    in >> j;
    return j;
}

} // namespace fshnn::io
