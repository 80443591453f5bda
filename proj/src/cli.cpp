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

#include "fshnn/cli.hpp"

#include "fshnn/checkpoint.hpp"
#include "fshnn/config.hpp"
#include "fshnn/models.hpp"
#include "fshnn/systems.hpp"
#include "fshnn/train.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

namespace fshnn::cli {

using nlohmann::json;

namespace {

void apply_seed_override(config::ExperimentConfig& cfg)
{
    const char* env = std::getenv("FSHNN_SEED");
    if (!env) return;
    const std::uint64_t seed = std::strtoull(env, nullptr, 10);
    cfg.gen.seed = seed;
    cfg.training.seed = seed;
}

std::string resolution_label(int interval, const std::vector<int>& intervals)
{
    std::vector<int> sorted = intervals;
    std::sort(sorted.begin(), sorted.end());
    const auto it = std::find(sorted.begin(), sorted.end(), interval);
    if (sorted.size() == 3 && it != sorted.end()) {
        const char* names[3] = {"high", "med", "low"};
        return names[it - sorted.begin()];
    }
    if (interval == 1) return "high";
    if (interval == 2) return "med";
    if (interval == 3) return "low";
    return "i" + std::to_string(interval);
}

std::string loss_csv(const train::TrainResult& result)
{
    std::ostringstream out;
    out << "step,phase,loss\n";
    std::size_t phase = 0;
    for (std::size_t i = 0; i < result.loss_history.size(); ++i) {
        while (phase < result.phase_bounds.size() && i >= result.phase_bounds[phase]) ++phase;
        out << i << ',' << phase << ',' << result.loss_history[i] << '\n';
    }
    return out.str();
}

int cmd_gen(const std::string& config_path, std::string out_path)
{
    config::ExperimentConfig cfg = config::load_config(config_path);
    apply_seed_override(cfg);
    if (out_path.empty()) out_path = sys::system_name(cfg.system.kind) + ".dataset.fsh";

    const TrajectoryDataset ds = sys::generate_dataset(cfg.system, cfg.gen);
    json sidecar;
    sidecar["config"] = config::config_to_json(cfg);
    io::save_dataset(out_path, ds, sidecar);
    std::cout << "wrote " << out_path << " (" << ds.n_traj << " x " << ds.n_frames << " x "
              << ds.state_dim << ", dt " << ds.dt << ")\n";
    return 0;
}

// Per-channel mean/std over the whole dataset, used to put PDE fields on a
// unit scale before they enter the networks.
void dataset_normalization(const TrajectoryDataset& ds, std::vector<double>& shift,
                           std::vector<double>& scale)
{
    const int c = ds.field_channels;
    const std::size_t cells = static_cast<std::size_t>(ds.field_ny) * ds.field_nx;
    shift.assign(static_cast<std::size_t>(c), 0.0);
    scale.assign(static_cast<std::size_t>(c), 1.0);
    const std::size_t frames = static_cast<std::size_t>(ds.n_traj) * ds.n_frames;
    for (int ch = 0; ch < c; ++ch) {
        double mean = 0.0;
        for (std::size_t f = 0; f < frames; ++f) {
            const double* z = ds.data.data() + f * ds.state_dim + ch * cells;
            for (std::size_t i = 0; i < cells; ++i) mean += z[i];
        }
        mean /= static_cast<double>(frames * cells);
        double var = 0.0;
        for (std::size_t f = 0; f < frames; ++f) {
            const double* z = ds.data.data() + f * ds.state_dim + ch * cells;
            for (std::size_t i = 0; i < cells; ++i) var += (z[i] - mean) * (z[i] - mean);
        }
        var /= static_cast<double>(frames * cells);
        shift[ch] = mean;
        scale[ch] = std::sqrt(var) > 1.0e-12 ? std::sqrt(var) : 1.0;
    }
}

int cmd_train(const std::string& config_path, const std::string& dataset_path,
              std::string out_path)
{
    config::ExperimentConfig cfg = config::load_config(config_path);
    apply_seed_override(cfg);
    const TrajectoryDataset ds = io::load_dataset(dataset_path);
    const json dataset_sidecar = io::load_sidecar(dataset_path);
    const std::string system = dataset_sidecar.contains("config")
                                   ? dataset_sidecar["config"]["system"].get<std::string>()
                                   : sys::system_name(cfg.system.kind);
    if (out_path.empty()) out_path = system + "." + cfg.model.family + ".ckpt.fsh";

    const nn::Activation act = cfg.model.activation == "tanh" ? nn::Activation::Tanh
                                                              : nn::Activation::Softplus;
    io::CheckpointMeta meta;
    meta.system = system;
    meta.base_dt = ds.dt;
    meta.family = cfg.model.family;
    meta.extra = {{"train_seed", cfg.training.seed},
                  {"init_seed", cfg.model.init_seed},
                  {"config", config::config_to_json(cfg)}};

    train::TrainResult result;
    if (cfg.model.family == "fs-hnn" && ds.is_field()) {
        model::FsHnnPdeSpec spec;
        spec.channels = ds.field_channels;
        spec.ny = ds.field_ny;
        spec.nx = ds.field_nx;
        spec.k = cfg.model.k;
        spec.intervals = cfg.model.intervals;
        spec.branch_hidden = cfg.model.branch_hidden;
        spec.trunk_hidden = cfg.model.trunk_hidden;
        spec.latent = cfg.model.latent;
        spec.stencil = cfg.model.stencil;
        spec.combiner_hidden = cfg.model.combiner_hidden;
        spec.op.state_channels = ds.field_channels;
        spec.op.hidden_channels = cfg.model.op_channels;
        spec.op.depth = cfg.model.op_depth;
        spec.op.kernel = cfg.model.op_kernel;
        spec.xi = cfg.model.xi;
        spec.dt_model = ds.dt;
        dataset_normalization(ds, spec.shift, spec.scale);
        model::FsHnnPdeModel model(spec, cfg.model.init_seed);
        result = train::train_fs_hnn_pde(model, ds, cfg.training);
        meta.extra["intervals"] = spec.intervals;
        io::save_checkpoint(out_path, model, meta);
    } else if (cfg.model.family == "fs-hnn") {
        if (ds.state_dim % 2 != 0)
            throw std::runtime_error("train: ODE state dimension must be even");
        model::FsHnnOdeSpec spec;
        spec.dof = ds.state_dim / 2;
        spec.k = cfg.model.k;
        spec.intervals = cfg.model.intervals;
        spec.hidden = cfg.model.hidden;
        spec.combiner_hidden = cfg.model.combiner_hidden;
        spec.activation = act;
        model::FsHnnOdeModel model(spec, cfg.model.init_seed);
        result = train::train_fs_hnn_ode(model, ds, cfg.training);
        meta.extra["intervals"] = spec.intervals;
        io::save_checkpoint(out_path, model, meta);
    } else if (cfg.model.family == "hnn") {
        if (ds.is_field()) throw std::runtime_error("train: hnn supports ODE datasets only");
        if (ds.state_dim % 2 != 0)
            throw std::runtime_error("train: ODE state dimension must be even");
        model::FsHnnOdeSpec spec;
        spec.dof = ds.state_dim / 2;
        spec.k = 1;
        spec.intervals = {1};
        spec.hidden = cfg.model.hidden;
        spec.combiner_hidden = cfg.model.combiner_hidden;
        spec.activation = act;
        model::FsHnnOdeModel model(spec, cfg.model.init_seed);
        const std::vector<int> union_intervals =
            cfg.model.union_resolutions ? cfg.model.intervals
                                        : std::vector<int>{cfg.model.interval};
        result = train::train_hnn_ode(model, ds, cfg.training, union_intervals);
        meta.extra["interval"] = cfg.model.interval;
        meta.extra["union_resolutions"] = cfg.model.union_resolutions;
        io::save_checkpoint(out_path, model, meta);
    } else { // mlp
        if (ds.is_field()) throw std::runtime_error("train: mlp supports ODE datasets only");
        model::MlpDynamicsSpec spec;
        spec.dim = ds.state_dim;
        spec.stride = cfg.model.interval;
        spec.hidden = cfg.model.hidden;
        spec.activation = act;
        model::MlpDynamicsModel model(spec, cfg.model.init_seed);
        result = train::train_mlp(model, ds, cfg.training, cfg.model.interval);
        io::save_checkpoint(out_path, model, meta);
    }

    io::write_text_atomic(out_path + ".loss.csv", loss_csv(result));
    std::cout << "wrote " << out_path << " (" << result.loss_history.size()
              << " optimizer steps, final loss "
              << (result.loss_history.empty() ? 0.0 : result.loss_history.back()) << ")\n";
    return 0;
}

int cmd_rollout(const std::string& ckpt_path, const std::string& dataset_path, long steps,
                const std::string& component_arg, int traj, std::string out_path)
{
    io::LoadedModel loaded = io::load_checkpoint(ckpt_path);
    const TrajectoryDataset ds = io::load_dataset(dataset_path);
    if (traj < 0 || traj >= ds.n_traj)
        throw std::runtime_error("rollout: trajectory index out of range");
    if (out_path.empty()) out_path = "prediction.fsh";

    int component = -1;
    if (!component_arg.empty() && component_arg != "com" && component_arg != "combined")
        component = std::stoi(component_arg);

    const double* z0 = ds.frame(traj, 0);
    model::ModelRollout roll;
    std::string res = "com";
    if (loaded.ode) {
        const auto& intervals = loaded.ode->spec().intervals;
        roll = model::rollout_ode(*loaded.ode,
                                  std::span<const double>(z0, static_cast<std::size_t>(ds.state_dim)),
                                  steps, ds.dt, component);
        if (loaded.meta.family == "hnn") {
            const bool is_union = loaded.meta.extra.value("union_resolutions", false);
            res = is_union ? "com"
                           : resolution_label(loaded.meta.extra.value("interval", 1), {1, 2, 3});
        } else if (component >= 0) {
            res = resolution_label(intervals.at(component), intervals);
        }
    } else if (loaded.mlp) {
        roll = model::rollout_mlp(*loaded.mlp,
                                  std::span<const double>(z0, static_cast<std::size_t>(ds.state_dim)),
                                  steps, ds.dt);
        res = resolution_label(loaded.mlp->spec().stride, {1, 2, 3});
    } else {
        const auto& intervals = loaded.pde_model->spec().intervals;
        roll = model::rollout_pde(*loaded.pde_model,
                                  std::span<const double>(z0, static_cast<std::size_t>(ds.state_dim)),
                                  steps, ds.dt, component);
        if (component >= 0) res = resolution_label(intervals.at(component), intervals);
    }

    std::vector<io::Record> records(1);
    records[0].kind = io::RecordKind::Dataset;
    records[0].name = "data";
    records[0].dims = {1, static_cast<std::uint64_t>(roll.n_saved()),
                       static_cast<std::uint64_t>(roll.state_dim)};
    records[0].data = roll.states;
    if (!roll.model_energy.empty()) {
        io::Record r;
        r.kind = io::RecordKind::Metrics;
        r.name = "model_energy";
        r.dims = {static_cast<std::uint64_t>(roll.model_energy.size())};
        r.data = roll.model_energy;
        records.push_back(std::move(r));
    }
    io::write_container(out_path, records);

    json sidecar;
    sidecar["frame_dt"] = roll.frame_dt;
    sidecar["steps"] = steps;
    sidecar["component"] = component;
    sidecar["trajectory"] = traj;
    sidecar["system"] = loaded.meta.system;
    sidecar["model"] = loaded.meta.family;
    sidecar["resolution"] = res;
    sidecar["divergence_step"] = roll.divergence_step;
    sidecar["truth_dt"] = ds.dt;
    io::write_json_atomic(out_path + ".json", sidecar);

    std::cout << "wrote " << out_path << " (" << roll.n_saved() << " frames";
    if (roll.divergence_step >= 0) std::cout << ", diverged at step " << roll.divergence_step;
    std::cout << ")\n";
    return 0;
}

int cmd_eval(const std::string& pred_path, const std::string& truth_path,
             const std::string& energy_system, std::string out_path)
{
    const auto pred_records = io::read_container(pred_path);
    const json pred_sidecar = io::load_sidecar(pred_path);
    const TrajectoryDataset truth = io::load_dataset(truth_path);
    const json truth_sidecar = io::load_sidecar(truth_path);
    if (out_path.empty()) out_path = "report.json";

    const io::Record& pred_data = io::find_record(pred_records, "data");
    const int dim = static_cast<int>(pred_data.dims[2]);
    if (dim != truth.state_dim)
        throw std::runtime_error("eval: state dimension mismatch between pred and truth");

    const int traj = pred_sidecar.value("trajectory", 0);
    const double pred_dt = pred_sidecar.value("frame_dt", truth.dt);
    const int stride = std::max(1, static_cast<int>(std::llround(pred_dt / truth.dt)));

    // truth frames aligned to the prediction's time grid
    const int pred_frames = static_cast<int>(pred_data.dims[1]);
    const int avail = (truth.n_frames - 1) / stride + 1;
    const int frames = std::min(pred_frames, avail);
    std::vector<double> truth_aligned(static_cast<std::size_t>(frames) * dim);
    for (int f = 0; f < frames; ++f)
        std::copy(truth.frame(traj, f * stride), truth.frame(traj, f * stride) + dim,
                  truth_aligned.begin() + static_cast<std::size_t>(f) * dim);

    const std::span<const double> pred_span(pred_data.data.data(),
                                            static_cast<std::size_t>(frames) * dim);
    train::MetricReport report;
    report.rollout_mse = train::rollout_mse(pred_span, truth_aligned, dim);
    report.per_step_mse = train::per_step_mse(pred_span, truth_aligned, dim);
    report.frame_dt = pred_dt;
    report.divergence_step = pred_sidecar.value("divergence_step", -1);
    report.system = pred_sidecar.value("system", "");
    report.model = pred_sidecar.value("model", "");
    report.resolution = pred_sidecar.value("resolution", "");

    // per-channel MSE for field states
    if (truth.is_field()) {
        const std::size_t cells = static_cast<std::size_t>(truth.field_ny) * truth.field_nx;
        report.channel_mse.assign(static_cast<std::size_t>(truth.field_channels), 0.0);
        for (int f = 0; f < frames; ++f)
            for (int c = 0; c < truth.field_channels; ++c) {
                const double* a = pred_data.data.data()
                                  + (static_cast<std::size_t>(f) * dim) + c * cells;
                const double* b = truth_aligned.data()
                                  + (static_cast<std::size_t>(f) * dim) + c * cells;
                double acc = 0.0;
                for (std::size_t i = 0; i < cells; ++i) acc += (a[i] - b[i]) * (a[i] - b[i]);
                report.channel_mse[c] += acc / static_cast<double>(cells);
            }
        for (double& v : report.channel_mse) v /= frames;
    }

    // physical energy along the prediction
    std::string system_name = energy_system;
    if (system_name.empty() && truth_sidecar.contains("config"))
        system_name = truth_sidecar["config"]["system"].get<std::string>();
    if (!system_name.empty() && truth_sidecar.contains("config")) {
        const config::ExperimentConfig cfg = config::parse_config(truth_sidecar["config"]);
        std::vector<double> energies(static_cast<std::size_t>(frames));
        for (int f = 0; f < frames; ++f)
            energies[f] = sys::frame_energy(
                cfg.system, std::span<const double>(
                                pred_data.data.data() + static_cast<std::size_t>(f) * dim,
                                static_cast<std::size_t>(dim)));
        report.energy = train::energy_deviation(energies);
    }

    // learned-Hamiltonian deviation recorded by the rollout
    if (const io::Record* me = io::find_record_opt(pred_records, "model_energy")) {
        const auto dev = train::energy_deviation(me->data);
        report.model_energy_dev = dev.curve;
    }

    json j;
    j["rollout_mse"] = report.rollout_mse;
    j["frames"] = frames;
    j["frame_dt"] = report.frame_dt;
    j["divergence_step"] = report.divergence_step;
    j["system"] = report.system;
    j["model"] = report.model;
    j["resolution"] = report.resolution;
    if (!report.channel_mse.empty()) j["channel_mse"] = report.channel_mse;
    if (!report.energy.curve.empty()) {
        double max_dev = 0.0;
        for (double e : report.energy.curve) max_dev = std::max(max_dev, std::fabs(e));
        j["energy_dev_max"] = max_dev;
        j["energy_dev_absolute_fallback"] = report.energy.absolute_fallback;
    }
    if (!report.model_energy_dev.empty()) {
        double max_dev = 0.0;
        for (double e : report.model_energy_dev) max_dev = std::max(max_dev, std::fabs(e));
        j["model_energy_dev_max"] = max_dev;
    }
    io::write_json_atomic(out_path, j);

    std::ostringstream csv;
    csv << "step,time,mse";
    if (!report.energy.curve.empty()) csv << ",energy_dev";
    if (!report.model_energy_dev.empty()) csv << ",model_energy_dev";
    csv << '\n';
    for (int f = 0; f < frames; ++f) {
        csv << f << ',' << f * report.frame_dt << ',' << report.per_step_mse[f];
        if (!report.energy.curve.empty()) csv << ',' << report.energy.curve[f];
        if (!report.model_energy_dev.empty())
            csv << ','
                << (f < static_cast<int>(report.model_energy_dev.size())
                        ? report.model_energy_dev[f]
                        : 0.0);
        csv << '\n';
    }
    io::write_text_atomic(out_path + ".curves.csv", csv.str());

    std::cout << "rollout_mse " << report.rollout_mse << " over " << frames << " frames\n";
    return 0;
}

int cmd_table(const std::vector<std::string>& reports, const std::string& out_path)
{
    struct Key {
        std::string model, res;
        bool operator<(const Key& o) const
        {
            auto model_rank = [](const std::string& m) {
                if (m == "mlp") return 0;
                if (m == "hnn") return 1;
                if (m == "fs-hnn") return 2;
                return 3;
            };
            auto res_rank = [](const std::string& r) {
                if (r == "low") return 0;
                if (r == "med") return 1;
                if (r == "high") return 2;
                if (r == "com") return 3;
                return 4;
            };
            if (model_rank(model) != model_rank(o.model))
                return model_rank(model) < model_rank(o.model);
            if (res_rank(res) != res_rank(o.res)) return res_rank(res) < res_rank(o.res);
            return model + res < o.model + o.res;
        }
    };

    const std::vector<std::string> system_order = {"pendulum",   "double_pendulum",
                                                   "fput",       "swe_pulse",
                                                   "swe_random", "taylor_green"};
    std::map<Key, std::map<std::string, double>> cells;
    std::vector<std::string> systems;
    for (const std::string& path : reports) {
        std::ifstream in(path);
        if (!in) throw std::runtime_error("table: cannot open " + path);
        json j;
        in >> j;
        const std::string system = j.value("system", "");
        cells[{j.value("model", ""), j.value("resolution", "")}][system] =
            j.at("rollout_mse").get<double>();
        if (std::find(systems.begin(), systems.end(), system) == systems.end())
            systems.push_back(system);
    }
    std::sort(systems.begin(), systems.end(), [&](const std::string& a, const std::string& b) {
        const auto ia = std::find(system_order.begin(), system_order.end(), a);
        const auto ib = std::find(system_order.begin(), system_order.end(), b);
        if (ia != ib) return ia < ib;
        return a < b;
    });

    std::ostringstream csv;
    csv << "model,res";
    for (const auto& s : systems) csv << ',' << s;
    csv << '\n';
    for (const auto& [key, row] : cells) {
        csv << key.model << ',' << key.res;
        for (const auto& s : systems) {
            csv << ',';
            const auto it = row.find(s);
            if (it != row.end()) csv << it->second;
        }
        csv << '\n';
    }

    if (out_path.empty())
        std::cout << csv.str();
    else {
        io::write_text_atomic(out_path, csv.str());
        std::cout << "wrote " << out_path << "\n";
    }
    return 0;
}

} // namespace

int run_command(const std::vector<std::string>& args)
{
    CLI::App app{"frequency-separable Hamiltonian dynamics toolkit"};
    app.require_subcommand(1);

    std::string config_path, dataset_path, ckpt_path, pred_path, truth_path, out_path;
    std::string component = "com", energy_system;
    long steps = 1000;
    int traj = 0;
    std::vector<std::string> report_paths;

    auto* gen = app.add_subcommand("gen", "generate a dataset from a config");
    gen->add_option("config", config_path, "experiment config JSON")->required();
    gen->add_option("-o,--out", out_path, "output container path");

    auto* train_cmd = app.add_subcommand("train", "train a model on a dataset");
    train_cmd->add_option("config", config_path, "experiment config JSON")->required();
    train_cmd->add_option("dataset", dataset_path, "dataset container")->required();
    train_cmd->add_option("-o,--out", out_path, "checkpoint path");

    auto* roll = app.add_subcommand("rollout", "roll a trained model forward");
    roll->add_option("checkpoint", ckpt_path)->required();
    roll->add_option("dataset", dataset_path, "dataset supplying the initial state")->required();
    roll->add_option("--steps", steps, "rollout steps")->required();
    roll->add_option("--component", component, "component index or 'com'");
    roll->add_option("--traj", traj, "source trajectory index");
    roll->add_option("-o,--out", out_path, "prediction container path");

    auto* eval_cmd = app.add_subcommand("eval", "score a prediction against the truth");
    eval_cmd->add_option("prediction", pred_path)->required();
    eval_cmd->add_option("truth", truth_path)->required();
    eval_cmd->add_option("--energy", energy_system,
                         "system name for the physical energy diagnostic");
    eval_cmd->add_option("-o,--out", out_path, "report JSON path");

    auto* table = app.add_subcommand("table", "aggregate reports into a CSV table");
    table->add_option("reports", report_paths, "MetricReport JSON files")->required();
    table->add_option("-o,--out", out_path, "output CSV path");

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) { // --help
            std::cout << app.help();
            return 0;
        }
        std::cerr << e.what() << "\n" << app.help();
        return 1;
    }

    try {
        if (gen->parsed()) return cmd_gen(config_path, out_path);
        if (train_cmd->parsed()) return cmd_train(config_path, dataset_path, out_path);
        if (roll->parsed())
            return cmd_rollout(ckpt_path, dataset_path, steps, component, traj, out_path);
        if (eval_cmd->parsed()) return cmd_eval(pred_path, truth_path, energy_system, out_path);
        if (table->parsed()) return cmd_table(report_paths, out_path);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    std::cerr << app.help();
    return 1;
}

} // namespace fshnn::cli
