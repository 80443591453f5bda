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

#include "fshnn/config.hpp"

#include <fstream>
#include <set>
#include <stdexcept>

namespace fshnn::config {

using nlohmann::json;

namespace {

// Rejects keys outside the known set before any field is read.
class StrictObject {
public:
    StrictObject(const json& j, std::string path, const std::vector<const char*>& known)
        : obj_(j)
    {
        if (!obj_.is_object())
            throw std::invalid_argument("config: " + path + " must be an object");
        const std::set<std::string> allowed(known.begin(), known.end());
        for (auto it = obj_.begin(); it != obj_.end(); ++it)
            if (!allowed.count(it.key()))
                throw std::invalid_argument("config: unknown key '" + path + "." + it.key()
                                            + "'");
    }

    template <typename T> void get(const char* key, T& out) const
    {
        if (obj_.contains(key)) out = obj_.at(key).get<T>();
    }

    bool has(const char* key) const { return obj_.contains(key); }
    const json& raw(const char* key) const { return obj_.at(key); }

private:
    const json& obj_;
};

std::vector<const char*> physical_keys(sys::SystemKind kind)
{
    switch (kind) {
    case sys::SystemKind::Pendulum: return {"g", "L"};
    case sys::SystemKind::DoublePendulum: return {"m1", "m2", "L1", "L2", "g"};
    case sys::SystemKind::Fput: return {"n", "m", "k", "alpha", "beta", "sigma_q", "sigma_p"};
    case sys::SystemKind::SwePulse:
        return {"L", "g", "depth", "n", "cfl", "pulse_amplitude", "pulse_sigma",
                "randomize_center"};
    case sys::SystemKind::SweRandom:
        return {"L", "g", "depth", "n", "cfl", "random_amplitude", "jump_threshold"};
    case sys::SystemKind::TaylorGreen: return {"n", "u0", "re", "k"};
    case sys::SystemKind::TwoScale:
        return {"eps", "mass_s", "mass_f", "slow_k", "fast_k", "fast_center"};
    }
    return {};
}

void parse_physical(const json& j, sys::SystemSpec& spec)
{
    StrictObject o(j, "physical", physical_keys(spec.kind));
    switch (spec.kind) {
    case sys::SystemKind::Pendulum:
        o.get("g", spec.pendulum.g);
        o.get("L", spec.pendulum.L);
        break;
    case sys::SystemKind::DoublePendulum:
        o.get("m1", spec.double_pendulum.m1);
        o.get("m2", spec.double_pendulum.m2);
        o.get("L1", spec.double_pendulum.L1);
        o.get("L2", spec.double_pendulum.L2);
        o.get("g", spec.double_pendulum.g);
        break;
    case sys::SystemKind::Fput:
        o.get("n", spec.fput.n);
        o.get("m", spec.fput.m);
        o.get("k", spec.fput.k);
        o.get("alpha", spec.fput.alpha);
        o.get("beta", spec.fput.beta);
        o.get("sigma_q", spec.fput.sigma_q);
        o.get("sigma_p", spec.fput.sigma_p);
        break;
    case sys::SystemKind::SwePulse:
        o.get("L", spec.swe.L);
        o.get("g", spec.swe.g);
        o.get("depth", spec.swe.depth);
        o.get("n", spec.swe.n);
        o.get("cfl", spec.swe.cfl);
        o.get("pulse_amplitude", spec.pulse_amplitude);
        o.get("pulse_sigma", spec.pulse_sigma);
        o.get("randomize_center", spec.randomize_center);
        break;
    case sys::SystemKind::SweRandom:
        o.get("L", spec.swe.L);
        o.get("g", spec.swe.g);
        o.get("depth", spec.swe.depth);
        o.get("n", spec.swe.n);
        o.get("cfl", spec.swe.cfl);
        o.get("random_amplitude", spec.random_amplitude);
        o.get("jump_threshold", spec.random_jump_threshold);
        break;
    case sys::SystemKind::TaylorGreen:
        o.get("n", spec.taylor_green.n);
        o.get("u0", spec.taylor_green.u0);
        o.get("re", spec.taylor_green.re);
        o.get("k", spec.taylor_green.k);
        break;
    case sys::SystemKind::TwoScale:
        o.get("eps", spec.two_scale.eps);
        o.get("mass_s", spec.two_scale.mass_s);
        o.get("mass_f", spec.two_scale.mass_f);
        o.get("slow_k", spec.two_scale.slow_k);
        o.get("fast_k", spec.two_scale.fast_k);
        o.get("fast_center", spec.two_scale.fast_center);
        break;
    }
}

json physical_to_json(const sys::SystemSpec& spec)
{
    json j;
    switch (spec.kind) {
    case sys::SystemKind::Pendulum:
        j["g"] = spec.pendulum.g;
        j["L"] = spec.pendulum.L;
        break;
    case sys::SystemKind::DoublePendulum:
        j["m1"] = spec.double_pendulum.m1;
        j["m2"] = spec.double_pendulum.m2;
        j["L1"] = spec.double_pendulum.L1;
        j["L2"] = spec.double_pendulum.L2;
        j["g"] = spec.double_pendulum.g;
        break;
    case sys::SystemKind::Fput:
        j["n"] = spec.fput.n;
        j["m"] = spec.fput.m;
        j["k"] = spec.fput.k;
        j["alpha"] = spec.fput.alpha;
        j["beta"] = spec.fput.beta;
        j["sigma_q"] = spec.fput.sigma_q;
        j["sigma_p"] = spec.fput.sigma_p;
        break;
    case sys::SystemKind::SwePulse:
        j["L"] = spec.swe.L;
        j["g"] = spec.swe.g;
        j["depth"] = spec.swe.depth;
        j["n"] = spec.swe.n;
        j["cfl"] = spec.swe.cfl;
        j["pulse_amplitude"] = spec.pulse_amplitude;
        j["pulse_sigma"] = spec.pulse_sigma;
        j["randomize_center"] = spec.randomize_center;
        break;
    case sys::SystemKind::SweRandom:
        j["L"] = spec.swe.L;
        j["g"] = spec.swe.g;
        j["depth"] = spec.swe.depth;
        j["n"] = spec.swe.n;
        j["cfl"] = spec.swe.cfl;
        j["random_amplitude"] = spec.random_amplitude;
        j["jump_threshold"] = spec.random_jump_threshold;
        break;
    case sys::SystemKind::TaylorGreen:
        j["n"] = spec.taylor_green.n;
        j["u0"] = spec.taylor_green.u0;
        j["re"] = spec.taylor_green.re;
        j["k"] = spec.taylor_green.k;
        break;
    case sys::SystemKind::TwoScale:
        j["eps"] = spec.two_scale.eps;
        j["mass_s"] = spec.two_scale.mass_s;
        j["mass_f"] = spec.two_scale.mass_f;
        j["slow_k"] = spec.two_scale.slow_k;
        j["fast_k"] = spec.two_scale.fast_k;
        j["fast_center"] = spec.two_scale.fast_center;
        break;
    }
    return j;
}

} // namespace

ExperimentConfig parse_config(const json& j)
{
    ExperimentConfig c;
    StrictObject root(j, "$", {"system", "physical", "generation", "model", "training",
                               "evaluation"});

    std::string system_name = "pendulum";
    root.get("system", system_name);
    c.system.kind = sys::system_from_name(system_name);

    if (root.has("physical")) parse_physical(root.raw("physical"), c.system);

    if (root.has("generation")) {
        StrictObject o(root.raw("generation"), "generation",
                       {"n_traj", "n_steps", "dt", "save_every", "seed", "noise_sigma"});
        o.get("n_traj", c.gen.n_traj);
        o.get("n_steps", c.gen.n_steps);
        o.get("dt", c.gen.dt);
        o.get("save_every", c.gen.save_every);
        o.get("seed", c.gen.seed);
        o.get("noise_sigma", c.gen.noise_sigma);
    }

    if (root.has("model")) {
        StrictObject o(root.raw("model"), "model",
                       {"family", "k", "intervals", "hidden", "combiner_hidden", "activation",
                        "interval", "union_resolutions", "init_seed", "xi", "latent",
                        "stencil", "branch_hidden", "trunk_hidden", "op_channels", "op_depth",
                        "op_kernel"});
        o.get("family", c.model.family);
        o.get("k", c.model.k);
        o.get("intervals", c.model.intervals);
        o.get("hidden", c.model.hidden);
        o.get("combiner_hidden", c.model.combiner_hidden);
        o.get("activation", c.model.activation);
        o.get("interval", c.model.interval);
        o.get("union_resolutions", c.model.union_resolutions);
        o.get("init_seed", c.model.init_seed);
        o.get("xi", c.model.xi);
        o.get("latent", c.model.latent);
        o.get("stencil", c.model.stencil);
        o.get("branch_hidden", c.model.branch_hidden);
        o.get("trunk_hidden", c.model.trunk_hidden);
        o.get("op_channels", c.model.op_channels);
        o.get("op_depth", c.model.op_depth);
        o.get("op_kernel", c.model.op_kernel);
    }
    if (c.model.family != "fs-hnn" && c.model.family != "hnn" && c.model.family != "mlp")
        throw std::invalid_argument("config: unknown model family '" + c.model.family + "'");
    if (c.model.activation != "tanh" && c.model.activation != "softplus")
        throw std::invalid_argument("config: unknown activation '" + c.model.activation + "'");

    if (root.has("training")) {
        StrictObject o(root.raw("training"), "training",
                       {"lr", "beta1", "beta2", "epochs_phase1", "epochs_phase2", "batch",
                        "window", "seed", "freeze_components"});
        o.get("lr", c.training.adam.lr);
        o.get("beta1", c.training.adam.beta1);
        o.get("beta2", c.training.adam.beta2);
        o.get("epochs_phase1", c.training.epochs_phase1);
        o.get("epochs_phase2", c.training.epochs_phase2);
        o.get("batch", c.training.batch);
        o.get("window", c.training.window);
        o.get("seed", c.training.seed);
        o.get("freeze_components", c.training.freeze_components);
    }
    if (c.training.adam.lr <= 0.0)
        throw std::invalid_argument("config: training.lr must be positive");

    if (root.has("evaluation")) {
        StrictObject o(root.raw("evaluation"), "evaluation",
                       {"rollout_steps", "trajectory"});
        o.get("rollout_steps", c.eval.rollout_steps);
        o.get("trajectory", c.eval.trajectory);
    }

    if (c.model.family == "fs-hnn"
        && static_cast<int>(c.model.intervals.size()) != c.model.k)
        throw std::invalid_argument("config: model.intervals must have model.k entries");
    return c;
}

ExperimentConfig load_config(const std::string& path)
{
    std::ifstream in(path);
    if (!in) throw std::runtime_error("config: cannot open " + path);
    json j;
    in >> j;
    return parse_config(j);
}

json config_to_json(const ExperimentConfig& c)
{
    json j;
    j["system"] = sys::system_name(c.system.kind);
    j["physical"] = physical_to_json(c.system);
    j["generation"] = {
        {"n_traj", c.gen.n_traj},         {"n_steps", c.gen.n_steps},
        {"dt", c.gen.dt},                 {"save_every", c.gen.save_every},
        {"seed", c.gen.seed},             {"noise_sigma", c.gen.noise_sigma},
    };
    j["model"] = {
        {"family", c.model.family},
        {"k", c.model.k},
        {"intervals", c.model.intervals},
        {"hidden", c.model.hidden},
        {"combiner_hidden", c.model.combiner_hidden},
        {"activation", c.model.activation},
        {"interval", c.model.interval},
        {"union_resolutions", c.model.union_resolutions},
        {"init_seed", c.model.init_seed},
        {"xi", c.model.xi},
        {"latent", c.model.latent},
        {"stencil", c.model.stencil},
        {"branch_hidden", c.model.branch_hidden},
        {"trunk_hidden", c.model.trunk_hidden},
        {"op_channels", c.model.op_channels},
        {"op_depth", c.model.op_depth},
        {"op_kernel", c.model.op_kernel},
    };
    j["training"] = {
        {"lr", c.training.adam.lr},
        {"beta1", c.training.adam.beta1},
        {"beta2", c.training.adam.beta2},
        {"epochs_phase1", c.training.epochs_phase1},
        {"epochs_phase2", c.training.epochs_phase2},
        {"batch", c.training.batch},
        {"window", c.training.window},
        {"seed", c.training.seed},
        {"freeze_components", c.training.freeze_components},
    };
    j["evaluation"] = {
        {"rollout_steps", c.eval.rollout_steps},
        {"trajectory", c.eval.trajectory},
    };
    return j;
}

} // namespace fshnn::config
