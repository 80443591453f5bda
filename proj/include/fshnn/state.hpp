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

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace fshnn {

// Flat phase-space vector z = (q, p): first `dof` entries are generalized
// positions, the next `dof` are momenta (or velocities where the system is
// stated in velocity form).
struct PhaseState {
    int dof = 0;
    std::vector<double> z;

    PhaseState() = default;
    explicit PhaseState(int dof_) : dof(dof_), z(static_cast<std::size_t>(2 * dof_), 0.0) {}

    double* q() { return z.data(); }
    double* p() { return z.data() + dof; }
    const double* q() const { return z.data(); }
    const double* p() const { return z.data() + dof; }
    int dim() const { return 2 * dof; }
};

// Multichannel field on a uniform periodic 2D grid, row-major (channel, y, x).
struct FieldState {
    int channels = 0;
    int ny = 0;
    int nx = 0;
    double dx = 1.0; // cell spacing (square cells)
    std::vector<double> data;

    FieldState() = default;
    FieldState(int channels_, int ny_, int nx_, double dx_ = 1.0)
        : channels(channels_), ny(ny_), nx(nx_), dx(dx_),
          data(static_cast<std::size_t>(channels_) * ny_ * nx_, 0.0)
    {
    }

    double& at(int c, int i, int j) { return data[(static_cast<std::size_t>(c) * ny + i) * nx + j]; }
    double at(int c, int i, int j) const
    {
        return data[(static_cast<std::size_t>(c) * ny + i) * nx + j];
    }

    double* channel(int c) { return data.data() + static_cast<std::size_t>(c) * ny * nx; }
    const double* channel(int c) const
    {
        return data.data() + static_cast<std::size_t>(c) * ny * nx;
    }

    int cells() const { return ny * nx; }
    int dim() const { return channels * ny * nx; }
    double cell_area() const { return dx * dx; }

    bool same_shape(const FieldState& o) const
    {
        return channels == o.channels && ny == o.ny && nx == o.nx;
    }
};

// Trajectory array [n_traj, n_frames, state_dim] with a shared timestep and
// per-frame energy diagnostic. PDE datasets carry the field shape alongside.
struct TrajectoryDataset {
    int n_traj = 0;
    int n_frames = 0;
    int state_dim = 0;
    double dt = 0.0; // effective time between consecutive frames
    std::vector<double> data;   // [n_traj * n_frames * state_dim]
    std::vector<double> energy; // [n_traj * n_frames]

    // Optional field metadata (state_dim == channels * ny * nx when set).
    int field_channels = 0;
    int field_ny = 0;
    int field_nx = 0;
    double field_dx = 1.0;

    void allocate()
    {
        data.assign(static_cast<std::size_t>(n_traj) * n_frames * state_dim, 0.0);
        energy.assign(static_cast<std::size_t>(n_traj) * n_frames, 0.0);
    }

    double* frame(int traj, int k)
    {
        return data.data()
               + (static_cast<std::size_t>(traj) * n_frames + k) * state_dim;
    }
    const double* frame(int traj, int k) const
    {
        return data.data()
               + (static_cast<std::size_t>(traj) * n_frames + k) * state_dim;
    }

    double& energy_at(int traj, int k)
    {
        return energy[static_cast<std::size_t>(traj) * n_frames + k];
    }
    double energy_at(int traj, int k) const
    {
        return energy[static_cast<std::size_t>(traj) * n_frames + k];
    }

    bool is_field() const { return field_channels > 0; }
};

} // namespace fshnn
