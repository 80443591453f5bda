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

#include <complex>
#include <span>
#include <vector>

namespace fshnn {

// In-place radix-2 Cooley-Tukey FFT; data.size() must be a power of two.
// sign = -1 forward, +1 inverse (inverse includes the 1/N factor).
void fft_radix2(std::span<std::complex<double>> data, int sign);

// Solves the periodic Poisson problem  Laplacian(psi) = -omega  on an n x n
// grid of physical length L, using the spectral Laplacian -(kx^2 + ky^2) with
// the zero mode of psi set to 0. n must be a power of two.
std::vector<double> solve_poisson_spectral(std::span<const double> omega, int n, double L);

} // namespace fshnn
