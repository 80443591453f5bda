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

#include "fshnn/fft.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace fshnn {

void fft_radix2(std::span<std::complex<double>> data, int sign)
{
    const std::size_t n = data.size();
    if (n == 0 || (n & (n - 1)) != 0)
        throw std::invalid_argument("fft_radix2: length must be a power of two");

    // bit-reversal permutation
    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(data[i], data[j]);
    }

    for (std::size_t len = 2; len <= n; len <<= 1) {
        const double ang = sign * 2.0 * std::numbers::pi / static_cast<double>(len);
        const std::complex<double> wlen(std::cos(ang), std::sin(ang));
        for (std::size_t i = 0; i < n; i += len) {
            std::complex<double> w(1.0, 0.0);
            for (std::size_t j = 0; j < len / 2; ++j) {
                const std::complex<double> u = data[i + j];
                const std::complex<double> v = data[i + j + len / 2] * w;
                data[i + j] = u + v;
                data[i + j + len / 2] = u - v;
                w *= wlen;
            }
        }
    }

    if (sign > 0) {
        const double inv = 1.0 / static_cast<double>(n);
        for (auto& x : data) x *= inv;
    }
}

namespace {

void fft2d(std::vector<std::complex<double>>& a, int n, int sign)
{
    std::vector<std::complex<double>> col(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i)
        fft_radix2(std::span<std::complex<double>>(a.data() + static_cast<std::size_t>(i) * n,
                                                   static_cast<std::size_t>(n)),
                   sign);
    for (int j = 0; j < n; ++j) {
        for (int i = 0; i < n; ++i) col[i] = a[static_cast<std::size_t>(i) * n + j];
        fft_radix2(col, sign);
        for (int i = 0; i < n; ++i) a[static_cast<std::size_t>(i) * n + j] = col[i];
    }
}

} // namespace

std::vector<double> solve_poisson_spectral(std::span<const double> omega, int n, double L)
{
    if (n <= 0 || (n & (n - 1)) != 0)
        throw std::invalid_argument("solve_poisson_spectral: grid must be a power of two");
    if (omega.size() != static_cast<std::size_t>(n) * n)
        throw std::invalid_argument("solve_poisson_spectral: field size mismatch");

    std::vector<std::complex<double>> a(omega.size());
    for (std::size_t i = 0; i < omega.size(); ++i) a[i] = omega[i];
    fft2d(a, n, -1);

    const double dk = 2.0 * std::numbers::pi / L;
    auto wavenumber = [&](int idx) {
        const int m = idx <= n / 2 ? idx : idx - n;
        return dk * m;
    };
    for (int i = 0; i < n; ++i) {
        const double ky = wavenumber(i);
        for (int j = 0; j < n; ++j) {
            const double kx = wavenumber(j);
            const double k2 = kx * kx + ky * ky;
            auto& v = a[static_cast<std::size_t>(i) * n + j];
            v = k2 > 0.0 ? v / k2 : 0.0; // psi_hat = omega_hat / k^2, zero mode -> 0
        }
    }

    fft2d(a, n, +1);
    std::vector<double> psi(omega.size());
    for (std::size_t i = 0; i < psi.size(); ++i) psi[i] = a[i].real();
    return psi;
}

} // namespace fshnn
