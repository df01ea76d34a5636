// SPDX-License-Identifier: Apache-2.0
//
// thpnoma - Tomlinson-Harashima precoded multi-user MISO NOMA downlink toolkit
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "thpnoma/thp.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace thpnoma
{

Constellation make_qam(int order)
{
    if (order != 4 && order != 16 && order != 64)
        throw std::invalid_argument("Error: make_qam supports orders 4, 16 and 64");

    int side = static_cast<int>(std::lround(std::sqrt(static_cast<double>(order))));

    // Odd-integer grid {-(side-1), ..., -1, 1, ..., side-1} * delta per axis.
    // Unit average energy: E|d|^2 = 2 * delta^2 * (side^2 - 1) / 3 = 1.
    double delta = std::sqrt(3.0 / (2.0 * (static_cast<double>(order) - 1.0)));

    Constellation c;
    c.order = order;
    c.half_spacing = delta;
    c.mod_factor = 2.0 * side * delta; // box edge one half-spacing beyond the corner points
    c.points.reserve(static_cast<size_t>(order));
    for (int q = 0; q < side; ++q)
        for (int i = 0; i < side; ++i)
        {
            double re = (2 * i - side + 1) * delta;
            double im = (2 * q - side + 1) * delta;
            c.points.emplace_back(re, im);
        }
    return c;
}

static void fold_axis(double x, double A, double &out, long &shift)
{
    double n = std::floor(x / A + 0.5);
    shift = -static_cast<long>(n);
    // fma keeps the fold single-rounded, so unfolding recovers the input to
    // an ulp; the edge corrections below are exact by Sterbenz.
    out = std::fma(-n, A, x);
    if (out >= A / 2.0)
    {
        out -= A;
        shift -= 1;
    }
    else if (out < -A / 2.0)
    {
        out += A;
        shift += 1;
    }
}

ModuloResidue mods(std::complex<double> x, double A)
{
    if (!(A > 0.0))
        throw std::invalid_argument("Error: mods requires a positive modulo factor");
    ModuloResidue r;
    double re = 0.0, im = 0.0;
    fold_axis(x.real(), A, re, r.shift_re);
    fold_axis(x.imag(), A, im, r.shift_im);
    r.value = {re, im};
    return r;
}

double modulo_factor(double p1, double p2, const Constellation &c)
{
    if (p1 < 0.0 || p2 < 0.0)
        throw std::invalid_argument("Error: modulo_factor requires nonnegative powers");
    return (std::sqrt(p1) + std::sqrt(p2)) * c.mod_factor;
}

std::vector<std::complex<double>> thp_encode(const std::vector<std::complex<double>> &cluster_symbols,
                                             const std::vector<CVec> &beams,
                                             const std::vector<CVec> &strong_channels, double B)
{
    size_t n = cluster_symbols.size();
    if (beams.size() != n || strong_channels.size() != n)
        throw std::invalid_argument("Error: thp_encode requires matching symbol/beam/channel counts");
    if (!(B > 0.0))
        throw std::invalid_argument("Error: thp_encode requires a positive modulo factor");

    std::vector<std::complex<double>> gain(n);
    for (size_t k = 0; k < n; ++k)
    {
        gain[k] = strong_channels[k].dot(beams[k]); // h_k1^H w_k
        if (std::abs(gain[k]) < 1e-10)
            throw std::runtime_error("Error: thp_encode found a degenerate effective gain");
        for (size_t j = k + 1; j < n; ++j)
        {
            // Beams of later clusters must be invisible to this strong user.
            if (std::abs(strong_channels[k].dot(beams[j])) > 1e-8)
                throw std::runtime_error("Error: thp_encode beams violate the sequential null constraint");
        }
    }

    std::vector<std::complex<double>> enc(n);
    for (size_t k = 0; k < n; ++k)
    {
        if (k == 0)
        {
            enc[0] = cluster_symbols[0];
            continue;
        }
        std::complex<double> acc = cluster_symbols[k];
        for (size_t j = 0; j < k; ++j)
            acc -= strong_channels[k].dot(beams[j]) / gain[k] * enc[j];
        enc[k] = mods(acc, B).value;
    }
    return enc;
}

// Squared distance on the modulo torus of width B.
static double torus_dist2(std::complex<double> a, std::complex<double> b, double B)
{
    std::complex<double> d = mods(a - b, B).value;
    return std::norm(d);
}

StrongDecodeResult receive_strong(std::complex<double> y, std::complex<double> gain, double p1,
                                  double p2, const Constellation &c, double B)
{
    if (std::abs(gain) < 1e-10)
        throw std::invalid_argument("Error: receive_strong requires a nonzero gain");

    std::complex<double> z = mods(y / gain, B).value;
    double s1 = std::sqrt(p1), s2 = std::sqrt(p2);
    int m = c.order;

    // Stage 1: joint search over the superposed centroids, keeping the d2
    // hypothesis of the nearest pair. An exact (within rounding) distance tie
    // between different d2 values is reported instead of resolved, so the
    // runner-up is searched over the other d2 hypotheses only.
    double best = std::numeric_limits<double>::infinity();
    int best_d2 = -1;
    for (int j = 0; j < m; ++j)
        for (int i = 0; i < m; ++i)
        {
            std::complex<double> cent = s1 * c.points[static_cast<size_t>(i)] + s2 * c.points[static_cast<size_t>(j)];
            double d2 = torus_dist2(z, cent, B);
            if (d2 < best)
            {
                best = d2;
                best_d2 = j;
            }
        }
    double best_other = std::numeric_limits<double>::infinity();
    for (int j = 0; j < m; ++j)
    {
        if (j == best_d2)
            continue;
        for (int i = 0; i < m; ++i)
        {
            std::complex<double> cent = s1 * c.points[static_cast<size_t>(i)] + s2 * c.points[static_cast<size_t>(j)];
            best_other = std::min(best_other, torus_dist2(z, cent, B));
        }
    }

    StrongDecodeResult r;
    double tie_tol = 1e-18 * B * B;
    if (m > 1 && best_other - best <= tie_tol)
    {
        r.status = DecodeStatus::tie;
        return r;
    }
    r.d2_index = best_d2;

    // Stage 2: subtract the decoded weak layer, fold, decode the strong layer.
    std::complex<double> z1 = mods(z - s2 * c.points[static_cast<size_t>(best_d2)], B).value;
    double best1 = std::numeric_limits<double>::infinity();
    int best_d1 = -1;
    for (int i = 0; i < m; ++i)
    {
        double d2 = torus_dist2(z1, s1 * c.points[static_cast<size_t>(i)], B);
        if (d2 < best1)
        {
            best1 = d2;
            best_d1 = i;
        }
    }
    r.d1_index = best_d1;
    return r;
}

WeakDecodeResult receive_weak(std::complex<double> y, std::complex<double> gain, double p2,
                              const Constellation &c, double B)
{
    if (!(p2 > 0.0))
        throw std::invalid_argument("Error: receive_weak requires p2 > 0");
    if (std::abs(gain) < 1e-10)
        throw std::invalid_argument("Error: receive_weak requires a nonzero gain");

    std::complex<double> z = mods(y / gain, B).value;
    double s2 = std::sqrt(p2);
    WeakDecodeResult r;
    double best = std::numeric_limits<double>::infinity();
    double second = std::numeric_limits<double>::infinity();
    for (int j = 0; j < c.order; ++j)
    {
        double d2 = torus_dist2(z, s2 * c.points[static_cast<size_t>(j)], B);
        if (d2 < best)
        {
            second = best;
            best = d2;
            r.d2_index = j;
        }
        else if (d2 < second)
        {
            second = d2;
        }
    }
    if (c.order > 1 && second - best <= 1e-18 * B * B)
        r.status = DecodeStatus::tie;
    return r;
}

} // namespace thpnoma
