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

#include "thpnoma/rates.hpp"

#include <cmath>
#include <stdexcept>

namespace thpnoma
{

static double log2_1p(double x)
{
    return std::log1p(x) / std::log(2.0);
}

double strong_rate(const CVec &h_k1, const CVec &w_k, double p_k1, double noise_var)
{
    if (p_k1 < 0.0 || !(noise_var > 0.0))
        throw std::invalid_argument("Error: strong_rate requires p_k1 >= 0 and noise_var > 0");
    double g = std::norm(h_k1.dot(w_k));
    return log2_1p(p_k1 * g / noise_var);
}

double exact_interference(int k, const std::vector<CVec> &strong_channels,
                          const std::vector<CVec> &weak_channels, const std::vector<CVec> &beams,
                          const RVec &p1, const RVec &cluster_power)
{
    size_t n = beams.size();
    if (strong_channels.size() != n || weak_channels.size() != n ||
        static_cast<size_t>(p1.size()) != n || static_cast<size_t>(cluster_power.size()) != n)
        throw std::invalid_argument("Error: exact_interference dimension mismatch");
    if (k < 0 || static_cast<size_t>(k) >= n)
        throw std::invalid_argument("Error: exact_interference cluster index out of range");

    const CVec &g = weak_channels[static_cast<size_t>(k)];
    const CVec &h = strong_channels[static_cast<size_t>(k)];
    const CVec &wk = beams[static_cast<size_t>(k)];

    std::complex<double> gain_w = g.dot(wk); // h_k2^H w_k
    std::complex<double> gain_s = h.dot(wk); // h_k1^H w_k
    if (std::abs(gain_s) < 1e-14)
        throw std::runtime_error("Error: exact_interference found a vanishing strong gain");
    std::complex<double> ratio = gain_w / gain_s;

    double acc = p1(k) * std::norm(gain_w); // intra-cluster strong layer

    for (size_t j = 0; j < n; ++j)
    {
        if (static_cast<int>(j) == k)
            continue;
        if (static_cast<int>(j) < k)
        {
            // Residual after the pre-subtraction that cluster k's encoder
            // applied through its strong channel.
            std::complex<double> res = g.dot(beams[j]) - ratio * h.dot(beams[j]);
            acc += cluster_power(static_cast<Eigen::Index>(j)) * std::norm(res);
        }
        else
        {
            acc += cluster_power(static_cast<Eigen::Index>(j)) * std::norm(g.dot(beams[j]));
        }
    }
    return acc;
}

WeakRate weak_rate(const CVec &h_k1, const CVec &h_k2, const CVec &w_k, double p_k1, double p_k2,
                   double interference, double noise_var)
{
    if (p_k1 < 0.0 || p_k2 < 0.0 || interference < 0.0 || !(noise_var > 0.0))
        throw std::invalid_argument("Error: weak_rate requires nonnegative powers/interference");

    double g1 = std::norm(h_k1.dot(w_k));
    double g2 = std::norm(h_k2.dot(w_k));

    double sinr_strong_side = p_k2 * g1 / (p_k1 * g1 + noise_var);
    double sinr_weak_side = p_k2 * g2 / (interference + noise_var);

    WeakRate r;
    if (sinr_strong_side <= sinr_weak_side)
    {
        r.binding = WeakBranch::strong_side;
        r.rate = log2_1p(sinr_strong_side);
    }
    else
    {
        r.binding = WeakBranch::weak_side;
        r.rate = log2_1p(sinr_weak_side);
    }
    return r;
}

double greedy_interference(int k, const CVec &h_k1, const CVec &h_k2,
                           const std::vector<CVec> &beams_before, const std::vector<CVec> &beams_after,
                           const CVec &w_k, double p_k1, double total_power, int n_clusters)
{
    if (static_cast<int>(beams_before.size()) != k)
        throw std::invalid_argument("Error: greedy_interference expects k earlier beams");
    if (static_cast<int>(beams_before.size() + beams_after.size()) + 1 != n_clusters)
        throw std::invalid_argument("Error: greedy_interference beam count mismatch");

    double pj = total_power / n_clusters;

    std::complex<double> gain_w = h_k2.dot(w_k);
    std::complex<double> gain_s = h_k1.dot(w_k);
    if (std::abs(gain_s) < 1e-14)
        throw std::runtime_error("Error: greedy_interference found a vanishing strong gain");
    std::complex<double> ratio = gain_w / gain_s;

    double acc = p_k1 * std::norm(gain_w);
    for (const CVec &wj : beams_before)
    {
        std::complex<double> res = h_k2.dot(wj) - ratio * h_k1.dot(wj);
        acc += pj * std::norm(res);
    }
    for (const CVec &wj : beams_after)
        acc += pj * std::norm(h_k2.dot(wj));
    return acc;
}

double interference_upper_bound(int k, const std::vector<CVec> &strong_channels,
                                const std::vector<CVec> &weak_channels, const std::vector<CVec> &beams,
                                const RVec &p1, const RVec &cluster_power)
{
    size_t n = beams.size();
    if (k < 0 || static_cast<size_t>(k) >= n)
        throw std::invalid_argument("Error: interference_upper_bound cluster index out of range");

    const CVec &g = weak_channels[static_cast<size_t>(k)];
    const CVec &h = strong_channels[static_cast<size_t>(k)];
    const CVec &wk = beams[static_cast<size_t>(k)];

    double gain_s2 = std::norm(h.dot(wk));
    if (gain_s2 < 1e-28)
        throw std::runtime_error("Error: interference_upper_bound found a vanishing strong gain");

    // w^H Pi_k w with Pi_k = h_k1 h_k1^H + h_k2 h_k2^H.
    auto quad_pi = [&](const CVec &w) { return std::norm(h.dot(w)) + std::norm(g.dot(w)); };

    double acc = p1(k) * std::norm(g.dot(wk));
    double qk = quad_pi(wk);
    for (size_t j = 0; j < n; ++j)
    {
        if (static_cast<int>(j) == k)
            continue;
        if (static_cast<int>(j) < k)
            acc += cluster_power(static_cast<Eigen::Index>(j)) * qk * quad_pi(beams[j]) / gain_s2;
        else
            acc += cluster_power(static_cast<Eigen::Index>(j)) * std::norm(g.dot(beams[j]));
    }
    return acc;
}

double nominal_strong_snr(const CVec &h_k1, const CMat &earlier_strong, double total_power,
                          int n_clusters, double noise_var)
{
    if (!(total_power > 0.0) || n_clusters < 1 || !(noise_var > 0.0))
        throw std::invalid_argument("Error: nominal_strong_snr invalid scalars");
    CVec res = proj_complement(earlier_strong, h_k1);
    return (total_power / n_clusters) * res.squaredNorm() / noise_var;
}

} // namespace thpnoma
