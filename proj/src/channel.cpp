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

#include "thpnoma/channel.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace thpnoma
{

void SystemConfig::validate() const
{
    if (n_tx < 1)
        throw std::invalid_argument("Error: n_tx must be >= 1");
    if (n_clusters < 1 || n_clusters > n_tx)
        throw std::invalid_argument("Error: n_clusters must be in [1, n_tx]");
    if (!(total_power > 0.0))
        throw std::invalid_argument("Error: total_power must be positive");
    if (!(noise_var > 0.0))
        throw std::invalid_argument("Error: noise_var must be positive");
    if (!(eta > 0.0) || eta > 1.0)
        throw std::invalid_argument("Error: eta must be in (0, 1]");
    if (!(strong_var > 0.0) || !(weak_var > 0.0))
        throw std::invalid_argument("Error: channel variances must be positive");
    if (strong_var <= weak_var)
        throw std::invalid_argument("Error: strong_var must exceed weak_var");
    if (pop_per_set < 1)
        throw std::invalid_argument("Error: pop_per_set must be >= 1");
}

double GaussianSampler::standard_normal()
{
    if (have_spare)
    {
        have_spare = false;
        return spare;
    }
    // Uniform draws on (0,1) from the top 53 bits of the engine output.
    double u1 = 0.0;
    do
    {
        u1 = static_cast<double>(eng() >> 11) * 0x1.0p-53;
    } while (u1 <= 0.0);
    double u2 = static_cast<double>(eng() >> 11) * 0x1.0p-53;

    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 2.0 * std::numbers::pi * u2;
    spare = r * std::sin(a);
    have_spare = true;
    return r * std::cos(a);
}

std::complex<double> GaussianSampler::complex_normal(double var)
{
    double s = std::sqrt(var / 2.0);
    return {s * standard_normal(), s * standard_normal()};
}

CVec GaussianSampler::complex_normal_vec(Eigen::Index n, double var)
{
    CVec v(n);
    for (Eigen::Index i = 0; i < n; ++i)
        v(i) = complex_normal(var);
    return v;
}

UserPopulation generate_population(const SystemConfig &cfg, uint64_t seed)
{
    cfg.validate();
    GaussianSampler rng(seed);
    UserPopulation pop;
    pop.strong.reserve(static_cast<size_t>(cfg.pop_per_set));
    pop.weak.reserve(static_cast<size_t>(cfg.pop_per_set));
    for (int u = 0; u < cfg.pop_per_set; ++u)
        pop.strong.push_back(rng.complex_normal_vec(cfg.n_tx, cfg.strong_var));
    for (int u = 0; u < cfg.pop_per_set; ++u)
        pop.weak.push_back(rng.complex_normal_vec(cfg.n_tx, cfg.weak_var));
    return pop;
}

} // namespace thpnoma
