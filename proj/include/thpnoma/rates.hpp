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

#ifndef THPNOMA_RATES_HPP
#define THPNOMA_RATES_HPP

#include "thpnoma/linalg.hpp"

namespace thpnoma
{

// All rates are in bits per channel use (base-2 logs). Cluster indexing is
// zero-based and follows the precoding order.

// Strong-user rate of its own layer after SIC: log2(1 + p1*|h^H w|^2 / nv).
double strong_rate(const CVec &h_k1, const CVec &w_k, double p_k1, double noise_var);

// Inter/intra-cluster interference seen by weak user k under sequential
// pre-subtraction. Earlier clusters (j < k) contribute only the residual
// left after the strong channel of cluster k has absorbed them; later
// clusters contribute in full. cluster_power[j] = p_j1 + p_j2.
double exact_interference(int k, const std::vector<CVec> &strong_channels,
                          const std::vector<CVec> &weak_channels, const std::vector<CVec> &beams,
                          const RVec &p1, const RVec &cluster_power);

enum class WeakBranch
{
    strong_side, // decodability of the weak layer at the strong user binds
    weak_side    // the weak user's own channel binds
};

struct WeakRate
{
    double rate = 0.0;
    WeakBranch binding = WeakBranch::weak_side;
};

// Weak-layer rate: the minimum of the strong-side and weak-side SINRs of the
// shared layer, given the interference power seen by the weak user.
WeakRate weak_rate(const CVec &h_k1, const CVec &h_k2, const CVec &w_k, double p_k1, double p_k2,
                   double interference, double noise_var);

// Interference estimate used while cluster k is being designed: earlier
// clusters keep their final beams, later clusters are represented by fixed
// stand-in beams, and every other cluster spends the uniform budget P/N_c.
double greedy_interference(int k, const CVec &h_k1, const CVec &h_k2,
                           const std::vector<CVec> &beams_before, const std::vector<CVec> &beams_after,
                           const CVec &w_k, double p_k1, double total_power, int n_clusters);

// Upper bound on exact_interference: each residual term of an earlier
// cluster is replaced by its Cauchy-Schwarz envelope through the rank-two
// cluster Gram matrix Pi_k = h_k1 h_k1^H + h_k2 h_k2^H.
double interference_upper_bound(int k, const std::vector<CVec> &strong_channels,
                                const std::vector<CVec> &weak_channels, const std::vector<CVec> &beams,
                                const RVec &p1, const RVec &cluster_power);

// Nominal per-cluster strong SNR used to anchor the strong-user constraint:
// (P/N_c) * ||proj of h_k1 onto the complement of earlier strong channels||^2 / nv.
double nominal_strong_snr(const CVec &h_k1, const CMat &earlier_strong, double total_power,
                          int n_clusters, double noise_var);

} // namespace thpnoma

#endif
