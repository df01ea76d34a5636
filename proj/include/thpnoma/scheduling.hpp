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

#ifndef THPNOMA_SCHEDULING_HPP
#define THPNOMA_SCHEDULING_HPP

#include "thpnoma/channel.hpp"
#include "thpnoma/sca.hpp"

#include <functional>
#include <optional>
#include <utility>
#include <vector>

namespace thpnoma
{

// Greedy semi-orthogonal selection of n_clusters strong users. The first
// pick maximizes the channel norm; each later pick maximizes the norm of the
// channel component orthogonal to the span of the already selected ones.
// Ties go to the lowest candidate index. When min_projected_fraction is set,
// a candidate is skipped unless its orthogonal component retains at least
// that fraction of its norm; selection fails with std::runtime_error if the
// filter leaves fewer than n_clusters candidates.
std::vector<int> sus_select(const std::vector<CVec> &strong_set, int n_clusters,
                            std::optional<double> min_projected_fraction = std::nullopt);

// Stand-in beams used before the real ones exist: the normalized projection
// of each strong channel onto the orthogonal complement of the earlier
// strong channels. Throws std::runtime_error if a projection vanishes.
std::vector<CVec> matched_filter_estimates(const std::vector<CVec> &strong_channels);

// Interference a weak-user candidate g_u would see in cluster slot k while
// scheduling is still in progress: designed beams for j < k contribute the
// residual after absorption through h_k1, the stand-in estimates for j > k
// contribute in full, and the candidate's own cluster leaks its strong layer
// through the stand-in beam estimates[k]. cluster_power[j] = p_j1 + p_j2 for
// j != k. Throws std::runtime_error when h_k1^H estimates[k] vanishes.
double estimate_ici(const CVec &g_u, int k, const CVec &h_k1, const std::vector<CVec> &beams_before,
                    const std::vector<CVec> &estimates, double p_k1_hat,
                    const RVec &cluster_power);

// Scheduling decisions kept for inspection: per cluster, the rate estimate
// of every weak candidate still available, the winning candidate, and the
// stand-in beams in force (entries for slots k and later).
struct SchedulerTrace
{
    struct ClusterDecision
    {
        std::vector<std::pair<int, double>> candidate_rates;
        int selected = -1;
        std::vector<CVec> estimates;
    };

    std::vector<ClusterDecision> clusters;
};

// Full scheduling output: who was paired, the per-cluster greedy design that
// drove the pairing, and the decision trace.
struct ScheduleResult
{
    ClusterAssignment assignment;
    BeamPowerSolution initial;
    SchedulerTrace trace;
};

// Pluggable per-cluster design step, matching solve_greedy_cluster's shape.
using ClusterDesigner = std::function<GreedyClusterResult(
    const std::vector<CVec> &strong_channels, int k, const CVec &h_k2,
    const std::vector<CVec> &beams_before, const std::vector<CVec> &estimates_after,
    const SystemConfig &cfg)>;

// The standard designer: the greedy convex per-cluster solve.
ClusterDesigner default_cluster_designer(const ScaConfig &sca = {});

// Build the cluster assignment for one slot: select strong users, then walk
// the clusters in order, picking for each the weak candidate with the best
// rate estimate and designing the cluster's beam and power split. Weak users
// are never reused. Designer failures are rethrown with the cluster index
// prepended to the message.
ScheduleResult schedule(const UserPopulation &pop, const SystemConfig &cfg,
                        const ClusterDesigner &designer);

ScheduleResult schedule(const UserPopulation &pop, const SystemConfig &cfg);

} // namespace thpnoma

#endif
