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

#include "thpnoma/scheduling.hpp"

#include "thpnoma/rates.hpp"

#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace thpnoma
{

namespace
{

std::string with_cluster(int k, const char *what)
{
    std::string body(what);
    const std::string prefix = "Error: ";
    if (body.rfind(prefix, 0) == 0)
        body.erase(0, prefix.size());
    return "Error: cluster " + std::to_string(k) + ": " + body;
}

} // namespace

std::vector<int> sus_select(const std::vector<CVec> &strong_set, int n_clusters,
                            std::optional<double> min_projected_fraction)
{
    if (n_clusters < 1)
        throw std::invalid_argument("Error: at least one cluster is required");
    if (static_cast<int>(strong_set.size()) < n_clusters)
        throw std::invalid_argument("Error: fewer strong candidates than clusters");
    Eigen::Index nt = strong_set[0].size();
    for (const CVec &h : strong_set)
        if (h.size() != nt)
            throw std::invalid_argument("Error: strong candidates have mixed lengths");

    std::vector<int> picked;
    picked.reserve(static_cast<size_t>(n_clusters));
    std::vector<char> used(strong_set.size(), 0);
    std::vector<CVec> span;
    for (int t = 0; t < n_clusters; ++t)
    {
        CMat basis = stack_columns(span, nt);
        int best = -1;
        double best_metric = -1.0;
        for (size_t u = 0; u < strong_set.size(); ++u)
        {
            if (used[u])
                continue;
            double m = proj_complement(basis, strong_set[u]).squaredNorm();
            if (min_projected_fraction && t > 0)
            {
                double frac = m / strong_set[u].squaredNorm();
                if (frac < *min_projected_fraction)
                    continue;
            }
            // Strict comparison: exactly tied metrics keep the lowest index.
            if (m > best_metric)
            {
                best_metric = m;
                best = static_cast<int>(u);
            }
        }
        if (best < 0)
            throw std::runtime_error("Error: the semi-orthogonality filter left no candidate for slot " +
                                     std::to_string(t));
        picked.push_back(best);
        used[static_cast<size_t>(best)] = 1;
        span.push_back(strong_set[static_cast<size_t>(best)]);
    }
    return picked;
}

std::vector<CVec> matched_filter_estimates(const std::vector<CVec> &strong_channels)
{
    std::vector<CVec> out;
    out.reserve(strong_channels.size());
    if (strong_channels.empty())
        return out;
    Eigen::Index nt = strong_channels[0].size();
    std::vector<CVec> earlier;
    for (size_t k = 0; k < strong_channels.size(); ++k)
    {
        if (strong_channels[k].size() != nt)
            throw std::invalid_argument("Error: strong channels have mixed lengths");
        CVec r = proj_complement(stack_columns(earlier, nt), strong_channels[k]);
        double rn = r.norm();
        if (rn < 1e-14)
            throw std::runtime_error("Error: strong channel " + std::to_string(k) +
                                     " lies in the span of earlier ones, no stand-in beam exists");
        out.push_back(r / rn);
        earlier.push_back(strong_channels[k]);
    }
    return out;
}

double estimate_ici(const CVec &g_u, int k, const CVec &h_k1, const std::vector<CVec> &beams_before,
                    const std::vector<CVec> &estimates, double p_k1_hat, const RVec &cluster_power)
{
    int nc = static_cast<int>(estimates.size());
    if (cluster_power.size() != nc)
        throw std::invalid_argument("Error: cluster power vector disagrees with the stand-in list");
    if (k < 0 || k >= nc)
        throw std::invalid_argument("Error: cluster index out of range");
    if (static_cast<int>(beams_before.size()) != k)
        throw std::invalid_argument("Error: expected one designed beam per earlier cluster");
    if (!(p_k1_hat >= 0.0))
        throw std::invalid_argument("Error: strong layer power estimate must be nonnegative");

    const CVec &wk = estimates[static_cast<size_t>(k)];
    std::complex<double> gain_s = h_k1.dot(wk);
    if (std::abs(gain_s) < 1e-14)
        throw std::runtime_error("Error: the stand-in beam is silent at the strong user of cluster " +
                                 std::to_string(k));
    std::complex<double> gain_w = g_u.dot(wk);
    std::complex<double> ratio = gain_w / gain_s;

    double acc = p_k1_hat * std::norm(gain_w);
    for (int j = 0; j < k; ++j)
    {
        const CVec &wj = beams_before[static_cast<size_t>(j)];
        std::complex<double> res = g_u.dot(wj) - ratio * h_k1.dot(wj);
        acc += cluster_power(j) * std::norm(res);
    }
    for (int j = k + 1; j < nc; ++j)
        acc += cluster_power(j) * std::norm(g_u.dot(estimates[static_cast<size_t>(j)]));
    return acc;
}

ClusterDesigner default_cluster_designer(const ScaConfig &sca)
{
    return [sca](const std::vector<CVec> &strong_channels, int k, const CVec &h_k2,
                 const std::vector<CVec> &beams_before, const std::vector<CVec> &estimates_after,
                 const SystemConfig &cfg) {
        return solve_greedy_cluster(strong_channels, k, h_k2, beams_before, estimates_after, cfg,
                                    sca);
    };
}

ScheduleResult schedule(const UserPopulation &pop, const SystemConfig &cfg,
                        const ClusterDesigner &designer)
{
    cfg.validate();
    int nc = cfg.n_clusters;
    if (static_cast<int>(pop.strong.size()) < nc)
        throw std::invalid_argument("Error: fewer strong candidates than clusters");
    if (static_cast<int>(pop.weak.size()) < nc)
        throw std::invalid_argument("Error: fewer weak candidates than clusters");
    for (const CVec &h : pop.weak)
        if (h.size() != cfg.n_tx)
            throw std::invalid_argument("Error: weak candidate length disagrees with n_tx");

    std::vector<int> sel = sus_select(pop.strong, nc);
    std::vector<CVec> strongs;
    strongs.reserve(static_cast<size_t>(nc));
    for (int id : sel)
        strongs.push_back(pop.strong[static_cast<size_t>(id)]);
    std::vector<CVec> estimates = matched_filter_estimates(strongs);

    double share = cfg.total_power / nc;
    double p1_hat = cfg.eta * share;
    double p2_hat = (1.0 - cfg.eta) * share;
    RVec cluster_power = RVec::Constant(nc, share);

    ScheduleResult out;
    out.assignment.clusters.resize(static_cast<size_t>(nc));
    std::vector<CVec> beams;
    beams.reserve(static_cast<size_t>(nc));
    RVec p1(nc), p2(nc);
    std::vector<char> weak_used(pop.weak.size(), 0);
    int iter_sum = 0;

    for (int k = 0; k < nc; ++k)
    {
        SchedulerTrace::ClusterDecision dec;
        int best = -1;
        double best_rate = -std::numeric_limits<double>::infinity();
        for (size_t u = 0; u < pop.weak.size(); ++u)
        {
            if (weak_used[u])
                continue;
            double ici = estimate_ici(pop.weak[u], k, strongs[static_cast<size_t>(k)], beams,
                                      estimates, p1_hat, cluster_power);
            WeakRate wr = weak_rate(strongs[static_cast<size_t>(k)], pop.weak[u],
                                    estimates[static_cast<size_t>(k)], p1_hat, p2_hat, ici,
                                    cfg.noise_var);
            dec.candidate_rates.emplace_back(static_cast<int>(u), wr.rate);
            // Strict comparison: exactly tied estimates keep the lowest index.
            if (wr.rate > best_rate)
            {
                best_rate = wr.rate;
                best = static_cast<int>(u);
            }
        }
        if (best < 0)
            throw std::runtime_error("Error: no weak candidate left for cluster " +
                                     std::to_string(k));
        weak_used[static_cast<size_t>(best)] = 1;
        dec.selected = best;
        dec.estimates.assign(estimates.begin() + k, estimates.end());
        out.trace.clusters.push_back(std::move(dec));

        Cluster &cl = out.assignment.clusters[static_cast<size_t>(k)];
        cl.h1 = strongs[static_cast<size_t>(k)];
        cl.h2 = pop.weak[static_cast<size_t>(best)];
        cl.strong_id = sel[static_cast<size_t>(k)];
        cl.weak_id = best;

        std::vector<CVec> est_after(estimates.begin() + k + 1, estimates.end());
        GreedyClusterResult g;
        try
        {
            g = designer(strongs, k, cl.h2, beams, est_after, cfg);
        }
        catch (const ScaInfeasibleError &e)
        {
            throw ScaInfeasibleError(e.iteration, e.required_power, e.budget,
                                     with_cluster(k, e.what()));
        }
        catch (const ScaSubproblemError &e)
        {
            throw ScaSubproblemError(e.iteration, e.status, with_cluster(k, e.what()));
        }
        catch (const DegenerateInitError &e)
        {
            throw DegenerateInitError(with_cluster(k, e.what()));
        }
        catch (const std::invalid_argument &e)
        {
            throw std::invalid_argument(with_cluster(k, e.what()));
        }
        catch (const std::runtime_error &e)
        {
            throw std::runtime_error(with_cluster(k, e.what()));
        }

        beams.push_back(g.w);
        p1(k) = g.p1;
        p2(k) = g.p2;
        iter_sum += g.iterations;
    }

    // The greedy per-cluster rates were computed against stand-in beams for
    // clusters that did not exist yet; re-evaluate every cluster under the
    // final beam set so the reported operating point is self-consistent.
    std::vector<CVec> weaks;
    weaks.reserve(static_cast<size_t>(nc));
    for (int k = 0; k < nc; ++k)
        weaks.push_back(out.assignment.clusters[static_cast<size_t>(k)].h2);
    RVec tot = p1 + p2;
    BeamPowerSolution init;
    init.beams = beams;
    init.p1 = p1;
    init.p2 = p2;
    init.rate2 = RVec(nc);
    init.rate2_exact = RVec(nc);
    for (int k = 0; k < nc; ++k)
    {
        double ib = interference_upper_bound(k, strongs, weaks, beams, p1, tot);
        init.rate2(k) = weak_rate(strongs[static_cast<size_t>(k)], weaks[static_cast<size_t>(k)],
                                  beams[static_cast<size_t>(k)], p1(k), p2(k), ib, cfg.noise_var)
                            .rate;
        double ie = exact_interference(k, strongs, weaks, beams, p1, tot);
        init.rate2_exact(k) =
            weak_rate(strongs[static_cast<size_t>(k)], weaks[static_cast<size_t>(k)],
                      beams[static_cast<size_t>(k)], p1(k), p2(k), ie, cfg.noise_var)
                .rate;
    }
    init.objective = init.rate2.sum();
    init.iterations = iter_sum;
    init.history = {init.objective};
    out.initial = std::move(init);
    return out;
}

ScheduleResult schedule(const UserPopulation &pop, const SystemConfig &cfg)
{
    return schedule(pop, cfg, default_cluster_designer());
}

} // namespace thpnoma
