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
#include "thpnoma/linalg.hpp"
#include "thpnoma/rates.hpp"
#include "thpnoma/scheduling.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <set>

using namespace thpnoma;
using cplx = std::complex<double>;

namespace
{

CVec unit(int n, int k)
{
    CVec v = CVec::Zero(n);
    v(k) = 1.0;
    return v;
}

// Stand-in design step that skips the convex solve: the projected matched
// filter with the uniform eta split. Keeps scheduling tests deterministic
// and focused on the selection logic.
GreedyClusterResult stub_design(const std::vector<CVec> &strong_channels, int k, const CVec &,
                                const std::vector<CVec> &, const std::vector<CVec> &,
                                const SystemConfig &cfg)
{
    std::vector<CVec> earlier(strong_channels.begin(), strong_channels.begin() + k);
    CVec r = proj_complement(stack_columns(earlier, strong_channels[0].size()),
                             strong_channels[static_cast<size_t>(k)]);
    GreedyClusterResult g;
    g.w = r / r.norm();
    double share = cfg.total_power / cfg.n_clusters;
    g.p1 = cfg.eta * share;
    g.p2 = (1.0 - cfg.eta) * share;
    g.rate2 = 0.0;
    g.iterations = 1;
    g.history = {0.0};
    return g;
}

} // namespace

TEST_CASE("selection takes the largest channel first and the most orthogonal next")
{
    std::vector<CVec> set = {3.0 * unit(3, 1), 2.0 * unit(3, 0), 1.0 * unit(3, 0)};
    std::vector<int> sel = sus_select(set, 2);
    REQUIRE(sel == std::vector<int>{0, 1});

    // a single slot picks the largest norm outright
    REQUIRE(sus_select(set, 1) == std::vector<int>{0});
}

TEST_CASE("selection ties settle on the lowest candidate index")
{
    CVec h = unit(2, 0) + 2.0 * unit(2, 1);
    std::vector<CVec> set = {h, h, unit(2, 0)};
    // candidates 0 and 1 tie exactly for the first slot; the second slot
    // rejects the duplicate, whose orthogonal component is zero
    REQUIRE(sus_select(set, 2) == std::vector<int>{0, 2});
    REQUIRE(sus_select(set, 1) == std::vector<int>{0});
}

TEST_CASE("selection agrees with an explicit Gram-Schmidt reimplementation")
{
    SystemConfig cfg;
    cfg.n_tx = 3;
    cfg.n_clusters = 3;
    cfg.pop_per_set = 6;
    for (uint64_t seed = 300; seed < 320; ++seed)
    {
        UserPopulation pop = generate_population(cfg, seed);
        std::vector<int> got = sus_select(pop.strong, 3);

        // independent greedy: keep an explicit orthonormal basis and pick
        // the largest residual at every step
        std::vector<int> want;
        std::vector<CVec> basis;
        std::vector<char> used(pop.strong.size(), 0);
        for (int t = 0; t < 3; ++t)
        {
            int arg = -1;
            double bestm = -1.0;
            for (size_t u = 0; u < pop.strong.size(); ++u)
            {
                if (used[u])
                    continue;
                CVec r = pop.strong[u];
                for (const CVec &q : basis)
                    r -= q.dot(r) * q;
                double m = r.squaredNorm();
                if (m > bestm)
                {
                    bestm = m;
                    arg = static_cast<int>(u);
                }
            }
            want.push_back(arg);
            used[static_cast<size_t>(arg)] = 1;
            CVec r = pop.strong[static_cast<size_t>(arg)];
            for (const CVec &q : basis)
                r -= q.dot(r) * q;
            basis.push_back(r / r.norm());
        }
        INFO("seed " << seed);
        REQUIRE(got == want);

        // projected norms shrink along the selection order
        std::vector<CVec> chosen;
        double prev = std::numeric_limits<double>::infinity();
        for (int id : got)
        {
            double m = proj_complement(stack_columns(chosen, 3), pop.strong[static_cast<size_t>(id)])
                           .squaredNorm();
            REQUIRE(m <= prev + 1e-12);
            prev = m;
            chosen.push_back(pop.strong[static_cast<size_t>(id)]);
        }
    }
}

TEST_CASE("semi-orthogonality filter skips near-parallel candidates or fails loudly")
{
    CVec h = unit(2, 0);
    CVec almost = (unit(2, 0) + 0.05 * unit(2, 1)).normalized();
    std::vector<CVec> set = {2.0 * h, 1.9 * almost, 0.5 * unit(2, 1)};

    // unfiltered greedy keeps the nearly parallel runner-up out anyway here,
    // but with a small third candidate the filter changes nothing; force the
    // decision by dropping the orthogonal candidate
    std::vector<CVec> tight = {2.0 * h, 1.9 * almost};
    REQUIRE(sus_select(tight, 2) == std::vector<int>{0, 1});
    REQUIRE_THROWS_AS(sus_select(tight, 2, 0.5), std::runtime_error);
    REQUIRE(sus_select(set, 2, 0.5) == std::vector<int>{0, 2});
}

TEST_CASE("stand-in beams are the normalized projected strong channels")
{
    // orthogonal channels project onto themselves
    std::vector<CVec> ortho = {2.0 * unit(3, 0), 5.0 * unit(3, 2)};
    std::vector<CVec> est = matched_filter_estimates(ortho);
    REQUIRE((est[0] - unit(3, 0)).norm() <= 1e-14);
    REQUIRE((est[1] - unit(3, 2)).norm() <= 1e-14);

    // the slanted second channel keeps only its orthogonal part
    CVec h2(2);
    h2 << cplx(1.0, 0.0), cplx(1.0, 0.0);
    std::vector<CVec> pair = {unit(2, 0), h2 / std::sqrt(2.0)};
    est = matched_filter_estimates(pair);
    REQUIRE((est[1] - unit(2, 1)).norm() <= 1e-14);

    // a repeated channel has no orthogonal part left
    std::vector<CVec> bad = {unit(2, 0), 3.0 * unit(2, 0)};
    REQUIRE_THROWS_AS(matched_filter_estimates(bad), std::runtime_error);
}

TEST_CASE("interference estimate reproduces the constructed cases")
{
    SECTION("lone cluster sees only its own strong layer")
    {
        std::vector<CVec> est = {unit(2, 0)};
        RVec cp = RVec::Constant(1, 5.0);
        CVec g = 0.5 * unit(2, 0);
        REQUIRE(estimate_ici(g, 0, unit(2, 0), {}, est, 2.0, cp) ==
                Catch::Approx(2.0 * 0.25).epsilon(1e-14));
    }
    SECTION("first of two clusters hears the later stand-in in full")
    {
        std::vector<CVec> est = {unit(2, 0), unit(2, 1)};
        RVec cp = RVec::Constant(2, 5.0);
        CVec g = unit(2, 1);
        // own stand-in is orthogonal to g, the later one aligns with it
        REQUIRE(estimate_ici(g, 0, unit(2, 0), {}, est, 2.0, cp) ==
                Catch::Approx(5.0).epsilon(1e-14));
    }
    SECTION("last cluster absorbs earlier beams through its strong channel")
    {
        std::vector<CVec> est = {unit(2, 0), unit(2, 1)};
        std::vector<CVec> before = {unit(2, 0)};
        RVec cp = RVec::Constant(2, 5.0);
        CVec g = unit(2, 1);
        // the absorption ratio is exactly one here, so the earlier beam's
        // leak cancels and only the intra-cluster term remains
        REQUIRE(estimate_ici(g, 1, unit(2, 1), before, est, 2.0, cp) ==
                Catch::Approx(2.0).epsilon(1e-14));
    }
    SECTION("a silent stand-in at the strong user is rejected")
    {
        std::vector<CVec> est = {unit(2, 0)};
        RVec cp = RVec::Constant(1, 5.0);
        REQUIRE_THROWS_AS(estimate_ici(unit(2, 1), 0, unit(2, 1), {}, est, 2.0, cp),
                          std::runtime_error);
    }
}

TEST_CASE("interference estimate matches the exact model for the last cluster")
{
    SystemConfig cfg;
    cfg.n_tx = 4;
    cfg.n_clusters = 3;
    for (uint64_t seed = 500; seed < 510; ++seed)
    {
        UserPopulation pop = generate_population(cfg, seed);
        std::vector<CVec> strongs = {pop.strong[0], pop.strong[1], pop.strong[2]};
        std::vector<CVec> est = matched_filter_estimates(strongs);
        CVec g = pop.weak[0];

        double share = cfg.total_power / 3;
        double p1_hat = cfg.eta * share;
        RVec cluster_power = RVec::Constant(3, share);

        // for the last slot every other cluster already has its beam, so
        // the scheduling-time estimate is the exact interference of the
        // stand-in beam set
        std::vector<CVec> weaks = {pop.weak[1], pop.weak[2], g};
        RVec p1 = RVec::Constant(3, p1_hat);
        double want = exact_interference(2, strongs, weaks, est, p1, cluster_power);
        double got = estimate_ici(g, 2, strongs[2], {est[0], est[1]}, est, p1_hat, cluster_power);
        INFO("seed " << seed);
        REQUIRE(got == Catch::Approx(want).epsilon(1e-12));
    }
}

TEST_CASE("scheduling keeps the best rate estimate and never reuses a weak user")
{
    SystemConfig cfg;
    cfg.n_tx = 2;
    cfg.n_clusters = 1;
    cfg.pop_per_set = 5;
    UserPopulation pop = generate_population(cfg, 900);

    ScheduleResult res = schedule(pop, cfg, stub_design);
    REQUIRE(res.trace.clusters.size() == 1);
    const auto &dec = res.trace.clusters[0];
    REQUIRE(dec.candidate_rates.size() == 5);

    // recompute every candidate estimate through the public pieces
    std::vector<int> sel = sus_select(pop.strong, 1);
    std::vector<CVec> est = matched_filter_estimates({pop.strong[static_cast<size_t>(sel[0])]});
    double share = cfg.total_power;
    RVec cluster_power = RVec::Constant(1, share);
    int arg = -1;
    double bestr = -1.0;
    for (int u = 0; u < 5; ++u)
    {
        double ici = estimate_ici(pop.weak[static_cast<size_t>(u)], 0,
                                  pop.strong[static_cast<size_t>(sel[0])], {}, est,
                                  cfg.eta * share, cluster_power);
        double r = weak_rate(pop.strong[static_cast<size_t>(sel[0])],
                             pop.weak[static_cast<size_t>(u)], est[0], cfg.eta * share,
                             (1.0 - cfg.eta) * share, ici, cfg.noise_var)
                       .rate;
        REQUIRE(dec.candidate_rates[static_cast<size_t>(u)].first == u);
        REQUIRE(dec.candidate_rates[static_cast<size_t>(u)].second ==
                Catch::Approx(r).epsilon(1e-12));
        if (r > bestr)
        {
            bestr = r;
            arg = u;
        }
    }
    REQUIRE(dec.selected == arg);
    REQUIRE(res.assignment.clusters[0].weak_id == arg);
    REQUIRE(res.assignment.clusters[0].strong_id == sel[0]);
}

TEST_CASE("two-cluster scheduling walk is reproducible by hand")
{
    SystemConfig cfg;
    cfg.n_tx = 2;
    cfg.n_clusters = 2;
    cfg.pop_per_set = 4;
    UserPopulation pop = generate_population(cfg, 901);

    ScheduleResult res = schedule(pop, cfg, stub_design);
    REQUIRE(res.trace.clusters.size() == 2);
    REQUIRE(res.trace.clusters[0].candidate_rates.size() == 4);
    REQUIRE(res.trace.clusters[1].candidate_rates.size() == 3);
    REQUIRE(res.trace.clusters[0].estimates.size() == 2);
    REQUIRE(res.trace.clusters[1].estimates.size() == 1);

    // the winner of slot 0 must not reappear among slot 1 candidates
    int first = res.trace.clusters[0].selected;
    for (const auto &[u, r] : res.trace.clusters[1].candidate_rates)
        REQUIRE(u != first);
    REQUIRE(res.assignment.clusters[0].weak_id != res.assignment.clusters[1].weak_id);

    // replay the walk: selection order, stand-ins, and the stub design
    std::vector<int> sel = sus_select(pop.strong, 2);
    std::vector<CVec> strongs = {pop.strong[static_cast<size_t>(sel[0])],
                                 pop.strong[static_cast<size_t>(sel[1])]};
    std::vector<CVec> est = matched_filter_estimates(strongs);
    double share = cfg.total_power / 2;
    RVec cluster_power = RVec::Constant(2, share);
    std::vector<CVec> beams;
    std::set<int> used;
    for (int k = 0; k < 2; ++k)
    {
        int arg = -1;
        double bestr = -std::numeric_limits<double>::infinity();
        for (int u = 0; u < 4; ++u)
        {
            if (used.count(u))
                continue;
            double ici = estimate_ici(pop.weak[static_cast<size_t>(u)], k,
                                      strongs[static_cast<size_t>(k)], beams, est,
                                      cfg.eta * share, cluster_power);
            double r = weak_rate(strongs[static_cast<size_t>(k)], pop.weak[static_cast<size_t>(u)],
                                 est[static_cast<size_t>(k)], cfg.eta * share,
                                 (1.0 - cfg.eta) * share, ici, cfg.noise_var)
                           .rate;
            if (r > bestr)
            {
                bestr = r;
                arg = u;
            }
        }
        REQUIRE(res.trace.clusters[static_cast<size_t>(k)].selected == arg);
        REQUIRE(res.assignment.clusters[static_cast<size_t>(k)].weak_id == arg);
        used.insert(arg);
        beams.push_back(stub_design(strongs, k, pop.weak[static_cast<size_t>(arg)], beams, {},
                                    cfg)
                            .w);
    }

    // the reported operating point is evaluated under the final beams
    REQUIRE(res.initial.beams.size() == 2);
    REQUIRE(res.initial.objective == Catch::Approx(res.initial.rate2.sum()).epsilon(1e-12));
    for (int k = 0; k < 2; ++k)
        REQUIRE(res.initial.rate2_exact(k) >= res.initial.rate2(k) - 1e-12);
}

TEST_CASE("scheduling with the convex designer produces a consistent start")
{
    SystemConfig cfg;
    cfg.n_tx = 2;
    cfg.n_clusters = 2;
    cfg.pop_per_set = 6;
    UserPopulation pop = generate_population(cfg, 902);

    ScheduleResult res = schedule(pop, cfg);
    double share = cfg.total_power / 2;
    for (int k = 0; k < 2; ++k)
    {
        REQUIRE(res.initial.p1(k) >= 0.0);
        REQUIRE(res.initial.p2(k) >= 0.0);
        REQUIRE(res.initial.p1(k) + res.initial.p2(k) <= share + 1e-8);
        REQUIRE(res.initial.beams[static_cast<size_t>(k)].norm() <= 1.0 + 1e-8);
    }
    // the second beam is silent at the first strong user
    REQUIRE(std::abs(res.assignment.clusters[0].h1.dot(res.initial.beams[1])) <= 1e-8);
    REQUIRE(res.initial.iterations >= 2);
    REQUIRE(res.initial.objective > 0.0);

    // distinct users end up in distinct slots
    REQUIRE(res.assignment.clusters[0].weak_id != res.assignment.clusters[1].weak_id);
    REQUIRE(res.assignment.clusters[0].strong_id != res.assignment.clusters[1].strong_id);
}

TEST_CASE("designer failures carry the cluster index outward")
{
    SystemConfig cfg;
    cfg.n_tx = 2;
    cfg.n_clusters = 2;
    cfg.pop_per_set = 3;
    UserPopulation pop = generate_population(cfg, 903);

    ClusterDesigner failing = [](const std::vector<CVec> &, int k, const CVec &,
                                 const std::vector<CVec> &, const std::vector<CVec> &,
                                 const SystemConfig &) -> GreedyClusterResult {
        if (k == 1)
            throw DegenerateInitError("Error: forced failure");
        GreedyClusterResult g;
        g.w = unit(2, 0);
        g.p1 = 1.0;
        g.p2 = 1.0;
        g.iterations = 1;
        g.history = {0.0};
        return g;
    };

    bool caught = false;
    try
    {
        schedule(pop, cfg, failing);
    }
    catch (const DegenerateInitError &e)
    {
        caught = true;
        REQUIRE(std::string(e.what()).find("cluster 1") != std::string::npos);
        REQUIRE(std::string(e.what()).find("forced failure") != std::string::npos);
    }
    REQUIRE(caught);
}
