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

#include <catch2/catch_amalgamated.hpp>

#include <cmath>

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
} // namespace

TEST_CASE("strong rate is log2 of one plus the post-SIC SNR")
{
    CVec h = unit(2, 0);
    CVec w = unit(2, 0);
    REQUIRE(strong_rate(h, w, 3.0, 1.0) == Catch::Approx(2.0).epsilon(1e-12));
    REQUIRE(strong_rate(h, w, 0.0, 1.0) == 0.0);
    // scaling both signal power and noise leaves the rate alone
    REQUIRE(strong_rate(h, w, 6.0, 2.0) == Catch::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("earlier-cluster residual term evaluates to one in the constructed case")
{
    // Cluster j=0 with w_j = e2 and cluster k=1 with h_k1 = e1, h_k2 = e2,
    // w_k = e1: the pre-subtraction ratio is zero, so the whole unit of
    // cluster-0 power leaks through h_k2.
    std::vector<CVec> strong = {unit(2, 1), unit(2, 0)};
    std::vector<CVec> weak = {unit(2, 0), unit(2, 1)};
    std::vector<CVec> beams = {unit(2, 1), unit(2, 0)};
    RVec p1(2), ptot(2);
    p1 << 0.0, 0.0;
    ptot << 1.0, 1.0;
    double ik = exact_interference(1, strong, weak, beams, p1, ptot);
    REQUIRE(ik == Catch::Approx(1.0).epsilon(1e-12));

    // and the Cauchy-Schwarz envelope is tight here, with the same value
    double bound = interference_upper_bound(1, strong, weak, beams, p1, ptot);
    REQUIRE(bound == Catch::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("intra-cluster strong layer counts toward the weak user's interference")
{
    std::vector<CVec> strong = {unit(2, 0)};
    std::vector<CVec> weak = {unit(2, 0)};
    std::vector<CVec> beams = {unit(2, 0)};
    RVec p1(1), ptot(1);
    p1 << 0.4;
    ptot << 1.0;
    // single cluster: only the own strong layer interferes
    REQUIRE(exact_interference(0, strong, weak, beams, p1, ptot) ==
            Catch::Approx(0.4).epsilon(1e-12));
}

TEST_CASE("later clusters contribute their full beam power")
{
    std::vector<CVec> strong = {unit(3, 0), unit(3, 1)};
    std::vector<CVec> weak = {CVec(3), CVec(3)};
    weak[0] << cplx(0.0), cplx(0.6), cplx(0.0);
    weak[1] << cplx(1.0), cplx(0.0), cplx(0.0);
    std::vector<CVec> beams = {unit(3, 0), unit(3, 1)};
    RVec p1(2), ptot(2);
    p1 << 0.0, 0.0;
    ptot << 1.0, 2.0;
    // cluster 0 weak user sees cluster 1's beam through |g^H w_1|^2 = 0.36
    double ik = exact_interference(0, strong, weak, beams, p1, ptot);
    REQUIRE(ik == Catch::Approx(0.36 * 2.0).epsilon(1e-12));
}

TEST_CASE("interference bound dominates the exact value on random draws")
{
    GaussianSampler rng(4242);
    const int nt = 4, nc = 3;
    for (int trial = 0; trial < 10000; ++trial)
    {
        std::vector<CVec> strong, weak, beams;
        for (int k = 0; k < nc; ++k)
        {
            strong.push_back(rng.complex_normal_vec(nt, 1.0));
            weak.push_back(rng.complex_normal_vec(nt, 0.01));
        }
        for (int k = 0; k < nc; ++k)
        {
            CMat earlier = stack_columns(std::vector<CVec>(strong.begin(), strong.begin() + k), nt);
            CVec v = proj_complement(earlier, strong[static_cast<size_t>(k)]);
            beams.push_back(v / v.norm());
        }
        RVec p1(nc), ptot(nc);
        for (int k = 0; k < nc; ++k)
        {
            double split = 0.2 + 0.15 * k;
            ptot(k) = 1.0 + 0.5 * k;
            p1(k) = split * ptot(k);
        }
        for (int k = 0; k < nc; ++k)
        {
            double exact = exact_interference(k, strong, weak, beams, p1, ptot);
            double bound = interference_upper_bound(k, strong, weak, beams, p1, ptot);
            REQUIRE(bound >= exact - 1e-12 * std::max(1.0, exact));
        }
    }
}

TEST_CASE("weak rate takes the weaker of the two decoding sides")
{
    CVec h1 = unit(2, 0);
    CVec w = unit(2, 0);

    // weak channel much weaker than strong: its own side binds; the
    // interference argument carries the intra-cluster strong layer too
    CVec h2 = CVec::Zero(2);
    h2(0) = 0.1;
    double g2 = 0.01;
    double intra = 1.0 * g2;
    WeakRate wr = weak_rate(h1, h2, w, 1.0, 4.0, intra, 1.0);
    REQUIRE(wr.binding == WeakBranch::weak_side);
    double expect = std::log2(1.0 + 4.0 * g2 / (intra + 1.0));
    REQUIRE(wr.rate == Catch::Approx(expect).epsilon(1e-12));

    // heavy external interference at the weak user flips nothing when the
    // strong side is still smaller; make the weak channel strong instead
    CVec h2b = CVec::Zero(2);
    h2b(0) = 10.0;
    WeakRate wr2 = weak_rate(h1, h2b, w, 1.0, 4.0, 0.0, 1.0);
    REQUIRE(wr2.binding == WeakBranch::strong_side);
    double expect2 = std::log2(1.0 + 4.0 / (1.0 + 1.0));
    REQUIRE(wr2.rate == Catch::Approx(expect2).epsilon(1e-12));

    // interference degrades only the weak side
    WeakRate wr3 = weak_rate(h1, h2b, w, 1.0, 4.0, 1e6, 1.0);
    REQUIRE(wr3.binding == WeakBranch::weak_side);
    REQUIRE(wr3.rate < 1e-3);
}

TEST_CASE("nominal strong SNR projects away the earlier clusters")
{
    CVec h11 = unit(2, 0);
    CVec h21(2);
    h21 << 1.0 / std::sqrt(2.0), 1.0 / std::sqrt(2.0);
    CMat earlier = stack_columns({h11}, 2);
    // P/N_c = 2 and the projection keeps half the norm: 2 * 0.5 / 1 = 1
    REQUIRE(nominal_strong_snr(h21, earlier, 4.0, 2, 1.0) == Catch::Approx(1.0).epsilon(1e-12));
    // no earlier clusters: the full norm enters
    REQUIRE(nominal_strong_snr(h11, CMat(2, 0), 4.0, 2, 1.0) == Catch::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("greedy interference matches the exact formula at uniform stand-ins")
{
    GaussianSampler rng(99);
    const int nt = 4, nc = 3;
    std::vector<CVec> strong, weak, beams;
    for (int k = 0; k < nc; ++k)
    {
        strong.push_back(rng.complex_normal_vec(nt, 1.0));
        weak.push_back(rng.complex_normal_vec(nt, 0.01));
    }
    for (int k = 0; k < nc; ++k)
    {
        CMat earlier = stack_columns(std::vector<CVec>(strong.begin(), strong.begin() + k), nt);
        CVec v = proj_complement(earlier, strong[static_cast<size_t>(k)]);
        beams.push_back(v / v.norm());
    }
    double total_power = 6.0;
    int k = 1;
    std::vector<CVec> before(beams.begin(), beams.begin() + k);
    std::vector<CVec> after(beams.begin() + k + 1, beams.end());
    double p_k1 = 0.5;
    double greedy = greedy_interference(k, strong[1], weak[1], before, after, beams[1], p_k1,
                                        total_power, nc);

    // the same quantity through the exact formula with every cluster at P/N_c
    RVec p1(nc), ptot(nc);
    ptot.setConstant(total_power / nc);
    p1.setZero();
    p1(k) = p_k1;
    double exact = exact_interference(k, strong, weak, beams, p1, ptot);
    REQUIRE(greedy == Catch::Approx(exact).epsilon(1e-12));
}
