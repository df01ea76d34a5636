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
#include "thpnoma/thp.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <complex>
#include <limits>

using namespace thpnoma;
using cplx = std::complex<double>;

TEST_CASE("4-QAM grid is the unit-energy quadrature alphabet")
{
    Constellation c = make_qam(4);
    REQUIRE(c.points.size() == 4);
    REQUIRE(c.mod_factor == Catch::Approx(2.0 * std::sqrt(2.0)).epsilon(1e-14));
    double inv = 1.0 / std::sqrt(2.0);
    for (const cplx &p : c.points)
    {
        REQUIRE(std::abs(std::abs(p.real()) - inv) < 1e-14);
        REQUIRE(std::abs(std::abs(p.imag()) - inv) < 1e-14);
    }
}

TEST_CASE("QAM alphabets have unit mean energy and odd-multiple coordinates")
{
    for (int m : {4, 16, 64})
    {
        Constellation c = make_qam(m);
        REQUIRE(static_cast<int>(c.points.size()) == m);
        double e = 0.0;
        for (const cplx &p : c.points)
            e += std::norm(p);
        REQUIRE(e / m == Catch::Approx(1.0).epsilon(1e-12));
        // every coordinate is an odd multiple of A / (2 sqrt(M))
        double grid = c.mod_factor / (2.0 * std::sqrt(static_cast<double>(m)));
        REQUIRE(grid == Catch::Approx(c.half_spacing).epsilon(1e-12));
        for (const cplx &p : c.points)
        {
            double qr = p.real() / grid, qi = p.imag() / grid;
            REQUIRE(std::abs(qr - std::round(qr)) < 1e-9);
            REQUIRE(std::lround(std::abs(qr)) % 2 == 1);
            REQUIRE(std::abs(qi - std::round(qi)) < 1e-9);
            REQUIRE(std::lround(std::abs(qi)) % 2 == 1);
        }
    }
    REQUIRE_THROWS_AS(make_qam(8), std::invalid_argument);
}

TEST_CASE("16-QAM minimum distance equals the grid spacing A/4")
{
    Constellation c = make_qam(16);
    double dmin = 1e9;
    for (size_t i = 0; i < c.points.size(); ++i)
        for (size_t j = i + 1; j < c.points.size(); ++j)
            dmin = std::min(dmin, std::abs(c.points[i] - c.points[j]));
    REQUIRE(dmin == Catch::Approx(c.mod_factor / 4.0).epsilon(1e-12));
}

TEST_CASE("mods folds into the half-open box and records the shifts")
{
    ModuloResidue r = mods(cplx(3.0, -5.0), 4.0);
    REQUIRE(r.value.real() == Catch::Approx(-1.0).margin(1e-15));
    REQUIRE(r.value.imag() == Catch::Approx(-1.0).margin(1e-15));
    REQUIRE(r.shift_re == -1);
    REQUIRE(r.shift_im == 1);

    ModuloResidue inside = mods(cplx(0.3, -0.4), 4.0);
    REQUIRE(inside.value == cplx(0.3, -0.4));
    REQUIRE(inside.shift_re == 0);
    REQUIRE(inside.shift_im == 0);

    // +A/2 belongs to the next period and folds down to -A/2.
    ModuloResidue edge = mods(cplx(2.0, 2.0), 4.0);
    REQUIRE(edge.value.real() == -2.0);
    REQUIRE(edge.value.imag() == -2.0);

    REQUIRE_THROWS_AS(mods(cplx(1.0, 1.0), 0.0), std::invalid_argument);
}

TEST_CASE("mods round-trips 1e5 random inputs to within an ulp")
{
    GaussianSampler rng(77);
    const double A = 2.0 * std::sqrt(2.0);
    const double eps = std::numeric_limits<double>::epsilon();
    for (int i = 0; i < 100000; ++i)
    {
        cplx x = 20.0 * rng.complex_normal(2.0);
        ModuloResidue r = mods(x, A);
        REQUIRE(r.value.real() >= -A / 2.0);
        REQUIRE(r.value.real() < A / 2.0);
        REQUIRE(r.value.imag() >= -A / 2.0);
        REQUIRE(r.value.imag() < A / 2.0);
        double back_re = std::fma(-static_cast<double>(r.shift_re), A, r.value.real());
        double back_im = std::fma(-static_cast<double>(r.shift_im), A, r.value.imag());
        REQUIRE(std::abs(back_re - x.real()) <= eps * std::max(std::abs(x.real()), A));
        REQUIRE(std::abs(back_im - x.imag()) <= eps * std::max(std::abs(x.imag()), A));
    }
}

TEST_CASE("modulo factor adds the scaled layer boxes")
{
    Constellation c = make_qam(4);
    double b = modulo_factor(0.2, 0.8, c);
    REQUIRE(b == Catch::Approx((std::sqrt(0.2) + std::sqrt(0.8)) * c.mod_factor).epsilon(1e-14));
    // Every superposed point must land strictly inside the box.
    for (const cplx &d1 : c.points)
        for (const cplx &d2 : c.points)
        {
            cplx x = std::sqrt(0.2) * d1 + std::sqrt(0.8) * d2;
            REQUIRE(std::abs(x.real()) < b / 2.0);
            REQUIRE(std::abs(x.imag()) < b / 2.0);
        }
}

TEST_CASE("two-cluster hand example pre-subtracts to (0.5, 0)")
{
    CVec h11(2), h21(2), w1(2), w2(2);
    h11 << 1.0, 0.0;
    h21 << 1.0 / std::sqrt(2.0), 1.0 / std::sqrt(2.0);
    w1 << 1.0, 0.0;
    w2 << 0.0, 1.0;
    double B = 2.0 * std::sqrt(2.0);
    std::vector<cplx> x = {0.5, 0.5};
    std::vector<cplx> enc = thp_encode(x, {w1, w2}, {h11, h21}, B);
    REQUIRE(enc.size() == 2);
    REQUIRE(std::abs(enc[0] - cplx(0.5, 0.0)) < 1e-15);
    REQUIRE(std::abs(enc[1]) < 1e-15);
}

TEST_CASE("single cluster and orthogonal channels pass symbols through")
{
    CVec e1 = CVec::Zero(3), e2 = CVec::Zero(3), e3 = CVec::Zero(3);
    e1(0) = 1.0;
    e2(1) = 1.0;
    e3(2) = 1.0;
    std::vector<cplx> x = {cplx(0.4, -0.3)};
    REQUIRE(thp_encode(x, {e1}, {e1}, 4.0)[0] == x[0]);

    std::vector<cplx> x3 = {cplx(0.4, -0.3), cplx(-0.2, 0.1), cplx(0.0, 0.6)};
    std::vector<cplx> enc = thp_encode(x3, {e1, e2, e3}, {e1, e2, e3}, 4.0);
    for (size_t k = 0; k < 3; ++k)
        REQUIRE(enc[k] == x3[k]);
}

TEST_CASE("encoded symbols stay inside the modulo box")
{
    GaussianSampler rng(314);
    SystemConfig cfg;
    cfg.n_tx = 4;
    cfg.n_clusters = 4;
    for (int trial = 0; trial < 50; ++trial)
    {
        std::vector<CVec> h;
        for (int k = 0; k < 4; ++k)
            h.push_back(rng.complex_normal_vec(4, 1.0));
        // Projected matched filters satisfy the sequential null constraint.
        std::vector<CVec> w;
        for (int k = 0; k < 4; ++k)
        {
            CMat earlier = stack_columns(std::vector<CVec>(h.begin(), h.begin() + k), 4);
            CVec v = proj_complement(earlier, h[static_cast<size_t>(k)]);
            w.push_back(v / v.norm());
        }
        double B = 3.0;
        std::vector<cplx> x;
        for (int k = 0; k < 4; ++k)
            x.push_back(rng.complex_normal(1.0));
        std::vector<cplx> enc = thp_encode(x, w, h, B);
        REQUIRE(std::abs(enc[0].real()) <= 10.0); // first symbol unfolded
        for (size_t k = 1; k < 4; ++k)
        {
            REQUIRE(enc[k].real() >= -B / 2.0);
            REQUIRE(enc[k].real() < B / 2.0);
            REQUIRE(enc[k].imag() >= -B / 2.0);
            REQUIRE(enc[k].imag() < B / 2.0);
        }
    }
}

TEST_CASE("encode validates gains and the null constraint")
{
    CVec e1 = CVec::Zero(2), e2 = CVec::Zero(2);
    e1(0) = 1.0;
    e2(1) = 1.0;
    std::vector<cplx> x = {0.1, 0.1};
    // second beam orthogonal to its own strong channel: degenerate gain
    REQUIRE_THROWS_AS(thp_encode(x, {e1, e1}, {e1, e2}, 4.0), std::runtime_error);
    // second beam not orthogonal to the first strong channel
    CVec w2(2);
    w2 << 1.0 / std::sqrt(2.0), 1.0 / std::sqrt(2.0);
    REQUIRE_THROWS_AS(thp_encode(x, {e1, w2}, {e1, e2}, 4.0), std::runtime_error);
}

TEST_CASE("QR-form recursion matches the beam-ratio form")
{
    GaussianSampler rng(2024);
    const int n = 4;
    std::vector<CVec> h;
    for (int k = 0; k < n; ++k)
        h.push_back(rng.complex_normal_vec(n, 1.0));
    QrLower f = qr_lower(stack_columns(h, n));
    std::vector<CVec> beams;
    for (int k = 0; k < n; ++k)
        beams.push_back(f.Q.col(k));

    double B = 2.5;
    std::vector<cplx> x;
    for (int k = 0; k < n; ++k)
        x.push_back(0.5 * rng.complex_normal(1.0));

    std::vector<cplx> enc = thp_encode(x, beams, h, B);

    // Textbook recursion on the lower-triangular effective matrix L where
    // L(k, j) = h_k^H q_j.
    std::vector<cplx> ref(static_cast<size_t>(n));
    for (int k = 0; k < n; ++k)
    {
        cplx acc = x[static_cast<size_t>(k)];
        for (int j = 0; j < k; ++j)
            acc -= f.L(k, j) / f.L(k, k) * ref[static_cast<size_t>(j)];
        ref[static_cast<size_t>(k)] = k == 0 ? acc : mods(acc, B).value;
    }
    for (int k = 0; k < n; ++k)
        REQUIRE(std::abs(enc[static_cast<size_t>(k)] - ref[static_cast<size_t>(k)]) < 1e-12);
}

TEST_CASE("strong receiver recovers every pair at p1=0.2, p2=0.8")
{
    Constellation c = make_qam(4);
    double p1 = 0.2, p2 = 0.8;
    double B = modulo_factor(p1, p2, c);
    cplx gain(0.7, -0.3);
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j)
        {
            cplx x = std::sqrt(p1) * c.points[static_cast<size_t>(i)] +
                     std::sqrt(p2) * c.points[static_cast<size_t>(j)];
            StrongDecodeResult r = receive_strong(gain * x, gain, p1, p2, c, B);
            REQUIRE(r.status == DecodeStatus::ok);
            REQUIRE(r.d1_index == i);
            REQUIRE(r.d2_index == j);

            // Shifting by whole modulo periods cannot change the decision.
            StrongDecodeResult rs =
                receive_strong(gain * (x + cplx(B, B)), gain, p1, p2, c, B);
            REQUIRE(rs.status == DecodeStatus::ok);
            REQUIRE(rs.d1_index == i);
            REQUIRE(rs.d2_index == j);
        }
}

TEST_CASE("equal power split produces flagged ties")
{
    Constellation c = make_qam(4);
    double B = modulo_factor(0.5, 0.5, c);
    int ties = 0, clean = 0;
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j)
        {
            cplx x = std::sqrt(0.5) * (c.points[static_cast<size_t>(i)] +
                                       c.points[static_cast<size_t>(j)]);
            StrongDecodeResult r = receive_strong(x, 1.0, 0.5, 0.5, c, B);
            if (r.status == DecodeStatus::tie)
            {
                ++ties;
            }
            else
            {
                ++clean;
                REQUIRE(r.d1_index == i);
                REQUIRE(r.d2_index == j);
            }
        }
    // the superposition collides exactly when the two layers differ
    REQUIRE(ties == 12);
    REQUIRE(clean == 4);
}

TEST_CASE("weak receiver is exact at a 4:1 power ratio")
{
    Constellation c = make_qam(4);
    double p1 = 0.2, p2 = 0.8;
    double B = modulo_factor(p1, p2, c);
    cplx gain(-0.4, 0.9);
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j)
        {
            cplx x = std::sqrt(p1) * c.points[static_cast<size_t>(i)] +
                     std::sqrt(p2) * c.points[static_cast<size_t>(j)];
            WeakDecodeResult r = receive_weak(gain * x, gain, p2, c, B);
            REQUIRE(r.status == DecodeStatus::ok);
            REQUIRE(r.d2_index == j);

            WeakDecodeResult rs = receive_weak(gain * (x + cplx(B, 0.0)), gain, p2, c, B);
            REQUIRE(rs.d2_index == j);
        }
    REQUIRE_THROWS_AS(receive_weak(cplx(0.1, 0.1), 1.0, 0.0, c, B), std::invalid_argument);
}

TEST_CASE("noiseless end-to-end chain: fold and decode recovers all layers")
{
    // Full transmit chain over one random channel draw: encode, superpose,
    // pass through the strong channels, fold at each strong user.
    GaussianSampler rng(555);
    const int nt = 4, nc = 4;
    Constellation c = make_qam(4);
    double p1 = 0.3, p2 = 0.7;
    double B = modulo_factor(p1, p2, c);

    std::vector<CVec> h;
    for (int k = 0; k < nc; ++k)
        h.push_back(rng.complex_normal_vec(nt, 1.0));
    std::vector<CVec> w;
    for (int k = 0; k < nc; ++k)
    {
        CMat earlier = stack_columns(std::vector<CVec>(h.begin(), h.begin() + k), nt);
        CVec v = proj_complement(earlier, h[static_cast<size_t>(k)]);
        w.push_back(v / v.norm());
    }

    for (int frame = 0; frame < 200; ++frame)
    {
        std::vector<int> i1(nc), i2(nc);
        std::vector<cplx> x(nc);
        for (int k = 0; k < nc; ++k)
        {
            i1[static_cast<size_t>(k)] = (frame + 2 * k) % 4;
            i2[static_cast<size_t>(k)] = (3 * frame + k + 1) % 4;
            x[static_cast<size_t>(k)] =
                std::sqrt(p1) * c.points[static_cast<size_t>(i1[static_cast<size_t>(k)])] +
                std::sqrt(p2) * c.points[static_cast<size_t>(i2[static_cast<size_t>(k)])];
        }
        std::vector<cplx> enc = thp_encode(x, w, h, B);
        CVec tx = CVec::Zero(nt);
        for (int k = 0; k < nc; ++k)
            tx += w[static_cast<size_t>(k)] * enc[static_cast<size_t>(k)];
        for (int k = 0; k < nc; ++k)
        {
            cplx y = h[static_cast<size_t>(k)].dot(tx); // h^H tx, noiseless
            cplx gain = h[static_cast<size_t>(k)].dot(w[static_cast<size_t>(k)]);
            // interference from clusters j < k must fold away exactly
            cplx folded = mods(y / gain, B).value;
            REQUIRE(std::abs(mods(folded - x[static_cast<size_t>(k)], B).value) < 1e-9);
            StrongDecodeResult r = receive_strong(y, gain, p1, p2, c, B);
            REQUIRE(r.status == DecodeStatus::ok);
            REQUIRE(r.d1_index == i1[static_cast<size_t>(k)]);
            REQUIRE(r.d2_index == i2[static_cast<size_t>(k)]);
        }
    }
}
