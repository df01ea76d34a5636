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

#ifndef THPNOMA_THP_HPP
#define THPNOMA_THP_HPP

#include "thpnoma/linalg.hpp"

#include <complex>
#include <vector>

namespace thpnoma
{

// Square QAM alphabet with unit average symbol energy.
struct Constellation
{
    int order = 0;                             // 4, 16 or 64
    std::vector<std::complex<double>> points;  // row-major over the grid
    double half_spacing = 0.0;                 // delta: points sit at odd multiples
    double mod_factor = 0.0;                   // A: modulo box is [-A/2, A/2)^2
};

// Build an M-QAM constellation (M in {4, 16, 64}) normalized to E|d|^2 = 1.
// Points lie at odd multiples of A/(2*sqrt(M)) per axis, strictly inside the
// modulo box.
Constellation make_qam(int order);

// Symmetric modulo fold of one complex value. `value` has real and imaginary
// parts in [-A/2, A/2); integer shifts record the fold so that
// value == input + (shift_re + i*shift_im) * A up to rounding.
struct ModuloResidue
{
    std::complex<double> value;
    long shift_re = 0;
    long shift_im = 0;
};

ModuloResidue mods(std::complex<double> x, double A);

// Modulo factor for a two-user superposition sqrt(p1)*d1 + sqrt(p2)*d2 of
// symbols from `c`: the scaled boxes add, so every superposed point stays
// strictly inside [-B/2, B/2)^2 and the folded replicas cannot collide.
double modulo_factor(double p1, double p2, const Constellation &c);

// Sequential interference pre-subtraction across clusters. cluster_symbols
// holds the superposed symbol x_k per cluster in encoding order; beams and
// strong_channels are indexed the same way. Cluster k pre-subtracts the
// residual of clusters j < k seen through its own strong channel and folds
// the result; the first cluster is passed through unchanged.
//
// Preconditions checked: |h_k1^H w_k| >= 1e-10 for all k, and beams satisfy
// the sequential null constraint h_j1^H w_k == 0 (j < k) within 1e-8.
std::vector<std::complex<double>> thp_encode(const std::vector<std::complex<double>> &cluster_symbols,
                                             const std::vector<CVec> &beams,
                                             const std::vector<CVec> &strong_channels, double B);

enum class DecodeStatus
{
    ok,
    tie // two expanded centroids at indistinguishable distance
};

struct StrongDecodeResult
{
    DecodeStatus status = DecodeStatus::ok;
    int d1_index = -1; // strong-user symbol (decoded second, after SIC)
    int d2_index = -1; // weak-user symbol (decoded first)
};

struct WeakDecodeResult
{
    DecodeStatus status = DecodeStatus::ok;
    int d2_index = -1;
};

// Strong-user receiver: normalize by the effective gain, fold, min-distance
// decode d2 over the folded superposed centroid set, subtract, fold again and
// decode d1. Distances are taken on the modulo torus, which is equivalent to
// decoding against the infinitely extended constellation replicas. Two
// centroids with different d2 at the same distance produce a tie instead of a
// guess (this happens for example when p1 == p2 with 4-QAM).
StrongDecodeResult receive_strong(std::complex<double> y, std::complex<double> gain, double p1,
                                  double p2, const Constellation &c, double B);

// Weak-user receiver: decodes only d2 against the centroids sqrt(p2)*d2,
// treating the strong-user layer as noise. Throws std::invalid_argument when
// p2 == 0 (no weak signal present).
WeakDecodeResult receive_weak(std::complex<double> y, std::complex<double> gain, double p2,
                              const Constellation &c, double B);

} // namespace thpnoma

#endif
