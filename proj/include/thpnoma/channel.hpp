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

#ifndef THPNOMA_CHANNEL_HPP
#define THPNOMA_CHANNEL_HPP

#include "thpnoma/linalg.hpp"

#include <cstdint>
#include <random>

namespace thpnoma
{

// Static system description shared by every stage of the pipeline.
struct SystemConfig
{
    int n_tx = 4;             // transmit antennas at the base station
    int n_clusters = 4;       // clusters scheduled per slot (<= n_tx)
    double total_power = 10.0; // transmit power budget P
    double noise_var = 1.0;   // receiver noise variance sigma^2
    double eta = 0.3;         // strong-user SNR fraction in (0, 1]
    double strong_var = 1.0;  // per-entry channel variance, strong user set
    double weak_var = 0.01;   // per-entry channel variance, weak user set
    int pop_per_set = 20;     // candidate users per set

    // Throws std::invalid_argument on any out-of-range field.
    void validate() const;
};

// Candidate channels for one slot: one vector per user in each set.
struct UserPopulation
{
    std::vector<CVec> strong; // |strong| == pop_per_set, each of length n_tx
    std::vector<CVec> weak;   // |weak| == pop_per_set, each of length n_tx
};

// Deterministic standard-normal sampler built on a 64-bit Mersenne engine.
// Using an explicit Box-Muller transform keeps draws identical across
// standard-library implementations.
class GaussianSampler
{
  public:
    explicit GaussianSampler(uint64_t seed) : eng(seed) {}

    double standard_normal();

    // Circularly symmetric complex Gaussian with E|z|^2 = var.
    std::complex<double> complex_normal(double var);

    // Channel vector of length n with i.i.d. complex Gaussian entries.
    CVec complex_normal_vec(Eigen::Index n, double var);

  private:
    std::mt19937_64 eng;
    bool have_spare = false;
    double spare = 0.0;
};

// Draw a fresh candidate population. Equal seeds give equal draws; the
// generator state is local to the call.
UserPopulation generate_population(const SystemConfig &cfg, uint64_t seed);

// One scheduled cluster: the strong user's channel h1, the weak user's
// channel h2, and (when known) their indices into the candidate sets.
struct Cluster
{
    CVec h1;
    CVec h2;
    int strong_id = -1;
    int weak_id = -1;
};

// Ordered cluster list for one slot. The order is the successive encoding
// order: cluster k is encoded after clusters 0..k-1 and its beam must be
// orthogonal to their strong channels.
struct ClusterAssignment
{
    std::vector<Cluster> clusters;

    int n_clusters() const { return static_cast<int>(clusters.size()); }
};

} // namespace thpnoma

#endif
