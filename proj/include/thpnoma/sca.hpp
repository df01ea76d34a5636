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

#ifndef THPNOMA_SCA_HPP
#define THPNOMA_SCA_HPP

#include "thpnoma/channel.hpp"
#include "thpnoma/conic.hpp"
#include "thpnoma/linalg.hpp"

#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

namespace thpnoma
{

// First-order minorant of exp at xbar evaluated at x:
//   exp(xbar) * (1 + x - xbar)  <=  exp(x)  for all x, equality at x = xbar.
double taylor_exp(double x, double xbar);

// First-order minorant of the gain |c^H d|^2 around d = dbar:
//   |c^H dbar|^2 + 2 Re((c c^H dbar)^H (d - dbar))  <=  |c^H d|^2,
// with equality (in value and gradient) at d = dbar.
double taylor_quad(const CVec &c, const CVec &d, const CVec &dbar);

// Expansion point for one cluster: the beam plus the log-domain slacks that
// anchor the exponential-cone surrogate. n holds the cross-cluster slacks,
// indexed by the other cluster j (entry j == own index is unused).
struct ClusterPoint
{
    CVec w;
    double m1 = 0.0; // log strong-channel gain |h1^H w|^2
    double m2 = 0.0; // log weak-channel gain |h2^H w|^2
    double m3 = 0.0; // log of w^H Pi w, the cluster Gram quadratic
    double l1 = 0.0; // log p1 in the strong SNR constraint
    double l2 = 0.0; // log p1 in the rate constraints
    double l3 = 0.0; // log p2
    double l4 = 0.0; // log (p1 + p2)
    RVec n;          // log cross gains: w_j^H Pi_k w_j (j < k), |h_k2^H w_j|^2 (j > k)
};

// Full expansion point. validate() checks dimensions and that every slack is
// finite and within the representable band used by the subproblem boxes.
struct ScaPoint
{
    std::vector<ClusterPoint> clusters;

    void validate(int n_tx, int n_clusters) const;
};

// Iteration controls for the inner-approximation loop.
struct ScaConfig
{
    double step = 1.0;            // blend factor toward the subproblem solution, in (0, 1]
    double tol_bits = 1e-4;       // stop when the objective gain drops below this
    int max_iterations = 100;     // hard cap on subproblem solves
    double subproblem_tol = 1e-8; // conic solver tolerance
    std::ostream *trace = nullptr; // optional per-iteration log sink
};

// Joint design output. rate2 holds the subproblem rate variables (computed
// against the conservative interference envelope); rate2_exact re-evaluates
// the same beams and powers against the exact interference.
struct BeamPowerSolution
{
    std::vector<CVec> beams;
    RVec p1;
    RVec p2;
    RVec rate2;
    RVec rate2_exact;
    double objective = 0.0;
    int iterations = 0;
    std::vector<double> history; // subproblem objective after each solve
};

// Variable layout of one cluster inside an emitted conic program. Entries are
// column indices; -1 marks a variable the formulation does not use.
struct ClusterVars
{
    std::vector<Eigen::Index> w_re;
    std::vector<Eigen::Index> w_im;
    Eigen::Index r2 = -1;
    Eigen::Index p1 = -1;
    Eigen::Index p2 = -1;
    Eigen::Index m1 = -1;
    Eigen::Index m2 = -1;
    Eigen::Index m3 = -1;
    Eigen::Index l1 = -1;
    Eigen::Index l2 = -1;
    Eigen::Index l3 = -1;
    Eigen::Index l4 = -1;
    std::vector<Eigen::Index> n; // indexed by other cluster j; -1 at j == own index
};

// A built subproblem plus the metadata needed to interpret its solution.
// named_count counts the decision variables listed in ClusterVars; epigraph
// helpers for sum-of-exponential rows are appended after them. anchor is a
// feasible point of the program assembled from the expansion point itself.
struct ScaProgram
{
    ConicProgram program;
    std::vector<ClusterVars> vars;
    Eigen::Index named_count = 0;
    RVec anchor;
};

// Output of the per-cluster greedy design step.
struct GreedyClusterResult
{
    CVec w;
    double p1 = 0.0;
    double p2 = 0.0;
    double rate2 = 0.0;
    int iterations = 0;
    std::vector<double> history;
};

// Constraint families of the original (unapproximated) design problem.
enum class ConstraintFamily
{
    strong_snr,
    rate_strong_side,
    rate_weak_side,
    null_space,
    beam_norm,
    total_power
};

std::string to_string(ConstraintFamily family);

// Signed violations of the original constraints; negative means slack.
struct FeasibilityReport
{
    double strong_snr = 0.0;       // relative shortfall of the strong SNR floor
    double rate_strong_side = 0.0; // bits by which r2 exceeds the strong-side rate
    double rate_weak_side = 0.0;   // bits by which r2 exceeds the enveloped weak-side rate
    double null_space = 0.0;       // largest |h_j1^H w_k| over j < k
    double beam_norm = 0.0;        // largest ||w_k|| - 1
    double total_power = 0.0;      // relative budget overshoot

    double max_violation() const;
    ConstraintFamily worst_family() const;
};

// Raised when an expansion point cannot be formed because a gain or power
// underflows the representable slack range.
class DegenerateInitError : public std::runtime_error
{
  public:
    explicit DegenerateInitError(const std::string &msg) : std::runtime_error(msg) {}
};

// Raised when a subproblem solve returns anything but an optimum.
class ScaSubproblemError : public std::runtime_error
{
  public:
    ScaSubproblemError(int iteration, SolveStatus status, const std::string &msg)
        : std::runtime_error(msg), iteration(iteration), status(status)
    {
    }

    int iteration;
    SolveStatus status;
};

// Raised when the design problem itself is infeasible: the strong-SNR floors
// alone demand more transmit power than the budget provides.
class ScaInfeasibleError : public ScaSubproblemError
{
  public:
    ScaInfeasibleError(int iteration, double required_power, double budget, const std::string &msg)
        : ScaSubproblemError(iteration, SolveStatus::infeasible, msg),
          required_power(required_power), budget(budget)
    {
    }

    double required_power;
    double budget;
};

// Assemble the joint convex subproblem at the given expansion point.
ScaProgram build_p1(const ScaPoint &point, const ClusterAssignment &asg, const SystemConfig &cfg);

// Assemble the single-cluster greedy subproblem for cluster k. Earlier
// clusters use their designed beams, later ones the fixed stand-in estimates;
// every other cluster is assumed to spend the uniform budget P / N_c.
ScaProgram build_p2(const std::vector<CVec> &strong_channels, int k, const CVec &h_k2,
                    const std::vector<CVec> &beams_before, const std::vector<CVec> &estimates_after,
                    const ClusterPoint &point, const SystemConfig &cfg);

// Expansion point matching a concrete (beams, powers) operating point.
ScaPoint alpha_from(const std::vector<CVec> &beams, const RVec &p1, const RVec &p2,
                    const ClusterAssignment &asg, const SystemConfig &cfg);

// Default expansion point: matched-filter beams in the successive null space
// and the uniform eta split of the per-cluster budget.
ScaPoint init_alpha(const ClusterAssignment &asg, const SystemConfig &cfg);

// Run the joint design loop from the given starting point.
BeamPowerSolution solve_joint(const ClusterAssignment &asg, const SystemConfig &cfg,
                              const ScaConfig &sca, const ScaPoint &init);

// Same, starting from init_alpha(asg, cfg).
BeamPowerSolution solve_joint(const ClusterAssignment &asg, const SystemConfig &cfg,
                              const ScaConfig &sca = {});

// Run the greedy single-cluster loop for cluster k.
GreedyClusterResult solve_greedy_cluster(const std::vector<CVec> &strong_channels, int k,
                                         const CVec &h_k2, const std::vector<CVec> &beams_before,
                                         const std::vector<CVec> &estimates_after,
                                         const SystemConfig &cfg, const ScaConfig &sca = {});

// Check a design against the original constraints (with the conservative
// interference envelope on the weak side). All entries are signed; values
// at or below the solver tolerance indicate feasibility.
FeasibilityReport verify_original_feasibility(const BeamPowerSolution &sol,
                                              const ClusterAssignment &asg,
                                              const SystemConfig &cfg);

} // namespace thpnoma

#endif
