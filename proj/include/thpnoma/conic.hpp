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

#ifndef THPNOMA_CONIC_HPP
#define THPNOMA_CONIC_HPP

#include "thpnoma/linalg.hpp"

#include <array>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

namespace thpnoma
{

enum class ConeKind
{
    zero,   // s == 0 (linear equalities)
    nonneg, // s >= 0 componentwise
    soc,    // s0 >= ||s_1:||_2
    exp     // (x, y, z) with y * e^{x/y} <= z, y > 0 (closure)
};

struct ConeBlock
{
    ConeKind kind = ConeKind::zero;
    Eigen::Index size = 0; // exp blocks always have size 3
};

// Standard-form conic program: minimize c'x subject to b - A x in K, where K
// is the product of the listed cone blocks (rows of A grouped in order).
struct ConicProgram
{
    Eigen::Index n = 0;
    RVec c;
    RMat A;
    RVec b;
    std::vector<ConeBlock> cones;
    std::vector<std::string> var_names; // optional, for diagnostics

    Eigen::Index rows() const { return A.rows(); }

    // Structural validation: block sizes cover all rows, exp blocks have
    // size 3, dimensions agree. Throws std::invalid_argument.
    void check() const;
};

// Incremental construction of a ConicProgram from affine expressions.
class ProgramBuilder
{
  public:
    // Affine expression sum_i coef_i * x_i + cst.
    struct Aff
    {
        std::vector<std::pair<Eigen::Index, double>> terms;
        double cst = 0.0;

        Aff() = default;
        explicit Aff(double constant) : cst(constant) {}
        Aff &add(Eigen::Index var, double coef)
        {
            if (coef != 0.0)
                terms.emplace_back(var, coef);
            return *this;
        }
        Aff &add_const(double v)
        {
            cst += v;
            return *this;
        }
    };

    Eigen::Index add_var(const std::string &name);
    Eigen::Index num_vars() const { return static_cast<Eigen::Index>(names.size()); }

    void objective_term(Eigen::Index var, double coef); // accumulates into min c'x

    void add_eq(const Aff &e);            // e == 0
    void add_ge0(const Aff &e);           // e >= 0
    void add_soc(const std::vector<Aff> &rows); // rows[0] >= ||rows[1:]||
    void add_exp(const Aff &x, const Aff &y, const Aff &z); // y e^{x/y} <= z

    // Assemble with blocks in canonical order: one zero block, one nonneg
    // block, then SOC blocks, then exp blocks.
    ConicProgram build() const;

  private:
    struct Row
    {
        std::vector<std::pair<Eigen::Index, double>> terms;
        double cst = 0.0;
    };
    Row to_row(const Aff &a) const;

    std::vector<std::string> names;
    std::vector<std::pair<Eigen::Index, double>> obj;
    std::vector<Row> eq_rows, ge_rows;
    std::vector<std::vector<Row>> soc_blocks;
    std::vector<std::array<Row, 3>> exp_blocks;
};

enum class SolveStatus
{
    optimal,
    infeasible,
    unbounded,
    numerical_failure
};

const char *to_string(SolveStatus s);

struct SolverResult
{
    SolveStatus status = SolveStatus::numerical_failure;
    RVec x;             // primal solution (when optimal)
    RVec z;             // row-aligned dual: multipliers for every block
    double objective = 0.0;
    double gap = 0.0;            // |s'z| at the returned pair
    double primal_residual = 0.0; // cone-membership violation of b - A x
    double dual_residual = 0.0;   // ||c + A'z||_inf
    int newton_steps = 0;
};

struct SolverOptions
{
    double tol = 1e-8;        // absolute duality-gap target
    int max_newton = 4000;    // total Newton-step budget across all stages
    double mu = 30.0;         // barrier parameter growth factor
    bool use_presolve = true; // drop empty rows, fix singleton-determined vars
};

// Primal barrier path-following solve. Deterministic for identical input.
SolverResult solve(const ConicProgram &p, const SolverOptions &opt = {});

// Same, warm-started near `hint` (projected onto the equality rows; phase-I
// is skipped when the hint is already strictly feasible).
SolverResult solve(const ConicProgram &p, const RVec &hint, const SolverOptions &opt = {});

// Worst violation of the program constraints at a point, split by family.
struct ProgramViolation
{
    double eq = 0.0;   // max |A_E x - b_E| over zero-cone rows
    double cone = 0.0; // max cone-membership violation over barrier blocks
    double max_violation() const { return eq > cone ? eq : cone; }
};

ProgramViolation evaluate_violation(const ConicProgram &p, const RVec &x);

// Total barrier parameter nu of the program's inequality blocks.
double barrier_nu(const ConicProgram &p);

// Plain-text serialization (versioned). Round-trips exactly.
std::string dump_program(const ConicProgram &p);
void dump_program(const ConicProgram &p, std::ostream &os);
ConicProgram load_program(std::istream &is);
ConicProgram load_program_string(const std::string &text);

} // namespace thpnoma

#endif
