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
//
// Primal barrier path-following solver over products of zero, nonnegative,
// second-order and exponential cones. Dense linear algebra throughout: the
// programs this library emits stay in the low hundreds of rows, where dense
// factorizations beat any sparse machinery.

#include "thpnoma/conic.hpp"

#include <array>
#include <cmath>
#include <cstdio>
#include <functional>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace thpnoma
{

const char *to_string(SolveStatus s)
{
    switch (s)
    {
    case SolveStatus::optimal:
        return "optimal";
    case SolveStatus::infeasible:
        return "infeasible";
    case SolveStatus::unbounded:
        return "unbounded";
    default:
        return "numerical_failure";
    }
}

void ConicProgram::check() const
{
    if (c.size() != n || A.cols() != n || b.size() != A.rows())
        throw std::invalid_argument("Error: conic program dimension mismatch");
    Eigen::Index covered = 0;
    for (const ConeBlock &blk : cones)
    {
        if (blk.size < 1)
            throw std::invalid_argument("Error: conic program has an empty cone block");
        if (blk.kind == ConeKind::exp && blk.size != 3)
            throw std::invalid_argument("Error: exponential cone blocks must have size 3");
        if (blk.kind == ConeKind::soc && blk.size < 2)
            throw std::invalid_argument("Error: second-order cone blocks must have size >= 2");
        covered += blk.size;
    }
    if (covered != A.rows())
        throw std::invalid_argument("Error: cone block sizes do not cover the constraint rows");
}

// ---------------------------------------------------------------- builder --

Eigen::Index ProgramBuilder::add_var(const std::string &name)
{
    names.push_back(name);
    return static_cast<Eigen::Index>(names.size()) - 1;
}

void ProgramBuilder::objective_term(Eigen::Index var, double coef)
{
    obj.emplace_back(var, coef);
}

ProgramBuilder::Row ProgramBuilder::to_row(const Aff &a) const
{
    Row r;
    r.cst = a.cst;
    r.terms = a.terms;
    for (auto &[v, co] : r.terms)
        if (v < 0 || v >= num_vars())
            throw std::invalid_argument("Error: affine expression references an unknown variable");
    return r;
}

void ProgramBuilder::add_eq(const Aff &e) { eq_rows.push_back(to_row(e)); }
void ProgramBuilder::add_ge0(const Aff &e) { ge_rows.push_back(to_row(e)); }

void ProgramBuilder::add_soc(const std::vector<Aff> &rows)
{
    if (rows.size() < 2)
        throw std::invalid_argument("Error: a second-order cone needs at least two rows");
    std::vector<Row> blk;
    blk.reserve(rows.size());
    for (const Aff &a : rows)
        blk.push_back(to_row(a));
    soc_blocks.push_back(std::move(blk));
}

void ProgramBuilder::add_exp(const Aff &x, const Aff &y, const Aff &z)
{
    exp_blocks.push_back({to_row(x), to_row(y), to_row(z)});
}

ConicProgram ProgramBuilder::build() const
{
    Eigen::Index n = num_vars();
    Eigen::Index m = static_cast<Eigen::Index>(eq_rows.size() + ge_rows.size());
    for (const auto &blk : soc_blocks)
        m += static_cast<Eigen::Index>(blk.size());
    m += 3 * static_cast<Eigen::Index>(exp_blocks.size());

    ConicProgram p;
    p.n = n;
    p.var_names = names;
    p.c = RVec::Zero(n);
    for (auto &[v, co] : obj)
        p.c(v) += co;
    p.A = RMat::Zero(m, n);
    p.b = RVec::Zero(m);

    // The stored row expresses e(x) >= 0 (or == 0) with e = t'x + cst, and
    // the program convention is s = b - A x, so A takes the negated terms.
    Eigen::Index r = 0;
    auto emit = [&](const Row &row) {
        p.b(r) = row.cst;
        for (auto &[v, co] : row.terms)
            p.A(r, v) -= co;
        ++r;
    };

    if (!eq_rows.empty())
    {
        p.cones.push_back({ConeKind::zero, static_cast<Eigen::Index>(eq_rows.size())});
        for (const Row &row : eq_rows)
            emit(row);
    }
    if (!ge_rows.empty())
    {
        p.cones.push_back({ConeKind::nonneg, static_cast<Eigen::Index>(ge_rows.size())});
        for (const Row &row : ge_rows)
            emit(row);
    }
    for (const auto &blk : soc_blocks)
    {
        p.cones.push_back({ConeKind::soc, static_cast<Eigen::Index>(blk.size())});
        for (const Row &row : blk)
            emit(row);
    }
    for (const auto &blk : exp_blocks)
    {
        p.cones.push_back({ConeKind::exp, 3});
        for (const Row &row : blk)
            emit(row);
    }
    p.check();
    return p;
}

// ------------------------------------------------------------- cone tools --

double barrier_nu(const ConicProgram &p)
{
    double nu = 0.0;
    for (const ConeBlock &blk : p.cones)
    {
        if (blk.kind == ConeKind::nonneg)
            nu += static_cast<double>(blk.size);
        else if (blk.kind == ConeKind::soc)
            nu += 2.0;
        else if (blk.kind == ConeKind::exp)
            nu += 3.0;
    }
    return nu;
}

namespace
{

bool interior_ok(ConeKind kind, const Eigen::Ref<const RVec> &s)
{
    switch (kind)
    {
    case ConeKind::nonneg:
        return (s.array() > 0.0).all();
    case ConeKind::soc:
        return s(0) > s.tail(s.size() - 1).norm();
    case ConeKind::exp:
    {
        double x = s(0), y = s(1), z = s(2);
        return y > 0.0 && z > 0.0 && y * std::log(z / y) - x > 0.0;
    }
    default:
        return true;
    }
}

double cone_violation(ConeKind kind, const Eigen::Ref<const RVec> &s)
{
    switch (kind)
    {
    case ConeKind::zero:
        return s.cwiseAbs().maxCoeff();
    case ConeKind::nonneg:
        return std::max(0.0, -s.minCoeff());
    case ConeKind::soc:
        return std::max(0.0, s.tail(s.size() - 1).norm() - s(0));
    case ConeKind::exp:
    {
        double x = s(0), y = s(1), z = s(2);
        if (y > 0.0 && z > 0.0)
            return std::max(0.0, x - y * std::log(z / y));
        // Closure: y == 0 requires x <= 0 and z >= 0. Report a magnitude
        // covering whichever requirement fails.
        double v = std::max(0.0, -y);
        v = std::max(v, -z);
        if (y <= 0.0)
            v = std::max(v, x);
        else
            v = std::max(v, y * std::exp(std::min(x / y, 40.0)) - std::max(z, 0.0));
        return std::max(v, 0.0);
    }
    }
    return 0.0;
}

// Smallest shift tau (plus margin) that makes s + tau * e strictly interior,
// where e is the canonical interior direction of the block: all-ones for the
// nonnegative cone, (1, 0, ...) for SOC, (-1, 1, 1) for exp.
double interior_shift(ConeKind kind, const Eigen::Ref<const RVec> &s)
{
    switch (kind)
    {
    case ConeKind::nonneg:
        return std::max(0.0, -s.minCoeff());
    case ConeKind::soc:
        return std::max(0.0, s.tail(s.size() - 1).norm() - s(0));
    case ConeKind::exp:
    {
        double lo = std::max({0.0, -s(1), -s(2)});
        double tau = lo + 1e-6;
        RVec t(3);
        for (int it = 0; it < 200; ++it)
        {
            t << s(0) - tau, s(1) + tau, s(2) + tau;
            if (interior_ok(ConeKind::exp, t))
                return tau;
            tau = tau * 2.0 + 1.0;
        }
        return tau;
    }
    default:
        return 0.0;
    }
}

void apply_shift(ConeKind kind, double tau, Eigen::Ref<RVec> s)
{
    switch (kind)
    {
    case ConeKind::nonneg:
        s.array() += tau;
        break;
    case ConeKind::soc:
        s(0) += tau;
        break;
    case ConeKind::exp:
        s(0) -= tau;
        s(1) += tau;
        s(2) += tau;
        break;
    default:
        break;
    }
}

// Barrier value, gradient and (optionally) Hessian of one block at s.
// Returns false when s is not strictly interior.
bool barrier_block(ConeKind kind, const Eigen::Ref<const RVec> &s, double &phi,
                   Eigen::Ref<RVec> g, RMat *H)
{
    switch (kind)
    {
    case ConeKind::nonneg:
    {
        if (!(s.array() > 0.0).all())
            return false;
        phi = -s.array().log().sum();
        g = -s.cwiseInverse();
        if (H)
        {
            H->setZero();
            H->diagonal() = s.cwiseInverse().cwiseAbs2();
        }
        return true;
    }
    case ConeKind::soc:
    {
        double d = s(0) * s(0) - s.tail(s.size() - 1).squaredNorm();
        if (!(s(0) > 0.0) || !(d > 0.0))
            return false;
        phi = -std::log(d);
        RVec dd(s.size());
        dd(0) = 2.0 * s(0);
        dd.tail(s.size() - 1) = -2.0 * s.tail(s.size() - 1);
        g = -dd / d;
        if (H)
        {
            *H = dd * dd.transpose() / (d * d);
            H->diagonal()(0) -= 2.0 / d;
            H->diagonal().tail(s.size() - 1).array() += 2.0 / d;
        }
        return true;
    }
    case ConeKind::exp:
    {
        double x = s(0), y = s(1), z = s(2);
        if (!(y > 0.0) || !(z > 0.0))
            return false;
        double L = std::log(z / y);
        double psi = y * L - x;
        if (!(psi > 0.0))
            return false;
        phi = -std::log(psi) - std::log(y) - std::log(z);
        RVec dpsi(3);
        dpsi << -1.0, L - 1.0, y / z;
        g = -dpsi / psi;
        g(1) -= 1.0 / y;
        g(2) -= 1.0 / z;
        if (H)
        {
            *H = dpsi * dpsi.transpose() / (psi * psi);
            (*H)(1, 1) += 1.0 / (psi * y) + 1.0 / (y * y);
            (*H)(1, 2) += -1.0 / (psi * z);
            (*H)(2, 1) += -1.0 / (psi * z);
            (*H)(2, 2) += y / (psi * z * z) + 1.0 / (z * z);
        }
        return true;
    }
    default:
        return true;
    }
}

// ---------------------------------------------------------------- presolve --

struct Presolved
{
    ConicProgram p;                      // reduced program
    std::vector<Eigen::Index> keep_vars; // reduced var -> original var
    std::vector<Eigen::Index> keep_rows; // reduced row -> original row
    RVec fixed;                          // original n, meaningful where is_fixed
    std::vector<char> is_fixed;
    std::vector<std::pair<Eigen::Index, Eigen::Index>> fixers; // (row, var) in elimination order
    double obj_offset = 0.0;
    bool infeasible = false;
    bool unbounded = false;
};

Presolved run_presolve(const ConicProgram &orig, bool enabled)
{
    Presolved out;
    out.fixed = RVec::Zero(orig.n);
    out.is_fixed.assign(static_cast<size_t>(orig.n), 0);

    std::vector<char> row_dropped(static_cast<size_t>(orig.rows()), 0);
    RMat A = orig.A;
    RVec b = orig.b;

    std::vector<ConeKind> row_kind(static_cast<size_t>(orig.rows()));
    {
        Eigen::Index r = 0;
        for (const ConeBlock &blk : orig.cones)
            for (Eigen::Index i = 0; i < blk.size; ++i)
                row_kind[static_cast<size_t>(r++)] = blk.kind;
    }

    double scale = std::max(1.0, std::max(A.cwiseAbs().maxCoeff(), b.cwiseAbs().maxCoeff()));
    double tiny = 1e-13 * scale;

    if (enabled)
    {
        bool changed = true;
        while (changed)
        {
            changed = false;
            for (Eigen::Index r = 0; r < orig.rows(); ++r)
            {
                if (row_dropped[static_cast<size_t>(r)])
                    continue;
                ConeKind kind = row_kind[static_cast<size_t>(r)];
                if (kind != ConeKind::zero && kind != ConeKind::nonneg)
                    continue;

                Eigen::Index nz = 0, var = -1;
                for (Eigen::Index v = 0; v < orig.n; ++v)
                    if (!out.is_fixed[static_cast<size_t>(v)] && std::abs(A(r, v)) > tiny)
                    {
                        ++nz;
                        var = v;
                        if (nz > 1)
                            break;
                    }

                if (nz == 0)
                {
                    // Empty row: feasibility depends only on the constant.
                    if (kind == ConeKind::zero && std::abs(b(r)) > 1e-9 * scale)
                        out.infeasible = true;
                    if (kind == ConeKind::nonneg && b(r) < -1e-9 * scale)
                        out.infeasible = true;
                    row_dropped[static_cast<size_t>(r)] = 1;
                    changed = true;
                }
                else if (nz == 1 && kind == ConeKind::zero)
                {
                    // Singleton equality pins the variable: s = b - a*v = 0.
                    double val = b(r) / A(r, var);
                    out.is_fixed[static_cast<size_t>(var)] = 1;
                    out.fixed(var) = val;
                    out.fixers.emplace_back(r, var);
                    row_dropped[static_cast<size_t>(r)] = 1;
                    b -= A.col(var) * val;
                    out.obj_offset += orig.c(var) * val;
                    changed = true;
                }
            }
        }

        // Variables touching no remaining row are determined by the objective.
        for (Eigen::Index v = 0; v < orig.n; ++v)
        {
            if (out.is_fixed[static_cast<size_t>(v)])
                continue;
            bool used = false;
            for (Eigen::Index r = 0; r < orig.rows() && !used; ++r)
                if (!row_dropped[static_cast<size_t>(r)] && std::abs(A(r, v)) > tiny)
                    used = true;
            if (!used)
            {
                if (std::abs(orig.c(v)) > tiny)
                    out.unbounded = true;
                out.is_fixed[static_cast<size_t>(v)] = 1;
                out.fixed(v) = 0.0;
            }
        }
    }

    for (Eigen::Index v = 0; v < orig.n; ++v)
        if (!out.is_fixed[static_cast<size_t>(v)])
            out.keep_vars.push_back(v);
    for (Eigen::Index r = 0; r < orig.rows(); ++r)
        if (!row_dropped[static_cast<size_t>(r)])
            out.keep_rows.push_back(r);

    Eigen::Index rn = static_cast<Eigen::Index>(out.keep_vars.size());
    Eigen::Index rm = static_cast<Eigen::Index>(out.keep_rows.size());

    ConicProgram &q = out.p;
    q.n = rn;
    q.c = RVec::Zero(rn);
    q.A = RMat::Zero(rm, rn);
    q.b = RVec::Zero(rm);
    for (Eigen::Index j = 0; j < rn; ++j)
        q.c(j) = orig.c(out.keep_vars[static_cast<size_t>(j)]);
    for (Eigen::Index i = 0; i < rm; ++i)
    {
        Eigen::Index r = out.keep_rows[static_cast<size_t>(i)];
        q.b(i) = b(r);
        for (Eigen::Index j = 0; j < rn; ++j)
            q.A(i, j) = A(r, out.keep_vars[static_cast<size_t>(j)]);
    }

    // Rebuild cone blocks over the surviving rows.
    {
        Eigen::Index r = 0;
        for (const ConeBlock &blk : orig.cones)
        {
            Eigen::Index kept = 0;
            for (Eigen::Index i = 0; i < blk.size; ++i)
                if (!row_dropped[static_cast<size_t>(r + i)])
                    ++kept;
            if (kept > 0)
                q.cones.push_back({blk.kind, kept});
            r += blk.size;
        }
    }
    if (!orig.var_names.empty())
        for (Eigen::Index v : out.keep_vars)
            q.var_names.push_back(orig.var_names[static_cast<size_t>(v)]);
    return out;
}

// ------------------------------------------------------------ barrier core --

struct Split
{
    RMat Ae; // equality rows (s == 0)
    RVec be;
    RMat G; // barrier rows
    RVec h;
    std::vector<ConeBlock> blocks; // barrier blocks covering G's rows
    double nu = 0.0;
};

Split split_program(const ConicProgram &p)
{
    Split sp;
    Eigen::Index me = 0, mg = 0, r = 0;
    for (const ConeBlock &blk : p.cones)
        (blk.kind == ConeKind::zero ? me : mg) += blk.size;
    sp.Ae = RMat::Zero(me, p.n);
    sp.be = RVec::Zero(me);
    sp.G = RMat::Zero(mg, p.n);
    sp.h = RVec::Zero(mg);
    Eigen::Index ie = 0, ig = 0;
    for (const ConeBlock &blk : p.cones)
    {
        if (blk.kind == ConeKind::zero)
        {
            sp.Ae.middleRows(ie, blk.size) = p.A.middleRows(r, blk.size);
            sp.be.segment(ie, blk.size) = p.b.segment(r, blk.size);
            ie += blk.size;
        }
        else
        {
            sp.G.middleRows(ig, blk.size) = p.A.middleRows(r, blk.size);
            sp.h.segment(ig, blk.size) = p.b.segment(r, blk.size);
            sp.blocks.push_back(blk);
            ig += blk.size;
            sp.nu += blk.kind == ConeKind::nonneg ? static_cast<double>(blk.size)
                     : blk.kind == ConeKind::soc  ? 2.0
                                                  : 3.0;
        }
        r += blk.size;
    }
    return sp;
}

bool strictly_interior(const Split &sp, const RVec &s)
{
    Eigen::Index r = 0;
    for (const ConeBlock &blk : sp.blocks)
    {
        if (!interior_ok(blk.kind, s.segment(r, blk.size)))
            return false;
        r += blk.size;
    }
    return true;
}

// Gradient (and optionally Hessian) of the full barrier at s.
bool barrier_eval(const Split &sp, const RVec &s, double &phi, RVec &g, RMat *H)
{
    phi = 0.0;
    g.resize(s.size());
    if (H)
        H->setZero(s.size(), s.size());
    Eigen::Index r = 0;
    for (const ConeBlock &blk : sp.blocks)
    {
        double ph = 0.0;
        RMat Hb;
        if (H)
            Hb.resize(blk.size, blk.size);
        if (!barrier_block(blk.kind, s.segment(r, blk.size), ph, g.segment(r, blk.size),
                           H ? &Hb : nullptr))
            return false;
        if (H)
            H->block(r, r, blk.size, blk.size) = Hb;
        phi += ph;
        r += blk.size;
    }
    return true;
}

struct CenterReport
{
    bool converged = false;
    bool diverged = false; // iterate ran away: treat as unbounded evidence
    bool stalled = false;
    int steps = 0;
};

// Membership of a direction in the product cone (which, being a closed convex
// cone, equals its own recession cone). Used to certify unbounded rays.
bool recession_member(const Split &sp, const RVec &v, double tol)
{
    double ta = tol * (1.0 + v.cwiseAbs().maxCoeff());
    Eigen::Index r = 0;
    for (const ConeBlock &blk : sp.blocks)
    {
        switch (blk.kind)
        {
        case ConeKind::nonneg:
            if (v.segment(r, blk.size).minCoeff() < -ta)
                return false;
            break;
        case ConeKind::soc:
            if (v(r) < v.segment(r + 1, blk.size - 1).norm() - ta)
                return false;
            break;
        case ConeKind::exp:
        {
            double a = v(r), bb = v(r + 1), cc = v(r + 2);
            if (bb < -ta || cc < -ta)
                return false;
            if (bb > ta)
            {
                if (cc <= 0.0 || a > bb * std::log(cc / bb) + ta)
                    return false;
            }
            else if (a > ta)
            {
                return false; // closure face y = 0 needs x <= 0, z >= 0
            }
            break;
        }
        default:
            return false;
        }
        r += blk.size;
    }
    return true;
}

bool trace_enabled()
{
    static const bool on = std::getenv("THPNOMA_CONIC_TRACE") != nullptr;
    return on;
}

struct PathState
{
    RVec x, y; // primal iterate and equality multipliers
};

// Dual polish. The multipliers inherited from the barrier gradient carry the
// relative rounding error of the tiny centered slack quantities (for the
// second-order cone the internal s0^2 - |sbar|^2, for the exponential cone
// y log(z/y) - x), which at the final barrier parameter is amplified far above
// evaluation precision. A weighted minimum-norm Newton correction on z
// restores stationarity and the duality gap to evaluation precision while
// pinning every active nonlinear block to its current dual-cone boundary
// value, so cone membership survives the correction.
void polish_duals(const ConicProgram &p, const RVec &x, RVec &z)
{
    Eigen::Index n = p.n, m = p.rows();
    if (m == 0)
        return;
    RVec s = p.b - p.A * x;
    double zmax = std::max(1.0, z.cwiseAbs().maxCoeff());
    RVec wts(m);
    for (Eigen::Index i = 0; i < m; ++i)
        wts(i) = std::max(std::abs(z(i)), 1e-8 * zmax);
    double gap0 = s.dot(z);

    struct Pin
    {
        ConeKind kind;
        Eigen::Index r, size;
        double target;
    };
    std::vector<Pin> pins;
    {
        Eigen::Index r = 0;
        for (const ConeBlock &blk : p.cones)
        {
            bool big = z.segment(r, blk.size).cwiseAbs().maxCoeff() > 1e-6 * zmax;
            if (blk.kind == ConeKind::soc && big)
            {
                double f0 = z(r) - z.segment(r + 1, blk.size - 1).norm();
                pins.push_back({blk.kind, r, blk.size, std::max(f0, 0.0)});
            }
            else if (blk.kind == ConeKind::exp && big && z(r) < 0.0 && z(r + 2) > 0.0)
            {
                double f0 = z(r) * std::log(-z(r) / z(r + 2)) - z(r) + z(r + 1);
                pins.push_back({blk.kind, r, blk.size, std::max(f0, 0.0)});
            }
            r += blk.size;
        }
    }

    RVec z_best = z;
    double err_best = (p.c + p.A.transpose() * z).cwiseAbs().maxCoeff();
    for (int it = 0; it < 3; ++it)
    {
        Eigen::Index ne = n + 1 + static_cast<Eigen::Index>(pins.size());
        RMat J = RMat::Zero(ne, m);
        RVec rr = RVec::Zero(ne);
        J.topRows(n) = p.A.transpose();
        rr.head(n) = -(p.c + p.A.transpose() * z);
        J.row(n) = s.transpose();
        rr(n) = gap0 - s.dot(z);
        for (size_t k = 0; k < pins.size(); ++k)
        {
            const Pin &pin = pins[k];
            Eigen::Index row = n + 1 + static_cast<Eigen::Index>(k);
            if (pin.kind == ConeKind::soc)
            {
                double nb = z.segment(pin.r + 1, pin.size - 1).norm();
                J(row, pin.r) = 1.0;
                if (nb > 0.0)
                    J.row(row).segment(pin.r + 1, pin.size - 1) =
                        -z.segment(pin.r + 1, pin.size - 1).transpose() / nb;
                rr(row) = pin.target - (z(pin.r) - nb);
            }
            else
            {
                double u = z(pin.r), v = z(pin.r + 1), w = z(pin.r + 2);
                if (u >= 0.0 || w <= 0.0)
                    continue; // row stays zero this iteration
                J(row, pin.r) = std::log(-u / w);
                J(row, pin.r + 1) = 1.0;
                J(row, pin.r + 2) = -u / w;
                rr(row) = pin.target - (u * std::log(-u / w) - u + v);
            }
        }
        RMat JW = J * wts.asDiagonal();
        Eigen::CompleteOrthogonalDecomposition<RMat> cod(JW);
        RVec uu = cod.solve(rr);
        if (!uu.allFinite())
            break;
        z += wts.asDiagonal() * uu;
        double err = (p.c + p.A.transpose() * z).cwiseAbs().maxCoeff() +
                     std::abs(s.dot(z) - gap0);
        if (err < err_best)
        {
            err_best = err;
            z_best = z;
        }
    }
    z = z_best;
}

// Infeasible-start Newton on: min t*c'x + phi(h - G x)  s.t.  Ae x = be.
// The optional predicate lets a caller cut the centering short as soon as the
// iterate satisfies some external goal (phase one stops once tau < 0).
CenterReport center(const Split &sp, const RVec &c, double t, PathState &st, int budget,
                    double dual_target, double eq_target, double stop_obj_below,
                    const std::function<bool(const RVec &)> *early)
{
    CenterReport rep;
    Eigen::Index n = st.x.size(), me = sp.Ae.rows();

    RVec s = sp.h - sp.G * st.x;
    double phi = 0.0;
    RVec gs;
    RMat Hs;

    // Stall bookkeeping: the diagonal floor estimate below can undershoot the
    // true attainable residual by a modest factor, so an iterate grinding just
    // above it would otherwise burn the whole budget on ulp-sized steps.
    double best_rd = std::numeric_limits<double>::infinity();
    int no_gain = 0;

    for (; rep.steps < budget; ++rep.steps)
    {
        if (early && (*early)(st.x))
        {
            rep.converged = true;
            return rep;
        }
        if (!barrier_eval(sp, s, phi, gs, &Hs))
        {
            rep.stalled = true;
            return rep;
        }
        RVec rd = t * c - sp.G.transpose() * gs;
        if (me > 0)
            rd += sp.Ae.transpose() * st.y;
        RVec rp = me > 0 ? RVec(sp.Ae * st.x - sp.be) : RVec();

        RMat Hx = sp.G.transpose() * Hs * sp.G;

        double rd_inf = rd.cwiseAbs().maxCoeff();
        double rp_inf = me > 0 ? rp.cwiseAbs().maxCoeff() : 0.0;
        // Attainable-residual floor: near the end of the path the Newton
        // increment drops below one ulp of x, and the dual residual cannot be
        // resolved beyond the rounding of t*c - G'g itself.
        double floor_rd = 0.0;
        for (Eigen::Index j = 0; j < n; ++j)
            floor_rd = std::max(floor_rd, t * std::abs(c(j)) + Hx(j, j) * (std::abs(st.x(j)) + 1.0));
        floor_rd *= 4.0 * std::numeric_limits<double>::epsilon();
        if (trace_enabled())
            std::fprintf(stderr, "[center] t=%.3e it=%d rd=%.3e rp=%.3e target=%.3e floor=%.3e\n",
                         t, rep.steps, rd_inf, rp_inf, dual_target, floor_rd);
        if (rd_inf <= std::max(dual_target, floor_rd))
        {
            if (rp_inf <= eq_target)
            {
                rep.converged = true;
                return rep;
            }
            // The dual residual is done but the equality rows lag by a hair,
            // which a Newton step can no longer express at this conditioning.
            // Project back onto the equality manifold; the displacement is of
            // the order of the equality residual and cannot leave the
            // interior when the slacks sit orders of magnitude above it.
            if (me > 0)
            {
                Eigen::ColPivHouseholderQR<RMat> qr(sp.Ae);
                RVec xt = st.x + qr.solve(sp.be - sp.Ae * st.x);
                RVec str = sp.h - sp.G * xt;
                if (strictly_interior(sp, str) &&
                    (sp.Ae * xt - sp.be).cwiseAbs().maxCoeff() <= eq_target)
                {
                    st.x = xt;
                    rep.converged = true;
                    return rep;
                }
            }
        }
        if (rd_inf < 0.99 * best_rd)
        {
            best_rd = rd_inf;
            no_gain = 0;
        }
        else if (++no_gain >= 20)
        {
            // No meaningful progress for many steps. The diagonal floor
            // estimate can undershoot the true attainable residual by a small
            // factor, so accept a stall sitting just above it; anything
            // higher is a genuinely off-center iterate and the caller should
            // retreat and re-approach instead.
            if (rd_inf <= 10.0 * floor_rd && rp_inf <= eq_target)
            {
                rep.converged = true;
                return rep;
            }
            rep.stalled = true;
            return rep;
        }
        Eigen::Index dim = n + me;
        RMat K = RMat::Zero(dim, dim);
        K.topLeftCorner(n, n) = Hx;
        K.topLeftCorner(n, n).diagonal().array() += 1e-12;
        if (me > 0)
        {
            K.topRightCorner(n, me) = sp.Ae.transpose();
            K.bottomLeftCorner(me, n) = sp.Ae;
            K.bottomRightCorner(me, me).diagonal().array() -= 1e-12;
        }
        RVec rhs(dim);
        rhs.head(n) = -rd;
        if (me > 0)
            rhs.tail(me) = -rp;

        // Ruiz equilibration before factorizing: near the end of the path the
        // barrier Hessian spans far more orders of magnitude than a double
        // precision factorization can absorb, and the raw Newton direction
        // degrades into a crawl. Symmetric scaling toward unit row maxima
        // restores enough accuracy for the refinement loop to finish the job.
        RVec dscale = RVec::Ones(dim);
        RMat Ks = K;
        for (int pass = 0; pass < 3; ++pass)
        {
            bool flat = true;
            for (Eigen::Index i = 0; i < dim; ++i)
            {
                double r = Ks.row(i).cwiseAbs().maxCoeff();
                double f = (r > 0.0) ? 1.0 / std::sqrt(r) : 1.0;
                if (f < 0.9 || f > 1.1)
                    flat = false;
                dscale(i) *= f;
            }
            if (flat)
                break;
            Ks = dscale.asDiagonal() * K * dscale.asDiagonal();
        }

        // Factor the equilibrated system in extended precision. These
        // matrices are small, so the cost is negligible, and the extra
        // mantissa bits decide whether the direction is usable at all once
        // the barrier Hessian condition number crosses what double can hold.
        using LMat = Eigen::Matrix<long double, Eigen::Dynamic, Eigen::Dynamic>;
        using LVec = Eigen::Matrix<long double, Eigen::Dynamic, 1>;
        Eigen::PartialPivLU<LMat> lu(Ks.cast<long double>());
        auto scaled_solve = [&](const RVec &r) -> RVec {
            LVec z = lu.solve(LVec((dscale.asDiagonal() * r).cast<long double>()));
            return dscale.asDiagonal() * z.cast<double>();
        };
        RVec d = scaled_solve(rhs);
        if (!d.allFinite())
        {
            rep.stalled = true;
            return rep;
        }
        {
            // Refine against the unregularized matrix while the residual
            // keeps dropping, measured in the equilibrated norm so the small
            // scale rows (the equality rows among them) are not drowned out.
            RMat K0 = K;
            K0.topLeftCorner(n, n).diagonal().array() -= 1e-12;
            if (me > 0)
                K0.bottomRightCorner(me, me).diagonal().array() += 1e-12;
            auto scaled_norm = [&](const RVec &r) {
                return RVec(dscale.asDiagonal() * r).norm();
            };
            double best = scaled_norm(rhs - K0 * d);
            for (int rf = 0; rf < 3; ++rf)
            {
                RVec resid = rhs - K0 * d;
                RVec d2 = d + scaled_solve(resid);
                if (!d2.allFinite())
                    break;
                double rn = scaled_norm(rhs - K0 * d2);
                if (rn >= best)
                    break;
                d = d2;
                best = rn;
            }
        }

        RVec dx = d.head(n);
        RVec dy = me > 0 ? RVec(d.tail(me)) : RVec();

        // A Newton direction that is itself a feasible descent ray certifies
        // the program unbounded below. Without this, the static KKT
        // regularization clamps such steps once the barrier Hessian decays
        // and the iterate crawls instead of diverging.
        double nd = dx.norm();
        if (nd > 1e-12 * (1.0 + st.x.norm()))
        {
            double cd = c.dot(dx) / nd;
            if (cd < -1e-8 * (1.0 + c.cwiseAbs().maxCoeff()))
            {
                bool eq_ok =
                    me == 0 || (sp.Ae * dx).cwiseAbs().maxCoeff() <= 1e-9 * nd;
                if (eq_ok && recession_member(sp, RVec(-(sp.G * dx) / nd), 1e-9))
                {
                    rep.diverged = true;
                    return rep;
                }
            }
        }

        double r0 = std::sqrt(rd.squaredNorm() + (me > 0 ? rp.squaredNorm() : 0.0));
        double alpha = 1.0;
        bool accepted = false;
        for (int ls = 0; ls < 60; ++ls)
        {
            RVec xt = st.x + alpha * dx;
            RVec str = sp.h - sp.G * xt;
            if (strictly_interior(sp, str))
            {
                RVec gt;
                double pht = 0.0;
                if (barrier_eval(sp, str, pht, gt, nullptr))
                {
                    RVec rdt = t * c - sp.G.transpose() * gt;
                    RVec yt;
                    double rpt2 = 0.0;
                    if (me > 0)
                    {
                        yt = st.y + alpha * dy;
                        rdt += sp.Ae.transpose() * yt;
                        rpt2 = (sp.Ae * xt - sp.be).squaredNorm();
                    }
                    double rt = std::sqrt(rdt.squaredNorm() + rpt2);
                    // rt == r0 must not count as progress: for tiny alpha the
                    // sufficient-decrease factor rounds to one and a frozen
                    // iterate would otherwise burn the whole Newton budget.
                    if ((rt <= (1.0 - 0.01 * alpha) * r0 && rt < r0) ||
                        rt <= dual_target * 0.5)
                    {
                        st.x = xt;
                        if (me > 0)
                            st.y = yt;
                        s = str;
                        accepted = true;
                        break;
                    }
                }
            }
            alpha *= 0.5;
        }
        if (!accepted)
        {
            rep.stalled = true;
            return rep;
        }
        if (st.x.cwiseAbs().maxCoeff() > 1e14 || c.dot(st.x) < stop_obj_below)
        {
            rep.diverged = true;
            return rep;
        }
    }
    rep.stalled = true; // budget exhausted
    return rep;
}

} // namespace

ProgramViolation evaluate_violation(const ConicProgram &p, const RVec &x)
{
    p.check();
    if (x.size() != p.n)
        throw std::invalid_argument("Error: evaluate_violation point has wrong dimension");
    RVec s = p.b - p.A * x;
    ProgramViolation v;
    Eigen::Index r = 0;
    for (const ConeBlock &blk : p.cones)
    {
        double cv = cone_violation(blk.kind, s.segment(r, blk.size));
        if (blk.kind == ConeKind::zero)
            v.eq = std::max(v.eq, cv);
        else
            v.cone = std::max(v.cone, cv);
        r += blk.size;
    }
    return v;
}

SolverResult solve(const ConicProgram &p, const SolverOptions &opt)
{
    return solve(p, RVec(), opt);
}

SolverResult solve(const ConicProgram &p, const RVec &hint, const SolverOptions &opt)
{
    p.check();
    SolverResult res;
    res.x = RVec::Zero(p.n);
    res.z = RVec::Zero(p.rows());

    Presolved pre = run_presolve(p, opt.use_presolve);
    if (pre.infeasible)
    {
        res.status = SolveStatus::infeasible;
        return res;
    }
    if (pre.unbounded)
    {
        res.status = SolveStatus::unbounded;
        return res;
    }

    const ConicProgram &q = pre.p;
    Split sp = split_program(q);
    Eigen::Index n = q.n, me = sp.Ae.rows(), mg = sp.G.rows();
    int steps_used = 0;

    PathState st;
    st.x = RVec::Zero(n);
    st.y = RVec::Zero(me);

    // Reduced warm-start hint, if any.
    RVec x0 = RVec::Zero(n);
    if (hint.size() == p.n)
        for (Eigen::Index j = 0; j < n; ++j)
            x0(j) = hint(pre.keep_vars[static_cast<size_t>(j)]);

    // Project the start onto the equality rows.
    Eigen::ColPivHouseholderQR<RMat> eq_qr;
    if (me > 0)
    {
        eq_qr.compute(sp.Ae);
        x0 += eq_qr.solve(sp.be - sp.Ae * x0);
        if ((sp.Ae * x0 - sp.be).cwiseAbs().maxCoeff() >
            1e-8 * std::max(1.0, sp.be.cwiseAbs().maxCoeff()))
        {
            res.status = SolveStatus::infeasible; // inconsistent equalities
            return res;
        }
    }

    double cscale = std::max(1.0, q.c.size() > 0 ? q.c.cwiseAbs().maxCoeff() : 0.0);
    double be_scale = 1.0 + (me > 0 ? sp.be.cwiseAbs().maxCoeff() : 0.0);
    double beta = std::min(1e-9, 0.1 * opt.tol);

    if (mg == 0)
    {
        // Pure equality-constrained linear objective. The value is constant
        // on the feasible set iff c lies in the row space of Ae; otherwise
        // some feasible direction decreases it without bound.
        bool c_zero = n == 0 || q.c.cwiseAbs().maxCoeff() == 0.0;
        if (me == 0)
        {
            res.status = c_zero ? SolveStatus::optimal : SolveStatus::unbounded;
        }
        else
        {
            Eigen::ColPivHouseholderQR<RMat> at_qr(RMat(sp.Ae.transpose()));
            RVec y = at_qr.solve(-q.c);
            double resid = (sp.Ae.transpose() * y + q.c).cwiseAbs().maxCoeff();
            if (resid <= 1e-9 * cscale)
            {
                res.status = SolveStatus::optimal;
                st.y = y;
            }
            else
            {
                res.status = SolveStatus::unbounded;
                return res;
            }
        }
        if (res.status == SolveStatus::optimal)
        {
            res.x = RVec::Zero(p.n);
            for (Eigen::Index v = 0; v < p.n; ++v)
                if (pre.is_fixed[static_cast<size_t>(v)])
                    res.x(v) = pre.fixed(v);
            for (Eigen::Index j = 0; j < n; ++j)
                res.x(pre.keep_vars[static_cast<size_t>(j)]) = x0(j);
            res.z = RVec::Zero(p.rows());
            for (Eigen::Index i = 0; i < q.rows(); ++i)
                res.z(pre.keep_rows[static_cast<size_t>(i)]) = me > 0 ? st.y(i) : 0.0;
            for (auto it = pre.fixers.rbegin(); it != pre.fixers.rend(); ++it)
            {
                auto [row, var] = *it;
                double acc = p.c(var);
                for (Eigen::Index r = 0; r < p.rows(); ++r)
                    if (r != row)
                        acc += p.A(r, var) * res.z(r);
                res.z(row) = -acc / p.A(row, var);
            }
            res.objective = p.c.dot(res.x);
            res.gap = 0.0;
            res.dual_residual = (p.c + p.A.transpose() * res.z).cwiseAbs().maxCoeff();
            res.primal_residual = evaluate_violation(p, res.x).max_violation();
        }
        return res;
    }

    // ------------------------------------------------- equality reduction --
    // Eliminate the equality rows once and walk the whole path in their null
    // space: x = x0 + Z u with Ae Z = 0. The iterate then cannot drift off
    // the equality manifold no matter how ill-conditioned the late barrier
    // region gets, and the reduced Newton system is positive definite.
    Eigen::ColPivHouseholderQR<RMat> at_qr;
    RMat Z;
    Split psp = sp;
    RVec pc = q.c;
    RVec px0 = x0;
    if (me > 0)
    {
        at_qr.compute(RMat(sp.Ae.transpose()));
        Eigen::Index rank = at_qr.rank();
        RMat qfull = at_qr.householderQ();
        Z = qfull.rightCols(n - rank);
        psp.Ae = RMat(0, Z.cols());
        psp.be = RVec();
        psp.G = sp.G * Z;
        psp.h = sp.h - sp.G * x0;
        pc = Z.transpose() * q.c;
        px0 = RVec::Zero(Z.cols());
        if (Z.cols() == 0)
        {
            // The equalities pin the point completely; only feasibility and
            // stationarity remain to check.
            double worst = 0.0;
            Eigen::Index r = 0;
            RVec sfix = sp.h - sp.G * x0;
            for (const ConeBlock &blk : sp.blocks)
            {
                worst = std::max(worst, cone_violation(blk.kind, sfix.segment(r, blk.size)));
                r += blk.size;
            }
            if (worst > 1e-9)
            {
                res.status = SolveStatus::infeasible;
                return res;
            }
            RVec y = at_qr.solve(RVec(-q.c));
            if ((sp.Ae.transpose() * y + q.c).cwiseAbs().maxCoeff() > 1e-9 * cscale)
                return res; // pinned but not provably optimal
            res.x = RVec::Zero(p.n);
            for (Eigen::Index v = 0; v < p.n; ++v)
                if (pre.is_fixed[static_cast<size_t>(v)])
                    res.x(v) = pre.fixed(v);
            for (Eigen::Index j = 0; j < n; ++j)
                res.x(pre.keep_vars[static_cast<size_t>(j)]) = x0(j);
            res.objective = p.c.dot(res.x);
            res.primal_residual = evaluate_violation(p, res.x).max_violation();
            res.status = SolveStatus::optimal;
            return res;
        }
    }
    const Eigen::Index pn = psp.G.cols();

    // ---------------------------------------------------------- phase one --
    RVec s0 = psp.h - psp.G * px0;
    bool have_interior = strictly_interior(psp, s0);
    if (!have_interior)
    {
        // min tau  s.t.  (h - G u) + tau * e in K,  tau >= -1,  |u_i| <= R.
        // The tau bound and the box keep the phase bounded with a proper
        // analytic center (the orthant, and with it the Newton Hessian,
        // would otherwise be flat along slack-growing directions).
        double box = 1e6 * std::max(1.0, px0.cwiseAbs().maxCoeff());
        Eigen::Index extra = 1 + 2 * pn;
        Split p1 = psp;
        p1.G.conservativeResize(mg + extra, pn + 1);
        for (Eigen::Index r = 0, bi = 0; bi < static_cast<Eigen::Index>(p1.blocks.size()); ++bi)
        {
            const ConeBlock &blk = p1.blocks[static_cast<size_t>(bi)];
            RVec e = RVec::Zero(blk.size);
            apply_shift(blk.kind, 1.0, e);
            p1.G.block(r, pn, blk.size, 1) = -e;
            r += blk.size;
        }
        p1.G.bottomRows(extra).setZero();
        p1.h.conservativeResize(mg + extra);
        p1.G(mg, pn) = -1.0; // s = 1 + tau
        p1.h(mg) = 1.0;
        for (Eigen::Index j = 0; j < pn; ++j)
        {
            p1.G(mg + 1 + 2 * j, j) = 1.0; // s = box - u_j
            p1.h(mg + 1 + 2 * j) = box;
            p1.G(mg + 2 + 2 * j, j) = -1.0; // s = box + u_j
            p1.h(mg + 2 + 2 * j) = box;
        }
        p1.blocks.push_back({ConeKind::nonneg, extra});
        p1.nu += static_cast<double>(extra);
        p1.Ae = RMat(0, pn + 1);
        p1.be = RVec();

        double tau0 = 0.0;
        {
            Eigen::Index r = 0;
            for (const ConeBlock &blk : psp.blocks)
            {
                tau0 = std::max(tau0, interior_shift(blk.kind, s0.segment(r, blk.size)));
                r += blk.size;
            }
            tau0 += 1.0;
        }

        PathState st1;
        st1.x = RVec::Zero(pn + 1);
        st1.x.head(pn) = px0;
        st1.x(pn) = tau0;
        st1.y = RVec();
        RVec c1 = RVec::Zero(pn + 1);
        c1(pn) = 1.0;

        bool found = false;
        double t1 = 1.0;
        double t1_cap = 1.05 * p1.nu / std::max(opt.tol, 1e-9);
        int p1_budget = opt.max_newton / 2;
        // Stop centering the moment tau goes negative with the base slacks
        // strictly interior; certifying infeasibility needs full convergence.
        std::function<bool(const RVec &)> tau_done = [&](const RVec &xt) {
            if (xt(pn) >= 0.0)
                return false;
            RVec sb = psp.h - psp.G * xt.head(pn);
            return strictly_interior(psp, sb);
        };
        for (int stage = 0; stage < 60 && steps_used < p1_budget; ++stage)
        {
            bool stop = tau_done(st1.x);
            if (!stop)
            {
                CenterReport rep = center(p1, c1, t1, st1, p1_budget - steps_used,
                                          beta * t1 * 1.0, 1e-11 * be_scale,
                                          -std::numeric_limits<double>::infinity(), &tau_done);
                steps_used += rep.steps;
                if (rep.stalled && !rep.converged)
                    break;
                stop = tau_done(st1.x);
            }
            if (stop)
            {
                found = true;
                px0 = st1.x.head(pn);
                break;
            }
            if (p1.nu / t1 <= std::max(opt.tol, 1e-9))
            {
                // Fully converged: a thin but nonempty interior still counts.
                if (st1.x(pn) < 0.0)
                {
                    RVec sb = psp.h - psp.G * st1.x.head(pn);
                    if (strictly_interior(psp, sb))
                    {
                        found = true;
                        px0 = st1.x.head(pn);
                    }
                }
                break;
            }
            t1 = std::min(t1 * opt.mu, t1_cap);
        }
        if (!found)
        {
            res.newton_steps = steps_used;
            res.status = st1.x(pn) > 1e-7 ? SolveStatus::infeasible : SolveStatus::numerical_failure;
            return res;
        }
    }

    // ---------------------------------------------------------- main path --
    st.x = px0;
    st.y = RVec();
    // Cap t at just past the value where the gap nu/t meets the tolerance;
    // pushing further only worsens the barrier conditioning for no benefit.
    double t_cap = 1.05 * psp.nu / std::max(opt.tol, 1e-12);
    double t_cold = std::min(1.0 / cscale, t_cap);
    double t = t_cold;
    // A warm hint can sit very close to the optimal face, where its barrier
    // gradient nearly balances t * c for a large t. Re-centering such a point
    // at a small t would mean marching it away from the boundary and all the
    // way back. Start at the temperature the hint itself implies instead.
    {
        RVec sh = psp.h - psp.G * px0;
        double ph = 0.0;
        RVec gh;
        if (barrier_eval(psp, sh, ph, gh, nullptr))
        {
            double cc = pc.squaredNorm();
            double test = cc > 0.0 ? pc.dot(psp.G.transpose() * gh) / cc : 0.0;
            if (std::isfinite(test) && test > t)
                t = std::min(test, t_cap);
        }
    }
    // The divergence cutoff lives in the original coordinates; shift it by
    // the particular solution's share of the objective.
    double obj_floor = -1e14 * cscale - (me > 0 ? q.c.dot(x0) : 0.0);
    bool done = false;
    SolveStatus status = SolveStatus::numerical_failure;
    // Retreat data: when a stage fails to center, restart from the last
    // centered iterate and take a geometrically smaller jump. An aggressive
    // growth factor then costs retries instead of the whole solve.
    bool have_good = false;
    bool tried_cold = false;
    double t_good = 0.0;
    RVec x_good;
    for (int stage = 0; stage < 200 && steps_used < opt.max_newton; ++stage)
    {
        CenterReport rep = center(psp, pc, t, st, opt.max_newton - steps_used,
                                  beta * t * cscale, 1e-11 * be_scale, obj_floor, nullptr);
        steps_used += rep.steps;
        if (rep.diverged)
        {
            status = SolveStatus::unbounded;
            done = false;
            break;
        }
        if (!rep.converged)
        {
            if (!have_good)
            {
                // The warm temperature estimate can overshoot; fall back to a
                // cold start once before giving up.
                if (!tried_cold && t > 1.05 * t_cold)
                {
                    tried_cold = true;
                    st.x = px0;
                    t = t_cold;
                    continue;
                }
                status = SolveStatus::numerical_failure;
                break;
            }
            if (t <= t_good * 1.000001)
            {
                status = SolveStatus::numerical_failure;
                break;
            }
            st.x = x_good;
            t = std::sqrt(t_good * t);
            continue;
        }
        have_good = true;
        t_good = t;
        x_good = st.x;
        if (psp.nu / t <= opt.tol)
        {
            done = true;
            break;
        }
        t = std::min(t * opt.mu, t_cap);
    }

    res.newton_steps = steps_used;
    if (!done)
    {
        if (status == SolveStatus::unbounded)
            res.status = status;
        return res;
    }

    // Map the reduced solution back, then assemble duals: z = -grad(phi)/t on
    // barrier rows; equality multipliers come from stationarity, solved in
    // least squares through the same factorization that built Z.
    RVec x_sol = me > 0 ? RVec(x0 + Z * st.x) : st.x;
    RVec s = sp.h - sp.G * x_sol;
    double phi = 0.0;
    RVec gs;
    barrier_eval(sp, s, phi, gs, nullptr);
    RVec zg = -gs / t;
    RVec ze = me > 0 ? RVec(at_qr.solve(RVec(-(q.c + sp.G.transpose() * zg)))) : RVec();

    // Scatter back to original row order (reduced program first).
    RVec zq = RVec::Zero(q.rows());
    {
        Eigen::Index r = 0, ie = 0, ig = 0;
        for (const ConeBlock &blk : q.cones)
        {
            if (blk.kind == ConeKind::zero)
            {
                zq.segment(r, blk.size) = ze.segment(ie, blk.size);
                ie += blk.size;
            }
            else
            {
                zq.segment(r, blk.size) = zg.segment(ig, blk.size);
                ig += blk.size;
            }
            r += blk.size;
        }
    }

    // Undo the presolve: reinstate fixed variables and dropped rows.
    res.x = RVec::Zero(p.n);
    for (Eigen::Index v = 0; v < p.n; ++v)
        if (pre.is_fixed[static_cast<size_t>(v)])
            res.x(v) = pre.fixed(v);
    for (Eigen::Index j = 0; j < n; ++j)
        res.x(pre.keep_vars[static_cast<size_t>(j)]) = x_sol(j);

    res.z = RVec::Zero(p.rows());
    for (Eigen::Index i = 0; i < q.rows(); ++i)
        res.z(pre.keep_rows[static_cast<size_t>(i)]) = zq(i);
    // Multipliers of the singleton rows that fixed variables, recovered from
    // stationarity of the fixed columns, most recently eliminated first.
    for (auto it = pre.fixers.rbegin(); it != pre.fixers.rend(); ++it)
    {
        auto [row, var] = *it;
        double acc = p.c(var);
        for (Eigen::Index r = 0; r < p.rows(); ++r)
            if (r != row)
                acc += p.A(r, var) * res.z(r);
        res.z(row) = -acc / p.A(row, var);
    }

    polish_duals(p, res.x, res.z);

    res.objective = p.c.dot(res.x);
    RVec s_full = p.b - p.A * res.x;
    res.gap = std::abs(s_full.dot(res.z));
    res.dual_residual = (p.c + p.A.transpose() * res.z).cwiseAbs().maxCoeff();
    res.primal_residual = evaluate_violation(p, res.x).max_violation();
    res.status = SolveStatus::optimal;
    return res;
}

// ------------------------------------------------------------- text format --

static const char *kind_name(ConeKind k)
{
    switch (k)
    {
    case ConeKind::zero:
        return "zero";
    case ConeKind::nonneg:
        return "nonneg";
    case ConeKind::soc:
        return "soc";
    default:
        return "exp";
    }
}

void dump_program(const ConicProgram &p, std::ostream &os)
{
    p.check();
    char buf[64];
    auto put = [&](double v) {
        std::snprintf(buf, sizeof(buf), "%.17g", v);
        os << buf;
    };
    os << "thpnoma-conic v1\n";
    os << "vars " << p.n << "\n";
    os << "minimize";
    for (Eigen::Index j = 0; j < p.n; ++j)
    {
        os << ' ';
        put(p.c(j));
    }
    os << "\n";
    if (!p.var_names.empty())
    {
        os << "names";
        for (const std::string &s : p.var_names)
            os << ' ' << s;
        os << "\n";
    }
    Eigen::Index r = 0;
    for (const ConeBlock &blk : p.cones)
    {
        os << "block " << kind_name(blk.kind) << ' ' << blk.size << "\n";
        for (Eigen::Index i = 0; i < blk.size; ++i, ++r)
        {
            for (Eigen::Index j = 0; j < p.n; ++j)
            {
                put(p.A(r, j));
                os << ' ';
            }
            put(p.b(r));
            os << "\n";
        }
    }
    os << "end\n";
}

std::string dump_program(const ConicProgram &p)
{
    std::ostringstream os;
    dump_program(p, os);
    return os.str();
}

ConicProgram load_program(std::istream &is)
{
    std::string tok;
    auto need = [&](const std::string &what) {
        if (!(is >> tok))
            throw std::runtime_error("Error: conic text ended before " + what);
        return tok;
    };
    if (need("header") != "thpnoma-conic" || need("version") != "v1")
        throw std::runtime_error("Error: not a thpnoma-conic v1 file");
    if (need("vars keyword") != "vars")
        throw std::runtime_error("Error: expected 'vars'");
    Eigen::Index n = 0;
    is >> n;
    if (!is || n < 0)
        throw std::runtime_error("Error: bad variable count");

    ConicProgram p;
    p.n = n;
    p.c = RVec::Zero(n);
    if (need("minimize keyword") != "minimize")
        throw std::runtime_error("Error: expected 'minimize'");
    for (Eigen::Index j = 0; j < n; ++j)
        if (!(is >> p.c(j)))
            throw std::runtime_error("Error: short objective row");

    std::vector<RVec> rows;
    std::vector<double> consts;
    std::string kw = need("block, names or end");
    if (kw == "names")
    {
        for (Eigen::Index j = 0; j < n; ++j)
            p.var_names.push_back(need("variable name"));
        kw = need("block or end");
    }
    while (kw == "block")
    {
        std::string kind = need("cone kind");
        ConeKind ck;
        if (kind == "zero")
            ck = ConeKind::zero;
        else if (kind == "nonneg")
            ck = ConeKind::nonneg;
        else if (kind == "soc")
            ck = ConeKind::soc;
        else if (kind == "exp")
            ck = ConeKind::exp;
        else
            throw std::runtime_error("Error: unknown cone kind '" + kind + "'");
        Eigen::Index size = 0;
        is >> size;
        if (!is || size < 1)
            throw std::runtime_error("Error: bad cone block size");
        p.cones.push_back({ck, size});
        for (Eigen::Index i = 0; i < size; ++i)
        {
            RVec row(n);
            for (Eigen::Index j = 0; j < n; ++j)
                if (!(is >> row(j)))
                    throw std::runtime_error("Error: short constraint row");
            double cst = 0.0;
            if (!(is >> cst))
                throw std::runtime_error("Error: missing row constant");
            rows.push_back(row);
            consts.push_back(cst);
        }
        kw = need("block or end");
    }
    if (kw != "end")
        throw std::runtime_error("Error: expected 'end'");

    Eigen::Index m = static_cast<Eigen::Index>(rows.size());
    p.A = RMat::Zero(m, n);
    p.b = RVec::Zero(m);
    for (Eigen::Index r = 0; r < m; ++r)
    {
        p.A.row(r) = rows[static_cast<size_t>(r)].transpose();
        p.b(r) = consts[static_cast<size_t>(r)];
    }
    p.check();
    return p;
}

ConicProgram load_program_string(const std::string &text)
{
    std::istringstream is(text);
    return load_program(is);
}

} // namespace thpnoma
