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

#include "thpnoma/sca.hpp"

#include "thpnoma/rates.hpp"
#include "thpnoma/scheduling.hpp"

#include <cmath>
#include <limits>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace thpnoma
{

namespace
{

// Every log-domain slack is boxed to this band. The band serves two
// purposes: it keeps exp() of any slack sum appearing in the formulation
// finite (worst case is a four-slack sum, 4 * 138 < 709), and it makes the
// feasible set compact so the interior-point subproblem always has a central
// path. Slacks of meaningful operating points sit far inside the band, so
// the boxes never bind at a returned solution.
constexpr double kSlackBox = 138.0;

// Smallest gain or power an expansion point is allowed to take a log of.
constexpr double kDegenerate = 1e-30;

constexpr double kLn2 = 0.6931471805599453;

using Aff = ProgramBuilder::Aff;

double log_checked(double v, const char *what)
{
    if (!(v > kDegenerate))
    {
        std::ostringstream os;
        os << "Error: expansion point is degenerate, " << what << " = " << v
           << " is below the representable floor " << kDegenerate;
        throw DegenerateInitError(os.str());
    }
    return std::log(v);
}

// Affine minorant f(x; xbar) = exp(xbar) (1 + x - xbar) with x given as a
// signed combination of slack variables.
Aff f_aff(const std::vector<std::pair<Eigen::Index, double>> &parts, double xbar)
{
    double s = std::exp(xbar);
    Aff a(s * (1.0 - xbar));
    for (const auto &[v, sign] : parts)
        a.add(v, s * sign);
    return a;
}

Aff scaled(const Aff &a, double sc, double shift)
{
    Aff r(a.cst * sc + shift);
    for (const auto &[v, co] : a.terms)
        r.add(v, co * sc);
    return r;
}

void add_into(Aff &dst, const Aff &src, double sc = 1.0)
{
    dst.cst += src.cst * sc;
    for (const auto &[v, co] : src.terms)
        dst.add(v, co * sc);
}

// Re(h^H w) and Im(h^H w) over the split real/imag beam coordinates.
Aff re_inner(const CVec &h, const std::vector<Eigen::Index> &wre,
             const std::vector<Eigen::Index> &wim)
{
    Aff a;
    for (Eigen::Index i = 0; i < h.size(); ++i)
    {
        a.add(wre[static_cast<size_t>(i)], h(i).real());
        a.add(wim[static_cast<size_t>(i)], h(i).imag());
    }
    return a;
}

Aff im_inner(const CVec &h, const std::vector<Eigen::Index> &wre,
             const std::vector<Eigen::Index> &wim)
{
    Aff a;
    for (Eigen::Index i = 0; i < h.size(); ++i)
    {
        a.add(wim[static_cast<size_t>(i)], h(i).real());
        a.add(wre[static_cast<size_t>(i)], -h(i).imag());
    }
    return a;
}

// Affine minorant of |c^H w|^2 around wbar: 2 Re(q^H w) - |c^H wbar|^2 with
// q = (c^H wbar) c.
Aff g_aff(const CVec &c, const CVec &wbar, const std::vector<Eigen::Index> &wre,
          const std::vector<Eigen::Index> &wim)
{
    std::complex<double> cd = c.dot(wbar);
    Aff a(-std::norm(cd));
    for (Eigen::Index i = 0; i < c.size(); ++i)
    {
        std::complex<double> q = cd * c(i);
        a.add(wre[static_cast<size_t>(i)], 2.0 * q.real());
        a.add(wim[static_cast<size_t>(i)], 2.0 * q.imag());
    }
    return a;
}

// ||v||^2 <= t through the rotated-cone identity
// ((t+1)/2)^2 - ((t-1)/2)^2 = t.
void add_quad_le(ProgramBuilder &b, const std::vector<Aff> &v, const Aff &t)
{
    std::vector<Aff> rows;
    rows.reserve(v.size() + 2);
    rows.push_back(scaled(t, 0.5, 0.5));
    rows.push_back(scaled(t, 0.5, -0.5));
    for (const Aff &e : v)
        rows.push_back(e);
    b.add_soc(rows);
}

void add_box(ProgramBuilder &b, Eigen::Index v)
{
    b.add_ge0(Aff(kSlackBox).add(v, -1.0));
    b.add_ge0(Aff(kSlackBox).add(v, 1.0));
}

std::string tag(int k, const char *base)
{
    return "c" + std::to_string(k) + "_" + base;
}

std::string tag(int k, const char *base, int i)
{
    return tag(k, base) + std::to_string(i);
}

void check_cluster_point(const ClusterPoint &cp, int n_tx, int n_clusters, int k)
{
    if (cp.w.size() != n_tx)
        throw std::invalid_argument("Error: expansion beam has wrong length in cluster " +
                                    std::to_string(k));
    if (!cp.w.allFinite())
        throw std::invalid_argument("Error: expansion beam is not finite in cluster " +
                                    std::to_string(k));
    const double slacks[] = {cp.m1, cp.m2, cp.m3, cp.l1, cp.l2, cp.l3, cp.l4};
    for (double s : slacks)
        if (!std::isfinite(s) || std::abs(s) > kSlackBox)
            throw std::invalid_argument("Error: expansion slack out of range in cluster " +
                                        std::to_string(k));
    if (n_clusters > 1)
    {
        if (cp.n.size() != n_clusters)
            throw std::invalid_argument("Error: cross-gain slack vector has wrong length in cluster " +
                                        std::to_string(k));
        for (Eigen::Index j = 0; j < cp.n.size(); ++j)
        {
            if (j == k)
                continue;
            if (!std::isfinite(cp.n(j)) || std::abs(cp.n(j)) > kSlackBox)
                throw std::invalid_argument("Error: cross-gain slack out of range in cluster " +
                                            std::to_string(k));
        }
    }
}

void check_assignment(const ClusterAssignment &asg, const SystemConfig &cfg)
{
    int nc = asg.n_clusters();
    if (nc < 1)
        throw std::invalid_argument("Error: cluster assignment is empty");
    if (nc != cfg.n_clusters)
        throw std::invalid_argument("Error: cluster assignment size disagrees with the configuration");
    for (int k = 0; k < nc; ++k)
    {
        if (asg.clusters[static_cast<size_t>(k)].h1.size() != cfg.n_tx ||
            asg.clusters[static_cast<size_t>(k)].h2.size() != cfg.n_tx)
            throw std::invalid_argument("Error: channel length disagrees with n_tx in cluster " +
                                        std::to_string(k));
    }
}

void check_sca_config(const ScaConfig &sca)
{
    if (!(sca.step > 0.0) || sca.step > 1.0)
        throw std::invalid_argument("Error: blend step must lie in (0, 1]");
    if (!(sca.tol_bits > 0.0))
        throw std::invalid_argument("Error: stopping tolerance must be positive");
    if (sca.max_iterations < 1)
        throw std::invalid_argument("Error: iteration cap must be at least 1");
    if (!(sca.subproblem_tol > 0.0))
        throw std::invalid_argument("Error: subproblem tolerance must be positive");
}

double step_norm_sq(const ClusterPoint &a, const ClusterPoint &s, double g)
{
    double acc = g * g * (s.w - a.w).squaredNorm();
    const double da[] = {s.m1 - a.m1, s.m2 - a.m2, s.m3 - a.m3, s.l1 - a.l1,
                         s.l2 - a.l2, s.l3 - a.l3, s.l4 - a.l4};
    for (double d : da)
        acc += g * g * d * d;
    acc += g * g * (s.n - a.n).squaredNorm();
    return acc;
}

double log_clamped(double v)
{
    return std::log(std::max(v, kDegenerate));
}

// Exact lifted coordinates of a physical operating point. Gains and powers
// are clamped away from zero so a transiently degenerate iterate softens the
// nearby minorants instead of aborting the outer loop.
ClusterPoint lift_cluster(const CVec &w, double p1, double p2, const CVec &h1, const CVec &h2)
{
    ClusterPoint cp;
    cp.w = w;
    double g1 = std::norm(h1.dot(w));
    double g2 = std::norm(h2.dot(w));
    cp.m1 = log_clamped(g1);
    cp.m2 = log_clamped(g2);
    cp.m3 = log_clamped(g1 + g2);
    cp.l1 = log_clamped(p1);
    cp.l2 = cp.l1;
    cp.l3 = log_clamped(p2);
    cp.l4 = log_clamped(p1 + p2);
    return cp;
}

ScaPoint lift_point(const std::vector<CVec> &beams, const RVec &p1, const RVec &p2,
                    const ClusterAssignment &asg)
{
    int nc = asg.n_clusters();
    ScaPoint pt;
    pt.clusters.resize(static_cast<size_t>(nc));
    for (int k = 0; k < nc; ++k)
    {
        const Cluster &cl = asg.clusters[static_cast<size_t>(k)];
        ClusterPoint &cp = pt.clusters[static_cast<size_t>(k)];
        cp = lift_cluster(beams[static_cast<size_t>(k)], p1(k), p2(k), cl.h1, cl.h2);
        cp.n = RVec::Zero(nc);
        for (int j = 0; j < nc; ++j)
        {
            if (j == k)
                continue;
            const CVec &wj = beams[static_cast<size_t>(j)];
            double v = (j < k) ? std::norm(cl.h1.dot(wj)) + std::norm(cl.h2.dot(wj))
                               : std::norm(cl.h2.dot(wj));
            cp.n(j) = log_clamped(v);
        }
    }
    return pt;
}

struct JointExtract
{
    std::vector<CVec> beams;
    RVec p1;
    RVec p2;
    RVec r2;
    ScaPoint point;
};

JointExtract extract_joint(const ScaProgram &sp, const RVec &x, int nc, int nt)
{
    JointExtract e;
    e.beams.resize(static_cast<size_t>(nc));
    e.p1 = RVec(nc);
    e.p2 = RVec(nc);
    e.r2 = RVec(nc);
    e.point.clusters.resize(static_cast<size_t>(nc));
    for (int k = 0; k < nc; ++k)
    {
        const ClusterVars &cv = sp.vars[static_cast<size_t>(k)];
        CVec w(nt);
        for (int i = 0; i < nt; ++i)
            w(i) = std::complex<double>(x(cv.w_re[static_cast<size_t>(i)]),
                                        x(cv.w_im[static_cast<size_t>(i)]));
        e.beams[static_cast<size_t>(k)] = w;
        e.p1(k) = x(cv.p1);
        e.p2(k) = x(cv.p2);
        e.r2(k) = x(cv.r2);
        ClusterPoint &cp = e.point.clusters[static_cast<size_t>(k)];
        cp.w = w;
        cp.m1 = x(cv.m1);
        cp.m2 = x(cv.m2);
        cp.m3 = x(cv.m3);
        cp.l1 = x(cv.l1);
        cp.l2 = x(cv.l2);
        cp.l3 = x(cv.l3);
        cp.l4 = x(cv.l4);
        cp.n = RVec::Zero(nc);
        for (int j = 0; j < nc; ++j)
            if (j != k)
                cp.n(j) = x(cv.n[static_cast<size_t>(j)]);
    }
    return e;
}

// Adds the variables, constraints and anchor entries shared by the joint and
// the greedy subproblem for one cluster: the beam block, the rate variable,
// both powers, the in-cluster slacks, and every constraint that touches only
// them. Cross-cluster content is layered on by the callers.
struct ClusterCore
{
    Eigen::Index ss0 = -1; // epigraph of 2^r p1 gain term, strong side
    Eigen::Index ss1 = -1; // epigraph of 2^r sigma^2, strong side
    Eigen::Index ws_main = -1; // epigraph of 2^r p1 gain term, weak side
};

void add_named_cluster_vars(ProgramBuilder &b, ClusterVars &cv, int k, int nt, bool with_l4)
{
    cv.w_re.resize(static_cast<size_t>(nt));
    cv.w_im.resize(static_cast<size_t>(nt));
    for (int i = 0; i < nt; ++i)
        cv.w_re[static_cast<size_t>(i)] = b.add_var(tag(k, "wre", i));
    for (int i = 0; i < nt; ++i)
        cv.w_im[static_cast<size_t>(i)] = b.add_var(tag(k, "wim", i));
    cv.r2 = b.add_var(tag(k, "r2"));
    cv.p1 = b.add_var(tag(k, "p1"));
    cv.p2 = b.add_var(tag(k, "p2"));
    cv.m1 = b.add_var(tag(k, "m1"));
    cv.m2 = b.add_var(tag(k, "m2"));
    cv.m3 = b.add_var(tag(k, "m3"));
    cv.l1 = b.add_var(tag(k, "l1"));
    cv.l2 = b.add_var(tag(k, "l2"));
    cv.l3 = b.add_var(tag(k, "l3"));
    if (with_l4)
        cv.l4 = b.add_var(tag(k, "l4"));
}

// In-cluster constraints common to both subproblems. strong_target is the
// right-hand side of the strong SNR floor; h1/h2 are the cluster channels.
void add_cluster_core(ProgramBuilder &b, const ClusterVars &cv, const ClusterCore &core,
                      const ClusterPoint &cp, const CVec &h1, const CVec &h2,
                      double strong_target, double noise_var)
{
    // Strong SNR floor: the product p1 |h1^H w|^2 must reach the target.
    Aff snr = f_aff({{cv.l1, 1.0}, {cv.m1, 1.0}}, cp.l1 + cp.m1);
    snr.add_const(-strong_target);
    b.add_ge0(snr);

    // l2 is an upper log of p1 (interference role), l1 a lower log.
    Aff cover = f_aff({{cv.l2, 1.0}}, cp.l2);
    cover.add(cv.p1, -1.0);
    b.add_ge0(cover);

    // Strong-side decodability of the shared layer:
    // 2^r (p1 G1 + sigma^2) <= sigma^2 + p1 G1 + p2 G1 in lifted form.
    Aff ss(noise_var);
    add_into(ss, f_aff({{cv.l2, 1.0}, {cv.m1, 1.0}}, cp.l2 + cp.m1));
    add_into(ss, f_aff({{cv.l3, 1.0}, {cv.m1, 1.0}}, cp.l3 + cp.m1));
    ss.add(core.ss0, -1.0).add(core.ss1, -1.0);
    b.add_ge0(ss);

    // Slack boxes and the rate band.
    add_box(b, cv.m1);
    add_box(b, cv.m2);
    add_box(b, cv.m3);
    add_box(b, cv.l1);
    add_box(b, cv.l2);
    add_box(b, cv.l3);
    if (cv.l4 >= 0)
        add_box(b, cv.l4);
    b.add_ge0(Aff().add(cv.r2, 1.0));
    b.add_ge0(Aff(kSlackBox).add(cv.r2, -1.0));

    // Unit beam power.
    std::vector<Aff> nrm;
    nrm.reserve(1 + cv.w_re.size() + cv.w_im.size());
    nrm.push_back(Aff(1.0));
    for (Eigen::Index v : cv.w_re)
        nrm.push_back(Aff().add(v, 1.0));
    for (Eigen::Index v : cv.w_im)
        nrm.push_back(Aff().add(v, 1.0));
    b.add_soc(nrm);

    // Own-beam quadratic through the cluster Gram matrix:
    // |h1^H w|^2 + |h2^H w|^2 <= exp(m3) via its minorant.
    std::vector<Aff> quad{re_inner(h1, cv.w_re, cv.w_im), im_inner(h1, cv.w_re, cv.w_im),
                          re_inner(h2, cv.w_re, cv.w_im), im_inner(h2, cv.w_re, cv.w_im)};
    add_quad_le(b, quad, f_aff({{cv.m3, 1.0}}, cp.m3));

    // Exponential-cone rows tying slacks to the quantities they log.
    b.add_exp(Aff().add(cv.l1, 1.0), Aff(1.0), Aff().add(cv.p1, 1.0));
    b.add_exp(Aff().add(cv.l3, 1.0), Aff(1.0), Aff().add(cv.p2, 1.0));
    b.add_exp(Aff().add(cv.m1, 1.0), Aff(1.0), g_aff(h1, cp.w, cv.w_re, cv.w_im));
    b.add_exp(Aff().add(cv.m2, 1.0), Aff(1.0), g_aff(h2, cp.w, cv.w_re, cv.w_im));

    Aff xs0;
    xs0.add(cv.r2, kLn2).add(cv.l2, 1.0).add(cv.m1, 1.0);
    b.add_exp(xs0, Aff(1.0), Aff().add(core.ss0, 1.0));
    Aff xs1(std::log(noise_var));
    xs1.add(cv.r2, kLn2);
    b.add_exp(xs1, Aff(1.0), Aff().add(core.ss1, 1.0));

    Aff xwm;
    xwm.add(cv.r2, kLn2).add(cv.l2, 1.0).add(cv.m2, 1.0);
    b.add_exp(xwm, Aff(1.0), Aff().add(core.ws_main, 1.0));
}

// Anchor entries shared by both subproblems. The anchor is the expansion
// point itself with the rate variable at zero; every minorant is exact
// there, so the point satisfies the emitted constraints.
void fill_cluster_anchor(RVec &x, const ClusterVars &cv, const ClusterCore &core,
                         const ClusterPoint &cp, double noise_var)
{
    for (size_t i = 0; i < cv.w_re.size(); ++i)
    {
        x(cv.w_re[i]) = cp.w(static_cast<Eigen::Index>(i)).real();
        x(cv.w_im[i]) = cp.w(static_cast<Eigen::Index>(i)).imag();
    }
    x(cv.r2) = 0.0;
    x(cv.p1) = std::exp(cp.l1);
    x(cv.p2) = std::exp(cp.l3);
    x(cv.m1) = cp.m1;
    x(cv.m2) = cp.m2;
    x(cv.m3) = cp.m3;
    x(cv.l1) = cp.l1;
    x(cv.l2) = cp.l2;
    x(cv.l3) = cp.l3;
    if (cv.l4 >= 0)
        x(cv.l4) = cp.l4;
    x(core.ss0) = std::exp(cp.l2 + cp.m1);
    x(core.ss1) = noise_var;
    x(core.ws_main) = std::exp(cp.l2 + cp.m2);
}

CMat earlier_strong_matrix(const ClusterAssignment &asg, int k)
{
    std::vector<CVec> cols;
    cols.reserve(static_cast<size_t>(k));
    for (int j = 0; j < k; ++j)
        cols.push_back(asg.clusters[static_cast<size_t>(j)].h1);
    Eigen::Index nt = asg.clusters[0].h1.size();
    return stack_columns(cols, nt);
}

} // namespace

double taylor_exp(double x, double xbar)
{
    return std::exp(xbar) * (1.0 + x - xbar);
}

double taylor_quad(const CVec &c, const CVec &d, const CVec &dbar)
{
    if (c.size() != d.size() || c.size() != dbar.size())
        throw std::invalid_argument("Error: taylor_quad dimension mismatch");
    std::complex<double> cd = c.dot(dbar);
    std::complex<double> cw = c.dot(d);
    return 2.0 * (std::conj(cd) * cw).real() - std::norm(cd);
}

void ScaPoint::validate(int n_tx, int n_clusters) const
{
    if (static_cast<int>(clusters.size()) != n_clusters)
        throw std::invalid_argument("Error: expansion point has wrong cluster count");
    for (int k = 0; k < n_clusters; ++k)
        check_cluster_point(clusters[static_cast<size_t>(k)], n_tx, n_clusters, k);
}

std::string to_string(ConstraintFamily family)
{
    switch (family)
    {
    case ConstraintFamily::strong_snr:
        return "strong_snr";
    case ConstraintFamily::rate_strong_side:
        return "rate_strong_side";
    case ConstraintFamily::rate_weak_side:
        return "rate_weak_side";
    case ConstraintFamily::null_space:
        return "null_space";
    case ConstraintFamily::beam_norm:
        return "beam_norm";
    case ConstraintFamily::total_power:
        return "total_power";
    }
    return "unknown";
}

double FeasibilityReport::max_violation() const
{
    double m = strong_snr;
    m = std::max(m, rate_strong_side);
    m = std::max(m, rate_weak_side);
    m = std::max(m, null_space);
    m = std::max(m, beam_norm);
    m = std::max(m, total_power);
    return m;
}

ConstraintFamily FeasibilityReport::worst_family() const
{
    const std::pair<ConstraintFamily, double> all[] = {
        {ConstraintFamily::strong_snr, strong_snr},
        {ConstraintFamily::rate_strong_side, rate_strong_side},
        {ConstraintFamily::rate_weak_side, rate_weak_side},
        {ConstraintFamily::null_space, null_space},
        {ConstraintFamily::beam_norm, beam_norm},
        {ConstraintFamily::total_power, total_power},
    };
    ConstraintFamily worst = ConstraintFamily::strong_snr;
    double m = -std::numeric_limits<double>::infinity();
    for (const auto &[fam, v] : all)
    {
        if (v > m)
        {
            m = v;
            worst = fam;
        }
    }
    return worst;
}

ScaProgram build_p1(const ScaPoint &point, const ClusterAssignment &asg, const SystemConfig &cfg)
{
    check_assignment(asg, cfg);
    int nc = asg.n_clusters();
    int nt = cfg.n_tx;
    point.validate(nt, nc);

    ProgramBuilder b;
    ScaProgram out;
    out.vars.resize(static_cast<size_t>(nc));

    for (int k = 0; k < nc; ++k)
    {
        ClusterVars &cv = out.vars[static_cast<size_t>(k)];
        add_named_cluster_vars(b, cv, k, nt, true);
        cv.n.assign(static_cast<size_t>(nc), -1);
        for (int j = 0; j < nc; ++j)
            if (j != k)
                cv.n[static_cast<size_t>(j)] = b.add_var(tag(k, "n", j));
    }
    out.named_count = b.num_vars();

    std::vector<ClusterCore> core(static_cast<size_t>(nc));
    std::vector<std::vector<Eigen::Index>> ws_cross(static_cast<size_t>(nc));
    std::vector<Eigen::Index> ws_sigma(static_cast<size_t>(nc));
    for (int k = 0; k < nc; ++k)
    {
        core[static_cast<size_t>(k)].ss0 = b.add_var(tag(k, "uss0"));
        core[static_cast<size_t>(k)].ss1 = b.add_var(tag(k, "uss1"));
        core[static_cast<size_t>(k)].ws_main = b.add_var(tag(k, "uwsm"));
        ws_cross[static_cast<size_t>(k)].assign(static_cast<size_t>(nc), -1);
        for (int j = 0; j < nc; ++j)
            if (j != k)
                ws_cross[static_cast<size_t>(k)][static_cast<size_t>(j)] = b.add_var(tag(k, "uws", j));
        ws_sigma[static_cast<size_t>(k)] = b.add_var(tag(k, "uwss"));
    }

    double nv = cfg.noise_var;
    for (int k = 0; k < nc; ++k)
    {
        const ClusterVars &cv = out.vars[static_cast<size_t>(k)];
        const ClusterPoint &cp = point.clusters[static_cast<size_t>(k)];
        const CVec &h1 = asg.clusters[static_cast<size_t>(k)].h1;
        const CVec &h2 = asg.clusters[static_cast<size_t>(k)].h2;

        b.objective_term(cv.r2, -1.0);

        // Beams of later clusters are silent at earlier strong users.
        for (int j = 0; j < k; ++j)
        {
            const CVec &hj = asg.clusters[static_cast<size_t>(j)].h1;
            b.add_eq(re_inner(hj, cv.w_re, cv.w_im));
            b.add_eq(im_inner(hj, cv.w_re, cv.w_im));
        }

        double target = cfg.eta * nv *
                        nominal_strong_snr(h1, earlier_strong_matrix(asg, k), cfg.total_power,
                                           nc, nv);
        add_cluster_core(b, cv, core[static_cast<size_t>(k)], cp, h1, h2, target, nv);

        // Total cluster power upper log, feeding other clusters' rows.
        Aff cover4 = f_aff({{cv.l4, 1.0}}, cp.l4);
        cover4.add(cv.p1, -1.0).add(cv.p2, -1.0);
        b.add_ge0(cover4);

        // Weak-side rate: 2^r (I + sigma^2) <= sigma^2 + I + p2 G2 where I
        // collects the intra term, the absorbed residual of earlier
        // clusters through the Gram envelope, and later clusters in full.
        Aff ws(nv);
        add_into(ws, f_aff({{cv.l2, 1.0}, {cv.m2, 1.0}}, cp.l2 + cp.m2));
        for (int j = 0; j < nc; ++j)
        {
            if (j == k)
                continue;
            const ClusterVars &cj = out.vars[static_cast<size_t>(j)];
            double lj4 = point.clusters[static_cast<size_t>(j)].l4;
            Eigen::Index nkj = cv.n[static_cast<size_t>(j)];
            if (j < k)
                add_into(ws, f_aff({{cv.m3, 1.0}, {cv.m1, -1.0}, {cj.l4, 1.0}, {nkj, 1.0}},
                                   cp.m3 - cp.m1 + lj4 + cp.n(j)));
            else
                add_into(ws, f_aff({{cj.l4, 1.0}, {nkj, 1.0}}, lj4 + cp.n(j)));
        }
        add_into(ws, f_aff({{cv.l3, 1.0}, {cv.m2, 1.0}}, cp.l3 + cp.m2));
        ws.add(core[static_cast<size_t>(k)].ws_main, -1.0);
        for (int j = 0; j < nc; ++j)
            if (j != k)
                ws.add(ws_cross[static_cast<size_t>(k)][static_cast<size_t>(j)], -1.0);
        ws.add(ws_sigma[static_cast<size_t>(k)], -1.0);
        b.add_ge0(ws);

        // Cross-gain slack boxes and their quadratic lower rows.
        for (int j = 0; j < nc; ++j)
        {
            if (j == k)
                continue;
            Eigen::Index nkj = cv.n[static_cast<size_t>(j)];
            add_box(b, nkj);
            const ClusterVars &cj = out.vars[static_cast<size_t>(j)];
            if (j < k)
            {
                std::vector<Aff> quad{re_inner(h1, cj.w_re, cj.w_im), im_inner(h1, cj.w_re, cj.w_im),
                                      re_inner(h2, cj.w_re, cj.w_im), im_inner(h2, cj.w_re, cj.w_im)};
                add_quad_le(b, quad, f_aff({{nkj, 1.0}}, cp.n(j)));
            }
            else
            {
                std::vector<Aff> quad{re_inner(h2, cj.w_re, cj.w_im), im_inner(h2, cj.w_re, cj.w_im)};
                add_quad_le(b, quad, f_aff({{nkj, 1.0}}, cp.n(j)));
            }
        }

        // Weak-side epigraphs for the exponentials on the 2^r side.
        for (int j = 0; j < nc; ++j)
        {
            if (j == k)
                continue;
            const ClusterVars &cj = out.vars[static_cast<size_t>(j)];
            Eigen::Index nkj = cv.n[static_cast<size_t>(j)];
            Aff x;
            x.add(cv.r2, kLn2);
            if (j < k)
                x.add(cv.m3, 1.0).add(cv.m1, -1.0);
            x.add(cj.l4, 1.0).add(nkj, 1.0);
            b.add_exp(x, Aff(1.0),
                      Aff().add(ws_cross[static_cast<size_t>(k)][static_cast<size_t>(j)], 1.0));
        }
        Aff xsig(std::log(nv));
        xsig.add(cv.r2, kLn2);
        b.add_exp(xsig, Aff(1.0), Aff().add(ws_sigma[static_cast<size_t>(k)], 1.0));
    }

    Aff budget(cfg.total_power);
    for (int k = 0; k < nc; ++k)
        budget.add(out.vars[static_cast<size_t>(k)].p1, -1.0)
            .add(out.vars[static_cast<size_t>(k)].p2, -1.0);
    b.add_ge0(budget);

    out.program = b.build();

    out.anchor = RVec::Zero(out.program.n);
    for (int k = 0; k < nc; ++k)
    {
        const ClusterVars &cv = out.vars[static_cast<size_t>(k)];
        const ClusterPoint &cp = point.clusters[static_cast<size_t>(k)];
        fill_cluster_anchor(out.anchor, cv, core[static_cast<size_t>(k)], cp, nv);
        for (int j = 0; j < nc; ++j)
        {
            if (j == k)
                continue;
            out.anchor(cv.n[static_cast<size_t>(j)]) = cp.n(j);
            double lj4 = point.clusters[static_cast<size_t>(j)].l4;
            double xj = (j < k) ? cp.m3 - cp.m1 + lj4 + cp.n(j) : lj4 + cp.n(j);
            out.anchor(ws_cross[static_cast<size_t>(k)][static_cast<size_t>(j)]) = std::exp(xj);
        }
        out.anchor(ws_sigma[static_cast<size_t>(k)]) = nv;
    }
    return out;
}

ScaProgram build_p2(const std::vector<CVec> &strong_channels, int k, const CVec &h_k2,
                    const std::vector<CVec> &beams_before, const std::vector<CVec> &estimates_after,
                    const ClusterPoint &point, const SystemConfig &cfg)
{
    int nc = cfg.n_clusters;
    int nt = cfg.n_tx;
    if (static_cast<int>(strong_channels.size()) != nc)
        throw std::invalid_argument("Error: strong channel count disagrees with the configuration");
    if (k < 0 || k >= nc)
        throw std::invalid_argument("Error: cluster index out of range");
    if (static_cast<int>(beams_before.size()) != k)
        throw std::invalid_argument("Error: expected one designed beam per earlier cluster");
    if (static_cast<int>(estimates_after.size()) != nc - 1 - k)
        throw std::invalid_argument("Error: expected one stand-in beam per later cluster");
    if (h_k2.size() != nt)
        throw std::invalid_argument("Error: weak channel length disagrees with n_tx");
    check_cluster_point(point, nt, nc, k);

    const CVec &h1 = strong_channels[static_cast<size_t>(k)];
    double nv = cfg.noise_var;
    double share = cfg.total_power / nc;

    // Fixed interference constants: earlier clusters through the Gram
    // envelope at uniform power, later clusters in full through stand-ins.
    double c_lt = 0.0;
    for (const CVec &wj : beams_before)
        c_lt += share * (std::norm(h1.dot(wj)) + std::norm(h_k2.dot(wj)));
    double c_gt = 0.0;
    for (const CVec &wj : estimates_after)
        c_gt += share * std::norm(h_k2.dot(wj));
    double sig = nv + c_gt;
    bool with_lt = c_lt > kDegenerate;

    ProgramBuilder b;
    ScaProgram out;
    out.vars.resize(1);
    ClusterVars &cv = out.vars[0];
    add_named_cluster_vars(b, cv, k, nt, false);
    out.named_count = b.num_vars();

    ClusterCore core;
    core.ss0 = b.add_var(tag(k, "uss0"));
    core.ss1 = b.add_var(tag(k, "uss1"));
    core.ws_main = b.add_var(tag(k, "uwsm"));
    Eigen::Index ws_lt = with_lt ? b.add_var(tag(k, "uwsl")) : -1;
    Eigen::Index ws_sigma = b.add_var(tag(k, "uwss"));

    b.objective_term(cv.r2, -1.0);

    for (int j = 0; j < k; ++j)
    {
        const CVec &hj = strong_channels[static_cast<size_t>(j)];
        b.add_eq(re_inner(hj, cv.w_re, cv.w_im));
        b.add_eq(im_inner(hj, cv.w_re, cv.w_im));
    }

    std::vector<CVec> earlier(strong_channels.begin(), strong_channels.begin() + k);
    double target = cfg.eta * nv *
                    nominal_strong_snr(h1, stack_columns(earlier, nt), cfg.total_power, nc, nv);
    add_cluster_core(b, cv, core, point, h1, h_k2, target, nv);

    // Per-cluster power cap in place of the global budget.
    Aff cap(share);
    cap.add(cv.p1, -1.0).add(cv.p2, -1.0);
    b.add_ge0(cap);

    // Weak-side rate with the fixed surroundings.
    Aff ws(sig);
    add_into(ws, f_aff({{cv.l2, 1.0}, {cv.m2, 1.0}}, point.l2 + point.m2));
    if (with_lt)
        add_into(ws, f_aff({{cv.m3, 1.0}, {cv.m1, -1.0}}, point.m3 - point.m1), c_lt);
    add_into(ws, f_aff({{cv.l3, 1.0}, {cv.m2, 1.0}}, point.l3 + point.m2));
    ws.add(core.ws_main, -1.0);
    if (with_lt)
        ws.add(ws_lt, -1.0);
    ws.add(ws_sigma, -1.0);
    b.add_ge0(ws);

    if (with_lt)
    {
        Aff x(std::log(c_lt));
        x.add(cv.r2, kLn2).add(cv.m3, 1.0).add(cv.m1, -1.0);
        b.add_exp(x, Aff(1.0), Aff().add(ws_lt, 1.0));
    }
    Aff xsig(std::log(sig));
    xsig.add(cv.r2, kLn2);
    b.add_exp(xsig, Aff(1.0), Aff().add(ws_sigma, 1.0));

    out.program = b.build();

    out.anchor = RVec::Zero(out.program.n);
    fill_cluster_anchor(out.anchor, cv, core, point, nv);
    if (with_lt)
        out.anchor(ws_lt) = c_lt * std::exp(point.m3 - point.m1);
    out.anchor(ws_sigma) = sig;
    return out;
}

ScaPoint alpha_from(const std::vector<CVec> &beams, const RVec &p1, const RVec &p2,
                    const ClusterAssignment &asg, const SystemConfig &cfg)
{
    check_assignment(asg, cfg);
    int nc = asg.n_clusters();
    if (static_cast<int>(beams.size()) != nc || p1.size() != nc || p2.size() != nc)
        throw std::invalid_argument("Error: beam or power count disagrees with the assignment");

    ScaPoint pt;
    pt.clusters.resize(static_cast<size_t>(nc));
    for (int k = 0; k < nc; ++k)
    {
        const CVec &h1 = asg.clusters[static_cast<size_t>(k)].h1;
        const CVec &h2 = asg.clusters[static_cast<size_t>(k)].h2;
        const CVec &w = beams[static_cast<size_t>(k)];
        if (w.size() != cfg.n_tx)
            throw std::invalid_argument("Error: beam length disagrees with n_tx");
        ClusterPoint &cp = pt.clusters[static_cast<size_t>(k)];
        cp.w = w;
        double g1 = std::norm(h1.dot(w));
        double g2 = std::norm(h2.dot(w));
        cp.m1 = log_checked(g1, "strong-channel gain");
        cp.m2 = log_checked(g2, "weak-channel gain");
        cp.m3 = log_checked(g1 + g2, "cluster Gram quadratic");
        cp.l1 = log_checked(p1(k), "strong layer power");
        cp.l2 = cp.l1;
        cp.l3 = log_checked(p2(k), "weak layer power");
        cp.l4 = log_checked(p1(k) + p2(k), "cluster power");
        cp.n = RVec::Zero(nc);
        for (int j = 0; j < nc; ++j)
        {
            if (j == k)
                continue;
            const CVec &wj = beams[static_cast<size_t>(j)];
            double v = (j < k) ? std::norm(h1.dot(wj)) + std::norm(h2.dot(wj))
                               : std::norm(h2.dot(wj));
            cp.n(j) = log_checked(v, "cross-cluster gain");
        }
    }
    pt.validate(cfg.n_tx, nc);
    return pt;
}

ScaPoint init_alpha(const ClusterAssignment &asg, const SystemConfig &cfg)
{
    check_assignment(asg, cfg);
    int nc = asg.n_clusters();
    std::vector<CVec> strongs;
    strongs.reserve(static_cast<size_t>(nc));
    for (int k = 0; k < nc; ++k)
        strongs.push_back(asg.clusters[static_cast<size_t>(k)].h1);
    std::vector<CVec> beams = matched_filter_estimates(strongs);
    double share = cfg.total_power / nc;
    RVec p1 = RVec::Constant(nc, cfg.eta * share);
    RVec p2 = RVec::Constant(nc, (1.0 - cfg.eta) * share);
    return alpha_from(beams, p1, p2, asg, cfg);
}

namespace
{

void throw_for_status(int iteration, const SolverResult &res, double eta, double budget)
{
    if (res.status == SolveStatus::infeasible && eta > 1.0)
    {
        std::ostringstream os;
        os << "Error: strong SNR floors need " << eta * budget
           << " of transmit power but the budget is " << budget;
        throw ScaInfeasibleError(iteration, eta * budget, budget, os.str());
    }
    std::ostringstream os;
    os << "Error: subproblem solve failed at iteration " << iteration << " with status "
       << to_string(res.status);
    throw ScaSubproblemError(iteration, res.status, os.str());
}

} // namespace

BeamPowerSolution solve_joint(const ClusterAssignment &asg, const SystemConfig &cfg,
                              const ScaConfig &sca, const ScaPoint &init)
{
    check_assignment(asg, cfg);
    check_sca_config(sca);

    // The floors alone pin down feasibility: matched-filter beams meet each
    // strong SNR floor with exactly eta * P / N_c, and no beam does better,
    // so a budget short of eta * P cannot be met.
    if (cfg.eta * cfg.total_power > cfg.total_power * (1.0 + 1e-12))
    {
        std::ostringstream os;
        os << "Error: strong SNR floors need " << cfg.eta * cfg.total_power
           << " of transmit power but the budget is " << cfg.total_power;
        throw ScaInfeasibleError(0, cfg.eta * cfg.total_power, cfg.total_power, os.str());
    }

    int nc = asg.n_clusters();
    int nt = cfg.n_tx;
    ScaPoint alpha = init;
    SolverOptions opt;
    opt.tol = sca.subproblem_tol;

    std::vector<double> history;
    JointExtract best;
    double prev = -std::numeric_limits<double>::infinity();
    for (int it = 0; it < sca.max_iterations; ++it)
    {
        ScaProgram sp = build_p1(alpha, asg, cfg);
        SolverResult res = solve(sp.program, sp.anchor, opt);
        if (res.status != SolveStatus::optimal)
            throw_for_status(it, res, cfg.eta, cfg.total_power);

        double obj = -res.objective;
        history.push_back(obj);
        JointExtract ex = extract_joint(sp, res.x, nc, nt);

        // Blend in the physical coordinates and re-lift the slacks exactly.
        // Carrying raw subproblem slacks forward would let coordinates no
        // rate row pins down (a lone cluster's own-Gram log, for instance)
        // drift toward the slack box and blow up the next linearization.
        std::vector<CVec> bw(static_cast<size_t>(nc));
        RVec bp1(nc), bp2(nc);
        for (int c = 0; c < nc; ++c)
        {
            const ClusterPoint &a = alpha.clusters[static_cast<size_t>(c)];
            bw[static_cast<size_t>(c)] =
                (1.0 - sca.step) * a.w + sca.step * ex.beams[static_cast<size_t>(c)];
            bp1(c) = (1.0 - sca.step) * std::exp(a.l1) + sca.step * ex.p1(c);
            bp2(c) = (1.0 - sca.step) * std::exp(a.l3) + sca.step * ex.p2(c);
        }
        ScaPoint next = lift_point(bw, bp1, bp2, asg);

        if (sca.trace)
        {
            BeamPowerSolution probe;
            probe.beams = ex.beams;
            probe.p1 = ex.p1;
            probe.p2 = ex.p2;
            probe.rate2 = ex.r2;
            FeasibilityReport rep = verify_original_feasibility(probe, asg, cfg);
            double step_sq = 0.0;
            for (int c = 0; c < nc; ++c)
                step_sq += step_norm_sq(alpha.clusters[static_cast<size_t>(c)],
                                        next.clusters[static_cast<size_t>(c)], 1.0);
            *sca.trace << it << '\t' << obj << '\t' << rep.max_violation() << '\t'
                       << std::sqrt(step_sq) << '\n';
        }

        alpha = std::move(next);
        best = std::move(ex);

        if (it >= 1 && obj - prev < sca.tol_bits)
            break;
        prev = obj;
    }

    BeamPowerSolution sol;
    sol.beams = std::move(best.beams);
    sol.p1 = std::move(best.p1);
    sol.p2 = std::move(best.p2);
    sol.rate2 = std::move(best.r2);
    sol.objective = history.back();
    sol.iterations = static_cast<int>(history.size());
    sol.history = std::move(history);

    std::vector<CVec> strongs, weaks;
    strongs.reserve(static_cast<size_t>(nc));
    weaks.reserve(static_cast<size_t>(nc));
    for (int k = 0; k < nc; ++k)
    {
        strongs.push_back(asg.clusters[static_cast<size_t>(k)].h1);
        weaks.push_back(asg.clusters[static_cast<size_t>(k)].h2);
    }
    RVec tot = sol.p1 + sol.p2;
    sol.rate2_exact = RVec(nc);
    for (int k = 0; k < nc; ++k)
    {
        double ik = exact_interference(k, strongs, weaks, sol.beams, sol.p1, tot);
        sol.rate2_exact(k) =
            weak_rate(strongs[static_cast<size_t>(k)], weaks[static_cast<size_t>(k)],
                      sol.beams[static_cast<size_t>(k)], sol.p1(k), sol.p2(k), ik, cfg.noise_var)
                .rate;
    }

    FeasibilityReport rep = verify_original_feasibility(sol, asg, cfg);
    if (rep.max_violation() > 1e-6)
    {
        std::ostringstream os;
        os << "Error: designed point violates " << to_string(rep.worst_family()) << " by "
           << rep.max_violation();
        throw std::runtime_error(os.str());
    }
    return sol;
}

BeamPowerSolution solve_joint(const ClusterAssignment &asg, const SystemConfig &cfg,
                              const ScaConfig &sca)
{
    check_assignment(asg, cfg);
    check_sca_config(sca);
    if (cfg.eta * cfg.total_power > cfg.total_power * (1.0 + 1e-12))
    {
        std::ostringstream os;
        os << "Error: strong SNR floors need " << cfg.eta * cfg.total_power
           << " of transmit power but the budget is " << cfg.total_power;
        throw ScaInfeasibleError(0, cfg.eta * cfg.total_power, cfg.total_power, os.str());
    }
    return solve_joint(asg, cfg, sca, init_alpha(asg, cfg));
}

GreedyClusterResult solve_greedy_cluster(const std::vector<CVec> &strong_channels, int k,
                                         const CVec &h_k2, const std::vector<CVec> &beams_before,
                                         const std::vector<CVec> &estimates_after,
                                         const SystemConfig &cfg, const ScaConfig &sca)
{
    check_sca_config(sca);
    int nc = cfg.n_clusters;
    int nt = cfg.n_tx;
    double share = cfg.total_power / nc;
    if (cfg.eta * share > share * (1.0 + 1e-12))
    {
        std::ostringstream os;
        os << "Error: the strong SNR floor needs " << cfg.eta * share
           << " of cluster power but the cluster budget is " << share;
        throw ScaInfeasibleError(0, cfg.eta * share, share, os.str());
    }
    if (static_cast<int>(strong_channels.size()) != nc)
        throw std::invalid_argument("Error: strong channel count disagrees with the configuration");
    if (k < 0 || k >= nc)
        throw std::invalid_argument("Error: cluster index out of range");

    const CVec &h1 = strong_channels[static_cast<size_t>(k)];
    std::vector<CVec> earlier(strong_channels.begin(), strong_channels.begin() + k);
    CVec res = proj_complement(stack_columns(earlier, nt), h1);
    double rn = res.norm();
    if (rn < 1e-14)
        throw std::runtime_error("Error: strong channel lies in the span of earlier clusters");
    CVec w0 = res / rn;

    ClusterPoint cp;
    cp.w = w0;
    double g1 = std::norm(h1.dot(w0));
    double g2 = std::norm(h_k2.dot(w0));
    cp.m1 = log_checked(g1, "strong-channel gain");
    cp.m2 = log_checked(g2, "weak-channel gain");
    cp.m3 = log_checked(g1 + g2, "cluster Gram quadratic");
    double p1 = cfg.eta * share;
    double p2 = (1.0 - cfg.eta) * share;
    cp.l1 = log_checked(p1, "strong layer power");
    cp.l2 = cp.l1;
    cp.l3 = log_checked(p2, "weak layer power");
    cp.l4 = 0.0;
    cp.n = RVec::Zero(nc);

    SolverOptions opt;
    opt.tol = sca.subproblem_tol;

    GreedyClusterResult out;
    std::vector<double> history;
    double prev = -std::numeric_limits<double>::infinity();
    for (int it = 0; it < sca.max_iterations; ++it)
    {
        ScaProgram sp = build_p2(strong_channels, k, h_k2, beams_before, estimates_after, cp, cfg);
        SolverResult r = solve(sp.program, sp.anchor, opt);
        if (r.status != SolveStatus::optimal)
            throw_for_status(it, r, cfg.eta, share);

        double obj = -r.objective;
        history.push_back(obj);

        const ClusterVars &cv = sp.vars[0];
        CVec w(nt);
        for (int i = 0; i < nt; ++i)
            w(i) = std::complex<double>(r.x(cv.w_re[static_cast<size_t>(i)]),
                                        r.x(cv.w_im[static_cast<size_t>(i)]));

        out.w = w;
        out.p1 = r.x(cv.p1);
        out.p2 = r.x(cv.p2);
        out.rate2 = r.x(cv.r2);

        // same physical blend-and-relift update as the joint loop
        CVec nw = (1.0 - sca.step) * cp.w + sca.step * w;
        double np1 = (1.0 - sca.step) * std::exp(cp.l1) + sca.step * out.p1;
        double np2 = (1.0 - sca.step) * std::exp(cp.l3) + sca.step * out.p2;
        ClusterPoint nxt = lift_cluster(nw, np1, np2, h1, h_k2);
        nxt.n = RVec::Zero(nc);

        if (sca.trace)
        {
            ProgramViolation pv = evaluate_violation(sp.program, r.x);
            *sca.trace << it << '\t' << obj << '\t' << pv.max_violation() << '\t'
                       << std::sqrt(step_norm_sq(cp, nxt, 1.0)) << '\n';
        }

        cp = nxt;
        if (it >= 1 && obj - prev < sca.tol_bits)
            break;
        prev = obj;
    }

    out.iterations = static_cast<int>(history.size());
    out.history = std::move(history);
    return out;
}

FeasibilityReport verify_original_feasibility(const BeamPowerSolution &sol,
                                              const ClusterAssignment &asg,
                                              const SystemConfig &cfg)
{
    check_assignment(asg, cfg);
    int nc = asg.n_clusters();
    if (static_cast<int>(sol.beams.size()) != nc || sol.p1.size() != nc || sol.p2.size() != nc ||
        sol.rate2.size() != nc)
        throw std::invalid_argument("Error: solution size disagrees with the assignment");

    std::vector<CVec> strongs, weaks;
    strongs.reserve(static_cast<size_t>(nc));
    weaks.reserve(static_cast<size_t>(nc));
    for (int k = 0; k < nc; ++k)
    {
        strongs.push_back(asg.clusters[static_cast<size_t>(k)].h1);
        weaks.push_back(asg.clusters[static_cast<size_t>(k)].h2);
    }
    RVec tot = sol.p1 + sol.p2;
    double nv = cfg.noise_var;

    FeasibilityReport rep;
    double inf = std::numeric_limits<double>::infinity();
    rep.strong_snr = -inf;
    rep.rate_strong_side = -inf;
    rep.rate_weak_side = -inf;
    rep.null_space = 0.0;
    rep.beam_norm = -inf;
    double used = 0.0;

    for (int k = 0; k < nc; ++k)
    {
        const CVec &h1 = strongs[static_cast<size_t>(k)];
        const CVec &h2 = weaks[static_cast<size_t>(k)];
        const CVec &w = sol.beams[static_cast<size_t>(k)];
        double g1 = std::norm(h1.dot(w));
        double g2 = std::norm(h2.dot(w));
        double p1 = sol.p1(k);
        double p2 = sol.p2(k);
        double r2 = sol.rate2(k);

        double target = cfg.eta * nv *
                        nominal_strong_snr(h1, earlier_strong_matrix(asg, k), cfg.total_power,
                                           nc, nv);
        rep.strong_snr = std::max(rep.strong_snr, (target - p1 * g1) / std::max(1.0, target));

        double ss = std::log2(1.0 + g1 * p2 / (g1 * p1 + nv));
        rep.rate_strong_side = std::max(rep.rate_strong_side, r2 - ss);

        double bound = interference_upper_bound(k, strongs, weaks, sol.beams, sol.p1, tot);
        double wsr = std::log2(1.0 + g2 * p2 / (bound + nv));
        rep.rate_weak_side = std::max(rep.rate_weak_side, r2 - wsr);

        for (int j = 0; j < k; ++j)
            rep.null_space =
                std::max(rep.null_space, std::abs(strongs[static_cast<size_t>(j)].dot(w)));

        rep.beam_norm = std::max(rep.beam_norm, w.norm() - 1.0);
        used += p1 + p2;
    }
    rep.total_power = (used - cfg.total_power) / std::max(1.0, cfg.total_power);
    return rep;
}

} // namespace thpnoma
