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

#include "thpnoma/linalg.hpp"

#include <stdexcept>

namespace thpnoma
{

CMat stack_columns(const std::vector<CVec> &cols, Eigen::Index n_rows)
{
    CMat H(n_rows, static_cast<Eigen::Index>(cols.size()));
    for (Eigen::Index c = 0; c < H.cols(); ++c)
    {
        if (cols[static_cast<size_t>(c)].size() != n_rows)
            throw std::invalid_argument("Error: stack_columns requires equal-length vectors");
        H.col(c) = cols[static_cast<size_t>(c)];
    }
    return H;
}

Eigen::Index numeric_rank(const CMat &H)
{
    if (H.cols() == 0 || H.rows() == 0)
        return 0;
    Eigen::JacobiSVD<CMat> svd(H);
    const auto &sv = svd.singularValues();
    double cutoff = 1e-10 * sv(0);
    Eigen::Index r = 0;
    for (Eigen::Index i = 0; i < sv.size(); ++i)
        if (sv(i) > cutoff)
            ++r;
    return r;
}

// Orthonormal basis of the column span of H at numerical rank.
static CMat span_basis(const CMat &H)
{
    if (H.cols() == 0)
        return CMat(H.rows(), 0);
    Eigen::JacobiSVD<CMat> svd(H, Eigen::ComputeThinU);
    const auto &sv = svd.singularValues();
    double cutoff = 1e-10 * sv(0);
    Eigen::Index r = 0;
    for (Eigen::Index i = 0; i < sv.size(); ++i)
        if (sv(i) > cutoff)
            ++r;
    return svd.matrixU().leftCols(r);
}

CVec proj_complement(const CMat &H, const CVec &v)
{
    if (H.rows() != 0 && H.rows() != v.size())
        throw std::invalid_argument("Error: proj_complement dimension mismatch");
    CMat Q = span_basis(H);
    if (Q.cols() == 0)
        return v;
    return v - Q * (Q.adjoint() * v);
}

CMat complement_basis(const CMat &H)
{
    Eigen::Index n = H.rows();
    if (H.cols() == 0)
        return CMat::Identity(n, n);
    // Full SVD: the left singular vectors beyond the numerical rank span the
    // orthogonal complement.
    Eigen::JacobiSVD<CMat> svd(H, Eigen::ComputeFullU);
    const auto &sv = svd.singularValues();
    double cutoff = 1e-10 * sv(0);
    Eigen::Index r = 0;
    for (Eigen::Index i = 0; i < sv.size(); ++i)
        if (sv(i) > cutoff)
            ++r;
    return svd.matrixU().rightCols(n - r);
}

QrLower qr_lower(const CMat &H)
{
    Eigen::Index n = H.rows(), m = H.cols();
    if (m == 0 || n < m)
        throw std::invalid_argument("Error: qr_lower requires a tall or square nonempty matrix");
    if (numeric_rank(H) < m)
        throw std::runtime_error("Error: qr_lower input is column-rank deficient");

    Eigen::HouseholderQR<CMat> qr(H);
    CMat Q = qr.householderQ() * CMat::Identity(n, m);
    CMat R = qr.matrixQR().topRows(m).triangularView<Eigen::Upper>();

    // H = Q R, so H = Q L^H with L = R^H lower triangular. Rescale by a
    // unitary diagonal to force a real positive diagonal on L.
    CMat L = R.adjoint();
    for (Eigen::Index k = 0; k < m; ++k)
    {
        std::complex<double> d = L(k, k);
        double mag = std::abs(d);
        if (mag == 0.0)
            throw std::runtime_error("Error: qr_lower input is column-rank deficient");
        std::complex<double> u = std::conj(d) / mag;
        L.col(k) *= u;
        Q.col(k) *= u;
    }
    return {Q, L};
}

} // namespace thpnoma
