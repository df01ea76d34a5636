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

#ifndef THPNOMA_LINALG_HPP
#define THPNOMA_LINALG_HPP

#include <Eigen/Dense>
#include <complex>
#include <vector>

namespace thpnoma
{

using CVec = Eigen::VectorXcd;
using CMat = Eigen::MatrixXcd;
using RVec = Eigen::VectorXd;
using RMat = Eigen::MatrixXd;

// Stack a list of column vectors (all of equal length) into a matrix.
// An empty list yields an n_rows x 0 matrix.
CMat stack_columns(const std::vector<CVec> &cols, Eigen::Index n_rows);

// Numerical rank of H using the singular-value cutoff 1e-10 * sigma_max.
Eigen::Index numeric_rank(const CMat &H);

// Orthogonal projection of v onto the orthogonal complement of the column
// span of H. Robust to rank-deficient H (the span is taken at numerical
// rank). H with zero columns returns v unchanged.
CVec proj_complement(const CMat &H, const CVec &v);

// Orthonormal basis of the orthogonal complement of the column span of H,
// returned as the columns of an H.rows() x (H.rows() - rank) matrix.
// For H with zero columns this is the identity basis.
CMat complement_basis(const CMat &H);

struct QrLower
{
    CMat Q; // H.rows() x H.cols(), orthonormal columns
    CMat L; // H.cols() x H.cols(), lower triangular, real positive diagonal
};

// Thin QR-type factorization H = Q * L^H with L lower triangular.
// The diagonal of L is normalized to be real and strictly positive, which
// makes the factorization unique and maps H = I to Q = I, L = I.
// Throws std::runtime_error if H is column-rank deficient.
QrLower qr_lower(const CMat &H);

} // namespace thpnoma

#endif
