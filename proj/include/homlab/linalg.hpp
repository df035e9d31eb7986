#pragma once

#include <array>

#include <Eigen/Dense>

#include "homlab/grid.hpp"

namespace homlab {

using DynMatrix = Eigen::MatrixXd;
using DynVector = Eigen::VectorXd;

inline DynMatrix to_eigen(const Matrix& m, int d)
{
    DynMatrix out(d, d);
    for (int i = 0; i < d; ++i) {
        for (int j = 0; j < d; ++j) {
            out(i, j) = m[i][j];
        }
    }
    return out;
}

/// Ascending eigenvalues of the symmetric part of m.
inline DynVector symmetric_eigenvalues(const DynMatrix& m)
{
    const DynMatrix s = 0.5 * (m + m.transpose());
    return Eigen::SelfAdjointEigenSolver<DynMatrix>(s, Eigen::EigenvaluesOnly).eigenvalues();
}

inline double operator_norm(const DynMatrix& m)
{
    return Eigen::JacobiSVD<DynMatrix>(m).singularValues()(0);
}

}  // namespace homlab
