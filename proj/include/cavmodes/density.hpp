// density.hpp — density matrices over the full product basis or one factor

#pragma once

#include <algorithm>
#include <cmath>
#include <string>

#include <Eigen/Dense>

#include "cavmodes/error.hpp"
#include "cavmodes/model.hpp"

namespace cavmodes {

enum class BasisTag { full, atom, field };

inline const char* to_string(BasisTag tag) {
    switch (tag) {
        case BasisTag::full: return "full";
        case BasisTag::atom: return "atom";
        case BasisTag::field: return "field";
    }
    return "?";
}

struct DensityMatrix {
    Eigen::MatrixXcd data;
    BasisTag tag{BasisTag::full};
    BasisSpec basis;  // basis of the full space this matrix belongs to

    int dim() const { return static_cast<int>(data.rows()); }
    cplx trace() const { return data.trace(); }

    static int expected_dim(const BasisSpec& b, BasisTag tag) {
        switch (tag) {
            case BasisTag::full: return b.dim;
            case BasisTag::atom: return b.dim_k;
            case BasisTag::field: return b.dim_n;
        }
        return 0;
    }

    static DensityMatrix projector(const StateVector& psi, const BasisSpec& b,
                                   BasisTag tag = BasisTag::full) {
        require(psi.size() == expected_dim(b, tag), ErrorKind::basis_mismatch,
                "state dimension does not match basis");
        return {psi * psi.adjoint(), tag, b};
    }
};

struct DensityCheck {
    double hermiticity_defect{0.0};  // max |rho - rho^dag|
    double trace_error{0.0};         // |tr rho - 1|
    double min_eigenvalue{0.0};

    bool ok(double herm_tol = 1e-9, double trace_tol = 1e-9, double eig_floor = -1e-8) const {
        return hermiticity_defect <= herm_tol && trace_error <= trace_tol && min_eigenvalue >= eig_floor;
    }
};

inline double hermiticity_defect(const Eigen::MatrixXcd& m) {
    return (m - m.adjoint()).cwiseAbs().maxCoeff();
}

inline Eigen::VectorXd hermitian_eigenvalues(const Eigen::MatrixXcd& m) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(m, Eigen::EigenvaluesOnly);
    return es.eigenvalues();
}

inline DensityCheck check_density(const DensityMatrix& rho, bool with_spectrum = true) {
    DensityCheck c;
    c.hermiticity_defect = hermiticity_defect(rho.data);
    c.trace_error = std::abs(rho.trace() - cplx(1.0));
    if (with_spectrum) {
        Eigen::MatrixXcd h = 0.5 * (rho.data + rho.data.adjoint());
        c.min_eigenvalue = hermitian_eigenvalues(h).minCoeff();
    }
    return c;
}

inline void require_valid_density(const DensityMatrix& rho, const std::string& context,
                                  double herm_tol = 1e-9, double trace_tol = 1e-9,
                                  double eig_floor = -1e-8) {
    const DensityCheck c = check_density(rho);
    if (!c.ok(herm_tol, trace_tol, eig_floor)) {
        throw Error(ErrorKind::invariant_violation,
                    context + ": density invariants violated (hermiticity " +
                        std::to_string(c.hermiticity_defect) + ", trace error " +
                        std::to_string(c.trace_error) + ", min eigenvalue " +
                        std::to_string(c.min_eigenvalue) + ")");
    }
}

/// Half the trace norm of the difference.
inline double trace_distance(const Eigen::MatrixXcd& a, const Eigen::MatrixXcd& b) {
    Eigen::MatrixXcd d = a - b;
    d = 0.5 * (d + d.adjoint()).eval();
    return 0.5 * hermitian_eigenvalues(d).cwiseAbs().sum();
}

inline double purity(const DensityMatrix& rho) {
    return (rho.data * rho.data).trace().real();
}

} // namespace cavmodes
