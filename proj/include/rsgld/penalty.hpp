#pragma once

#include "rsgld/common.hpp"

namespace rsgld::penalty {

/// log(cosh a), evaluated as |a| + log1p(exp(-2|a|)) - log 2 so that large
/// arguments neither overflow nor lose the |a| - log 2 asymptote.
inline double iota(double a) {
    if (!std::isfinite(a)) throw std::invalid_argument("iota: non-finite argument");
    const double t = std::abs(a);
    return t + std::log1p(std::exp(-2.0 * t)) - M_LN2;
}

inline double iota_prime(double a) {
    if (!std::isfinite(a)) throw std::invalid_argument("iota_prime: non-finite argument");
    return std::tanh(a);
}

inline double iota_iota_prime(double a) { return iota(a) * iota_prime(a); }

struct PenaltyConstants {
    double a_iota;       // dissipativity slope
    double b_iota;       // dissipativity offset
    double L_iota;       // Lipschitz constant of iota'
    double M_iota;       // sup |iota'|
    double Ltilde_iota;  // Lipschitz constant of iota * iota'
};

/// Constants for the dissipativity inequality a*iota(a)*iota'(a) >= a_iota*a^2 - b_iota.
/// a_iota = 1/2 and L_iota = M_iota = 1 are exact; b_iota and Ltilde_iota are
/// suprema of scans over [-20, 20] at step 1e-4 (the scanned expressions decay
/// outside that window), padded by 10% and 5% respectively.
inline const PenaltyConstants& dissipativity_constants() {
    static const PenaltyConstants c = [] {
        double b_sup = 0.0;
        double lt_sup = 0.0;
        const double step = 1e-4;
        for (double a = -20.0; a <= 20.0; a += step) {
            const double io = iota(a), ip = std::tanh(a);
            b_sup = std::max(b_sup, a * a / 2.0 - a * io * ip);
            // d(iota*iota')/da = tanh^2 + log(cosh) * sech^2
            const double sech2 = 1.0 - ip * ip;
            lt_sup = std::max(lt_sup, std::abs(ip * ip + io * sech2));
        }
        return PenaltyConstants{0.5, 1.1 * b_sup, 1.0, 1.0, 1.05 * lt_sup};
    }();
    return c;
}

}  // namespace rsgld::penalty
