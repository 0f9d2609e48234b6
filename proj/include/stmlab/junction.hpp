#pragma once

#include "stmlab/surface.hpp"

#include <stdexcept>
#include <vector>

namespace stmlab {

/// Thrown when the tip apex reaches or penetrates the surface.
struct TipCrashError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Tip state for one current evaluation. z_tip_ang is the apex height above
/// the lattice reference plane, in angstroms.
struct JunctionQuery {
    double x_nm = 0.0;
    double y_nm = 0.0;
    double z_tip_ang = 0.0;
    double v = 0.0;
};

namespace junction {

/// exponent coefficient in 1/(angstrom sqrt(eV))
inline constexpr double k_gap_decay = 1.025;
/// inverse map: phi = 0.952 * slope^2
inline constexpr double k_barrier_from_slope = 0.952;

/// L(V), amperes
double conductance(const Site& s, double v);
/// d^m L / dV^m
double conductance_derivative(const Site& s, double v, int order);

/// I(gap, V) = L(V) exp(-k_gap_decay * gap * sqrt(phi)); throws TipCrashError
/// for gap <= 0
double tunneling_current(double gap_ang, double v, const Site& s);
double tunneling_current(const JunctionQuery& q, const Site& s);

/// d ln|I| / d gap at fixed V
double log_current_slope(const Site& s);
/// apparent barrier height (eV) from a measured ln-current slope (1/angstrom)
double barrier_from_slope(double slope);

/// displacement current through the tip-sample capacitance for
/// v(t) = vm sin(omega t)
double capacitive_current(double capacitance_f, double vm, double omega_rad, double t_s);

/// Harmonic content of I(t) for bias v_dc + vm sin(wt): returns amplitudes
/// I_0..I_n_max where odd harmonics multiply sin(n wt) and even ones
/// cos(n wt). Exact for the polynomial conductance model.
std::vector<double> harmonic_amplitudes(const Site& s, double gap_ang, double v_dc,
                                        double vm, int n_max);

} // namespace junction
} // namespace stmlab
