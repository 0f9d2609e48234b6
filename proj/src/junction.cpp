#include "stmlab/junction.hpp"

#include <cmath>

namespace stmlab::junction {

namespace {
double binomial(int n, int k) {
    if (k < 0 || k > n) return 0.0;
    double r = 1.0;
    for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
    return r;
}

/// Weight of cos/sin(n wt) in sin^m(wt) expanded over harmonics.
double harmonic_weight(int m, int n) {
    if (n > m || ((m - n) % 2) != 0) return 0.0;
    if (n == 0) {
        if (m % 2 != 0) return 0.0;
        return binomial(m, m / 2) / std::ldexp(1.0, m);
    }
    const double mag = binomial(m, (m - n) / 2) / std::ldexp(1.0, m - 1);
    const int half = (n % 2 == 1) ? (n - 1) / 2 : n / 2;
    return (half % 2 == 0 ? 1.0 : -1.0) * mag;
}
} // namespace

double conductance(const Site& s, double v) {
    double acc = 0.0;
    for (std::size_t k = s.conduct.size(); k-- > 0;) acc = acc * v + s.conduct[k];
    return acc;
}

double conductance_derivative(const Site& s, double v, int order) {
    if (order < 0) throw std::invalid_argument("derivative order must be >= 0");
    if (order >= static_cast<int>(s.conduct.size())) return 0.0;
    double acc = 0.0;
    for (int k = static_cast<int>(s.conduct.size()) - 1; k >= order; --k) {
        double coeff = s.conduct[k];
        for (int i = 0; i < order; ++i) coeff *= k - i;
        acc = acc * v + coeff;
    }
    return acc;
}

double tunneling_current(double gap_ang, double v, const Site& s) {
    if (gap_ang <= 0.0) throw TipCrashError("tip-sample gap closed");
    return conductance(s, v) * std::exp(-k_gap_decay * gap_ang * std::sqrt(s.phi_ev));
}

double tunneling_current(const JunctionQuery& q, const Site& s) {
    return tunneling_current(q.z_tip_ang - s.height_ang, q.v, s);
}

double log_current_slope(const Site& s) {
    return -k_gap_decay * std::sqrt(s.phi_ev);
}

double barrier_from_slope(double slope) {
    return k_barrier_from_slope * slope * slope;
}

double capacitive_current(double capacitance_f, double vm, double omega_rad, double t_s) {
    return capacitance_f * vm * omega_rad * std::cos(omega_rad * t_s);
}

std::vector<double> harmonic_amplitudes(const Site& s, double gap_ang, double v_dc,
                                        double vm, int n_max) {
    if (n_max < 0) throw std::invalid_argument("n_max must be >= 0");
    const double atten = std::exp(-k_gap_decay * gap_ang * std::sqrt(s.phi_ev));
    const int max_m = static_cast<int>(s.conduct.size()) - 1;

    std::vector<double> out(static_cast<std::size_t>(n_max) + 1, 0.0);
    double vm_pow_over_fact = 1.0; // vm^m / m!
    for (int m = 0; m <= max_m; ++m) {
        if (m > 0) vm_pow_over_fact *= vm / m;
        const double deriv = conductance_derivative(s, v_dc, m) * atten;
        if (deriv == 0.0) continue;
        for (int n = m % 2; n <= std::min(m, n_max); n += 2)
            out[n] += vm_pow_over_fact * deriv * harmonic_weight(m, n);
    }
    return out;
}

} // namespace stmlab::junction
