#pragma once

#include "stmlab/linear_system.hpp"

#include <vector>

namespace stmlab {

struct ModeSpec {
    double w0_rad = 0.0;
    double zeta = 0.0;
    double gain = 1.0;
};

/// Actuation and sensing hardware around the junction. Units: controller
/// output u in volts, piezo extension in angstroms, preamp output in volts.
struct PlantConfig {
    double k_hva = 15.0;                 // high-voltage amplifier gain
    double hva_bw_hz = 50e3;             // its first-order corner
    double k_piezo_ang_per_v = 40.0;     // extension per HVA output volt
    std::vector<ModeSpec> modes{{9000.0, 0.015}, {16800.0, 0.03}};
    double preamp_r = 1e7;               // transimpedance, V/A
    double preamp_gbw = 4e12;            // gain-bandwidth product, Hz*gain
    double adc_limit_v = 10.0;
    double drive_limit_v = 10.0;

    double preamp_bw_hz() const { return preamp_gbw / preamp_r; }
    /// static extension per controller volt, angstrom/V
    double extension_gain() const { return k_hva * k_piezo_ang_per_v; }
};

/// u (V) -> piezo extension (angstrom): HVA pole, piezo resonances, static gain
LinearSystem build_hp_path(const PlantConfig& cfg);

/// tunneling current (A) -> preamp output (V)
LinearSystem build_preamp(const PlantConfig& cfg);

/// preamp dynamics alone, unity dc
LinearSystem build_preamp_unity(const PlantConfig& cfg);

/// small-signal plant from u to ln-current, at barrier height phi_ev:
/// gain 1.025 sqrt(phi) * extension_gain through the actuation and sensing
/// dynamics
LinearSystem build_log_plant(const PlantConfig& cfg, double phi_ev);

} // namespace stmlab
