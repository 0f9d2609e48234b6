#include "stmlab/plant.hpp"

#include "stmlab/junction.hpp"

#include <stdexcept>

namespace stmlab {

LinearSystem build_hp_path(const PlantConfig& cfg) {
    if (cfg.k_hva <= 0.0 || cfg.k_piezo_ang_per_v <= 0.0 || cfg.hva_bw_hz <= 0.0)
        throw std::invalid_argument("actuation gains and bandwidth must be positive");
    LinearSystem sys = LinearSystem::gain_block(cfg.extension_gain());
    sys *= LinearSystem::first_order_lowpass(cfg.hva_bw_hz);
    for (const ModeSpec& m : cfg.modes) sys *= LinearSystem::resonant_mode(m.w0_rad, m.zeta, m.gain);
    return sys;
}

LinearSystem build_preamp(const PlantConfig& cfg) {
    if (cfg.preamp_r <= 0.0 || cfg.preamp_gbw <= 0.0)
        throw std::invalid_argument("preamp gain and gbw must be positive");
    LinearSystem sys = LinearSystem::gain_block(cfg.preamp_r);
    sys *= LinearSystem::first_order_lowpass(cfg.preamp_bw_hz());
    return sys;
}

LinearSystem build_preamp_unity(const PlantConfig& cfg) {
    if (cfg.preamp_r <= 0.0 || cfg.preamp_gbw <= 0.0)
        throw std::invalid_argument("preamp gain and gbw must be positive");
    return LinearSystem::first_order_lowpass(cfg.preamp_bw_hz());
}

LinearSystem build_log_plant(const PlantConfig& cfg, double phi_ev) {
    if (phi_ev <= 0.0) throw std::invalid_argument("barrier height must be positive");
    LinearSystem sys = LinearSystem::gain_block(junction::k_gap_decay * std::sqrt(phi_ev));
    sys *= build_hp_path(cfg);
    sys *= build_preamp_unity(cfg);
    return sys;
}

} // namespace stmlab
