#include "stmlab/pi_controller.hpp"

#include <algorithm>
#include <stdexcept>

namespace stmlab {

PiController::PiController(const Config& cfg) : cfg_(cfg) {
    if (cfg.fs_hz <= 0.0) throw std::invalid_argument("sample rate must be positive");
    if (cfg.wc_rad <= 0.0) throw std::invalid_argument("pi corner must be positive");
    if (cfg.ki < 0.0) throw std::invalid_argument("integral gain must be nonnegative");
    if (cfg.u_min >= cfg.u_max) throw std::invalid_argument("output limits out of order");
}

double PiController::step(double e) {
    const double T = 1.0 / cfg_.fs_hz;
    const double candidate = integral_ + 0.5 * T * (e + e_prev_);
    double u = cfg_.ki * (candidate + e / cfg_.wc_rad);
    if (u > cfg_.u_max || u < cfg_.u_min) {
        u = std::clamp(cfg_.ki * (integral_ + e / cfg_.wc_rad), cfg_.u_min, cfg_.u_max);
        saturated_ = true;
    } else {
        integral_ = candidate;
        saturated_ = false;
    }
    e_prev_ = e;
    u_ = u;
    return u;
}

void PiController::reset() {
    integral_ = e_prev_ = u_ = 0.0;
    saturated_ = false;
}

void PiController::preload(double u) {
    if (cfg_.ki <= 0.0) throw std::invalid_argument("cannot preload with zero gain");
    integral_ = u / cfg_.ki;
    e_prev_ = 0.0;
    u_ = u;
    saturated_ = false;
}

void PiController::set_ki(double ki) {
    if (ki <= 0.0) throw std::invalid_argument("integral gain must be positive");
    if (cfg_.ki > 0.0)
        integral_ = (cfg_.ki * (integral_ + e_prev_ / cfg_.wc_rad)) / ki - e_prev_ / cfg_.wc_rad;
    cfg_.ki = ki;
}

} // namespace stmlab
