#include "stmlab/loop.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace stmlab {

FeedbackLoop::FeedbackLoop(SurfaceModel& surface, const LoopConfig& cfg)
    : surface_(surface),
      cfg_(cfg),
      pi_({cfg.ki, cfg.wc_rad, cfg.fs_hz, -cfg.plant.drive_limit_v, cfg.plant.drive_limit_v}),
      hp_(build_hp_path(cfg.plant)),
      preamp_(build_preamp(cfg.plant)),
      e_rms_(static_cast<std::size_t>(std::max(1.0, cfg.instability.rms_window_s * cfg.fs_hz))),
      rng_(cfg.seed) {
    if (cfg.fs_hz <= 0.0) throw std::invalid_argument("sample rate must be positive");
    if (cfg.ki <= 0.0 || cfg.wc_rad <= 0.0)
        throw std::invalid_argument("controller gains must be positive");
    hp_.discretize(cfg.fs_hz);
    preamp_.discretize(cfg.fs_hz);
    v_bias_ = cfg.v_bias;
    v_bias_prev_ = v_bias_;
    vm_ = cfg.mod.vm;
    setpoint_a_ = cfg.setpoint_a;
    floor_v_ = cfg.plant.preamp_r * surface.i_min_a;

    if (cfg.mod.f_hz > 0.0) {
        mod_phase_.emplace(cfg.mod.f_hz, cfg.fs_hz);
        w_mod_ = 2.0 * std::numbers::pi * cfg.mod.f_hz;
    } else if (cfg.mod.vm != 0.0 || cfg.lockins.harmonics > 0) {
        throw std::invalid_argument("modulation amplitude or lock-ins need a modulation frequency");
    }
    if (cfg.lockins.harmonics > 0) {
        if (cfg.lockins.harmonics > 4) throw std::invalid_argument("at most 4 harmonics tracked");
        if (cfg.lockins.cutoff_hz >= cfg.mod.f_hz)
            throw std::invalid_argument("lock-in cutoff must sit below the tracked frequency");
        if (cfg.lockins.harmonics * cfg.mod.f_hz >= cfg.fs_hz / 2.0)
            throw std::invalid_argument("highest tracked harmonic exceeds Nyquist");
        for (int i = 1; i <= cfg.lockins.harmonics; ++i) {
            LockIn li({cfg.fs_hz, cfg.lockins.cutoff_hz, cfg.lockins.order, 0.0});
            if (cfg.lockins.compensate_path) li.set_compensation(preamp_response(i * cfg.mod.f_hz));
            lockins_.push_back(std::move(li));
        }
    }
    if (cfg.source == FeedbackSource::inphase_fundamental && lockins_.empty())
        throw std::invalid_argument("harmonic feedback needs at least one lock-in");
    if (!cfg.notch.freqs_hz.empty()) notch_ = NotchBank({cfg.fs_hz, cfg.notch.freqs_hz, cfg.notch.q});
    if (cfg.adapt.enabled) {
        if (cfg.adapt.f_dither_hz <= 0.0 || cfg.adapt.cutoff_hz >= cfg.adapt.f_dither_hz)
            throw std::invalid_argument("gain dither must sit above its lock-in cutoff");
        dither_phase_.emplace(cfg.adapt.f_dither_hz, cfg.fs_hz);
        adapt_lockin_.emplace(LockIn::Config{cfg.fs_hz, cfg.adapt.cutoff_hz, 2, 0.0});
    }
}

std::complex<double> FeedbackLoop::preamp_response(double f_hz) const {
    return preamp_.discrete_response(f_hz) / cfg_.plant.preamp_r;
}

double FeedbackLoop::lockin_settle_time_s() const {
    return lockins_.empty() ? 0.0 : lockins_.front().settle_time_s();
}

void FeedbackLoop::move_to(double x_nm, double y_nm) {
    x_ = x_nm;
    y_ = y_nm;
}

void FeedbackLoop::set_bias(double v_dc) { v_bias_ = v_dc; }

void FeedbackLoop::set_setpoint(double amps) {
    setpoint_a_ = amps;
    if (engaged_) r_ = std::log(cfg_.plant.preamp_r * feedback_target_amps());
}

void FeedbackLoop::set_setpoint_apv(double amps_per_volt) {
    if (amps_per_volt <= 0.0) throw std::invalid_argument("dI/dV setpoint must be positive");
    cfg_.setpoint_apv = amps_per_volt;
    if (engaged_) r_ = std::log(cfg_.plant.preamp_r * feedback_target_amps());
}

void FeedbackLoop::set_modulation_amplitude(double vm) {
    if (vm != 0.0 && !mod_phase_) throw std::invalid_argument("no modulation frequency configured");
    vm_ = vm;
}

double FeedbackLoop::feedback_target_amps() const {
    if (cfg_.source == FeedbackSource::log_current) return std::abs(setpoint_a_);
    if (cfg_.setpoint_apv > 0.0) return cfg_.setpoint_apv * std::abs(vm_);
    return std::abs(setpoint_a_);
}

double FeedbackLoop::target_gap(const Site& site) const {
    const double target = feedback_target_amps();
    if (target <= 0.0) throw std::invalid_argument("feedback target must be positive");
    double level;
    if (cfg_.source == FeedbackSource::log_current) {
        level = std::abs(junction::conductance(site, v_bias_));
        if (level <= 0.0)
            throw std::invalid_argument("conductance vanishes at this bias, no current to regulate");
    } else {
        const auto amps = junction::harmonic_amplitudes(site, 0.0, v_bias_, vm_, 1);
        level = std::abs(amps[1]);
        if (level <= 0.0) throw std::invalid_argument("fundamental vanishes at this bias");
    }
    const double gap =
        std::log(level / target) / (junction::k_gap_decay * std::sqrt(site.phi_ev));
    if (gap <= 0.0) throw std::invalid_argument("setpoint not reachable at this bias");
    return gap;
}

double FeedbackLoop::engage_at(double x_nm, double y_nm) {
    move_to(x_nm, y_nm);
    const Site site = sample_site(surface_, x_, y_);
    const double gap = target_gap(site);
    z_anchor_ = gap + site.height_ang;

    hp_.reset();
    x_hp_ = 0.0;
    const bool modulated = mod_phase_ && vm_ != 0.0;
    std::vector<double> amps;
    if (modulated)
        amps = junction::harmonic_amplitudes(
            site, gap, v_bias_, vm_, std::max<int>(7, static_cast<int>(lockins_.size())));
    const double i0 = amps.empty() ? junction::tunneling_current(gap, v_bias_, site) : amps[0];
    preamp_.preload_dc(i0);
    notch_.preload_dc(cfg_.plant.preamp_r * i0);
    pi_.reset();
    for (LockIn& li : lockins_) li.reset();
    // hand the measurement chain its periodic steady state so feedback routed
    // through demodulators or notch filters does not dive while they spin up
    if (modulated) {
        const double th1 = mod_phase_->phase();
        for (int k = 1; k < static_cast<int>(amps.size()); ++k) {
            double a_s = 0.0, a_c = 0.0;
            (k % 2 ? a_s : a_c) = amps[k];
            if (k == 1) a_c += surface_.capacitance_f * vm_ * w_mod_;
            if (a_s == 0.0 && a_c == 0.0) continue;
            // v_k packs the sin/cos coefficients of this harmonic as seen
            // behind the sensing electronics
            const std::complex<double> v_k =
                preamp_.discrete_response(k * cfg_.mod.f_hz) * std::complex<double>(a_s, a_c);
            if (static_cast<std::size_t>(k) <= lockins_.size())
                lockins_[k - 1].preload(v_k.real(), v_k.imag());
            const std::complex<double> pos = std::polar(1.0, k * th1);
            preamp_.add_tone(k * w_mod_ / cfg_.fs_hz,
                             std::complex<double>(a_c, -a_s) * pos);
            if (!notch_.empty())
                notch_.add_tone(k * w_mod_ / cfg_.fs_hz,
                                std::complex<double>(v_k.imag(), -v_k.real()) * pos);
        }
    }
    if (adapt_lockin_) adapt_lockin_->reset();
    adapt_ref_ = adapt_est_ = 0.0;
    adapt_next_t_ = t_ + cfg_.adapt.interval_s;
    adapt_ki0_ = pi_.ki();
    e_rms_.reset();
    r_ = std::log(cfg_.plant.preamp_r * feedback_target_amps());
    v_bias_prev_ = v_bias_;
    u_cmd_ = 0.0;
    crashed_ = false;
    unstable_ = false;
    unstable_at_ = -1.0;
    freeze_z_ = false;
    override_active_ = false;
    engaged_ = true;
    return z_anchor_;
}

void FeedbackLoop::re_engage() { engage_at(x_, y_); }

LoopSample FeedbackLoop::tick() {
    LoopSample s{};
    s.t = t_;
    s.x_nm = x_;
    s.y_nm = y_;

    double sin1 = 0.0, cos1 = 0.0;
    const bool mod_on = mod_phase_.has_value();
    if (mod_on) {
        s.theta_mod = mod_phase_->advance();
        sin1 = std::sin(s.theta_mod);
        cos1 = std::cos(s.theta_mod);
    }
    const double v_inst = v_bias_ + vm_ * sin1;
    s.v_inst = v_inst;

    const Site site = sample_site(surface_, x_, y_);
    const double gap = z_anchor_ - x_hp_ - site.height_ang;
    s.gap_ang = gap;
    s.extension_ang = x_hp_;

    double i_tunn = 0.0;
    if (gap <= 0.0)
        crashed_ = true;
    else
        i_tunn = junction::tunneling_current(gap, v_inst, site);
    double i_cap = 0.0;
    if (mod_on && vm_ != 0.0) i_cap += surface_.capacitance_f * vm_ * w_mod_ * cos1;
    i_cap += surface_.capacitance_f * (v_bias_ - v_bias_prev_) * cfg_.fs_hz;
    v_bias_prev_ = v_bias_;
    s.i_tunn_a = i_tunn;
    s.i_total_a = i_tunn + i_cap;

    double v_pre = preamp_.step(s.i_total_a);
    if (surface_.noise_sigma_a > 0.0)
        v_pre += cfg_.plant.preamp_r * surface_.noise_sigma_a * rng_.gaussian();
    const double adc = cfg_.plant.adc_limit_v;
    if (v_pre > adc) {
        v_pre = adc;
        s.clipped = true;
    } else if (v_pre < -adc) {
        v_pre = -adc;
        s.clipped = true;
    }
    s.v_pre = v_pre;
    const double v_filt = notch_.empty() ? v_pre : notch_.step(v_pre);
    s.v_filt = v_filt;

    if (mod_on && !lockins_.empty()) {
        double sins[8], coss[8];
        const int n = static_cast<int>(lockins_.size());
        harmonic_refs(sin1, cos1, n, sins, coss);
        for (int i = 0; i < n; ++i) {
            lockins_[i].step(v_pre, sins[i + 1], coss[i + 1]);
            if (i < 4) s.harmonics[i] = {lockins_[i].in_phase(), lockins_[i].quadrature()};
        }
        s.n_harmonics = std::min(n, 4);
    }

    double y_fb;
    if (cfg_.source == FeedbackSource::log_current) {
        const double v_loop = cfg_.notch.in_loop ? v_filt : v_pre;
        y_fb = std::log(std::max(std::abs(v_loop), floor_v_));
    } else {
        const double x1 = lockins_.front().in_phase();
        y_fb = std::log(std::max(std::abs(x1), floor_v_));
    }
    s.y_fb = y_fb;
    const double e = r_ + r_inj_ - y_fb;
    s.e = e;

    double dither_v = 0.0;
    if (dither_phase_) {
        const double th = dither_phase_->advance();
        const double ds = std::sin(th);
        dither_v = cfg_.adapt.amp_ang / cfg_.plant.extension_gain() * ds;
        adapt_lockin_->step(y_fb, ds, std::cos(th));
        maybe_adapt();
    }

    double u;
    if (override_active_)
        u = override_u_;
    else if (crashed_)
        u = -cfg_.plant.drive_limit_v;
    else if (freeze_z_)
        u = u_cmd_;
    else
        u = pi_.step(e);
    u_cmd_ = u;
    s.u = u;

    if (engaged_ && !override_active_ && !freeze_z_ && !crashed_ && t_ >= rms_blank_until_) {
        e_rms_.push(e);
        if ((e_rms_.full() && e_rms_.value() > cfg_.instability.rms_threshold) ||
            std::abs(e) > cfg_.instability.e_max) {
            if (!unstable_) unstable_at_ = t_;
            unstable_ = true;
        }
    }

    double u_hva = u + u_inj_ + dither_v;
    const double dl = cfg_.plant.drive_limit_v;
    u_hva = std::clamp(u_hva, -dl, dl);
    s.u_hva = u_hva;
    x_hp_ = hp_.step(u_hva);

    s.crashed = crashed_;
    s.unstable = unstable_;
    t_ += 1.0 / cfg_.fs_hz;
    last_ = s;
    return s;
}

void FeedbackLoop::maybe_adapt() {
    if (!cfg_.adapt.enabled || !engaged_ || override_active_ || freeze_z_ || crashed_) return;
    if (t_ < adapt_next_t_ || !adapt_lockin_->settled()) return;
    const double est = adapt_lockin_->amplitude() / cfg_.adapt.amp_ang;
    adapt_next_t_ = t_ + std::max(cfg_.adapt.interval_s, adapt_lockin_->settle_time_s());
    if (est <= 0.0) return;
    if (adapt_ref_ <= 0.0) {
        adapt_ref_ = est;
        adapt_est_ = est;
        return;
    }
    adapt_est_ = est;
    const double factor = std::clamp(adapt_ref_ / est, 0.25, 4.0);
    pi_.set_ki(pi_.ki() * factor);
}

void FeedbackLoop::run(double seconds) {
    const long n = std::lround(seconds * cfg_.fs_hz);
    for (long i = 0; i < n; ++i) tick();
}

bool FeedbackLoop::settle(double tol, double timeout_s) {
    const long hold_n = std::lround(0.010 * cfg_.fs_hz);
    const long max_n = std::lround(timeout_s * cfg_.fs_hz);
    long ok = 0;
    for (long n = 0; n < max_n; ++n) {
        const LoopSample s = tick();
        if (crashed_) return false;
        ok = std::abs(s.e) < tol ? ok + 1 : 0;
        if (ok >= hold_n) return true;
    }
    return false;
}

ApproachResult FeedbackLoop::approach(const ApproachConfig& acfg) {
    ApproachResult res;
    const Site site0 = sample_site(surface_, x_, y_);
    z_anchor_ = site0.height_ang + acfg.start_clearance_ang;
    const double T = 1.0 / cfg_.fs_hz;
    const double u_top = cfg_.plant.drive_limit_v;
    const double detect_v = acfg.detect_fraction * cfg_.plant.preamp_r * feedback_target_amps();

    hp_.reset();
    x_hp_ = 0.0;
    preamp_.reset();
    notch_.reset();
    pi_.reset();
    r_ = std::log(cfg_.plant.preamp_r * feedback_target_amps());
    u_cmd_ = 0.0;
    crashed_ = false;
    engaged_ = false;
    override_active_ = true;
    override_u_ = 0.0;

    for (int attempt = 0; attempt < acfg.max_steps; ++attempt) {
        bool detected = false;
        override_u_ = 0.0;
        ++res.fine_extensions;
        while (override_u_ < u_top) {
            override_u_ = std::min(override_u_ + acfg.ramp_rate_v_s * T, u_top);
            const LoopSample s = tick();
            if (crashed_) {
                res.crashed = true;
                override_active_ = false;
                return res;
            }
            if (std::abs(s.v_pre) >= detect_v) {
                detected = true;
                break;
            }
        }
        const double u_det = override_u_;
        const double frac = u_det / u_top;
        if (detected && frac >= acfg.band_lo && frac <= acfg.band_hi) {
            pi_.preload(u_det);
            override_active_ = false;
            engaged_ = true;
            e_rms_.reset();
            rms_blank_until_ = t_ + 0.03; // let the stop-kick ring of the modes die down
            crashed_ = false;
            unstable_ = false;
            res.engaged = true;
            res.final_u = u_det;
            return res;
        }
        // pull back gently until clear of the surface, only then at speed
        while (override_u_ > 0.0) {
            const double rate = (u_det - override_u_ < acfg.retract_clear_v)
                                    ? acfg.ramp_rate_v_s
                                    : acfg.fast_factor * acfg.ramp_rate_v_s;
            override_u_ = std::max(0.0, override_u_ - rate * T);
            tick();
            if (crashed_) {
                res.crashed = true;
                override_active_ = false;
                return res;
            }
        }
        run(0.010);
        if (detected && frac < acfg.band_lo) {
            z_anchor_ += acfg.coarse_step_ang;
        } else {
            z_anchor_ -= acfg.coarse_step_ang;
            ++res.coarse_steps;
        }
    }
    override_active_ = false;
    return res;
}

LinearLoop::LinearLoop(const LinearSystem& plant, double fs_hz, double ki, double wc_rad,
                       double u_min, double u_max)
    : plant_(plant), pi_({ki, wc_rad, fs_hz, u_min, u_max}), fs_(fs_hz) {
    plant_.discretize(fs_hz);
}

double LinearLoop::tick() {
    e_ = r_ + r_inj_ - y_;
    u_ = pi_.step(e_) + u_inj_;
    y_ = plant_.step(u_);
    return e_;
}

} // namespace stmlab
