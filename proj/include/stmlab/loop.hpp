#pragma once

#include "stmlab/dsp.hpp"
#include "stmlab/junction.hpp"
#include "stmlab/linear_system.hpp"
#include "stmlab/pi_controller.hpp"
#include "stmlab/plant.hpp"
#include "stmlab/rng.hpp"
#include "stmlab/surface.hpp"

#include <array>
#include <cstdint>
#include <optional>

namespace stmlab {

struct ModulationConfig {
    double vm = 0.0;
    double f_hz = 0.0;
};

struct LockInBankConfig {
    int harmonics = 0; // tracked harmonics 1..harmonics of the bias modulation
    double cutoff_hz = 500.0;
    int order = 4;
    bool compensate_path = true; // divide estimates by the preamp response
};

struct LoopNotchConfig {
    std::vector<double> freqs_hz;
    double q = 5.0;
    bool in_loop = true; // filtered signal feeds the feedback log
};

struct GainAdaptConfig {
    bool enabled = false;
    double f_dither_hz = 250.0;
    double amp_ang = 0.05;
    double cutoff_hz = 50.0;
    double interval_s = 0.05;
};

struct InstabilityConfig {
    double rms_window_s = 0.005;
    double rms_threshold = 0.5;
    double e_max = 5.0;
};

enum class FeedbackSource {
    log_current,          // ln of (filtered) preamp magnitude
    inphase_fundamental,  // ln of the compensated in-phase fundamental
};

struct LoopConfig {
    double fs_hz = 100e3;
    PlantConfig plant;
    double ki = 0.05;
    double wc_rad = 2.0 * 3.14159265358979323846 * 400.0;
    double v_bias = -2.5;
    double setpoint_a = 0.5e-9;    // constant-current target
    double setpoint_apv = 0.125e-9; // dI/dV target, amps per volt
    FeedbackSource source = FeedbackSource::log_current;
    ModulationConfig mod;
    LockInBankConfig lockins;
    LoopNotchConfig notch;
    GainAdaptConfig adapt;
    InstabilityConfig instability;
    std::uint64_t seed = 1;
};

struct LoopSample {
    double t = 0.0;
    double x_nm = 0.0, y_nm = 0.0;
    double v_inst = 0.0;
    double gap_ang = 0.0;
    double i_tunn_a = 0.0;
    double i_total_a = 0.0;
    double v_pre = 0.0;
    double v_filt = 0.0;
    double y_fb = 0.0;
    double e = 0.0;
    double u = 0.0;
    double u_hva = 0.0;
    double extension_ang = 0.0;
    double theta_mod = 0.0;
    bool crashed = false;
    bool unstable = false;
    bool clipped = false;
    int n_harmonics = 0;
    std::array<std::array<double, 2>, 4> harmonics{}; // per harmonic: in-phase, quadrature (V)
};

struct ApproachConfig {
    double start_clearance_ang = 500.0; // initial anchor height above the local surface
    double coarse_step_ang = 2400.0;
    // a velocity kick dv rings the piezo by dv * extension_gain / w0; at
    // 10 V/s the ring stays under 1 angstrom, safe inside the tunneling gap
    double ramp_rate_v_s = 10.0;
    double retract_clear_v = 0.5; // pull back gently this far before going fast
    double fast_factor = 10.0;
    double detect_fraction = 0.5;   // of the setpoint preamp voltage
    double band_lo = 0.15, band_hi = 0.85; // acceptable extension fraction at detection
    int max_steps = 50;
};

struct ApproachResult {
    bool engaged = false;
    bool crashed = false;
    int coarse_steps = 0;
    int fine_extensions = 0;
    double final_u = 0.0;
};

/// Full nonlinear z-axis simulation: junction physics, actuation and sensing
/// dynamics, log-domain PI regulation, lock-in bank, optional notch bank and
/// gain adaptation. One tick advances one sample; the actuator state written
/// at the end of a tick is seen by the measurement path of the next tick.
class FeedbackLoop {
public:
    FeedbackLoop(SurfaceModel& surface, const LoopConfig& cfg);

    void move_to(double x_nm, double y_nm);
    void set_bias(double v_dc);
    void set_setpoint(double amps);
    void set_setpoint_apv(double amps_per_volt);
    void set_modulation_amplitude(double vm);

    /// place the tip carriage so the loop is exactly at setpoint with u = 0
    double engage_at(double x_nm, double y_nm);
    ApproachResult approach(const ApproachConfig& acfg);
    /// recover from a crash: retract state cleared, carriage re-anchored here
    void re_engage();

    LoopSample tick();
    void run(double seconds);
    /// run until |e| stays below tol for 10 ms; false on timeout
    bool settle(double tol, double timeout_s);

    void freeze_z(bool on) { freeze_z_ = on; }
    bool z_frozen() const { return freeze_z_; }

    // two-point excitation used by identification and the LBH estimators
    void set_injection(double r_inj, double u_inj) {
        r_inj_ = r_inj;
        u_inj_ = u_inj;
    }
    double probe_y1() const { return last_.u_hva; }
    double probe_y2() const { return last_.y_fb; }

    double fs() const { return cfg_.fs_hz; }
    double time() const { return t_; }
    bool engaged() const { return engaged_; }
    bool crashed() const { return crashed_; }
    bool unstable() const { return unstable_; }
    double unstable_at() const { return unstable_at_; }
    const LoopSample& last_sample() const { return last_; }
    double z_anchor_ang() const { return z_anchor_; }
    void set_z_anchor_ang(double z) { z_anchor_ = z; }
    double x_nm() const { return x_; }
    double y_nm() const { return y_; }
    double bias() const { return v_bias_; }
    double setpoint_a() const { return setpoint_a_; }
    double setpoint_apv() const { return cfg_.setpoint_apv; }
    double modulation_vm() const { return vm_; }
    double current_ki() const { return pi_.ki(); }
    double adapt_estimate() const { return adapt_est_; }
    double adapt_reference() const { return adapt_ref_; }
    double lockin_settle_time_s() const;
    SurfaceModel& surface() { return surface_; }
    const SurfaceModel& surface() const { return surface_; }
    const LoopConfig& config() const { return cfg_; }
    PiController& controller() { return pi_; }
    /// response of the sensing electronics at f, as the lock-ins compensate it
    std::complex<double> preamp_response(double f_hz) const;

private:
    double feedback_target_amps() const;
    double target_gap(const Site& site) const;
    void maybe_adapt();

    SurfaceModel& surface_;
    LoopConfig cfg_;
    PiController pi_;
    LinearSystem hp_;
    LinearSystem preamp_;
    NotchBank notch_;
    std::vector<LockIn> lockins_;
    std::optional<PhaseAccumulator> mod_phase_;
    std::optional<PhaseAccumulator> dither_phase_;
    std::optional<LockIn> adapt_lockin_;
    MovingRms e_rms_;
    Rng rng_;

    double x_ = 0.0, y_ = 0.0;
    double v_bias_ = 0.0, v_bias_prev_ = 0.0;
    double vm_ = 0.0;
    double setpoint_a_ = 0.0;
    double r_ = 0.0;
    double r_inj_ = 0.0, u_inj_ = 0.0;
    double z_anchor_ = 0.0;
    double x_hp_ = 0.0;
    double t_ = 0.0;
    double floor_v_ = 0.0;
    double w_mod_ = 0.0;
    double u_cmd_ = 0.0;
    bool freeze_z_ = false;
    bool crashed_ = false;
    bool unstable_ = false;
    double unstable_at_ = -1.0;
    double rms_blank_until_ = 0.0;
    bool engaged_ = false;
    double override_u_ = 0.0;
    bool override_active_ = false;

    double adapt_ref_ = 0.0;
    double adapt_est_ = 0.0;
    double adapt_next_t_ = 0.0;
    double adapt_ki0_ = 0.0;

    LoopSample last_{};
};

/// Linear closed-loop harness: PI controller against an arbitrary discretized
/// plant with the same one-sample measurement delay as the full simulation.
/// Used by the gain designer's time-domain checks and identification tests.
class LinearLoop {
public:
    LinearLoop(const LinearSystem& plant, double fs_hz, double ki, double wc_rad,
               double u_min = -1e18, double u_max = 1e18);

    void set_reference(double r) { r_ = r; }
    void set_injection(double r_inj, double u_inj) {
        r_inj_ = r_inj;
        u_inj_ = u_inj;
    }
    double tick();
    double fs() const { return fs_; }
    double error() const { return e_; }
    double output() const { return y_; }
    double probe_y1() const { return u_; }
    double probe_y2() const { return y_; }

private:
    LinearSystem plant_;
    PiController pi_;
    double fs_;
    double r_ = 0.0, r_inj_ = 0.0, u_inj_ = 0.0;
    double y_ = 0.0, e_ = 0.0, u_ = 0.0;
};

} // namespace stmlab
