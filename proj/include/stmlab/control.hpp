#pragma once

#include "stmlab/linear_system.hpp"
#include "stmlab/loop.hpp"
#include "stmlab/plant.hpp"

#include <complex>
#include <functional>
#include <string>
#include <vector>

namespace stmlab::control {

/// regulation error in log space; the preamp voltage is floored at the
/// equivalent of i_min before the logarithm
double error_signal(double setpoint_a, double preamp_v, double preamp_r, double i_min_a);

using FrfFn = std::function<std::complex<double>(double f_hz)>;

/// Frequency-domain model of the digital z loop: discrete PI, one sample of
/// loop delay, and the discretized physical paths. plant maps controller
/// volts to the log-current measurement; sensing maps surface height
/// (angstrom) to the same measurement.
struct LoopModel {
    FrfFn plant;
    FrfFn sensing;
    double plant_dc = 0.0;
    double sensing_dc = 0.0;
    double wc_rad = 0.0;
    double fs_hz = 0.0;

    std::complex<double> pi(double ki, double f_hz) const;
    std::complex<double> delay(double f_hz) const;
    std::complex<double> open_loop(double ki, double f_hz) const;
    /// closed-loop topography response, unity at dc
    std::complex<double> imaging(double ki, double f_hz) const;
};

LoopModel make_loop_model(const PlantConfig& plant, double phi_ev, double wc_rad, double fs_hz);

struct CriticalGain {
    double ki = 0.0;
    double f_crossover_hz = 0.0;
    bool bounded = false;
};

/// Smallest integral gain that drives a phase crossover of the open loop to
/// unit magnitude. loop_per_unit_ki is the open-loop response at ki = 1; its
/// phase does not depend on ki, so the search reduces to locating negative
/// real-axis crossings.
CriticalGain critical_ki(const FrfFn& loop_per_unit_ki, double f_lo_hz, double f_hi_hz);
CriticalGain critical_ki(const LoopModel& m);

double imaging_bandwidth(const LoopModel& m, double ki);
double imaging_peak_db(const LoopModel& m, double ki);

struct BandwidthGain {
    double ki = 0.0;
    double bw_hz = 0.0;
    bool ok = false; // a gain below ki_limit reaches the requested bandwidth
};

/// smallest gain whose closed-loop -3 dB bandwidth reaches f_min_hz,
/// bisected to 0.5 %
BandwidthGain bandwidth_ki(const LoopModel& m, double f_min_hz, double ki_limit);

struct PeakGain {
    double ki = 0.0;
    double peak_db = 0.0;
    bool ok = false;
};

/// largest gain keeping the closed-loop magnitude peak at or under limit_db,
/// bisected to 0.5 %
PeakGain hinf_ki(const LoopModel& m, double limit_db, double ki_limit);

struct DesignPoint {
    double wc_rad = 0.0;
    double ki_upper = 0.0;   // stability boundary
    double ki_lower = 0.0;   // minimum for the requested imaging bandwidth
    double ki_hinf = 0.0;    // peaking limit
    double ki_recommended = 0.0;
    double f_crossover_hz = 0.0;
    bool feasible = false;
};

struct DesignRegion {
    std::vector<DesignPoint> points;
    double f_min_hz = 0.0;
    double peak_limit_db = 0.0;
    bool feasible = false;
    double recommended_ki = 0.0;
    double recommended_wc = 0.0;
};

DesignRegion design_region(const PlantConfig& plant, double phi_ev, double fs_hz,
                           const std::vector<double>& wc_list, double f_min_hz = 50.0,
                           double peak_limit_db = 3.0);

void write_design_csv(const DesignRegion& region, const std::string& path);

struct SimCheck {
    bool settled = false;
    bool diverged = false;
    double max_abs_e = 0.0;
    double final_abs_e = 0.0;
};

/// closed-loop step check against the discretized plant with one sample of
/// loop delay; settled means |e| < 0.01 over the final 10 ms
SimCheck simulate_loop(const LinearSystem& plant, double fs_hz, double ki, double wc_rad,
                       double r_step, double duration_s);

struct SlopeEstimate {
    double slope_per_ang = 0.0; // d ln(I) per angstrom of commanded motion
    double phi_ev = 0.0;
};

/// Barrier estimate from commanded gap modulation: drive the actuator with a
/// sine of commanded amplitude amp_ang, demodulate the log-current. Biased by
/// feedback suppression and actuator dynamics; accurate only with the loop
/// frozen and the dither well below the first resonance.
SlopeEstimate lbh_gap_modulation(FeedbackLoop& loop, double amp_ang, double f_hz,
                                 double duration_s);

/// Loop-gain estimate from the ratio of the demodulated log-current to the
/// demodulated actuator drive, both measured at f_hz. Insensitive to feedback
/// suppression; scales with sqrt(phi).
double lbh_dc_gain_ratio(FeedbackLoop& loop, double amp_v, double f_hz, double duration_s);

struct PiGains {
    double ki = 0.0;
    double wc_rad = 0.0;
};

/// rescale the integral gain so the estimated loop gain lands on the desired
/// value; the proportional corner is preserved
PiGains adapt_gains(const PiGains& gains, double estimated_gain, double desired_gain);

} // namespace stmlab::control
