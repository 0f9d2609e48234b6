#pragma once

#include "stmlab/loop.hpp"
#include "stmlab/surface.hpp"

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

namespace stmlab::litho {

/// Tip-induced hydrogen removal. A site loses its H once the instantaneous
/// junction bias has spent tau_dwell_s above that site's own threshold while
/// the tip is nearest to it; the default is deterministic, yield_per_s > 0
/// switches to an exponential dose-to-desorb draw instead. Field-emission
/// writes bypass the dwell model and clear everything within r_fe_nm of the
/// path.
struct DesorptionModel {
    double tau_dwell_s = 5e-3;
    double r_fe_nm = 2.5;
    double v_fe = 6.0;       // atomically precise work stays below this bias
    double yield_per_s = 0.0;
    std::uint64_t seed = 1;
};

enum class LithoTrigger { z_jump, v_max_reached };

const char* to_string(LithoTrigger t);
LithoTrigger trigger_from_string(const std::string& s);

struct DesorptionEvent {
    int row = 0;
    int col = 0;
    double t_s = 0.0;
    LithoTrigger trigger = LithoTrigger::z_jump;
    double z_jump_ang = 0.0;

    bool operator==(const DesorptionEvent&) const = default;
};

/// Desorption signature detector: watches the controller z over a short
/// sliding window and fires when the tip retracts by more than the threshold
/// within it. A hit blanks the trigger for holdoff_s so the tail of one
/// retraction, which keeps the window above threshold for several more
/// milliseconds, cannot fire again as a second event.
class RetractionDetector {
public:
    RetractionDetector(double fs_hz, double threshold_ang, double window_s = 2e-3,
                       double holdoff_s = 0.02);

    /// feed one controller-z sample (positive = away from the sample);
    /// returns true on the tick the jump crosses the threshold
    bool push(double z_ang);
    double jump_ang() const { return jump_; }
    double threshold_ang() const { return threshold_; }
    void reset();

private:
    std::vector<double> buf_;
    std::size_t head_ = 0;
    std::size_t count_ = 0;
    long holdoff_ticks_ = 0;
    long holdoff_left_ = 0;
    double threshold_;
    double jump_ = 0.0;
};

struct FclWatchResult {
    std::vector<DesorptionEvent> events;
    double duration_s = 0.0;
};

/// Run the engaged loop for a while and log every retraction jump above the
/// threshold, attributed to the site nearest the tip when it fired.
FclWatchResult fcl_watch(FeedbackLoop& loop, double duration_s, double threshold_ang = 0.3,
                         double window_s = 2e-3);

struct HdlLineResult {
    std::vector<DesorptionEvent> events;
    int desorbed = 0;
    bool completed = false;
    bool unstable = false;
    bool crashed = false;
    double duration_s = 0.0;
};

/// Depassivation pass under dI/dV feedback: raises the setpoint and bias,
/// drags the tip along the segment at the given speed, then restores the
/// imaging parameters. The conductance and barrier steps left behind by each
/// departing H are a genuine stability hazard; if the loop trips, the pass
/// aborts with the flags set and the surface keeps whatever was written.
HdlLineResult hdl_line(FeedbackLoop& loop, double x0_nm, double y0_nm, double x1_nm,
                       double y1_nm, double setpoint_apv, double bias_v, double speed_nm_s,
                       const DesorptionModel& model = {});

/// Field-emission write: desorbs every H site within r_fe_nm of the segment.
/// The z loop plays no part; a degenerate (zero-length) path writes nothing.
/// Returns the number of sites cleared.
int fe_write(FeedbackLoop& loop, double x0_nm, double y0_nm, double x1_nm, double y1_nm,
             double v_bias, const DesorptionModel& model = {});

/// Voltage-modulated feedback-controlled lithography job. The loop stays in
/// constant-current imaging mode throughout; only the modulation amplitude
/// ramps. Site thresholds sit above |v_dc|, so H leaves only while the
/// modulated peaks reach them.
struct VmfclConfig {
    double v_dc = -2.5;
    double setpoint_a = 1e-9;
    double f_mod_hz = 1000.0;
    double ramp_v_s = 0.15;
    double vm_max = 1.5;
    double z_jump_ang = 0.3;
    double vm_start = 0.0;
    double hover_s = 0.05;
    int telemetry_decim = 10;
    std::vector<std::pair<int, int>> targets; // (row, col) lattice indices
};

struct VmfclTelemetry {
    std::vector<double> t_s, z_ang, vm_v, i_raw_a, i_filt_a;
};

struct VmfclResult {
    std::vector<DesorptionEvent> events;
    VmfclTelemetry telemetry;
    double ripple_raw_a = 0.0;  // mean per-cycle peak-to-peak current on the raw path
    double ripple_filt_a = 0.0; // same behind the notch bank
    bool aborted = false;
    double duration_s = 0.0;
};

/// Per target: hover, ramp the modulation up at ramp_v_s until the controller
/// retracts by more than z_jump_ang (desorption) or the amplitude caps out,
/// then ramp down fast and move on. A tip crash aborts the whole job and
/// returns the partial log.
VmfclResult vmfcl(FeedbackLoop& loop, const VmfclConfig& cfg, const DesorptionModel& model = {});

void write_event_log(const std::vector<DesorptionEvent>& events, const std::string& path);
std::vector<DesorptionEvent> read_event_log(const std::string& path);

/// Re-apply a logged job: desorbs the site of every z_jump event, in order.
void apply_event_log(SurfaceModel& m, const std::vector<DesorptionEvent>& events);

void write_telemetry_csv(const VmfclTelemetry& t, const std::string& path);

} // namespace stmlab::litho
