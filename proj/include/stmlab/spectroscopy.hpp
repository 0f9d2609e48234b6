#pragma once

#include "stmlab/loop.hpp"
#include "stmlab/scan.hpp"

#include <string>
#include <vector>

namespace stmlab::spectroscopy {

struct IvCurve {
    std::vector<double> bias_v;
    std::vector<double> current_a;
};

struct IvSweepConfig {
    double v_start = -2.5;
    double v_end = 2.5;
    int n_points = 101;
    double dwell_s = 0.02;  ///< hold per bias point; the first half is discarded
    double settle_s = 0.1;  ///< feedback settling before the gap freezes
};

/// Park the tip, freeze the gap and ramp the bias point by point. The current
/// is the dwell-averaged preamp reading. Feedback and the original bias come
/// back at the end.
IvCurve single_point_iv(FeedbackLoop& loop, double x_nm, double y_nm, const IvSweepConfig& cfg);

struct CitsConfig {
    double x0_nm = 0.0;
    double y0_nm = 0.0;
    double width_nm = 1.0;
    double height_nm = 1.0;
    int points_x = 4;
    int points_y = 4;
    IvSweepConfig sweep;
};

/// Bias-resolved current cube from point-by-point sweeps on a grid: engage,
/// settle, freeze, sweep, release, step. Slow but complete.
struct CitsCube {
    int rows = 0;
    int cols = 0;
    std::vector<double> bias_v;
    std::vector<double> current_a; ///< rows x cols x bias, row-major
    double duration_s = 0.0;

    double at(int r, int c, int k) const {
        return current_a[(static_cast<std::size_t>(r) * cols + c) * bias_v.size() + k];
    }
};

CitsCube run_cits(FeedbackLoop& loop, const CitsConfig& cfg);

/// Constant-bias image cut through the cube, linearly interpolated between
/// recorded bias points. Throws std::out_of_range beyond the swept range.
Image2D current_slice(const CitsCube& cube, double bias_v);

void write_iv_csv(const IvCurve& curve, const std::string& path);
void write_cits_csv(const CitsCube& cube, const std::string& path);

/// Forward-only raster that records the demodulated harmonics next to the
/// topography. Odd harmonics of the tunneling current ride on sin(n wt) and
/// even ones on cos(n wt), so the components are kept signed and separate;
/// pixels average them coherently. The loop must track enough harmonics.
struct HarmonicMaps {
    Image2D topo;
    std::vector<Image2D> inphase_a; ///< one map per tracked harmonic, amperes
    std::vector<Image2D> quad_a;
    int crash_count = 0;
    double duration_s = 0.0;
};

HarmonicMaps harmonic_scan(FeedbackLoop& loop, const ScanConfig& frame);

struct UltrafastConfig {
    int phase_bins = 64;
    int n_periods = 4;
    double settle_s = 0.01; ///< wait after parking before binning starts
};

/// Current-voltage curve spanned by the bias modulation itself: with the dc
/// bias at zero and the feedback holding the demodulated fundamental, every
/// modulation cycle traces the full curve. Samples are folded into phase
/// bins; the capacitive wave, read off the fundamental quadrature, is
/// subtracted before binning, and empty bins fill by interpolation between
/// phase neighbours. Orders of magnitude faster than a frozen-gap ramp.
struct UltrafastCurve {
    std::vector<double> bias_v;    ///< instantaneous bias at the bin centre
    std::vector<double> current_a; ///< capacitance-corrected tunneling current
    double i_cap_peak_a = 0.0;
    double gap_ang = 0.0; ///< mean gap while binning
    bool settled = false;
    double duration_s = 0.0;
};

UltrafastCurve ultrafast_iv(FeedbackLoop& loop, double x_nm, double y_nm,
                            const UltrafastConfig& cfg);

} // namespace stmlab::spectroscopy
