#pragma once

#include "stmlab/dsp.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace stmlab {
class FeedbackLoop;
}

namespace stmlab::sysid {

/// One frequency point of a measured transfer function. g is estimated with
/// the probe added at the reference summing node, g_alt with the probe added
/// at the actuator; the two agree when the loop responds linearly at the
/// chosen amplitudes. coherence is a dispersion-based quality figure in [0, 1]
/// (1 = repeatable estimate, lower = noise or drift leaked into the band).
struct FrfPoint {
    double f_hz = 0.0;
    std::complex<double> g{0.0, 0.0};
    std::complex<double> g_alt{0.0, 0.0};
    double coherence = 0.0;
};

struct FrfConfig {
    std::vector<double> freqs_hz; ///< explicit grid; log-spaced when empty
    double f_lo_hz = 100.0;
    double f_hi_hz = 4500.0;
    int n_points = 20;
    double ref_amplitude = 0.02;    ///< log-units at the reference node
    double drive_amplitude_v = 1e-5;
    double coherence_gate = 0.95;
    /// minimum wait before snapshots; raise it for plants that ring longer
    double settle_floor_s = 0.12;
};

std::vector<double> frf_grid(const FrfConfig& cfg);

/// Drop points whose coherence falls below the gate.
std::vector<FrfPoint> coherent_points(const std::vector<FrfPoint>& pts, double min_coherence);

/// Multiply each point by e^{+j 2 pi f tau} to take a known transport delay
/// back out of the data before fitting.
std::vector<FrfPoint> compensate_delay(std::vector<FrfPoint> pts, double delay_s);

/// Swept-sine estimate of the transfer function between the two loop probes,
/// taken with the loop closed. At each frequency a small sine is added first
/// at the reference and then at the actuator; dual-phase demodulators on
/// probe 1 and probe 2 settle, and the complex ratio y2/y1 gives the plant
/// seen between the probes regardless of where the probe entered. The ratio
/// is snapshotted five times across the dwell; the dispersion of the
/// snapshots around their mean produces the coherence figure.
///
/// The demodulator cutoff is f/10 clamped to [2, 500] Hz and the dwell is the
/// longer of ten filter time constants and twenty probe periods. Before each
/// pass the previous probe rings down and the dc levels of both probes are
/// learned so the demodulators run ac-coupled; the settle floor bounds both
/// waits from below so lightly damped closed-loop modes have time to die.
/// The loop keeps running between frequencies, so the sweep can be applied
/// to a live instrument without losing the operating point.
template <typename Loop>
std::vector<FrfPoint> measure_closed_loop_frf(Loop& loop, const FrfConfig& cfg) {
    if (cfg.ref_amplitude <= 0.0 || cfg.ref_amplitude >= 0.2)
        throw std::invalid_argument("reference probe must stay inside the log-linear window");
    if (cfg.drive_amplitude_v <= 0.0)
        throw std::invalid_argument("drive probe amplitude must be positive");

    constexpr int snapshots = 5;
    constexpr double two_pi = 2.0 * std::numbers::pi;
    const double fs = loop.fs();
    const std::vector<double> freqs = cfg.freqs_hz.empty() ? frf_grid(cfg) : cfg.freqs_hz;

    std::vector<FrfPoint> out;
    out.reserve(freqs.size());
    for (double f : freqs) {
        if (f <= 0.0 || f >= 0.5 * fs)
            throw std::invalid_argument("probe frequency outside (0, fs/2)");
        const double fc = std::clamp(f / 10.0, 2.0, 500.0);
        const long settle_n =
            std::lround(std::max(10.0 / (two_pi * fc), cfg.settle_floor_s) * fs);
        const long seg_n = std::max<long>(
            1, std::lround(std::max(10.0 / (two_pi * fc), 20.0 / f) * fs / snapshots));

        auto run_pass = [&](bool at_reference) {
            // let the previous probe ring down, then learn the dc offsets so
            // the demodulators see ac-coupled inputs; the offsets would
            // otherwise leak demodulation ripple far above the probe response
            loop.set_injection(0.0, 0.0);
            const long ring_n = std::lround(std::max(0.02, cfg.settle_floor_s) * fs);
            const long base_n = std::lround(0.01 * fs);
            double dc1 = 0.0, dc2 = 0.0;
            for (long i = 0; i < ring_n + base_n; ++i) {
                loop.tick();
                if (i >= ring_n) {
                    dc1 += loop.probe_y1();
                    dc2 += loop.probe_y2();
                }
            }
            dc1 /= base_n;
            dc2 /= base_n;

            PhaseAccumulator ph(f, fs);
            LockIn::Config lc;
            lc.fs_hz = fs;
            lc.cutoff_hz = fc;
            LockIn l1(lc), l2(lc);
            std::complex<double> snap[snapshots];
            int k = 0;
            const long total = settle_n + snapshots * seg_n;
            for (long i = 0; i < total; ++i) {
                const double th = ph.advance();
                const double rs = std::sin(th), rc = std::cos(th);
                const double inj = (at_reference ? cfg.ref_amplitude : cfg.drive_amplitude_v) * rs;
                if (at_reference)
                    loop.set_injection(inj, 0.0);
                else
                    loop.set_injection(0.0, inj);
                loop.tick();
                l1.step(loop.probe_y1() - dc1, rs, rc);
                l2.step(loop.probe_y2() - dc2, rs, rc);
                if (i >= settle_n && (i - settle_n + 1) % seg_n == 0 && k < snapshots)
                    snap[k++] = std::complex<double>(l2.in_phase(), l2.quadrature()) /
                                std::complex<double>(l1.in_phase(), l1.quadrature());
            }
            loop.set_injection(0.0, 0.0);
            std::complex<double> mean{0.0, 0.0};
            for (int i = 0; i < k; ++i) mean += snap[i];
            mean /= static_cast<double>(k);
            double disp = 0.0;
            for (int i = 0; i < k; ++i) disp += std::norm(snap[i] - mean);
            disp = std::sqrt(disp / k);
            const double am = std::abs(mean);
            const double coh = am > 0.0 ? std::clamp(1.0 - disp / am, 0.0, 1.0) : 0.0;
            return std::pair<std::complex<double>, double>(mean, coh);
        };

        const auto [ga, ca] = run_pass(true);
        const auto [gb, cb] = run_pass(false);
        out.push_back({f, ga, gb, std::min(ca, cb)});
    }
    return out;
}

/// Pole-residue form with a real direct term, evaluated at s = j 2 pi f.
/// Complex poles appear together with their conjugates, so the model is real.
struct RationalModel {
    std::vector<std::complex<double>> poles;
    std::vector<std::complex<double>> residues;
    double direct = 0.0;

    std::complex<double> response(double f_hz) const;
};

/// Iterative rational least-squares fit of measured points: starting poles
/// spread across the band are relocated through the classic sigma recursion,
/// any pole pushed into the right half plane is reflected back, and a final
/// linear solve pins the residues on the converged basis.
RationalModel fit_rational(const std::vector<FrfPoint>& pts, int n_poles, int n_iterations = 4);

/// RMS magnitude error of the model over the points, in dB.
double rmse_db(const RationalModel& model, const std::vector<FrfPoint>& pts);

void write_frf_csv(const std::vector<FrfPoint>& pts, const std::string& path);
std::vector<FrfPoint> read_frf_csv(const std::string& path);
void write_frf_json(const std::vector<FrfPoint>& pts, const std::string& path);
std::vector<FrfPoint> read_frf_json(const std::string& path);

struct RolloffPoint {
    double f_hz = 0.0;
    double amplitude = 0.0;
};

struct RolloffResult {
    double f3db_hz = 0.0;
    std::vector<RolloffPoint> points;
};

/// Small-signal bandwidth of the demodulated fundamental channel. The tip
/// height is wiggled through the actuator probe at each frequency and the
/// resulting ripple on the demodulator in-phase output is measured; the -3 dB
/// crossing relative to the lowest probe frequency is interpolated on a
/// log-log grid. The loop must be engaged with at least one demodulator.
RolloffResult demod_channel_rolloff(FeedbackLoop& loop, const std::vector<double>& probe_freqs_hz,
                                    double drive_amplitude_v);

} // namespace stmlab::sysid
