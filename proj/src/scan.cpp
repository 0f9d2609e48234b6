#include "stmlab/scan.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace stmlab {

double line_frequency(const ScanConfig& cfg) {
    if (cfg.width_nm <= 0.0 || cfg.speed_nm_s <= 0.0)
        throw std::invalid_argument("scan needs positive width and speed");
    return cfg.speed_nm_s / (2.0 * cfg.width_nm);
}

namespace {

void validate(const FeedbackLoop& loop, const ScanConfig& cfg) {
    if (cfg.pixels_x < 2 || cfg.pixels_y < 1)
        throw std::invalid_argument("image needs at least 2x1 pixels");
    if (cfg.height_nm < 0.0 || (cfg.pixels_y > 1 && cfg.height_nm <= 0.0))
        throw std::invalid_argument("multi-row frame needs positive height");
    const SurfaceModel& s = loop.surface();
    if (cfg.x0_nm < 0.0 || cfg.y0_nm < 0.0 || cfg.x0_nm + cfg.width_nm > s.width_nm() ||
        cfg.y0_nm + cfg.height_nm > s.height_nm())
        throw std::invalid_argument("scan frame reaches outside the surface");
    const FeedbackSource src = loop.config().source;
    if (cfg.mode == ScanMode::constant_didv && src != FeedbackSource::inphase_fundamental)
        throw std::invalid_argument("spectroscopic map needs the demodulated feedback source");
    if (cfg.mode == ScanMode::constant_current && src != FeedbackSource::log_current)
        throw std::invalid_argument("topographic map needs the log-current feedback source");
}

} // namespace

ScanResult run_scan(FeedbackLoop& loop, const ScanConfig& cfg) {
    validate(loop, cfg);

    const int nx = cfg.pixels_x;
    const int ny = cfg.pixels_y;
    ScanResult res;
    res.f_line_hz = line_frequency(cfg);
    res.topo_fwd = Image2D(ny, nx);
    res.topo_rev = Image2D(ny, nx);
    res.fb_fwd = Image2D(ny, nx);
    res.fb_rev = Image2D(ny, nx);
    res.err_fwd = Image2D(ny, nx);
    res.err_rev = Image2D(ny, nx);

    const double fs = loop.fs();
    const double gain = loop.config().plant.extension_gain();
    const long half_ticks = std::max<long>(1, std::lround(cfg.width_nm / cfg.speed_nm_s * fs));
    const bool frozen = cfg.mode == ScanMode::constant_height;

    auto row_y = [&](int j) {
        return ny == 1 ? cfg.y0_nm : cfg.y0_nm + cfg.height_nm * j / (ny - 1);
    };

    const double t0 = loop.time();
    loop.engage_at(cfg.x0_nm, row_y(0));
    loop.run(cfg.settle_s);
    res.datum_u = loop.last_sample().u;
    if (frozen) loop.freeze_z(true);

    std::vector<double> acc_t(nx), acc_f(nx), acc_e(nx);
    std::vector<long> cnt(nx);

    for (int j = 0; j < ny; ++j) {
        loop.move_to(cfg.x0_nm, row_y(j));
        if (loop.crashed()) {
            loop.re_engage();
            loop.run(cfg.settle_s);
            if (frozen) loop.freeze_z(true);
            if (loop.crashed()) continue;
        } else if (j > 0) {
            loop.run(0.01);
        }

        bool aborted = false;
        for (int pass = 0; pass < 2 && !aborted; ++pass) {
            std::fill(acc_t.begin(), acc_t.end(), 0.0);
            std::fill(acc_f.begin(), acc_f.end(), 0.0);
            std::fill(acc_e.begin(), acc_e.end(), 0.0);
            std::fill(cnt.begin(), cnt.end(), 0);

            for (long i = 0; i < half_ticks; ++i) {
                const double frac = (i + 0.5) / half_ticks;
                const double sx = pass == 0 ? frac : 1.0 - frac;
                loop.move_to(cfg.x0_nm + sx * cfg.width_nm, row_y(j));
                const LoopSample s = loop.tick();
                if (s.crashed) {
                    ++res.crash_count;
                    res.crashed_rows.push_back(j);
                    aborted = true;
                    break;
                }
                const int bin = std::min(nx - 1, static_cast<int>(sx * nx));
                acc_t[bin] += -gain * (s.u - res.datum_u);
                acc_f[bin] += s.y_fb;
                acc_e[bin] += s.e;
                ++cnt[bin];
            }

            Image2D& topo = pass == 0 ? res.topo_fwd : res.topo_rev;
            Image2D& fb = pass == 0 ? res.fb_fwd : res.fb_rev;
            Image2D& err = pass == 0 ? res.err_fwd : res.err_rev;
            for (int c = 0; c < nx; ++c) {
                if (cnt[c] == 0) continue;
                topo.at(j, c) = acc_t[c] / cnt[c];
                fb.at(j, c) = acc_f[c] / cnt[c];
                err.at(j, c) = acc_e[c] / cnt[c];
            }
        }
    }

    if (frozen && !loop.crashed()) loop.freeze_z(false);
    res.duration_s = loop.time() - t0;
    return res;
}

} // namespace stmlab
