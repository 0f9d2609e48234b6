#include "stmlab/litho.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <stdexcept>

namespace stmlab::litho {

namespace {

void check_model(const DesorptionModel& model) {
    if (model.tau_dwell_s <= 0.0) throw std::invalid_argument("dwell requirement must be positive");
    if (model.r_fe_nm <= 0.0 || model.v_fe <= 0.0)
        throw std::invalid_argument("field-emission radius and bias must be positive");
}

// cumulative above-threshold dwell per site; fires the surface mutation
class DoseTracker {
public:
    DoseTracker(const SurfaceModel& m, const DesorptionModel& model, double fs_hz)
        : dose_(m.sites.size(), 0.0), model_(model), dt_(1.0 / fs_hz), rng_(model.seed) {}

    /// returns true when the site nearest (x, y) just lost its H
    bool step(SurfaceModel& m, double x_nm, double y_nm, double v_inst, int& row, int& col) {
        const auto [r, c] = nearest_site(m, x_nm, y_nm);
        Site& s = m.at(r, c);
        if (s.kind != SiteKind::hsi || std::abs(v_inst) < s.v_desorb) return false;
        bool fire;
        if (model_.yield_per_s > 0.0) {
            std::bernoulli_distribution d(-std::expm1(-model_.yield_per_s * dt_));
            fire = d(rng_);
        } else {
            double& acc = dose_[static_cast<std::size_t>(r) * m.cols + c];
            acc += dt_;
            fire = acc >= model_.tau_dwell_s;
        }
        if (!fire) return false;
        m.desorb(r, c);
        row = r;
        col = c;
        return true;
    }

private:
    std::vector<double> dose_;
    DesorptionModel model_;
    double dt_;
    std::mt19937_64 rng_;
};

double controller_z_ang(const FeedbackLoop& loop) {
    return -loop.config().plant.extension_gain() * loop.last_sample().u;
}

double segment_distance_nm(double px, double py, double x0, double y0, double x1, double y1) {
    const double dx = x1 - x0, dy = y1 - y0;
    const double l2 = dx * dx + dy * dy;
    double t = l2 > 0.0 ? ((px - x0) * dx + (py - y0) * dy) / l2 : 0.0;
    t = std::clamp(t, 0.0, 1.0);
    return std::hypot(px - (x0 + t * dx), py - (y0 + t * dy));
}

void check_on_surface(const SurfaceModel& m, double x_nm, double y_nm) {
    if (x_nm < 0.0 || y_nm < 0.0 || x_nm > m.width_nm() || y_nm > m.height_nm())
        throw std::invalid_argument("path leaves the surface");
}

nlohmann::ordered_json event_to_json(const DesorptionEvent& e) {
    return {{"row", e.row},
            {"col", e.col},
            {"t_s", e.t_s},
            {"trigger", to_string(e.trigger)},
            {"z_jump_ang", e.z_jump_ang}};
}

} // namespace

const char* to_string(LithoTrigger t) {
    return t == LithoTrigger::z_jump ? "z_jump" : "v_max_reached";
}

LithoTrigger trigger_from_string(const std::string& s) {
    if (s == "z_jump") return LithoTrigger::z_jump;
    if (s == "v_max_reached") return LithoTrigger::v_max_reached;
    throw std::invalid_argument("unknown desorption trigger: " + s);
}

RetractionDetector::RetractionDetector(double fs_hz, double threshold_ang, double window_s)
    : threshold_(threshold_ang) {
    if (fs_hz <= 0.0 || threshold_ang <= 0.0 || window_s <= 0.0)
        throw std::invalid_argument("detector needs positive rate, threshold and window");
    buf_.assign(static_cast<std::size_t>(std::max(2L, std::lround(window_s * fs_hz))), 0.0);
}

bool RetractionDetector::push(double z_ang) {
    const double oldest = count_ > 0 ? buf_[head_] : z_ang;
    if (count_ < buf_.size()) {
        buf_[(head_ + count_) % buf_.size()] = z_ang;
        ++count_;
    } else {
        buf_[head_] = z_ang;
        head_ = (head_ + 1) % buf_.size();
    }
    jump_ = z_ang - oldest;
    if (jump_ > threshold_) {
        head_ = 0;
        count_ = 0;
        return true;
    }
    return false;
}

void RetractionDetector::reset() {
    head_ = 0;
    count_ = 0;
    jump_ = 0.0;
}

FclWatchResult fcl_watch(FeedbackLoop& loop, double duration_s, double threshold_ang,
                         double window_s) {
    if (!loop.engaged()) throw std::logic_error("watching for retractions needs an engaged loop");
    if (duration_s <= 0.0) throw std::invalid_argument("watch duration must be positive");
    RetractionDetector det(loop.fs(), threshold_ang, window_s);

    FclWatchResult out;
    const long n = std::lround(duration_s * loop.fs());
    for (long i = 0; i < n; ++i) {
        const LoopSample s = loop.tick();
        if (det.push(controller_z_ang(loop))) {
            const auto [r, c] = nearest_site(loop.surface(), s.x_nm, s.y_nm);
            out.events.push_back({r, c, s.t, LithoTrigger::z_jump, det.jump_ang()});
        }
        if (s.crashed) break;
    }
    out.duration_s = n / loop.fs();
    return out;
}

HdlLineResult hdl_line(FeedbackLoop& loop, double x0_nm, double y0_nm, double x1_nm,
                       double y1_nm, double setpoint_apv, double bias_v, double speed_nm_s,
                       const DesorptionModel& model) {
    check_model(model);
    if (loop.config().source != FeedbackSource::inphase_fundamental)
        throw std::invalid_argument("depassivation passes run under dI/dV feedback");
    if (setpoint_apv <= 0.0 || speed_nm_s <= 0.0)
        throw std::invalid_argument("litho setpoint and speed must be positive");
    if (std::abs(bias_v) >= model.v_fe)
        throw std::invalid_argument("bias is in the field-emission regime, use fe_write");
    SurfaceModel& m = loop.surface();
    check_on_surface(m, x0_nm, y0_nm);
    check_on_surface(m, x1_nm, y1_nm);

    if (!loop.engaged()) {
        loop.engage_at(x0_nm, y0_nm);
    } else {
        loop.move_to(x0_nm, y0_nm);
        loop.run(0.01);
    }
    const double bias0 = loop.bias();
    const double apv0 = loop.setpoint_apv();
    const double t0 = loop.time();

    const double fs = loop.fs();
    const long n_slew = std::lround(0.015 * fs);
    const long n_settle = std::lround(0.02 * fs);
    const long n_entry = n_slew + n_settle;
    const long n_walk =
        std::max<long>(1, std::lround(std::hypot(x1_nm - x0_nm, y1_nm - y0_nm) / speed_nm_s * fs));
    DoseTracker dose(m, model, fs);
    RetractionDetector det(fs, 0.3);

    // slamming the writing bias and setpoint in one sample rings the loop hard
    // enough to trip its own watchdog, so both glide over a few milliseconds,
    // the setpoint geometrically to keep the tracking error flat
    auto glide = [&](long i, long n, double from_bias, double to_bias, double from_apv,
                     double to_apv) {
        const double f = static_cast<double>(i + 1) / n;
        loop.set_bias(from_bias + f * (to_bias - from_bias));
        loop.set_setpoint_apv(from_apv * std::pow(to_apv / from_apv, f));
    };

    HdlLineResult out;
    int pr = -1, pc = -1; // last site desorbed, for event attribution
    bool alive = true;
    for (long i = 0; i < n_entry + n_walk && alive; ++i) {
        if (i < n_slew) {
            glide(i, n_slew, bias0, bias_v, apv0, setpoint_apv);
        } else if (i >= n_entry) {
            const double f = (i - n_entry + 0.5) / n_walk;
            loop.move_to(x0_nm + f * (x1_nm - x0_nm), y0_nm + f * (y1_nm - y0_nm));
        }
        const LoopSample s = loop.tick();
        int r, c;
        if (dose.step(m, s.x_nm, s.y_nm, s.v_inst, r, c)) {
            ++out.desorbed;
            pr = r;
            pc = c;
        }
        if (det.push(controller_z_ang(loop))) {
            auto [nr, nc] = nearest_site(m, s.x_nm, s.y_nm);
            if (pr >= 0) {
                nr = pr;
                nc = pc;
                pr = -1;
            }
            out.events.push_back({nr, nc, s.t, LithoTrigger::z_jump, det.jump_ang()});
        }
        if (s.unstable) {
            out.unstable = true;
            alive = false;
        }
        if (s.crashed) {
            out.crashed = true;
            alive = false;
        }
    }

    const double bias_now = loop.bias();
    const double apv_now = loop.setpoint_apv();
    for (long i = 0; i < n_slew && !loop.crashed(); ++i) {
        glide(i, n_slew, bias_now, bias0, apv_now, apv0);
        const LoopSample s = loop.tick();
        if (det.push(controller_z_ang(loop)) && pr >= 0) {
            out.events.push_back({pr, pc, s.t, LithoTrigger::z_jump, det.jump_ang()});
            pr = -1;
        }
    }
    if (!loop.crashed()) loop.run(0.02);
    out.completed = alive;
    out.duration_s = loop.time() - t0;
    return out;
}

int fe_write(FeedbackLoop& loop, double x0_nm, double y0_nm, double x1_nm, double y1_nm,
             double v_bias, const DesorptionModel& model) {
    check_model(model);
    if (std::abs(v_bias) < model.v_fe)
        throw std::invalid_argument("field emission needs at least the FE bias");
    if (x0_nm == x1_nm && y0_nm == y1_nm) return 0;

    SurfaceModel& m = loop.surface();
    int cleared = 0;
    for (int r = 0; r < m.rows; ++r) {
        for (int c = 0; c < m.cols; ++c) {
            if (m.at(r, c).kind != SiteKind::hsi) continue;
            const double d = segment_distance_nm(c * m.spacing_nm, r * m.spacing_nm, x0_nm,
                                                 y0_nm, x1_nm, y1_nm);
            if (d <= model.r_fe_nm) {
                m.desorb(r, c);
                ++cleared;
            }
        }
    }
    return cleared;
}

VmfclResult vmfcl(FeedbackLoop& loop, const VmfclConfig& cfg, const DesorptionModel& model) {
    check_model(model);
    const LoopConfig& lc = loop.config();
    if (cfg.ramp_v_s <= 0.0 || cfg.z_jump_ang <= 0.0)
        throw std::invalid_argument("ramp rate and jump threshold must be positive");
    if (cfg.vm_start < 0.0 || cfg.vm_max <= cfg.vm_start)
        throw std::invalid_argument("modulation ramp range is empty");
    if (cfg.hover_s < 0.0 || cfg.telemetry_decim < 1)
        throw std::invalid_argument("bad hover time or telemetry decimation");
    if (lc.source != FeedbackSource::log_current)
        throw std::invalid_argument("the job keeps the loop in constant-current imaging mode");
    if (lc.mod.f_hz <= 0.0 || std::abs(lc.mod.f_hz - cfg.f_mod_hz) > 1e-6)
        throw std::invalid_argument("loop modulation frequency does not match the job");
    if (std::abs(cfg.v_dc) >= model.v_fe)
        throw std::invalid_argument("dc bias is in the field-emission regime");
    const bool notched =
        lc.notch.in_loop &&
        std::any_of(lc.notch.freqs_hz.begin(), lc.notch.freqs_hz.end(),
                    [&](double f) { return std::abs(f - cfg.f_mod_hz) <= 1.0; });
    if (!notched)
        throw std::invalid_argument("the notch bank must shield the feedback from the ramp");

    SurfaceModel& m = loop.surface();
    for (auto [r, c] : cfg.targets)
        if (r < 0 || r >= m.rows || c < 0 || c >= m.cols)
            throw std::out_of_range("target site outside the lattice");

    const double fs = loop.fs();
    loop.set_bias(cfg.v_dc);
    loop.set_setpoint(cfg.setpoint_a);
    loop.set_modulation_amplitude(cfg.vm_start);

    VmfclResult out;
    DoseTracker dose(m, model, fs);
    RetractionDetector det(fs, cfg.z_jump_ang);
    const long period_ticks = std::max<long>(1, std::lround(fs / cfg.f_mod_hz));

    long tick_count = 0;
    long cycle_tick = 0;
    double cyc_raw_lo = 0.0, cyc_raw_hi = 0.0, cyc_filt_lo = 0.0, cyc_filt_hi = 0.0;
    double pp_raw = 0.0, pp_filt = 0.0;
    long cycles = 0;

    auto record = [&](const LoopSample& s, bool ramping) {
        if (tick_count % cfg.telemetry_decim == 0) {
            out.telemetry.t_s.push_back(s.t);
            out.telemetry.z_ang.push_back(controller_z_ang(loop));
            out.telemetry.vm_v.push_back(loop.modulation_vm());
            out.telemetry.i_raw_a.push_back(s.v_pre / lc.plant.preamp_r);
            out.telemetry.i_filt_a.push_back(s.v_filt / lc.plant.preamp_r);
        }
        ++tick_count;
        if (!ramping) {
            cycle_tick = 0;
            return;
        }
        if (cycle_tick == 0) {
            cyc_raw_lo = cyc_raw_hi = s.v_pre;
            cyc_filt_lo = cyc_filt_hi = s.v_filt;
        } else {
            cyc_raw_lo = std::min(cyc_raw_lo, s.v_pre);
            cyc_raw_hi = std::max(cyc_raw_hi, s.v_pre);
            cyc_filt_lo = std::min(cyc_filt_lo, s.v_filt);
            cyc_filt_hi = std::max(cyc_filt_hi, s.v_filt);
        }
        if (++cycle_tick == period_ticks) {
            pp_raw += cyc_raw_hi - cyc_raw_lo;
            pp_filt += cyc_filt_hi - cyc_filt_lo;
            ++cycles;
            cycle_tick = 0;
        }
    };

    const double t0 = loop.time();
    for (auto [tr, tc] : cfg.targets) {
        const double x = tc * m.spacing_nm;
        const double y = tr * m.spacing_nm;
        if (!loop.engaged()) {
            loop.engage_at(x, y);
        } else {
            loop.move_to(x, y);
        }
        const long n_hover = std::lround(cfg.hover_s * fs);
        for (long i = 0; i < n_hover && !loop.crashed(); ++i) record(loop.tick(), false);
        if (loop.crashed()) break;

        det.reset();
        double vm = loop.modulation_vm();
        bool fired = false;
        double z_pre = 0.0, t_fire = 0.0;
        while (!fired && vm < cfg.vm_max) {
            vm = std::min(cfg.vm_max, vm + cfg.ramp_v_s / fs);
            loop.set_modulation_amplitude(vm);
            const LoopSample s = loop.tick();
            record(s, true);
            int r, c;
            dose.step(m, s.x_nm, s.y_nm, s.v_inst, r, c);
            if (det.push(controller_z_ang(loop))) {
                fired = true;
                z_pre = controller_z_ang(loop) - det.jump_ang();
                t_fire = s.t;
            }
            if (s.crashed) break;
        }
        if (loop.crashed()) break;
        if (!fired)
            out.events.push_back({tr, tc, loop.time(), LithoTrigger::v_max_reached, 0.0});

        // quick ramp-down; the retraction finishes while it runs, so the full
        // jump is read once the modulation is back at its resting amplitude
        while (vm > cfg.vm_start && !loop.crashed()) {
            vm = std::max(cfg.vm_start, vm - 10.0 * cfg.ramp_v_s / fs);
            loop.set_modulation_amplitude(vm);
            record(loop.tick(), false);
        }
        if (fired && !loop.crashed()) {
            out.events.push_back(
                {tr, tc, t_fire, LithoTrigger::z_jump, controller_z_ang(loop) - z_pre});
        }
        if (loop.crashed()) break;
    }

    out.aborted = loop.crashed();
    if (cycles > 0) {
        pp_raw /= cycles;
        pp_filt /= cycles;
    }
    out.ripple_raw_a = pp_raw / lc.plant.preamp_r;
    out.ripple_filt_a = pp_filt / lc.plant.preamp_r;
    out.duration_s = loop.time() - t0;
    return out;
}

void write_event_log(const std::vector<DesorptionEvent>& events, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot open " + path);
    for (const DesorptionEvent& e : events) f << event_to_json(e).dump() << '\n';
}

std::vector<DesorptionEvent> read_event_log(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open " + path);
    std::vector<DesorptionEvent> events;
    std::string line;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        const auto js = nlohmann::json::parse(line);
        events.push_back({js.at("row").get<int>(), js.at("col").get<int>(),
                          js.at("t_s").get<double>(),
                          trigger_from_string(js.at("trigger").get<std::string>()),
                          js.at("z_jump_ang").get<double>()});
    }
    return events;
}

void apply_event_log(SurfaceModel& m, const std::vector<DesorptionEvent>& events) {
    for (const DesorptionEvent& e : events)
        if (e.trigger == LithoTrigger::z_jump) m.desorb(e.row, e.col);
}

void write_telemetry_csv(const VmfclTelemetry& t, const std::string& path) {
    std::FILE* f = std::fopen(path.c_str(), "w");
    if (!f) throw std::runtime_error("cannot open " + path);
    std::fprintf(f, "t_s,z_ang,vm_v,i_raw_a,i_filt_a\n");
    for (std::size_t k = 0; k < t.t_s.size(); ++k)
        std::fprintf(f, "%.12g,%.12g,%.12g,%.12g,%.12g\n", t.t_s[k], t.z_ang[k], t.vm_v[k],
                     t.i_raw_a[k], t.i_filt_a[k]);
    std::fclose(f);
}

} // namespace stmlab::litho
