#pragma once

#include "stmlab/loop.hpp"

#include <cstddef>
#include <limits>
#include <vector>

namespace stmlab {

/// Row-major raster buffer; quiet NaN marks pixels never acquired.
struct Image2D {
    int rows = 0;
    int cols = 0;
    std::vector<double> data;

    Image2D() = default;
    Image2D(int r, int c)
        : rows(r), cols(c),
          data(static_cast<std::size_t>(r) * c, std::numeric_limits<double>::quiet_NaN()) {}

    double& at(int r, int c) { return data[static_cast<std::size_t>(r) * cols + c]; }
    double at(int r, int c) const { return data[static_cast<std::size_t>(r) * cols + c]; }
};

enum class ScanMode { constant_current, constant_height, constant_didv };

struct ScanConfig {
    ScanMode mode = ScanMode::constant_current;
    double x0_nm = 0.0; ///< frame origin, lower-left corner
    double y0_nm = 0.0;
    double width_nm = 10.0;
    double height_nm = 10.0;
    int pixels_x = 64;
    int pixels_y = 64;
    double speed_nm_s = 100.0; ///< tip speed along the fast axis
    double settle_s = 0.05;    ///< hold after engage or recovery before moving
};

/// Fast-axis turnaround rate of the triangle drive.
double line_frequency(const ScanConfig& cfg);

/// One raster acquisition. Pixels are dwell averages and the forward and
/// reverse passes of every line are kept apart. topo is apparent height in
/// angstroms referenced to the first engaged pixel, fb is the raw feedback
/// variable and err the loop error. A tip crash aborts the running line; the
/// remaining pixels stay NaN and the tip re-engages at the next line start.
struct ScanResult {
    double f_line_hz = 0.0;
    double datum_u = 0.0; ///< drive level at the reference pixel, volts
    Image2D topo_fwd, topo_rev;
    Image2D fb_fwd, fb_rev;
    Image2D err_fwd, err_rev;
    int crash_count = 0;
    std::vector<int> crashed_rows;
    double duration_s = 0.0;
};

ScanResult run_scan(FeedbackLoop& loop, const ScanConfig& cfg);

} // namespace stmlab
