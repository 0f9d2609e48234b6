#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace stmlab {

enum class SiteKind : std::uint8_t { hsi = 0, dangling_bond = 1, vacancy = 2 };

/// One lattice site. conduct holds the polynomial conductance L(V) in amperes,
///   L(V) = sum_k conduct[k] V^k.
struct Site {
    SiteKind kind = SiteKind::hsi;
    double height_ang = 0.0;
    double phi_ev = 4.0;
    std::array<double, 8> conduct{};
    double v_desorb = 3.4;
};

struct SurfaceModel {
    int rows = 0;
    int cols = 0;
    double spacing_nm = 0.384;
    double capacitance_f = 0.5e-12;
    double noise_sigma_a = 0.0; // current-referred Gaussian noise, A rms
    double i_min_a = 1e-15;     // floor for logarithmic processing
    double db_conduct_factor = 5.0;
    double db_phi_factor = 0.6;
    std::vector<Site> sites; // row-major, row = y index, col = x index

    Site& at(int row, int col);
    const Site& at(int row, int col) const;
    double width_nm() const { return (cols - 1) * spacing_nm; }
    double height_nm() const { return (rows - 1) * spacing_nm; }

    /// Turn a site into a dangling bond using the surface mutation factors.
    void desorb(int row, int col);
};

/// Properties seen by the tip at an arbitrary position: heights, work function
/// and conductance coefficients blend bilinearly between the four neighbours;
/// positions outside the lattice clamp to the boundary.
Site sample_site(const SurfaceModel& m, double x_nm, double y_nm);

/// Nearest lattice site to a position (row, col), clamped to the grid.
std::pair<int, int> nearest_site(const SurfaceModel& m, double x_nm, double y_nm);

struct SurfaceGenSpec {
    int rows = 64;
    int cols = 64;
    double spacing_nm = 0.384;
    double base_phi_ev = 4.0;
    std::array<double, 8> base_conduct{0.0, 4e-6, 0.0, 2.56e-7, 0.0, 0.0, 0.0, 0.0};
    double v_desorb = 3.4;
    double corrugation_ang = 0.15; // dimer-row ripple, peak amplitude
    int corrugation_period = 4;    // columns per ripple period
    int step_col = -1;             // monatomic step edge at this column, -1 for none
    double step_height_ang = 1.36;
    double db_density = 0.0;
    double vacancy_density = 0.0;
    double db_conduct_factor = 5.0;
    double db_phi_factor = 0.6;
    std::uint64_t seed = 1;
};

SurfaceModel generate_surface(const SurfaceGenSpec& spec);

std::string surface_to_json(const SurfaceModel& m);
SurfaceModel surface_from_json(const std::string& text);
void save_surface(const SurfaceModel& m, const std::string& path);
SurfaceModel load_surface(const std::string& path);

} // namespace stmlab
