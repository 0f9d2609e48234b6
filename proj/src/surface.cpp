#include "stmlab/surface.hpp"

#include "stmlab/rng.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <stdexcept>

namespace stmlab {

using ordered_json = nlohmann::ordered_json;

Site& SurfaceModel::at(int row, int col) {
    if (row < 0 || row >= rows || col < 0 || col >= cols)
        throw std::out_of_range("site index outside lattice");
    return sites[static_cast<std::size_t>(row) * cols + col];
}

const Site& SurfaceModel::at(int row, int col) const {
    return const_cast<SurfaceModel*>(this)->at(row, col);
}

void SurfaceModel::desorb(int row, int col) {
    Site& s = at(row, col);
    if (s.kind == SiteKind::dangling_bond) return;
    s.kind = SiteKind::dangling_bond;
    s.phi_ev *= db_phi_factor;
    for (double& c : s.conduct) c *= db_conduct_factor;
}

std::pair<int, int> nearest_site(const SurfaceModel& m, double x_nm, double y_nm) {
    const int col = std::clamp(static_cast<int>(std::lround(x_nm / m.spacing_nm)), 0, m.cols - 1);
    const int row = std::clamp(static_cast<int>(std::lround(y_nm / m.spacing_nm)), 0, m.rows - 1);
    return {row, col};
}

Site sample_site(const SurfaceModel& m, double x_nm, double y_nm) {
    if (m.rows < 1 || m.cols < 1) throw std::invalid_argument("empty surface");
    const double gx = std::clamp(x_nm / m.spacing_nm, 0.0, static_cast<double>(m.cols - 1));
    const double gy = std::clamp(y_nm / m.spacing_nm, 0.0, static_cast<double>(m.rows - 1));
    const int c0 = std::min(static_cast<int>(gx), m.cols - 2 >= 0 ? m.cols - 2 : 0);
    const int r0 = std::min(static_cast<int>(gy), m.rows - 2 >= 0 ? m.rows - 2 : 0);
    const int c1 = std::min(c0 + 1, m.cols - 1);
    const int r1 = std::min(r0 + 1, m.rows - 1);
    const double fx = gx - c0;
    const double fy = gy - r0;

    const Site& s00 = m.at(r0, c0);
    const Site& s01 = m.at(r0, c1);
    const Site& s10 = m.at(r1, c0);
    const Site& s11 = m.at(r1, c1);

    auto blend = [&](double v00, double v01, double v10, double v11) {
        return (1.0 - fy) * ((1.0 - fx) * v00 + fx * v01) + fy * ((1.0 - fx) * v10 + fx * v11);
    };

    Site out;
    out.height_ang = blend(s00.height_ang, s01.height_ang, s10.height_ang, s11.height_ang);
    out.phi_ev = blend(s00.phi_ev, s01.phi_ev, s10.phi_ev, s11.phi_ev);
    for (std::size_t k = 0; k < out.conduct.size(); ++k)
        out.conduct[k] = blend(s00.conduct[k], s01.conduct[k], s10.conduct[k], s11.conduct[k]);

    // threshold-like properties come from the closest site, not a blend
    const Site& nearest = m.at(fy < 0.5 ? r0 : r1, fx < 0.5 ? c0 : c1);
    out.kind = nearest.kind;
    out.v_desorb = nearest.v_desorb;
    return out;
}

SurfaceModel generate_surface(const SurfaceGenSpec& spec) {
    if (spec.rows < 2 || spec.cols < 2) throw std::invalid_argument("surface needs at least 2x2 sites");
    if (spec.db_density + spec.vacancy_density > 1.0)
        throw std::invalid_argument("defect densities exceed 1");

    SurfaceModel m;
    m.rows = spec.rows;
    m.cols = spec.cols;
    m.spacing_nm = spec.spacing_nm;
    m.db_conduct_factor = spec.db_conduct_factor;
    m.db_phi_factor = spec.db_phi_factor;
    m.sites.resize(static_cast<std::size_t>(spec.rows) * spec.cols);

    Rng rng(spec.seed);
    for (int r = 0; r < spec.rows; ++r) {
        for (int c = 0; c < spec.cols; ++c) {
            Site s;
            s.phi_ev = spec.base_phi_ev;
            s.conduct = spec.base_conduct;
            s.v_desorb = spec.v_desorb;
            s.height_ang = spec.corrugation_ang *
                           std::sin(2.0 * std::numbers::pi * c / std::max(1, spec.corrugation_period));
            if (spec.step_col >= 0 && c >= spec.step_col) s.height_ang += spec.step_height_ang;

            const double u = rng.uniform();
            if (u < spec.vacancy_density) {
                s.kind = SiteKind::vacancy;
                s.height_ang -= 1.36;
                for (double& g : s.conduct) g *= 0.02;
            } else if (u < spec.vacancy_density + spec.db_density) {
                s.kind = SiteKind::dangling_bond;
                s.phi_ev *= spec.db_phi_factor;
                for (double& g : s.conduct) g *= spec.db_conduct_factor;
            }
            m.at(r, c) = s;
        }
    }
    return m;
}

std::string surface_to_json(const SurfaceModel& m) {
    ordered_json j;
    j["rows"] = m.rows;
    j["cols"] = m.cols;
    j["spacing_nm"] = m.spacing_nm;
    j["capacitance_f"] = m.capacitance_f;
    j["noise_sigma_a"] = m.noise_sigma_a;
    j["i_min_a"] = m.i_min_a;
    j["db_conduct_factor"] = m.db_conduct_factor;
    j["db_phi_factor"] = m.db_phi_factor;
    j["sites"] = ordered_json::array();
    for (const Site& s : m.sites) {
        ordered_json js;
        js["kind"] = static_cast<int>(s.kind);
        js["h"] = s.height_ang;
        js["phi"] = s.phi_ev;
        js["g"] = s.conduct;
        js["vd"] = s.v_desorb;
        j["sites"].push_back(std::move(js));
    }
    return j.dump(1);
}

SurfaceModel surface_from_json(const std::string& text) {
    const ordered_json j = ordered_json::parse(text);
    SurfaceModel m;
    m.rows = j.at("rows").get<int>();
    m.cols = j.at("cols").get<int>();
    m.spacing_nm = j.at("spacing_nm").get<double>();
    m.capacitance_f = j.at("capacitance_f").get<double>();
    m.noise_sigma_a = j.value("noise_sigma_a", 0.0);
    m.i_min_a = j.value("i_min_a", 1e-15);
    m.db_conduct_factor = j.value("db_conduct_factor", 5.0);
    m.db_phi_factor = j.value("db_phi_factor", 0.6);
    const auto& sites = j.at("sites");
    if (static_cast<int>(sites.size()) != m.rows * m.cols)
        throw std::invalid_argument("site count does not match lattice dimensions");
    m.sites.reserve(sites.size());
    for (const auto& js : sites) {
        Site s;
        s.kind = static_cast<SiteKind>(js.at("kind").get<int>());
        s.height_ang = js.at("h").get<double>();
        s.phi_ev = js.at("phi").get<double>();
        const auto& g = js.at("g");
        for (std::size_t k = 0; k < s.conduct.size() && k < g.size(); ++k)
            s.conduct[k] = g[k].get<double>();
        s.v_desorb = js.at("vd").get<double>();
        m.sites.push_back(s);
    }
    return m;
}

void save_surface(const SurfaceModel& m, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open " + path + " for writing");
    f << surface_to_json(m);
}

SurfaceModel load_surface(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open " + path);
    std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return surface_from_json(text);
}

} // namespace stmlab
