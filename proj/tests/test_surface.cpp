#include "stmlab/surface.hpp"

#include <doctest.h>

#include <cmath>
#include <stdexcept>

using namespace stmlab;

namespace {
SurfaceModel flat_2x2() {
    SurfaceModel m;
    m.rows = m.cols = 2;
    m.spacing_nm = 1.0;
    m.sites.resize(4);
    m.at(0, 0).height_ang = 0.0;
    m.at(0, 1).height_ang = 1.0;
    m.at(1, 0).height_ang = 2.0;
    m.at(1, 1).height_ang = 3.0;
    return m;
}
} // namespace

TEST_CASE("bilinear height interpolation") {
    const SurfaceModel m = flat_2x2();
    CHECK(sample_site(m, 0.25, 0.75).height_ang == doctest::Approx(1.75));
    CHECK(sample_site(m, 0.0, 0.0).height_ang == doctest::Approx(0.0));
    CHECK(sample_site(m, 1.0, 1.0).height_ang == doctest::Approx(3.0));
    CHECK(sample_site(m, 0.5, 0.5).height_ang == doctest::Approx(1.5));
}

TEST_CASE("positions outside the lattice clamp to the boundary") {
    const SurfaceModel m = flat_2x2();
    CHECK(sample_site(m, -5.0, -5.0).height_ang == doctest::Approx(0.0));
    CHECK(sample_site(m, 9.0, 9.0).height_ang == doctest::Approx(3.0));
    CHECK(sample_site(m, 9.0, -1.0).height_ang == doctest::Approx(1.0));
}

TEST_CASE("work function and conductance blend alongside height") {
    SurfaceModel m = flat_2x2();
    m.at(0, 0).phi_ev = 4.0;
    m.at(0, 1).phi_ev = 2.0;
    m.at(1, 0).phi_ev = 4.0;
    m.at(1, 1).phi_ev = 2.0;
    m.at(0, 1).conduct[1] = 8e-6;
    CHECK(sample_site(m, 0.5, 0.0).phi_ev == doctest::Approx(3.0));
    CHECK(sample_site(m, 0.5, 0.0).conduct[1] == doctest::Approx(4e-6));
}

TEST_CASE("nearest site resolves threshold properties") {
    SurfaceModel m = flat_2x2();
    m.at(1, 1).kind = SiteKind::dangling_bond;
    m.at(1, 1).v_desorb = 9.9;
    CHECK(sample_site(m, 0.9, 0.9).kind == SiteKind::dangling_bond);
    CHECK(sample_site(m, 0.9, 0.9).v_desorb == doctest::Approx(9.9));
    CHECK(sample_site(m, 0.1, 0.1).kind == SiteKind::hsi);
    CHECK(nearest_site(m, 0.9, 0.1) == std::pair<int, int>{0, 1});
    CHECK(nearest_site(m, -3.0, 5.0) == std::pair<int, int>{1, 0});
}

TEST_CASE("out-of-range site access throws") {
    SurfaceModel m = flat_2x2();
    CHECK_THROWS_AS(m.at(2, 0), std::out_of_range);
    CHECK_THROWS_AS(m.at(0, -1), std::out_of_range);
}

TEST_CASE("desorption applies the configured mutation once") {
    SurfaceModel m = flat_2x2();
    m.at(0, 0).conduct = {0.0, 4e-6, 0.0, 2.56e-7, 0, 0, 0, 0};
    m.desorb(0, 0);
    const Site& s = m.at(0, 0);
    CHECK(s.kind == SiteKind::dangling_bond);
    CHECK(s.phi_ev == doctest::Approx(2.4));
    CHECK(s.conduct[1] == doctest::Approx(2e-5));
    CHECK(s.conduct[3] == doctest::Approx(1.28e-6));
    m.desorb(0, 0);
    CHECK(m.at(0, 0).phi_ev == doctest::Approx(2.4));
}

TEST_CASE("generator: corrugation, step edge, defect seeding") {
    SurfaceGenSpec spec;
    spec.rows = 32;
    spec.cols = 32;
    spec.corrugation_ang = 0.2;
    spec.corrugation_period = 4;
    spec.step_col = 16;
    spec.step_height_ang = 1.36;
    spec.db_density = 0.1;
    spec.seed = 42;
    const SurfaceModel m = generate_surface(spec);

    CHECK(m.at(3, 0).height_ang == doctest::Approx(0.0));
    CHECK(m.at(3, 1).height_ang == doctest::Approx(0.2));
    CHECK(m.at(5, 20).height_ang - m.at(5, 20 - 16).height_ang == doctest::Approx(1.36));

    int dbs = 0;
    for (const Site& s : m.sites) dbs += s.kind == SiteKind::dangling_bond;
    CHECK(dbs > 60);
    CHECK(dbs < 145);

    const SurfaceModel again = generate_surface(spec);
    CHECK(surface_to_json(again) == surface_to_json(m));
    spec.seed = 43;
    CHECK(surface_to_json(generate_surface(spec)) != surface_to_json(m));
}

TEST_CASE("vacancies sit low and conduct poorly") {
    SurfaceGenSpec spec;
    spec.rows = 16;
    spec.cols = 16;
    spec.corrugation_ang = 0.0;
    spec.vacancy_density = 0.3;
    spec.seed = 7;
    const SurfaceModel m = generate_surface(spec);
    bool found = false;
    for (const Site& s : m.sites) {
        if (s.kind != SiteKind::vacancy) continue;
        found = true;
        CHECK(s.height_ang == doctest::Approx(-1.36));
        CHECK(s.conduct[1] == doctest::Approx(0.02 * spec.base_conduct[1]));
    }
    CHECK(found);
}

TEST_CASE("json round trip is lossless and stable") {
    SurfaceGenSpec spec;
    spec.rows = 8;
    spec.cols = 8;
    spec.db_density = 0.2;
    spec.seed = 3;
    const SurfaceModel m = generate_surface(spec);
    const std::string text = surface_to_json(m);
    const SurfaceModel back = surface_from_json(text);
    CHECK(surface_to_json(back) == text);
    CHECK(back.rows == 8);
    CHECK(back.at(4, 4).phi_ev == m.at(4, 4).phi_ev);
}

TEST_CASE("generator rejects nonsense") {
    SurfaceGenSpec spec;
    spec.rows = 1;
    CHECK_THROWS_AS(generate_surface(spec), std::invalid_argument);
    spec.rows = 8;
    spec.db_density = 0.9;
    spec.vacancy_density = 0.2;
    CHECK_THROWS_AS(generate_surface(spec), std::invalid_argument);
}
