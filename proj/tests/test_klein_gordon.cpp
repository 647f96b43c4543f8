#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "spulse/errors.hpp"
#include "spulse/klein_gordon.hpp"
#include "spulse/short_pulse.hpp"

using namespace spulse;

namespace {

Grid unit_grid(std::size_t n = 32) { return make_grid(2.0 * kPi, n); }

Field wave(const Grid& g, double a, double k = 1.0, double phase = 0.0) {
    return Field::sample(g, [=](double x) { return a * std::sin(k * x + phase); });
}

// Localized short pulse on the x-line, u = 2 eps A0(x / (2 eps)) moved to the box centre.
struct Packet {
    double eps = 0.1;
    Grid xi = make_grid(32.0 * kPi, 512);
    Grid x = x_grid_for(xi, eps);
    Field A0 = admissible_initial_data(PulseShape::GaussianDerivative, 0.1, 1.0, xi);
    KGState kg0 = scale_up(A0, sp_rhs(A0), 0.0, eps, x);
};

}  // namespace

TEST_CASE("kg_rhs") {
    auto g = unit_grid();
    const KGState zero{0.0, Field(g), Field(g)};
    const auto r0 = kg_rhs(zero);
    CHECK(linf_norm(r0.du) == 0.0);
    CHECK(linf_norm(r0.dut) == 0.0);

    const double a = 0.3;
    const KGState s{0.0, wave(g, a), Field(g)};
    const Field want = Field::sample(g, [a](double x) {
        return -2.0 * a * std::sin(x) - a * a * a * (-0.75 * std::sin(x) + 2.25 * std::sin(3.0 * x));
    });
    CHECK(linf_norm(kg_rhs(s).dut - want) < 1e-8);

    const KGState bad{0.0, wave(g, 0.6), Field(g)};
    CHECK_THROWS_AS(kg_rhs(bad), ValidityRegionExceeded);
}

TEST_CASE("linear dispersion relation") {
    auto g = unit_grid();
    KGOptions lin;
    lin.linear_only = true;
    for (double k : {1.0, 3.0, 5.0}) {
        const Field u0 = Field::sample(g, [k](double x) { return 0.1 * std::cos(k * x); });
        const double omega = std::sqrt(1.0 + k * k);
        const auto run = kg_evolve(u0, Field(g), 2.0, 1e-3, 2000, lin);
        REQUIRE_FALSE(run.abort);
        const Field want = std::cos(omega * 2.0) * u0;
        CHECK(linf_norm(run.samples.back().u - want) < 1e-11);
    }
}

TEST_CASE("kg_evolve") {
    auto g = unit_grid();
    const auto zero = kg_evolve(Field(g), Field(g), 1.0, 0.01, 10);
    CHECK_FALSE(zero.abort);
    for (const auto& s : zero.samples) CHECK(linf_norm(s.u) == 0.0);
    REQUIRE(zero.samples.size() == 11);
    CHECK(zero.samples.back().t == doctest::Approx(1.0));

    // Near-linear regime: E1 is almost conserved.
    const double a = 1e-3;
    const auto run = kg_evolve(wave(g, a), Field(g), 10.0, 1e-3, 1000);
    REQUIRE_FALSE(run.abort);
    const double e0 = kg_energies(run.samples.front()).E1;
    for (const auto& s : run.samples) CHECK(std::fabs(kg_energies(s).E1 - e0) <= 1e-6 * e0);

    // Fourth-order self-convergence.
    Packet p;
    auto final_u = [&](double dt) {
        return kg_evolve(p.kg0.u, p.kg0.ut, 2.0, dt, 1 << 20).samples.back().u;
    };
    const double dt0 = 0.02;
    const Field u1 = final_u(dt0), u2 = final_u(dt0 / 2), u3 = final_u(dt0 / 4);
    const double ratio = l2_norm(u1 - u2) / l2_norm(u2 - u3);
    CHECK(ratio == doctest::Approx(16.0).epsilon(2.0 / 16.0));

    CHECK_THROWS_AS(kg_evolve(Field(g), Field(g), -1.0, 0.01, 1), InvalidArgument);
    CHECK_THROWS_AS(kg_evolve(wave(g, 0.6), Field(g), 1.0, 0.01, 1), ValidityRegionExceeded);
}

TEST_CASE("large data aborts before non-finite values") {
    auto g = make_grid(2.0 * kPi, 64);
    const auto run = kg_evolve(wave(g, 0.5), wave(g, 1.5, 2.0), 50.0, kg_dt(*g), 10);
    REQUIRE(run.abort);
    CHECK(run.abort->t > 0.0);
    for (const auto& s : run.samples) {
        CHECK(s.u.all_finite());
        CHECK(s.ut.all_finite());
    }
}

TEST_CASE("symmetric system") {
    auto g = unit_grid();
    const KGState zero{0.0, Field(g), Field(g)};
    const auto zr = symmetric_rhs(to_symmetric(zero));
    CHECK(linf_norm(zr.d1) == 0.0);
    CHECK(linf_norm(zr.d2) == 0.0);
    CHECK(linf_norm(zr.d3) == 0.0);

    const KGState still{0.0, wave(g, 0.2), Field(g)};
    const auto sym = to_symmetric(still);
    const Field ux = differentiate(still.u);
    for (std::size_t j = 0; j < g->size(); ++j)
        CHECK(std::fabs(sym.u2[j] - std::sqrt(1.0 - 3.0 * still.u[j] * still.u[j]) * ux[j]) < 1e-15);
    CHECK(linf_norm(symmetric_rhs(sym).d3) == 0.0);

    // Cross-solver agreement on small data.
    auto gs = make_grid(2.0 * kPi, 64);
    const KGState s0{0.0, wave(gs, 0.05) + wave(gs, 0.02, 2.0, 0.3), wave(gs, 0.03, 1.0, 1.0)};
    const auto run = kg_evolve(s0.u, s0.ut, 1.0, 1e-3, 1000);
    const auto ss = symmetric_evolve(to_symmetric(s0), 1.0, 1e-3);
    const Field& u = run.samples.back().u;
    CHECK(l2_norm(ss.u3 - u) <= 1e-6 * l2_norm(u));
}

TEST_CASE("energies") {
    auto g = unit_grid();
    const auto z = kg_energies({0.0, Field(g), Field(g)});
    CHECK(z.E1 == 0.0);
    CHECK(z.E2 == 0.0);
    CHECK(z.E3 == 0.0);

    const double a = 0.2;
    const auto e = kg_energies({0.0, wave(g, a), Field(g)});
    CHECK(e.E1 == doctest::Approx(2.0 * kPi * a * a - 0.75 * kPi * std::pow(a, 4)).epsilon(1e-13));

    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> U(-1.0, 1.0);
    for (int trial = 0; trial < 50; ++trial) {
        Field u(g), v(g);
        for (int m = 1; m <= 4; ++m) {
            u += wave(g, 0.1 * U(rng) / m, m, 3.0 * U(rng));
            v += wave(g, 0.1 * U(rng) / m, m, 3.0 * U(rng));
        }
        const auto en = kg_energies({0.0, u, v});
        CHECK(en.E1 >= 0.0);
        CHECK(en.E2 >= 0.0);
        CHECK(en.E3 >= 0.0);
    }
    CHECK_THROWS_AS(kg_energies({0.0, wave(g, 0.7), Field(g)}), ValidityRegionExceeded);
}

TEST_CASE("energy balance laws") {
    auto g = unit_grid();
    const auto zero = energy_rate_check(kg_evolve(Field(g), Field(g), 1.0, 0.01, 10).samples);
    for (int c = 0; c < 3; ++c) CHECK(zero.max_normalized[c] == 0.0);

    // One finely sampled run, thinned for the coarser strides. The window starts after
    // the fast left-moving transient has separated from the pulse.
    Packet p;
    const double fine = 0.05, t0 = 2.0, t1 = 6.0;
    const double dt = fine / std::ceil(fine / kg_dt(*p.x, 0.05));
    const auto run = kg_evolve(p.kg0.u, p.kg0.ut, t1, dt, static_cast<int>(std::llround(fine / dt)));
    REQUIRE_FALSE(run.abort);
    auto residual = [&](int thin) {
        std::vector<KGState> picked;
        for (std::size_t i = 0; i < run.samples.size(); i += thin)
            if (run.samples[i].t >= t0 - 1e-9) picked.push_back(run.samples[i]);
        return energy_rate_check(picked).max_normalized;
    };
    const auto r1 = residual(4), r2 = residual(2), r3 = residual(1);
    for (int c = 0; c < 3; ++c) {
        CHECK(r1[c] / r2[c] == doctest::Approx(4.0).epsilon(0.125));
        CHECK(r2[c] / r3[c] == doctest::Approx(4.0).epsilon(0.125));
        CHECK(r3[c] < 1e-4);
    }

    KGOptions lin;
    lin.linear_only = true;
    const double a = 1e-3;
    const auto lrun = kg_evolve(wave(g, a), Field(g), 5.0, 1e-3, 500, lin);
    const double e0 = kg_energies(lrun.samples.front()).E1;
    for (const auto& s : lrun.samples) {
        CHECK(std::fabs(kg_energy_rates(s).E1) <= 10.0 * std::pow(a, 4));
        CHECK(std::fabs(kg_energies(s).E1 - e0) <= 10.0 * std::pow(a, 4));
    }
}

TEST_CASE("continuation_monitor") {
    auto g = unit_grid();
    const auto z = continuation_monitor({{0.0, Field(g), Field(g)}});
    CHECK(z.M0 == 0.0);
    CHECK(z.ok);
    const Field bump = Field::sample(g, [](double x) { return 0.5 * std::exp(-(x - kPi) * (x - kPi)); });
    CHECK(continuation_monitor({{0.0, bump, Field(g)}, {1.0, bump, Field(g)}}).ok);
    CHECK(continuation_monitor({{0.0, bump, Field(g)}}).M0 == doctest::Approx(0.5));
    const Field high = (0.6 / 0.5) * bump;
    CHECK_FALSE(continuation_monitor({{0.0, high, Field(g)}}).ok);
}

TEST_CASE("frame maps") {
    Packet p;
    CHECK(p.x->length() == doctest::Approx(2.0 * p.eps * p.xi->length()));

    const ScaledState zero = scale_down({0.0, Field(p.x), Field(p.x)}, p.eps, p.xi);
    CHECK(linf_norm(zero.U) == 0.0);
    CHECK(linf_norm(zero.Utau) == 0.0);
    const KGState up0 = scale_up(Field(p.xi), Field(p.xi), 0.3, p.eps, p.x);
    CHECK(linf_norm(up0.u) == 0.0);
    CHECK(up0.t == doctest::Approx(3.0));

    // Round trip at a nonzero time.
    const Field At = sp_rhs(p.A0);
    const KGState s = scale_up(p.A0, At, 0.37, p.eps, p.x);
    const ScaledState back = scale_down(s, p.eps, p.xi);
    CHECK(back.tau == doctest::Approx(0.37));
    CHECK(linf_norm(back.U - p.A0) <= 1e-10 * linf_norm(p.A0));
    CHECK(linf_norm(back.Utau - At) <= 1e-10 * linf_norm(At));
    const KGState again = scale_up(back.U, back.Utau, back.tau, p.eps, p.x);
    CHECK(linf_norm(again.u - s.u) <= 1e-10 * linf_norm(s.u));
    CHECK(linf_norm(again.ut - s.ut) <= 1e-10 * linf_norm(s.ut));

    // Leading-order data: u = 2 eps A0(x / (2 eps)) and u_t = -A0'.
    const KGState lead = scale_up(p.A0, At, 0.0, p.eps, p.x, false);
    for (std::size_t j = 0; j < p.xi->size(); j += 37) CHECK(lead.u[j] == doctest::Approx(2.0 * p.eps * p.A0[j]));
    const Field dA = differentiate(p.A0);
    for (std::size_t j = 0; j < p.xi->size(); j += 37) CHECK(lead.ut[j] == doctest::Approx(-dA[j]));

    CHECK_THROWS_AS(scale_down(s, 0.2, p.xi), GridMismatch);
    CHECK_THROWS_AS(scale_up(p.A0, At, 0.0, p.eps, make_grid(1.0, 512)), GridMismatch);

    // U_tau from the chain rule agrees with centered tau-differences along a run.
    const double h = 0.005, tau_c = 0.3;
    const double dt = h / p.eps / std::ceil(h / p.eps / kg_dt(*p.x, 0.05));
    const auto run = kg_evolve(p.kg0.u, p.kg0.ut, (tau_c + 2.0 * h) / p.eps, dt,
                               static_cast<int>(std::llround(h / p.eps / dt)));
    REQUIRE_FALSE(run.abort);
    const std::size_t c = static_cast<std::size_t>(std::llround(tau_c / h));
    const ScaledState mid = scale_down(run.samples[c], p.eps, p.xi);
    auto defect = [&](std::size_t k) {
        const Field fd = (0.5 / (static_cast<double>(k) * h)) *
                         (scale_down(run.samples[c + k], p.eps, p.xi).U - scale_down(run.samples[c - k], p.eps, p.xi).U);
        return l2_norm(fd - mid.Utau) / l2_norm(mid.Utau);
    };
    CHECK(defect(2) / defect(1) == doctest::Approx(4.0).epsilon(0.125));
    CHECK(defect(1) < 1e-3);
}
