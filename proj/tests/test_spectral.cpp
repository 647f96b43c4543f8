#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "spulse/errors.hpp"
#include "spulse/spectral.hpp"

using namespace spulse;

namespace {

double max_diff(const Field& a, const Field& b) { return linf_norm(a - b); }

// Band-limited random zero-mean field.
Field random_field(const Grid& g, unsigned seed, int modes = 20) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> nd;
    std::vector<double> amp(modes), ph(modes);
    for (int m = 0; m < modes; ++m) {
        amp[m] = nd(rng) / (1.0 + m);
        ph[m] = nd(rng);
    }
    const double L = g->length();
    return Field::sample(g, [&](double x) {
        double v = 0.0;
        for (int m = 0; m < modes; ++m) v += amp[m] * std::cos(2.0 * kPi * (m + 1) * x / L + ph[m]);
        return v;
    });
}

}  // namespace

TEST_CASE("make_grid") {
    auto g = make_grid(2.0 * kPi, 16);
    CHECK(g->size() == 16);
    CHECK(g->node(1) == doctest::Approx(kPi / 8.0));
    const auto m = g->mode_numbers();
    CHECK(m.front() == -7);
    CHECK(m.back() == 8);
    CHECK(std::count(m.begin(), m.end(), 0) == 1);
    CHECK(g->k_max() == doctest::Approx(8.0));

    auto g2 = make_grid(4.0 * kPi, 32);
    CHECK(g2->spacing() == doctest::Approx(kPi / 8.0));
    CHECK(g2->wavenumbers()[1] == doctest::Approx(0.5));

    CHECK_THROWS_AS(make_grid(2.0 * kPi, 7), InvalidArgument);
    CHECK_THROWS_AS(make_grid(0.0, 16), InvalidArgument);
    CHECK_THROWS_AS(make_grid(-1.0, 16), InvalidArgument);
    CHECK_THROWS_AS(make_grid(1.0, 6), InvalidArgument);
}

TEST_CASE("round trip through the spectrum") {
    auto g = make_grid(10.0, 128);
    const Field f = random_field(g, 7);
    const Field back = to_field(to_spectrum(f));
    CHECK(max_diff(f, back) <= 1e-12 * linf_norm(f));
}

TEST_CASE("differentiate") {
    auto g = make_grid(2.0 * kPi, 32);
    const Field s1 = Field::sample(g, [](double x) { return std::sin(x); });
    const Field c1 = Field::sample(g, [](double x) { return std::cos(x); });
    CHECK(max_diff(differentiate(s1), c1) < 1e-12);

    const Field k = Field::sample(g, [](double) { return 3.0; });
    CHECK(linf_norm(differentiate(k, 3)) < 1e-14);

    const Field s2 = Field::sample(g, [](double x) { return std::sin(2.0 * x); });
    CHECK(max_diff(differentiate(s2, 2), -4.0 * s2) < 1e-12);
    CHECK_THROWS_AS(differentiate(s1, 0), InvalidArgument);
}

TEST_CASE("antiderivative") {
    auto g = make_grid(2.0 * kPi, 32);
    const Field s1 = Field::sample(g, [](double x) { return std::sin(x); });
    const Field c1 = Field::sample(g, [](double x) { return std::cos(x); });
    CHECK(max_diff(antiderivative(c1), s1) < 1e-12);
    CHECK(linf_norm(antiderivative(Field(g), 2)) == 0.0);

    const Field s2 = Field::sample(g, [](double x) { return std::sin(2.0 * x); });
    const Field c2 = Field::sample(g, [](double x) { return -0.5 * std::cos(2.0 * x); });
    CHECK(max_diff(antiderivative(s2), c2) < 1e-12);

    const Field shifted = Field::sample(g, [](double x) { return 0.1 + std::sin(x); });
    CHECK_THROWS_AS(antiderivative(shifted), MeanNotZero);

    auto gb = make_grid(20.0, 256);
    const Field f = random_field(gb, 11);
    for (int m = 1; m <= 3; ++m) {
        const Field back = differentiate(antiderivative(f, m), m);
        CHECK(l2_norm(back - f) <= 1e-10 * l2_norm(f));
    }
}

TEST_CASE("Sobolev and negative norms") {
    auto g = make_grid(2.0 * kPi, 32);
    const Field s1 = Field::sample(g, [](double x) { return std::sin(x); });
    const Field s2 = Field::sample(g, [](double x) { return std::sin(2.0 * x); });
    CHECK(sobolev_norm(s1, 0.0) == doctest::Approx(std::sqrt(kPi)).epsilon(1e-13));
    CHECK(sobolev_norm(s1, 1.0) == doctest::Approx(std::sqrt(2.0 * kPi)).epsilon(1e-13));
    CHECK(sobolev_norm(Field(g), 3.0) == 0.0);
    CHECK(homogeneous_negative_norm(s1, 1) == doctest::Approx(std::sqrt(kPi)).epsilon(1e-13));
    CHECK(homogeneous_negative_norm(s2, 1) == doctest::Approx(std::sqrt(kPi) / 2.0).epsilon(1e-13));
    CHECK(homogeneous_negative_norm(Field(g), 2) == 0.0);
    CHECK_THROWS_AS(homogeneous_negative_norm(s1 + Field::sample(g, [](double) { return 1.0; }), 1), MeanNotZero);

    auto gb = make_grid(30.0, 512);
    const Field f = random_field(gb, 5);
    CHECK(sobolev_norm(f, 0.0) == doctest::Approx(l2_norm(f)).epsilon(1e-10));
}

TEST_CASE("semigroup") {
    auto g = make_grid(2.0 * kPi, 32);
    const Field s1 = Field::sample(g, [](double x) { return std::sin(x); });
    CHECK(max_diff(semigroup_apply(s1, 0.0), s1) == 0.0);
    for (double tau : {0.3, 1.0, 7.5}) {
        const Field want = Field::sample(g, [tau](double x) { return std::sin(x - tau); });
        CHECK(max_diff(semigroup_apply(s1, tau), want) < 1e-12);
    }

    auto gb = make_grid(40.0, 256);
    const Field f = random_field(gb, 9);
    const double n0 = l2_norm(f);
    for (double tau : {-100.0, 0.1, 10.0, 100.0})
        CHECK(std::fabs(l2_norm(semigroup_apply(f, tau)) - n0) <= 1e-12 * n0);

    const Field ab = semigroup_apply(semigroup_apply(f, 0.7), 2.1);
    CHECK(linf_norm(ab - semigroup_apply(f, 2.8)) <= 1e-10 * linf_norm(f));

    // B_tau = d^{-1} B for B = S(tau) f: compare with a centered difference.
    const double h = 1e-4;
    const Field dt = (1.0 / (2.0 * h)) * (semigroup_apply(f, 1.0 + h) - semigroup_apply(f, 1.0 - h));
    CHECK(linf_norm(dt - antiderivative(semigroup_apply(f, 1.0))) < 1e-6);

    CHECK_THROWS_AS(semigroup_apply(s1 + Field::sample(g, [](double) { return 1.0; }), 1.0), MeanNotZero);
}

TEST_CASE("translate") {
    auto g = make_grid(2.0 * kPi, 32);
    const Field s1 = Field::sample(g, [](double x) { return std::sin(x); });
    const Field mc = Field::sample(g, [](double x) { return -std::cos(x); });
    CHECK(max_diff(translate(s1, kPi / 2.0), mc) < 1e-12);
    CHECK(max_diff(translate(s1, 0.0), s1) == 0.0);
    CHECK(max_diff(translate(s1, 2.0 * kPi), s1) < 1e-12);

    auto gb = make_grid(25.0, 256);
    const Field f = random_field(gb, 13);
    CHECK(max_diff(translate(translate(f, 3.3), -3.3), f) <= 1e-12 * linf_norm(f));
}

TEST_CASE("dealiasing and products") {
    auto g = make_grid(2.0 * kPi, 32);
    const Field s1 = Field::sample(g, [](double x) { return std::sin(x); });
    // sin^3 = (3 sin x - sin 3x)/4 lies below the cut-off and is reproduced exactly.
    const Field want = Field::sample(g, [](double x) { return 0.75 * std::sin(x) - 0.25 * std::sin(3.0 * x); });
    CHECK(max_diff(power(s1, 3), want) < 1e-14);
    CHECK(max_diff(product(s1, s1), Field::sample(g, [](double x) { return 0.5 - 0.5 * std::cos(2 * x); })) < 1e-14);

    const Field hi = Field::sample(g, [](double x) { return std::cos(12.0 * x); });
    CHECK(linf_norm(dealias(hi)) < 1e-14);
}

TEST_CASE("mean handling and grid mismatch") {
    auto g = make_grid(2.0 * kPi, 16);
    auto h = make_grid(4.0 * kPi, 16);
    const Field a = Field::sample(g, [](double x) { return 1.0 + std::sin(x); });
    CHECK(mean(a) == doctest::Approx(1.0));
    CHECK(std::fabs(mean(remove_mean(a))) < 1e-15);
    CHECK(mean_ratio(Field(g)) == 0.0);
    CHECK_THROWS_AS(a + Field(h), GridMismatch);
    CHECK_THROWS_AS(inner(a, Field(h)), GridMismatch);
    CHECK_THROWS_AS(Field(g, std::vector<double>(3)), InvalidArgument);
    CHECK(integrate(a) == doctest::Approx(2.0 * kPi));
}
