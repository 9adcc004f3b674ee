#include "helpers.hpp"

#include <catch2/catch_amalgamated.hpp>

using namespace mmbm;
using Catch::Approx;

TEST_CASE("identical-leg scalar model is a reflected diffusion", "[flexible]") {
    // With both legs equal the cycle average reproduces the classical
    // truncated-exponential law with K = 2 mu / sigma^2.
    const auto dist = assemble(helpers::bm_case(1));
    const double K = -0.2, b = 4.0;
    auto cdf = [&](double x) {
        return (1.0 - std::exp(K * x)) / (1.0 - std::exp(K * b));
    };
    for (int k = 0; k <= 10; ++k) {
        const double x = b * k / 10.0;
        REQUIRE(total_cdf(dist, x) == Approx(cdf(x)).margin(1e-10));
    }
    const double med = std::log(0.5 * (1.0 + std::exp(K * b))) / K;
    REQUIRE(quantile(dist, 0.5) == Approx(med).margin(1e-6));
    REQUIRE(total_cdf(dist, 3.44) == Approx(0.90).margin(0.01));
}

TEST_CASE("CDF endpoints", "[flexible]") {
    for (int c : {1, 2, 3}) {
        const auto dist = assemble(helpers::bm_case(c));
        REQUIRE(total_cdf(dist, 0.0) == Approx(0.0).margin(1e-14));
        REQUIRE(total_cdf(dist, dist.b) == Approx(1.0).margin(1e-12));
    }
}

TEST_CASE("leg fractions partition the cycle", "[flexible]") {
    const auto dist = assemble(helpers::video_case(2));
    const double up = up_leg_fraction(dist);
    const double down = dist.down_time / dist.normalizer;
    REQUIRE(up + down == Approx(1.0).margin(1e-12));
    REQUIRE(up > 0.0);
    REQUIRE(up < 1.0);
}

TEST_CASE("diffusive rescaling leaves the law invariant", "[flexible]") {
    // X'(t) = c X(t/c^2) maps (Q, mu, sigma, b) to (Q/c^2, mu/c, sigma, cb).
    const double c = 7.0;
    FlexibleModel base = helpers::video_case(2);
    FlexibleModel scaled = base;
    scaled.b *= c;
    for (MmbmParams* p : {&scaled.up, &scaled.down}) {
        p->Q /= c * c;
        p->mu /= c;
    }
    const auto d0 = assemble(base);
    const auto d1 = assemble(scaled);
    REQUIRE(up_leg_fraction(d1) == Approx(up_leg_fraction(d0)).margin(1e-9));
    for (int k = 0; k <= 8; ++k) {
        const double x = base.b * k / 8.0;
        REQUIRE(total_cdf(d1, c * x) == Approx(total_cdf(d0, x)).margin(1e-9));
    }
    REQUIRE(quantile(d1, 0.5) == Approx(c * quantile(d0, 0.5)).margin(1e-5 * c));
}

TEST_CASE("mirror-symmetric legs split time evenly", "[flexible]") {
    // down leg = level-reversed up leg, so both legs take the same mean time
    FlexibleModel m;
    m.b = 3.0;
    m.up = helpers::scalar_params(-1.0, 4.0);
    m.down = helpers::scalar_params(1.0, 4.0);
    m.switch_at_top = Matrix::Ones(1, 1);
    m.switch_at_bottom = Matrix::Ones(1, 1);
    const auto dist = assemble(m);
    REQUIRE(up_leg_fraction(dist) == Approx(0.5).margin(1e-9));
}

TEST_CASE("quantiles are monotone with pinned endpoints", "[flexible]") {
    const auto dist = assemble(helpers::bm_case(2));
    REQUIRE(quantile(dist, 0.0) == 0.0);
    REQUIRE(quantile(dist, 1.0) == dist.b);
    double prev = 0.0;
    for (double p : {0.1, 0.25, 0.5, 0.75, 0.9, 0.99}) {
        const double q = quantile(dist, p);
        REQUIRE(q >= prev);
        REQUIRE(total_cdf(dist, q) == Approx(p).margin(1e-6));
        prev = q;
    }
}

TEST_CASE("uniform resampling forces a uniform descent mix", "[flexible]") {
    // every row of switch_at_top equals (0.2 ... 0.2), so nu_d is uniform no
    // matter what the up leg does
    const auto dist = assemble(helpers::video_case(2));
    REQUIRE((dist.nu_d.array() - 0.2).abs().maxCoeff() < 1e-12);
}

TEST_CASE("boundary mixes are proper distributions", "[flexible]") {
    for (int c : {1, 2, 3, 4}) {
        const auto dist = assemble(helpers::video_case(c));
        REQUIRE(dist.nu_u.sum() == Approx(1.0).margin(1e-12));
        REQUIRE(dist.nu_d.sum() == Approx(1.0).margin(1e-12));
        REQUIRE(dist.nu_u.minCoeff() > 0.0);
        REQUIRE(dist.nu_d.minCoeff() > 0.0);
        REQUIRE(dist.warnings.empty());
    }
}

TEST_CASE("video model medians and time splits", "[flexible]") {
    const double med[] = {0.479911, 0.555264, 0.862247, 0.439917};
    const double up[] = {0.526857, 0.445052, 0.218178, 0.575766};
    for (int c = 1; c <= 4; ++c) {
        const auto dist = assemble(helpers::video_case(c));
        REQUIRE(quantile(dist, 0.5) == Approx(med[c - 1]).margin(5e-4));
        REQUIRE(up_leg_fraction(dist) == Approx(up[c - 1]).margin(5e-4));
    }
}

TEST_CASE("single-phase time split matches the leg means", "[flexible]") {
    const auto dist = assemble(helpers::bm_case(2));
    // up leg: mu = -1, sigma^2 = 10; down leg: mu = -10, sigma^2 = 10
    REQUIRE(dist.up_leg_times(0) == Approx(2.1277046).margin(1e-6));
    REQUIRE(dist.down_leg_times(0) == Approx(0.3500168).margin(1e-6));
    REQUIRE(up_leg_fraction(dist) ==
            Approx(2.1277046 / (2.1277046 + 0.3500168)).margin(1e-6));
}

TEST_CASE("zero-drift legs are rejected up front", "[flexible]") {
    std::mt19937_64 gen(222);
    FlexibleModel m;
    m.b = 1.0;
    m.up = helpers::zero_drift_params(gen, 3);
    while (m.up.phases() != 3) m.up = helpers::zero_drift_params(gen, 3);
    m.down = helpers::mild_params(gen, 3);
    while (m.down.phases() != 3) m.down = helpers::mild_params(gen, 3);
    m.switch_at_top = Matrix::Identity(3, 3);
    m.switch_at_bottom = Matrix::Identity(3, 3);
    REQUIRE_THROWS_AS(assemble(m), UnsupportedCase);
}

TEST_CASE("cdf_eval splits by leg and phase", "[flexible]") {
    const auto dist = assemble(helpers::video_case(2));
    const RowVector v = cdf_eval(dist, 0.5);
    REQUIRE(v.size() == 10);
    REQUIRE(v.minCoeff() >= 0.0);
    REQUIRE(v.sum() == Approx(total_cdf(dist, 0.5)).margin(1e-14));
    // phase marginals at b recover the long-run phase mix, which sums to one
    REQUIRE(cdf_eval(dist, dist.b).sum() == Approx(1.0).margin(1e-12));
}
