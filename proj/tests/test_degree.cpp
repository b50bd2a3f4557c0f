#include "test_util.hpp"
#include "tprec/degree.hpp"

#include <gtest/gtest.h>

#include <algorithm>

using namespace tprec;
using namespace testutil;

TEST(Phi, DegreeOneIsIdentity) {
    for (double x : {-3.5, -1e-8, 0.0, 0.25, 7.0}) EXPECT_EQ(phi(x, 1.0), x);
}

TEST(Phi, KeepsSign) {
    EXPECT_DOUBLE_EQ(phi(-3.0, 2.0), -9.0);
    EXPECT_DOUBLE_EQ(phi(4.0, 0.5), 2.0);
}

TEST(Phi, ZeroMapsToZeroForEveryDegree) {
    for (double p : {-1.0, 0.0, 0.3, 2.0}) EXPECT_EQ(phi(0.0, p), 0.0);
}

TEST(Phi, NanIsNumericError) {
    EXPECT_THROW(phi(std::nan(""), 1.0), NumericError);
    EXPECT_THROW(phi(1.0, std::nan("")), NumericError);
    EXPECT_THROW(phi_grad(std::nan(""), 1.0), NumericError);
}

TEST(Phi, OddFunction) {
    std::mt19937_64 rng(1);
    for (int i = 0; i < 200; ++i) {
        const double s = random_vector(1, rng, 10.0)[0];
        const double p = 0.1 + 2.9 * std::abs(random_vector(1, rng)[0]);
        EXPECT_EQ(phi(-s, p), -phi(s, p));
    }
}

TEST(Phi, StrictlyIncreasing) {
    std::mt19937_64 rng(2);
    Vector s = random_vector(300, rng, 5.0);
    std::sort(s.begin(), s.end());
    for (double p : {0.2, 0.5, 1.0, 1.7, 3.0})
        for (std::size_t i = 1; i < s.size(); ++i)
            if (s[i] > s[i - 1]) {
                EXPECT_LT(phi(s[i - 1], p), phi(s[i], p));
            }
}

TEST(Phi, InverseDegreeInverts) {
    std::mt19937_64 rng(3);
    for (double p : {0.5, 2.0, 3.0})
        for (int i = 0; i < 100; ++i) {
            const double s = random_vector(1, rng, 4.0)[0];
            if (s == 0.0) continue;
            EXPECT_LE(rel_err(phi(phi(s, p), 1.0 / p), s), 1e-9);
        }
}

TEST(PhiGrad, IdentityDerivative) { EXPECT_EQ(phi_grad(2.0, 1.0).d_s, 1.0); }

TEST(PhiGrad, NegativeSquare) {
    const auto g = phi_grad(-3.0, 2.0);
    EXPECT_NEAR(g.d_s, 6.0, 1e-12);
    EXPECT_NEAR(g.d_p, -9.0 * std::log(3.0), 1e-12);
    EXPECT_NEAR(g.d_p, -9.8875, 1e-4);
    EXPECT_LE(rel_err(g.d_s, central_diff([](double s) { return phi(s, 2.0); }, -3.0, 1e-6)), 1e-5);
    EXPECT_LE(rel_err(g.d_p, central_diff([](double p) { return phi(-3.0, p); }, 2.0, 1e-6)), 1e-5);
}

TEST(PhiGrad, MatchesFiniteDifferencesOnGrid) {
    for (double mag : {0.01, 0.05, 0.3, 0.5, 1.0, 2.5, 10.0})
        for (double sign : {-1.0, 1.0})
            for (double p : {0.2, 0.5, 1.0, 1.5, 2.2, 3.0}) {
                const double s = sign * mag;
                const auto g = phi_grad(s, p);
                const double fd_s = central_diff([p](double v) { return phi(v, p); }, s, 1e-6 * mag);
                const double fd_p = central_diff([s](double q) { return phi(s, q); }, p, 1e-6);
                EXPECT_LE(rel_err(g.d_s, fd_s), 1e-5) << "s=" << s << " p=" << p;
                if (mag != 1.0) EXPECT_LE(rel_err(g.d_p, fd_p), 1e-5) << "s=" << s << " p=" << p;
                else EXPECT_NEAR(g.d_p, 0.0, 1e-12);
            }
}

TEST(PhiGrad, ClampsNearZero) {
    const auto g = phi_grad(0.0, 0.5);
    EXPECT_TRUE(std::isfinite(g.d_s));
    EXPECT_NEAR(g.d_s, 0.5 * std::pow(kPhiGradEps, -0.5), 1e-6);
    EXPECT_EQ(g.d_p, 0.0);
}

TEST(DegreeBound, UnitRadicand) {
    // C1/(n sigma2) = C2/n
    EXPECT_NEAR(degree_bound({4.0, 0.5, 2.0, 4.0}), std::log(1.5) - 1.0, 1e-15);
    EXPECT_NEAR(degree_bound({4.0, 0.5, 2.0, 4.0}), -0.594535, 1e-6);
}

TEST(DegreeBound, RadicandOneHundred) {
    EXPECT_NEAR(degree_bound({8.0, 0.01, 7.92, 0.0}), 1.230059, 1e-6);
}

TEST(DegreeBound, DecreasingInVariance) {
    double prev = std::numeric_limits<double>::infinity();
    for (double s2 : {0.01, 0.1, 1.0, 10.0}) {
        const double b = degree_bound({8.0, s2, 2.0, 1.0});
        EXPECT_LT(b, prev);
        prev = b;
    }
}

TEST(DegreeBound, MatchesSeriesEvaluation) {
    // ln(3/2) from the atanh series, sqrt by Newton iteration.
    auto ln_three_halves = [] {
        const double y = 0.2;  // (x-1)/(x+1) for x = 1.5
        double sum = 0.0, term = y;
        for (int k = 0; k < 60; ++k) {
            sum += term / (2 * k + 1);
            term *= y * y;
        }
        return 2.0 * sum;
    };
    auto newton_sqrt = [](double a) {
        double x = a > 1.0 ? a : 1.0;
        for (int i = 0; i < 100; ++i) x = 0.5 * (x + a / x);
        return x;
    };
    for (auto in : {DegreeBoundInputs{8, 0.01, 7.92, 0.0}, DegreeBoundInputs{3, 2.0, 1.0, 0.5},
                    DegreeBoundInputs{16, 0.3, 4.0, 2.0}}) {
        const double r = 1.0 + in.c1 / (in.n * in.sigma2) - in.c2 / in.n;
        const double ref = ln_three_halves() / 2.0 * (1.0 + newton_sqrt(r)) - 1.0;
        EXPECT_NEAR(degree_bound(in), ref, 1e-12);
    }
}

TEST(DegreeBound, NegativeRadicandIsDomainError) {
    try {
        (void)degree_bound({1.0, 1.0, 1.0, 5.0});
        FAIL();
    } catch (const DomainError& e) {
        EXPECT_NE(std::string(e.what()).find("nonnegative"), std::string::npos);
    }
    EXPECT_THROW(degree_bound({1.0, 0.0, 1.0, 1.0}), DomainError);
}

TEST(Controller, FixedIgnoresInputs) {
    const auto d = DegreeParam::fixed(1.0);
    EXPECT_EQ(controller_step(d, 0.3, Vector{5.0, -2.0}, Vector{1.0}), 1.0);
}

TEST(Controller, ZeroNetworkReturnsClampedBias) {
    DegreeParam d;
    d.mode = DegreeMode::SubNet;
    d.subnet = MlpParams::zeros(1 + 2 + 1);
    for (double beta : {-4.0, 0.7, 2.2, 9.0}) {
        d.subnet->b2[0] = beta;
        EXPECT_EQ(controller_step(d, 1.0, Vector{0.4, -0.1}, Vector{3.0}), std::clamp(beta, d.p_min, d.p_max));
    }
}

TEST(Controller, SubNetOutputStaysInBounds) {
    std::mt19937_64 rng(13);
    auto d = make_degree(DegreeMode::SubNet, 1.0, 0.1, 3.0, 3, 2, rng);
    for (double& w : d.subnet->w2.data) w = 5.0;  // drive the output well past the bounds
    for (int i = 0; i < 1000; ++i) {
        const Vector h = random_vector(3, rng, 10.0), x = random_vector(2, rng, 10.0);
        const double p = controller_step(d, random_vector(1, rng, 3.0)[0], h, x);
        EXPECT_GE(p, d.p_min);
        EXPECT_LE(p, d.p_max);
    }
}

TEST(Controller, ShapeMismatch) {
    std::mt19937_64 rng(1);
    const auto d = make_degree(DegreeMode::SubNet, 1.0, 0.1, 3.0, 3, 2, rng);
    EXPECT_THROW(controller_step(d, 1.0, Vector{1.0}, Vector{1.0, 2.0}), ShapeError);
}

TEST(Controller, FreshSubNetStartsAtInit) {
    std::mt19937_64 rng(5);
    const auto d = make_degree(DegreeMode::SubNet, 1.0, 0.1, 3.0, 4, 1, rng);
    EXPECT_EQ(controller_step(d, 2.0, Vector{1, 2, 3, 4}, Vector{-1}), 1.0);
}

TEST(Controller, BackwardMatchesFiniteDifferences) {
    std::mt19937_64 rng(8);
    auto d = make_degree(DegreeMode::SubNet, 1.0, 0.1, 3.0, 2, 1, rng);
    for (double& w : d.subnet->w2.data) w = 0.3;
    const Vector h{0.2, -0.4}, x{0.5};
    DegreeCache cache;
    (void)controller_step(d, 1.1, h, x, &cache);
    ASSERT_FALSE(cache.clamped);
    auto grad = MlpParams::zeros(4);
    const Vector g_in = controller_backward(d, cache, 1.0, grad);
    auto probe = [&](double& w, double analytic) {
        const double saved = w;
        const double fd = central_diff(
            [&](double v) {
                w = v;
                const double out = controller_step(d, 1.1, h, x);
                w = saved;
                return out;
            },
            saved, 1e-6);
        EXPECT_LE(std::abs(fd - analytic), 1e-8 + 1e-6 * std::abs(fd));
    };
    for (std::size_t i = 0; i < d.subnet->w1.data.size(); ++i) probe(d.subnet->w1.data[i], grad.w1.data[i]);
    for (std::size_t i = 0; i < d.subnet->b1.size(); ++i) probe(d.subnet->b1[i], grad.b1[i]);
    for (std::size_t i = 0; i < d.subnet->w2.data.size(); ++i) probe(d.subnet->w2.data[i], grad.w2.data[i]);
    probe(d.subnet->b2[0], grad.b2[0]);
    const double fd_prev = central_diff([&](double v) { return controller_step(d, v, h, x); }, 1.1, 1e-6);
    EXPECT_NEAR(g_in[0], fd_prev, 1e-8);
}

TEST(DegreeParamInvariant, ValidateChecksBoundsAndSubnetPresence) {
    DegreeParam d;
    d.value = 5.0;
    EXPECT_THROW(d.validate(), ArgumentError);
    d.value = 1.0;
    d.mode = DegreeMode::SubNet;
    EXPECT_THROW(d.validate(), ArgumentError);
    d.mode = DegreeMode::TrainableScalar;
    d.subnet = MlpParams::zeros(3);
    EXPECT_THROW(d.validate(), ArgumentError);
}

TEST(DegreeMode, StringRoundTrip) {
    for (auto m : {DegreeMode::Fixed, DegreeMode::TrainableScalar, DegreeMode::SubNet})
        EXPECT_EQ(degree_mode_from_string(to_string(m)), m);
    EXPECT_THROW(degree_mode_from_string("quadratic"), ArgumentError);
}
