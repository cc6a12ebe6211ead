#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>

#include "onepass/numerics/gradients.hpp"
#include "onepass/numerics/transformer.hpp"
#include "support/models.hpp"
#include "support/reference_lm.hpp"

using namespace onepass;

using namespace onepass::testing_support;

TEST(Forward, ShapeFollowsContract) {
    Transformer<float> model(init_weights<float>(tiny_config(8, 16), 0));
    auto logits = model.forward(random_embeddings(3, 8, 1));
    EXPECT_EQ(logits.rows(), 3u);
    EXPECT_EQ(logits.cols(), 16u);
    EXPECT_TRUE(logits.all_finite());
}

TEST(Forward, PerturbingLaterPositionLeavesEarlierLogitsBitIdentical) {
    Transformer<float> model(lively_weights(tiny_config(8, 16), 0));
    TensorF E = random_embeddings(3, 8, 2);
    auto before = model.forward(E);
    for (std::size_t c = 0; c < 8; ++c) E(2, c) += 3.5f;
    auto after = model.forward(E);
    for (std::size_t i = 0; i < 2; ++i)
        for (std::size_t v = 0; v < 16; ++v) EXPECT_EQ(before(i, v), after(i, v));
    bool changed = false;
    for (std::size_t v = 0; v < 16; ++v) changed |= before(2, v) != after(2, v);
    EXPECT_TRUE(changed);
}

TEST(Forward, CausalityPropertyOverRandomPerturbations) {
    const auto cfg = tiny_config(32, 64, 2);
    Transformer<float> model(lively_weights(cfg, 3));
    std::mt19937_64 rng(7);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t N = 2 + rng() % 20;
        TensorF E = random_embeddings(N, cfg.d_model, rng());
        auto base = model.forward(E);
        const std::size_t j = 1 + rng() % (N - 1);
        std::normal_distribution<float> nd(0.f, 5.f);
        for (std::size_t c = 0; c < cfg.d_model; ++c) E(j, c) = nd(rng);
        auto pert = model.forward(E);
        for (std::size_t i = 0; i < j; ++i)
            for (std::size_t v = 0; v < cfg.vocab; ++v) ASSERT_EQ(base(i, v), pert(i, v)) << "trial " << trial;
    }
}

TEST(Forward, MatchesStraightLineReference) {
    for (auto pos : {PositionalScheme::Rotary, PositionalScheme::LearnedAbsolute}) {
        for (bool tied : {false, true}) {
            auto cfg = tiny_config(8, 16, 2, pos);
            cfg.tied_head = tied;
            auto w = lively_weights(cfg, 0);
            const TensorF E = random_embeddings(5, 8, 11);
            reference::Mat Em(5, std::vector<double>(8));
            for (std::size_t i = 0; i < 5; ++i)
                for (std::size_t c = 0; c < 8; ++c) Em[i][c] = E(i, c);
            const auto ref = reference::reference_forward(w, Em);
            Transformer<float> model(std::move(w));
            const auto got = model.forward(E);
            double worst = 0;
            for (std::size_t i = 0; i < 5; ++i)
                for (std::size_t v = 0; v < 16; ++v) worst = std::max(worst, std::abs(ref[i][v] - got(i, v)));
            EXPECT_LE(worst, 1e-5) << to_string(pos) << " tied=" << tied;
        }
    }
}

TEST(Forward, DeterministicAcrossCalls) {
    Transformer<float> model(lively_weights(tiny_config(16, 32), 5));
    const TensorF E = random_embeddings(9, 16, 3);
    EXPECT_EQ(model.forward(E), model.forward(E));
}

TEST(Forward, SoftmaxRowsSumToOne) {
    Transformer<float> model(lively_weights(tiny_config(16, 32), 5));
    auto logits = model.forward(random_embeddings(6, 16, 4));
    for (std::size_t i = 0; i < logits.rows(); ++i) {
        std::vector<float> p(logits.row(i).begin(), logits.row(i).end());
        kernels::softmax_inplace(p.data(), p.size());
        double s = 0;
        for (float v : p) s += v;
        EXPECT_NEAR(s, 1.0, 1e-5);
    }
}

TEST(Forward, Errors) {
    Transformer<float> model(init_weights<float>(tiny_config(8, 16), 0));
    EXPECT_THROW(model.forward(random_embeddings(3, 7, 0)), ConfigError);
    EXPECT_THROW(model.forward(random_embeddings(33, 8, 0)), InputError);
    TensorF E = random_embeddings(3, 8, 0);
    E(1, 1) = std::numeric_limits<float>::quiet_NaN();
    EXPECT_THROW(model.forward(E), NumericError);
}

TEST(Forward, CountsInvocations) {
    Transformer<float> model(init_weights<float>(tiny_config(8, 16), 0));
    EXPECT_EQ(model.forward_count(), 0u);
    model.forward(random_embeddings(2, 8, 0));
    EXPECT_EQ(model.forward_count(), 1u);
}

TEST(DecodeState, CachedStepsMatchDenseRowsBitwise) {
    for (auto pos : {PositionalScheme::Rotary, PositionalScheme::LearnedAbsolute}) {
        const auto cfg = tiny_config(32, 48, 3, pos);
        Transformer<float> model(lively_weights(cfg, 9));
        const TensorF E = random_embeddings(13, 32, 5);
        const auto dense = model.forward(E);
        auto st = model.start_decode();
        for (std::size_t i = 0; i < 13; ++i) {
            const auto row = model.step(st, E.row(i));
            for (std::size_t v = 0; v < cfg.vocab; ++v) ASSERT_EQ(row[v], dense(i, v)) << "pos " << i;
        }
    }
}

TEST(LossGrad, DominantTargetDrivesLossAndGradientToZero) {
    // Identity-like model: blocks contribute nothing, the head scores the
    // target row by alignment with the (normalised) input.
    auto cfg = tiny_config(8, 16, 1);
    auto w = Weights<float>::zeros(cfg);
    TensorF E = TensorF::matrix(1, 8);
    E(0, 0) = 1.f;
    const std::int32_t target = 5;
    double last_loss = 1e9, last_norm = 1e9;
    for (float margin : {1.f, 5.f, 20.f, 60.f}) {
        auto wm = w;
        wm.head(target, 0) = margin;
        Transformer<float> model(std::move(wm));
        std::vector<std::int32_t> targets{target};
        auto r = loss_and_input_grad<float>(model, E, targets, GradRequest::all(1, {true}));
        double norm = 0;
        for (float g : r.dE.span()) norm += double(g) * g;
        norm = std::sqrt(norm);
        EXPECT_LE(r.loss, last_loss);
        EXPECT_LE(norm, last_norm + 1e-12);
        last_loss = r.loss;
        last_norm = norm;
    }
    EXPECT_LT(last_loss, 1e-12);
    EXPECT_LT(last_norm, 1e-12);
}

TEST(LossGrad, UnguidedPositionContributesNothing) {
    const TensorF logits({3, 4}, std::vector<float>{1, 2, 3, 4, 4, 3, 2, 1, 0, 0, 5, 0});
    TensorF d;
    std::vector<std::int32_t> all{0, 1, 2};
    std::vector<std::int32_t> skip{0, kUnguided, 2};
    const double full = cross_entropy_rows(logits, all, &d);
    const double part = cross_entropy_rows(logits, skip, &d);
    for (std::size_t v = 0; v < 4; ++v) EXPECT_EQ(d(1, v), 0.f);
    const double term1 = kernels::logsumexp(logits.row(1).data(), 4) - 3.0;
    EXPECT_NEAR(full - part, term1, 1e-6);
}

TEST(LossGrad, RejectsOutOfVocabularyTarget) {
    Transformer<float> model(init_weights<float>(tiny_config(8, 16), 0));
    std::vector<std::int32_t> targets{16};
    EXPECT_THROW(loss_and_input_grad<float>(model, random_embeddings(1, 8, 0), targets, GradRequest::all(1, {true})),
                 InputError);
}

TEST(LossGrad, FloatGradientAgreesWithFiniteDifferencesLoosely) {
    // 32-bit path at the looser tolerance.
    const auto cfg = tiny_config(8, 16, 2);
    Transformer<float> model(lively_weights(cfg, 2));
    TensorF E = random_embeddings(4, 8, 8);
    std::vector<std::int32_t> targets{3, 7, 1, 9};
    const auto req = GradRequest::all(4, {true, true, true, true});
    const auto r = loss_and_input_grad<float>(model, E, targets, req);
    double gmax = 0;
    for (float g : r.dE.span()) gmax = std::max(gmax, double(std::abs(g)));
    double worst = 0;
    for (std::size_t i = 0; i < E.size(); ++i) {
        const float o = E[i];
        E[i] = o + 1e-2f;
        const double up = loss_and_input_grad<float>(model, E, targets, req).loss;
        E[i] = o - 1e-2f;
        const double dn = loss_and_input_grad<float>(model, E, targets, req).loss;
        E[i] = o;
        worst = std::max(worst, relative_error(r.dE[i], (up - dn) / 2e-2, 1e-2 * gmax));
    }
    EXPECT_LE(worst, 1e-2);
}

TEST(GradCheck, PassesOnCorrectBuild) {
    const std::vector<std::uint64_t> seeds{1, 2, 3};
    for (auto cfg : {tiny_config(8, 16, 1), tiny_config(8, 16, 2, PositionalScheme::LearnedAbsolute),
                     tiny_config(16, 12, 2)}) {
        const auto report = check_gradients(cfg, seeds, {.n = cfg.d_model == 16 ? 3u : 4u});
        for (const auto& c : report.cases) EXPECT_LE(c.max_rel_error, 1e-4) << "seed " << c.seed;
        EXPECT_TRUE(report.all_passed());
    }
}

TEST(GradCheck, DetectsSignFlippedBackwardRule) {
    const std::vector<std::uint64_t> seeds{1};
    const auto report = check_gradients(tiny_config(8, 16, 2), seeds, {.flip_attention_grad_layer = 1});
    EXPECT_FALSE(report.all_passed());
}

TEST(GradCheck, SinglePositionModel) {
    auto cfg = tiny_config(8, 16, 1);
    cfg.max_positions = 1;
    const std::vector<std::uint64_t> seeds{4};
    EXPECT_TRUE(check_gradients(cfg, seeds, {.n = 1}).all_passed());
}

TEST(GradCheck, RejectsOversizedProblem) {
    const std::vector<std::uint64_t> seeds{1};
    EXPECT_THROW(check_gradients(tiny_config(64, 16), seeds, {.n = 8}), ConfigError);
}

TEST(Kernels, VectorGeluMatchesScalarFormula) {
    std::vector<float> u(4001), h(4001), g(4001), one(4001, 1.f);
    for (std::size_t i = 0; i < u.size(); ++i) u[i] = -12.f + 24.f * static_cast<float>(i) / 4000.f;
    kernels::gelu_array(u.data(), h.data(), u.size());
    kernels::gelu_backward_array(u.data(), one.data(), g.data(), u.size());
    for (std::size_t i = 0; i < u.size(); ++i) {
        EXPECT_NEAR(h[i], kernels::gelu<double>(u[i]), 1e-6 * std::max(1.0, std::abs(double(u[i])))) << u[i];
        EXPECT_NEAR(g[i], kernels::gelu_grad<double>(u[i]), 1e-6) << u[i];
    }
}

TEST(Kernels, ExpShiftedTracksLibm) {
    std::vector<float> x(1000), y(1000);
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = -80.f + 0.16f * static_cast<float>(i);
    kernels::exp_shifted(x.data(), 0.f, y.data(), x.size());
    for (std::size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(y[i] / std::exp(double(x[i])), 1.0, 1e-6);
}

TEST(Kernels, BlockedMatmulEqualsRowDotsBitwise) {
    std::mt19937_64 rng(1);
    std::normal_distribution<float> nd;
    for (std::size_t K : {5u, 16u, 37u, 128u}) {
        TensorF A = TensorF::matrix(7, K), B = TensorF::matrix(9, K), C;
        for (auto& v : A.span()) v = nd(rng);
        for (auto& v : B.span()) v = nd(rng);
        kernels::linear(A, B, C);
        for (std::size_t r = 0; r < 7; ++r)
            for (std::size_t c = 0; c < 9; ++c) ASSERT_EQ(C(r, c), kernels::dot(A.row(r).data(), B.row(c).data(), K));
    }
}
