#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "onepass/numerics/kernels.hpp"
#include "onepass/tinylm/checkpoint.hpp"
#include "onepass/tinylm/lm.hpp"
#include "onepass/tinylm/pretrain.hpp"
#include "support/models.hpp"

using namespace onepass;
using namespace onepass::testing_support;

namespace {

std::vector<TokenId> random_ids(std::size_t n, std::size_t V, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::vector<TokenId> ids(n);
    for (auto& t : ids) t = static_cast<TokenId>(rng() % V);
    return ids;
}

// All transformer blocks are zero, so the residual stream carries the input
// through unchanged and the logits are head * rmsnorm(input).
Weights<float> passthrough_weights(std::uint32_t V, std::uint32_t d) {
    auto cfg = tiny_config(d, V, 1);
    return Weights<float>::zeros(cfg);
}

}  // namespace

TEST(Init, DeterministicPerSeed) {
    const auto cfg = tiny_config(16, 32, 2);
    const auto a = init_weights<float>(cfg, 3), b = init_weights<float>(cfg, 3), c = init_weights<float>(cfg, 4);
    EXPECT_EQ(serialize_checkpoint(a), serialize_checkpoint(b));
    EXPECT_NE(serialize_checkpoint(a), serialize_checkpoint(c));
}

TEST(Init, HeadWidthAndFiniteLogits) {
    auto cfg = tiny_config(64, 32, 1);
    cfg.heads = 4;
    EXPECT_EQ(cfg.head_dim(), 16u);
    Transformer<float> model(init_weights<float>(cfg, 0));
    const TensorF logits = model.forward(random_embeddings(8, 64, 1));
    for (float v : logits.span()) EXPECT_TRUE(std::isfinite(v));
}

TEST(Init, InvalidConfigRejected) {
    auto cfg = tiny_config(10, 16, 1);
    cfg.heads = 3;
    EXPECT_THROW(init_weights<float>(cfg, 0), ConfigError);
}

TEST(Embed, MatchesTableLookup) {
    const auto w = init_weights<float>(tiny_config(8, 16), 1);
    EXPECT_EQ(embed(w, std::vector<TokenId>{}).rows(), 0u);
    const auto ids = random_ids(50, 16, 2);
    const TensorF E = embed(w, ids);
    ASSERT_EQ(E.rows(), ids.size());
    for (std::size_t i = 0; i < ids.size(); ++i)
        for (std::size_t j = 0; j < 8; ++j) EXPECT_EQ(E(i, j), w.tok_emb(static_cast<std::size_t>(ids[i]), j));
    EXPECT_THROW(embed(w, std::vector<TokenId>{16}), InputError);
    EXPECT_THROW(embed(w, std::vector<TokenId>{-1}), InputError);
}

TEST(Generate, ArgmaxDeterministicAndPathsAgree) {
    Transformer<float> model(lively_weights(tiny_config(16, 32, 2), 3, 3.f));
    const TensorF prefix = random_embeddings(3, 16, 4);
    const auto a = ar_generate(model, prefix, 20, {});
    const auto b = ar_generate(model, prefix, 20, {});
    const auto c = ar_generate(model, prefix, 20, {}, ArPath::Recompute);
    EXPECT_EQ(a.size(), 20u);
    EXPECT_EQ(a, b);
    EXPECT_EQ(a, c);
}

TEST(Generate, MultinomialReproducibleUnderSeed) {
    Transformer<float> model(lively_weights(tiny_config(16, 32, 2), 3, 3.f));
    const TensorF prefix = random_embeddings(2, 16, 4);
    const SamplingSpec s{SamplingMode::Multinomial, 1.0, 11};
    EXPECT_EQ(ar_generate(model, prefix, 25, s), ar_generate(model, prefix, 25, s));
    EXPECT_EQ(ar_generate(model, prefix, 25, s), ar_generate(model, prefix, 25, s, ArPath::Recompute));
    EXPECT_NE(ar_generate(model, prefix, 25, s), ar_generate(model, prefix, 25, {SamplingMode::Multinomial, 1.0, 12}));
}

TEST(Generate, DominantLogitWinsAtAnalyticRate) {
    const std::uint32_t V = 16, d = 8;
    auto w = passthrough_weights(V, d);
    // Input [1, 0, ...] normalises to [sqrt(d), 0, ...]; logit 7 = c sqrt(d).
    const double gap = 10.0;
    w.head(7, 0) = static_cast<float>(gap / std::sqrt(double(d)));
    Transformer<float> model(std::move(w));
    TensorF prefix = TensorF::matrix(1, d);
    prefix(0, 0) = 1.f;
    const TensorF logits = model.forward(prefix);
    EXPECT_NEAR(logits(0, 7), gap, 1e-3);
    const double p7 = 1.0 / (1.0 + (V - 1) * std::exp(-gap));
    ASSERT_GE(p7, 0.999);
    int hits = 0;
    for (std::uint64_t s = 0; s < 1000; ++s) hits += ar_generate(model, prefix, 1, {SamplingMode::Multinomial, 1.0, s})[0] == 7;
    EXPECT_GE(hits, 990);
}

TEST(Generate, ContextWindowIsExact) {
    Transformer<float> model(init_weights<float>(tiny_config(8, 16), 0));  // 32 positions
    const TensorF prefix = random_embeddings(4, 8, 0);
    EXPECT_EQ(ar_generate(model, prefix, 28, {}).size(), 28u);
    EXPECT_THROW(ar_generate(model, prefix, 29, {}), InputError);
    EXPECT_TRUE(ar_generate(model, prefix, 0, {}).empty());
    EXPECT_THROW(ar_generate(model, TensorF::matrix(0, 8), 1, {}), InputError);
    EXPECT_THROW(ar_generate(model, prefix, 1, {SamplingMode::Multinomial, 0.0, 0}), ConfigError);
}

TEST(OnePass, SingleForwardAndArgmaxPerPosition) {
    Transformer<float> model(lively_weights(tiny_config(16, 32, 2), 5, 3.f));
    const TensorF E = random_embeddings(10, 16, 6);
    const TensorF logits = model.forward(E);
    const std::vector<std::size_t> pos{0, 3, 9};
    const auto before = model.forward_count();
    const auto out = one_pass_decode(model, E, pos);
    EXPECT_EQ(model.forward_count() - before, 1u);
    for (std::size_t k = 0; k < pos.size(); ++k)
        EXPECT_EQ(out[k], static_cast<TokenId>(kernels::argmax(logits.row(pos[k]).data(), logits.cols())));
}

TEST(OnePass, TeacherForcedMatchesGreedyGeneration) {
    Transformer<float> model(lively_weights(tiny_config(16, 32, 2), 7, 3.f));
    const std::vector<TokenId> prompt{3, 9, 1};
    const auto gen = ar_generate(model, embed(model.weights(), prompt), 12, {});
    std::vector<TokenId> seq(prompt);
    seq.insert(seq.end(), gen.begin(), gen.end() - 1);
    std::vector<std::size_t> pos;
    for (std::size_t i = prompt.size() - 1; i < seq.size(); ++i) pos.push_back(i);
    EXPECT_EQ(one_pass_decode(model, embed(model.weights(), seq), pos), gen);
}

TEST(Checkpoint, RoundtripIsByteExact) {
    for (bool tied : {false, true}) {
        auto cfg = tiny_config(8, 16, 2, tied ? PositionalScheme::LearnedAbsolute : PositionalScheme::Rotary);
        cfg.tied_head = tied;
        const auto w = init_weights<float>(cfg, 9);
        const std::string bytes = serialize_checkpoint(w);
        const auto back = deserialize_checkpoint(bytes);
        EXPECT_EQ(back.config, cfg);
        EXPECT_EQ(serialize_checkpoint(back), bytes);
        EXPECT_EQ(weights_checksum(back), weights_checksum(w));
    }
}

TEST(Checkpoint, DamageIsDetected) {
    const std::string bytes = serialize_checkpoint(init_weights<float>(tiny_config(8, 16), 9));
    EXPECT_THROW(deserialize_checkpoint(bytes.substr(0, bytes.size() - 1)), CorruptionError);
    EXPECT_THROW(deserialize_checkpoint(bytes.substr(0, 20)), CorruptionError);
    EXPECT_THROW(deserialize_checkpoint(""), CorruptionError);
    std::string flipped = bytes;
    flipped[bytes.size() / 2] ^= 0x10;
    EXPECT_THROW(deserialize_checkpoint(flipped), CorruptionError);
    std::string magic = bytes;
    magic[0] = 'X';
    EXPECT_THROW(deserialize_checkpoint(magic), CorruptionError);
    std::string version = bytes;
    version[4] = 2;
    EXPECT_THROW(deserialize_checkpoint(version), VersionError);
}

TEST(Checkpoint, FileRoundtrip) {
    const auto path = std::filesystem::temp_directory_path() / "onepass_test_ckpt.ptlm";
    const auto w = init_weights<float>(tiny_config(8, 16), 2);
    save_checkpoint(path, w);
    EXPECT_EQ(serialize_checkpoint(load_checkpoint(path)), serialize_checkpoint(w));
    std::filesystem::remove(path);
    EXPECT_THROW(load_checkpoint(path), InputError);
}

TEST(Pretrain, ZeroStepsReturnsInputUnchanged) {
    const auto w = init_weights<float>(tiny_config(8, 16), 1);
    PretrainSpec spec;
    spec.steps = 0;
    spec.context = 16;
    const auto r = pretrain(w, random_ids(100, 16, 0), spec, nullptr);
    EXPECT_TRUE(r.loss_history.empty());
    EXPECT_EQ(serialize_checkpoint(r.weights), serialize_checkpoint(w));
}

TEST(Pretrain, UntrainedCrossEntropyNearUniform) {
    Transformer<float> model(init_weights<float>(desk_config(), 0));
    const double ce = heldout_cross_entropy(model, random_ids(2048, 256, 1), 256, 4);
    EXPECT_NEAR(ce, std::log(512.0), 0.05 * std::log(512.0));
}

TEST(Pretrain, LearnsARepeatingPattern) {
    auto cfg = tiny_config(16, 300, 1);
    std::vector<TokenId> ids;
    for (int i = 0; i < 400; ++i) ids.push_back(static_cast<TokenId>(i % 5));
    PretrainSpec spec;
    spec.steps = 150;
    spec.context = 16;
    spec.warmup = 10;
    const auto r = pretrain(init_weights<float>(cfg, 0), ids, spec, nullptr);
    ASSERT_EQ(r.loss_history.size(), 150u);
    EXPECT_LT(r.loss_history.back(), 0.5 * r.loss_history.front());
    Transformer<float> model(r.weights);
    EXPECT_LT(heldout_cross_entropy(model, ids, 16), 0.5 * std::log(300.0));
    spec.steps = 1;
    EXPECT_THROW(pretrain(init_weights<float>(tiny_config(16, 16, 1), 0), ids, spec), ConfigError);
}

TEST(Pretrain, ScheduleWarmsUpThenDecays) {
    PretrainSpec s;
    EXPECT_LT(s.lr_at(0), s.lr_at(s.warmup - 1));
    EXPECT_NEAR(s.lr_at(s.warmup), s.lr, 1e-12);
    EXPECT_NEAR(s.lr_at(s.steps - 1), s.min_lr, 1e-5);
}
