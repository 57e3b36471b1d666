#include <gtest/gtest.h>

#include <random>

#include "oracles.hpp"
#include "scenecond/attention_mask.hpp"
#include "scenecond/error.hpp"

using namespace scenecond;

namespace {

std::vector<TokenBitset> random_bitsets(std::mt19937_64& rng, std::size_t k, std::size_t n_image) {
    std::bernoulli_distribution coin(0.35);
    std::vector<TokenBitset> out(k, TokenBitset(n_image, 0));
    for (auto& b : out) {
        for (auto& bit : b) bit = coin(rng);
    }
    return out;
}

Matrix random_matrix(std::mt19937_64& rng, std::size_t r, std::size_t c, double scale = 1.0) {
    std::normal_distribution<double> g(0.0, scale);
    Matrix m(r, c);
    for (auto& x : m.data) x = g(rng);
    return m;
}

}  // namespace

TEST(Patchify, Rules) {
    EntityMask2D zero(8, 8);
    EXPECT_EQ(patchify_mask(zero, 4), TokenBitset(4, 0));

    EntityMask2D quad(4, 4);
    quad.set(0, 0);
    quad.set(1, 1);
    EXPECT_EQ(patchify_mask(quad, 2), (TokenBitset{1, 0, 0, 0}));

    EntityMask2D one(4, 4);
    std::fill(one.bits.begin(), one.bits.end(), 1);
    EXPECT_EQ(patchify_mask(one, 2), TokenBitset(4, 1));
}

TEST(Patchify, SinglePixelAndCoverage) {
    EntityMask2D m(6, 4);
    m.set(5, 3);
    EXPECT_EQ(patchify_mask(m, 2), (TokenBitset{0, 0, 0, 0, 0, 1}));
    EXPECT_EQ(patchify_mask(m, 2, 0.5), TokenBitset(6, 0));
    m.set(4, 3);
    EXPECT_EQ(patchify_mask(m, 2, 0.5), (TokenBitset{0, 0, 0, 0, 0, 1}));
}

TEST(Patchify, IndivisibleDims) {
    EntityMask2D m(10, 8);
    try {
        patchify_mask(m, 4);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::IndivisibleDims);
    }
}

TEST(BuildMask, EnumeratedSevenBySeven) {
    const auto layout = TokenLayout::for_image(1, {1}, 1, 2, 2, 1);
    ASSERT_EQ(layout.total(), 7u);
    const auto mask = build_attention_mask(layout, {{1, 1, 0, 0}});
    // order: P, P_1, C_D, X0..X3
    const std::vector<std::uint8_t> expected{
        1, 0, 0, 1, 1, 1, 1,  //
        0, 1, 0, 1, 1, 0, 0,  //
        0, 0, 1, 1, 1, 1, 1,  //
        1, 1, 1, 1, 1, 1, 1,  //
        1, 1, 1, 1, 1, 1, 1,  //
        1, 0, 1, 1, 1, 1, 1,  //
        1, 0, 1, 1, 1, 1, 1,  //
    };
    EXPECT_EQ(mask.materialize(), expected);
}

TEST(BuildMask, LiteralIsolationLetsGlobalSeeConditions) {
    const auto layout = TokenLayout::for_image(1, {1}, 1, 2, 2, 1);
    AttentionMaskOptions options;
    options.global_isolated = false;
    const auto mask = build_attention_mask(layout, {{1, 1, 0, 0}}, options);
    EXPECT_TRUE(mask.allowed(0, 1));
    EXPECT_TRUE(mask.allowed(2, 0));
    EXPECT_FALSE(mask.allowed(1, 2));
    EXPECT_TRUE(audit_mask(mask).ok());
}

TEST(BuildMask, DiagonalAlwaysAllowed) {
    std::mt19937_64 rng(1);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t k = 1 + trial % 5;
        const auto layout = TokenLayout::for_image(2, std::vector<std::size_t>(k, 3), 4, 8, 8, 2);
        const auto mask = build_attention_mask(layout, random_bitsets(rng, k, layout.n_image()));
        for (std::size_t i = 0; i < layout.total(); ++i) EXPECT_TRUE(mask.allowed(i, i));
    }
}

TEST(BuildMask, DisjointEntitiesShareNoImageToken) {
    const auto layout = TokenLayout::for_image(1, {2, 2}, 1, 4, 4, 1);
    TokenBitset a(16, 0), b(16, 0);
    for (int i = 0; i < 8; ++i) a[i] = 1;
    for (int i = 8; i < 16; ++i) b[i] = 1;
    const auto mask = build_attention_mask(layout, {a, b});
    const std::size_t x0 = layout.segment_offset(layout.image_segment());
    for (std::size_t t = 0; t < 16; ++t) {
        const bool by_a = mask.allowed(layout.segment_offset(1), x0 + t);
        const bool by_b = mask.allowed(layout.segment_offset(2), x0 + t);
        EXPECT_FALSE(by_a && by_b);
    }
}

TEST(BuildMask, LengthMismatch) {
    const auto layout = TokenLayout::for_image(1, {1, 1}, 1, 2, 2, 1);
    try {
        build_attention_mask(layout, {{1, 0, 0, 0}});
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::LengthMismatch);
    }
    try {
        build_attention_mask(layout, {{1, 0, 0, 0}, {1, 0}});
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::LengthMismatch);
    }
}

TEST(BuildMask, SymmetryAndMonotonicity) {
    std::mt19937_64 rng(8);
    for (int trial = 0; trial < 30; ++trial) {
        const std::size_t k = 1 + trial % 6;
        const auto layout = TokenLayout::for_image(1, std::vector<std::size_t>(k, 2), 3, 6, 6, 2);
        auto bits = random_bitsets(rng, k, layout.n_image());
        const auto mask = build_attention_mask(layout, bits);
        const std::size_t x0 = layout.segment_offset(layout.image_segment());
        for (std::size_t j = 0; j < k; ++j) {
            for (std::size_t t = 0; t < layout.n_image(); ++t) {
                EXPECT_EQ(mask.allowed(layout.segment_offset(1 + j), x0 + t),
                          mask.allowed(x0 + t, layout.segment_offset(1 + j)));
            }
        }
        // enlarge one entity region
        auto grown = bits;
        for (auto& bit : grown[trial % k]) bit |= std::bernoulli_distribution(0.5)(rng);
        const auto before = mask.materialize();
        const auto after = build_attention_mask(layout, grown).materialize();
        for (std::size_t i = 0; i < before.size(); ++i) {
            if (before[i]) ASSERT_TRUE(after[i]);
        }
    }
}

TEST(AuditMask, AcceptsBuiltMasks) {
    std::mt19937_64 rng(2);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t k = 1 + trial % 8;
        std::vector<std::size_t> locals;
        for (std::size_t j = 0; j < k; ++j) locals.push_back(1 + (j + trial) % 3);
        const auto layout = TokenLayout::for_image(1 + trial % 2, locals, 1 + trial % 4, 8, 8, 2);
        const auto mask = build_attention_mask(layout, random_bitsets(rng, k, layout.n_image()));
        EXPECT_TRUE(audit_mask(mask).ok());
    }
}

TEST(AuditMask, FlagsConditionConditionCell) {
    const auto layout = TokenLayout::for_image(1, {1, 1}, 1, 2, 2, 1);
    auto mask = build_attention_mask(layout, {{1, 0, 0, 0}, {0, 1, 0, 0}});
    mask.set(1, 2, true);  // P_1 -> P_2
    const auto report = audit_mask(mask);
    ASSERT_EQ(report.violations.size(), 1u);
    EXPECT_EQ(report.violations[0].row, 1u);
    EXPECT_EQ(report.violations[0].col, 2u);
    EXPECT_EQ(report.violations[0].rule, 'b');
    EXPECT_TRUE(report.violations[0].actual);
}

TEST(AuditMask, FlagsRegionCell) {
    const auto layout = TokenLayout::for_image(1, {1}, 1, 2, 2, 1);
    auto mask = build_attention_mask(layout, {{1, 1, 0, 0}});
    mask.set(1, 5, true);  // P_1 -> X2, outside the bitset
    const auto report = audit_mask(mask);
    ASSERT_EQ(report.violations.size(), 1u);
    EXPECT_EQ(report.violations[0].rule, 'd');
    EXPECT_EQ(report.violations[0].col, 5u);
}

TEST(AuditMask, FlagsBrokenDiagonal) {
    const auto layout = TokenLayout::for_image(1, {1}, 1, 2, 2, 1);
    auto mask = build_attention_mask(layout, {{1, 1, 0, 0}});
    mask.set(4, 4, false);
    const auto report = audit_mask(mask);
    ASSERT_EQ(report.violations.size(), 1u);
    EXPECT_EQ(report.violations[0].rule, 'e');
}

TEST(MaskJson, RoundTripKeepsCells) {
    std::mt19937_64 rng(13);
    const auto layout = TokenLayout::for_image(2, {1, 3, 2}, 4, 8, 4, 2);
    auto mask = build_attention_mask(layout, random_bitsets(rng, 3, layout.n_image()));
    mask.set(0, 3, true);
    const auto back = attention_mask_from_json(attention_mask_to_json(mask));
    EXPECT_EQ(back.materialize(), mask.materialize());
    EXPECT_EQ(attention_mask_to_json(back), attention_mask_to_json(mask));
    EXPECT_FALSE(audit_mask(back).ok());
}

TEST(MaskedAttention, AllOnesIsPlainAttention) {
    std::mt19937_64 rng(3);
    const std::size_t n = 10;
    const Matrix q = random_matrix(rng, n, 4), k = random_matrix(rng, n, 4), v = random_matrix(rng, n, 3);
    const std::vector<std::uint8_t> ones(n * n, 1);
    const Matrix got = masked_attention(q, k, v, ones);
    const Matrix want = oracle::subset_attention(q, k, v, ones);
    for (std::size_t i = 0; i < got.data.size(); ++i) EXPECT_NEAR(got.data[i], want.data[i], 1e-12);
}

TEST(MaskedAttention, IdentityMaskCopiesValues) {
    std::mt19937_64 rng(4);
    const std::size_t n = 7;
    const Matrix q = random_matrix(rng, n, 5, 30.0), k = random_matrix(rng, n, 5, 30.0), v = random_matrix(rng, n, 2);
    std::vector<std::uint8_t> eye(n * n, 0);
    for (std::size_t i = 0; i < n; ++i) eye[i * n + i] = 1;
    const Matrix got = masked_attention(q, k, v, eye);
    EXPECT_EQ(got.data, v.data);
}

TEST(MaskedAttention, MatchesSubsetOracle) {
    std::mt19937_64 rng(5);
    std::bernoulli_distribution coin(0.4);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t n = 8;
        const Matrix q = random_matrix(rng, n, 4), k = random_matrix(rng, n, 4), v = random_matrix(rng, n, 3);
        std::vector<std::uint8_t> m(n * n);
        for (auto& c : m) c = coin(rng);
        for (std::size_t i = 0; i < n; ++i) m[i * n + i] = 1;
        const Matrix got = masked_attention(q, k, v, m);
        const Matrix want = oracle::subset_attention(q, k, v, m);
        for (std::size_t i = 0; i < got.data.size(); ++i) {
            EXPECT_LE(std::abs(got.data[i] - want.data[i]), 1e-9 * std::max(1.0, std::abs(want.data[i])));
        }
    }
}

TEST(MaskedAttention, BlockedKeysCarryNoWeight) {
    // a blocked key with a huge logit and a huge value must not leak
    const std::size_t n = 3;
    Matrix q(n, 1), k(n, 1), v(n, 1);
    q.data = {1e3, 1.0, 1.0};
    k.data = {1.0, 1.0, 1e3};
    v.data = {1.0, 2.0, 1e12};
    const std::vector<std::uint8_t> m{1, 1, 0, 1, 1, 0, 0, 0, 1};
    const Matrix out = masked_attention(q, k, v, m);
    EXPECT_LT(out(0, 0), 2.0 + 1e-12);
    EXPECT_LT(out(1, 0), 2.0 + 1e-12);
    EXPECT_EQ(out(2, 0), 1e12);
}

TEST(MaskedAttention, AttentionMaskOverload) {
    std::mt19937_64 rng(6);
    const auto layout = TokenLayout::for_image(1, {2, 1}, 2, 4, 4, 2);
    const auto mask = build_attention_mask(layout, random_bitsets(rng, 2, layout.n_image()));
    const std::size_t n = layout.total();
    const Matrix q = random_matrix(rng, n, 3), k = random_matrix(rng, n, 3), v = random_matrix(rng, n, 3);
    const Matrix a = masked_attention(q, k, v, mask);
    const Matrix b = oracle::subset_attention(q, k, v, mask.materialize());
    for (std::size_t i = 0; i < a.data.size(); ++i) EXPECT_NEAR(a.data[i], b.data[i], 1e-12);
}

TEST(MaskedAttention, ShapeMismatch) {
    Matrix q(3, 2), k(3, 3), v(3, 1);
    try {
        masked_attention(q, k, v, std::vector<std::uint8_t>(9, 1));
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::ShapeMismatch);
    }
}
