#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "oracles.hpp"
#include "unisig/model.hpp"

using namespace unisig;

namespace {

EncoderConfig tiny_cfg(int64_t d = 24, int temporal_layers = 1) {
    EncoderConfig cfg;
    cfg.d_model = d;
    cfg.heads = 4;
    cfg.queries = 4;
    cfg.unifier_depth = 1;
    cfg.temporal_layers = temporal_layers;
    cfg.ffn_mult = 2;
    cfg.conv_ch1 = 4;
    cfg.conv_ch2 = 4;
    cfg.num_classes = 2;
    return cfg;
}

template <typename S>
PatchGrid<S> random_grid(int64_t c, int64_t p, uint64_t seed) {
    Rng rng(seed);
    PatchGrid<S> g;
    g.values = Tensor<S>::randn({c, p, kPatchLen}, rng);
    g.window_s = static_cast<double>(p * kPatchLen) / kTargetFs;
    for (int64_t i = 0; i < c; ++i) {
        ChannelInfo ch;
        ch.modality = static_cast<Modality>(i % 3);
        ch.label = "ch" + std::to_string(i);
        ch.coords = {0.1 * static_cast<double>(i), 0.2, -0.3};
        if (ch.modality == Modality::PPG) ch.coords = {0, 0, 0};
        g.meta.push_back(ch);
    }
    return g;
}

}  // namespace

// ----------------------------- patch embedding -----------------------------

TEST(PatchEmbedding, ZeroPatchesGiveIdenticalBiasOnlyOutput) {
    Rng rng(1);
    auto embed = PatchEmbed<float>::make(4, 4, 32, rng);
    ForwardContext<float> ctx;
    auto out = embed.encode(Tensor<float>::zeros({3, kPatchLen}), ctx);
    ASSERT_EQ(out.shape(), (Shape{3, 32}));
    for (int64_t j = 0; j < 32; ++j) {
        EXPECT_EQ(out.at({0, j}), out.at({1, j}));
        EXPECT_EQ(out.at({0, j}), out.at({2, j}));
    }
}

TEST(PatchEmbedding, OutputWidthMatchesDefaultD) {
    Rng rng(2);
    auto embed = PatchEmbed<float>::make(16, 16, 128, rng);
    ForwardContext<float> ctx;
    auto out = embed.encode(Tensor<float>::zeros({1, kPatchLen}), ctx);
    EXPECT_EQ(out.shape(), (Shape{1, 128}));
}

TEST(PatchEmbedding, WrongPatchLengthThrows) {
    Rng rng(3);
    auto embed = PatchEmbed<float>::make(4, 4, 32, rng);
    ForwardContext<float> ctx;
    EXPECT_THROW(embed.encode(Tensor<float>::zeros({1, 16}), ctx), ShapeError);
}

TEST(PatchEmbedding, TimeReversalSplitsBranches) {
    Rng rng(4);
    auto embed = PatchEmbed<double>::make(4, 4, 32, rng);
    ForwardContext<double> ctx;
    Rng data_rng(5);
    std::vector<double> fwd(kPatchLen);
    for (auto& v : fwd) v = data_rng.gauss();
    std::vector<double> rev(fwd.rbegin(), fwd.rend());
    auto a = Tensor<double>::from_data({1, kPatchLen}, fwd);
    auto b = Tensor<double>::from_data({1, kPatchLen}, rev);

    // magnitude spectrum of a reversed signal is unchanged
    auto fa = rfft_mag(a), fb = rfft_mag(b);
    for (int k = 0; k <= 16; ++k) EXPECT_NEAR(fa.data()[k], fb.data()[k], 1e-9);
    auto oa = oracles::naive_dft_mag(fwd), ob = oracles::naive_dft_mag(rev);
    for (int k = 0; k <= 16; ++k) EXPECT_NEAR(oa[k], ob[k], 1e-9);

    // the conv branch is direction-sensitive
    auto ca = embed.conv_branch(a, ctx), cb = embed.conv_branch(b, ctx);
    double diff = 0;
    for (int64_t i = 0; i < ca.numel(); ++i)
        diff = std::max(diff, std::abs(ca.data()[i] - cb.data()[i]));
    EXPECT_GT(diff, 1e-6);
}

TEST(PositionalEncoding, OriginGivesSinZeroCosOne) {
    auto code = positional_encoding<double>({0, 0, 0}, 24);
    int64_t bands = 24 / 6;
    for (int axis = 0; axis < 3; ++axis)
        for (int64_t i = 0; i < bands; ++i) {
            EXPECT_DOUBLE_EQ(code[(axis * bands + i) * 2], 0.0);
            EXPECT_DOUBLE_EQ(code[(axis * bands + i) * 2 + 1], 1.0);
        }
}

TEST(PositionalEncoding, PpgUsesNeutralCode) {
    auto neutral = positional_encoding<double>({0, 0, 0}, 32);
    ChannelInfo ppg;
    ppg.modality = Modality::PPG;
    ppg.coords = {0, 0, 0};
    auto code = positional_encoding<double>(ppg.coords, 32);
    for (size_t i = 0; i < code.size(); ++i) EXPECT_DOUBLE_EQ(code[i], neutral[i]);
}

TEST(PositionalEncoding, DistinctCoordsGiveDistinctCodes) {
    auto a = positional_encoding<double>({0.5, 0.2, -0.1}, 24);
    auto b = positional_encoding<double>({0.4, 0.2, -0.1}, 24);
    double l2 = 0;
    for (size_t i = 0; i < a.size(); ++i) l2 += (a[i] - b[i]) * (a[i] - b[i]);
    EXPECT_GT(std::sqrt(l2), 0.0);
}

TEST(LeadTable, CardinalAngles) {
    auto table = LeadAngleTable::standard();
    auto i = ecg_lead_coordinates("I", table);
    EXPECT_NEAR(i[0], 1.0, 1e-12);
    EXPECT_NEAR(i[1], 0.0, 1e-12);
    auto avf = ecg_lead_coordinates("aVF", table);
    EXPECT_NEAR(avf[0], 0.0, 1e-12);
    EXPECT_NEAR(avf[1], 1.0, 1e-12);
}

TEST(LeadTable, TwelveDistinctCoordinates) {
    auto table = LeadAngleTable::standard();
    std::vector<std::string> leads = {"I",  "II", "III", "aVR", "aVL", "aVF",
                                      "V1", "V2", "V3",  "V4",  "V5",  "V6"};
    ASSERT_EQ(table.leads.size(), 12u);
    for (size_t a = 0; a < leads.size(); ++a)
        for (size_t b = a + 1; b < leads.size(); ++b) {
            auto ca = ecg_lead_coordinates(leads[a], table);
            auto cb = ecg_lead_coordinates(leads[b], table);
            double d2 = 0;
            for (int k = 0; k < 3; ++k) d2 += (ca[k] - cb[k]) * (ca[k] - cb[k]);
            EXPECT_GT(d2, 1e-6) << leads[a] << " vs " << leads[b];
        }
}

TEST(LeadTable, UnknownLeadThrows) {
    auto table = LeadAngleTable::standard();
    EXPECT_THROW(ecg_lead_coordinates("V7", table), ValueError);
}

TEST(LeadTable, JsonOverride) {
    auto j = nlohmann::json::parse(R"({"I": 10.0, "V1": {"degrees": -20.0, "radius": 0.4}})");
    auto table = LeadAngleTable::from_json(j);
    EXPECT_NEAR(table.leads.at("I").degrees, 10.0, 1e-12);
    EXPECT_NEAR(table.leads.at("V1").radius, 0.4, 1e-12);
    EXPECT_NEAR(table.leads.at("II").degrees, 60.0, 1e-12);  // untouched defaults remain
}

TEST(ComposeToken, AdditiveCompositionIsExact) {
    Rng rng(6);
    auto embed = PatchEmbed<double>::make(4, 4, 24, rng);
    auto sensor = Tensor<double>::randn({3, 24}, rng);
    ForwardContext<double> ctx;
    auto patch = Tensor<double>::randn({kPatchLen}, rng);
    std::array<double, 3> coords{0.3, -0.2, 0.5};
    auto tok = compose_token(patch, coords, Modality::EEG, embed, sensor, ctx);
    auto feat = reshape(embed.encode(reshape(patch, {1, kPatchLen}), ctx), {24});
    auto pos = positional_encoding<double>(coords, 24);
    for (int64_t j = 0; j < 24; ++j)
        EXPECT_DOUBLE_EQ(tok.vector.data()[j], feat.data()[j] + pos[j] + sensor.at({0, j}));
}

TEST(ComposeToken, SameInputsSameToken) {
    Rng rng(7);
    auto embed = PatchEmbed<double>::make(4, 4, 24, rng);
    auto sensor = Tensor<double>::randn({3, 24}, rng);
    ForwardContext<double> ctx;
    auto patch = Tensor<double>::randn({kPatchLen}, rng);
    std::array<double, 3> coords{0.1, 0.1, 0.1};
    auto t1 = compose_token(patch, coords, Modality::ECG, embed, sensor, ctx);
    auto t2 = compose_token(patch, coords, Modality::ECG, embed, sensor, ctx);
    for (int64_t j = 0; j < 24; ++j)
        EXPECT_DOUBLE_EQ(t1.vector.data()[j], t2.vector.data()[j]);
}

TEST(ComposeToken, ModalitySwapShiftsBySensorRowDelta) {
    Rng rng(8);
    auto embed = PatchEmbed<double>::make(4, 4, 24, rng);
    auto sensor = Tensor<double>::randn({3, 24}, rng);
    ForwardContext<double> ctx;
    auto patch = Tensor<double>::randn({kPatchLen}, rng);
    std::array<double, 3> coords{0.1, 0.2, 0.3};
    auto te = compose_token(patch, coords, Modality::EEG, embed, sensor, ctx);
    auto tc = compose_token(patch, coords, Modality::ECG, embed, sensor, ctx);
    for (int64_t j = 0; j < 24; ++j)
        EXPECT_NEAR(te.vector.data()[j] - tc.vector.data()[j],
                    sensor.at({0, j}) - sensor.at({1, j}), 1e-12);
}

// ----------------------------- unifier -----------------------------

TEST(Unifier, SingleChannelAttentionIsExactlyOne) {
    Model<float> model(tiny_cfg(), 11);
    auto grid = random_grid<float>(1, 6, 12);
    auto ctx = model.make_context(nullptr, true);
    auto state = model.unifier.unify(model.tokens_for(grid, nullptr, ctx), ctx);
    ASSERT_EQ(state.attn.shape(), (Shape{6, 4, 1}));
    for (int64_t i = 0; i < state.attn.numel(); ++i)
        EXPECT_EQ(state.attn.data()[i], 1.0f);
}

TEST(Unifier, ChannelPermutationInvariance) {
    Model<float> model(tiny_cfg(), 13);
    const int64_t c = 5, p = 8;
    auto grid = random_grid<float>(c, p, 14);
    std::vector<int> perm = {3, 0, 4, 1, 2};
    PatchGrid<float> permuted;
    permuted.window_s = grid.window_s;
    permuted.values = Tensor<float>::zeros({c, p, kPatchLen});
    for (int64_t i = 0; i < c; ++i) {
        permuted.meta.push_back(grid.meta[perm[i]]);
        for (int64_t pi = 0; pi < p; ++pi)
            for (int64_t s = 0; s < kPatchLen; ++s)
                permuted.values.at({i, pi, s}) = grid.values.at({perm[i], pi, s});
    }
    auto ctx = model.make_context(nullptr, true);
    auto base = model.unifier.unify(model.tokens_for(grid, nullptr, ctx), ctx);
    auto swapped = model.unifier.unify(model.tokens_for(permuted, nullptr, ctx), ctx);

    for (int64_t i = 0; i < base.values.numel(); ++i) {
        float a = base.values.data()[i], b = swapped.values.data()[i];
        EXPECT_NEAR(a, b, 1e-5 * std::max(1.0f, std::abs(a)));
    }
    // attention columns permute bit-exactly
    for (int64_t pi = 0; pi < p; ++pi)
        for (int64_t q = 0; q < 4; ++q)
            for (int64_t ci = 0; ci < c; ++ci)
                EXPECT_EQ(swapped.attn.at({pi, q, ci}), base.attn.at({pi, q, perm[ci]}));
}

TEST(Unifier, DuplicatedChannelMatchesSingle) {
    Model<float> model(tiny_cfg(), 15);
    auto one = random_grid<float>(1, 6, 16);
    PatchGrid<float> two;
    two.window_s = one.window_s;
    two.meta = {one.meta[0], one.meta[0]};
    two.values = Tensor<float>::zeros({2, 6, kPatchLen});
    for (int64_t pi = 0; pi < 6; ++pi)
        for (int64_t s = 0; s < kPatchLen; ++s) {
            two.values.at({0, pi, s}) = one.values.at({0, pi, s});
            two.values.at({1, pi, s}) = one.values.at({0, pi, s});
        }
    auto ctx = model.make_context(nullptr, true);
    auto s1 = model.unifier.unify(model.tokens_for(one, nullptr, ctx), ctx);
    auto s2 = model.unifier.unify(model.tokens_for(two, nullptr, ctx), ctx);
    for (int64_t i = 0; i < s1.values.numel(); ++i) {
        float a = s1.values.data()[i], b = s2.values.data()[i];
        EXPECT_NEAR(a, b, 1e-5 * std::max(1.0f, std::abs(a)));
    }
    // weights split evenly over the identical channels
    for (int64_t pi = 0; pi < 6; ++pi)
        for (int64_t q = 0; q < 4; ++q) {
            EXPECT_NEAR(s2.attn.at({pi, q, 0}), 0.5f, 1e-6);
            EXPECT_NEAR(s2.attn.at({pi, q, 1}), 0.5f, 1e-6);
        }
}

TEST(Unifier, AttentionRowsSumToOne) {
    Model<float> model(tiny_cfg(), 17);
    auto grid = random_grid<float>(4, 5, 18);
    auto ctx = model.make_context(nullptr, true);
    auto state = model.unifier.unify(model.tokens_for(grid, nullptr, ctx), ctx);
    for (int64_t pi = 0; pi < 5; ++pi)
        for (int64_t q = 0; q < 4; ++q) {
            double sum = 0;
            for (int64_t c = 0; c < 4; ++c) sum += state.attn.at({pi, q, c});
            EXPECT_NEAR(sum, 1.0, 1e-6);
        }
}

TEST(Unifier, RefineShapePreservedAndQ1Works) {
    auto cfg = tiny_cfg();
    Model<float> model(cfg, 19);
    LatentState<float> st;
    Rng rng(20);
    st.values = Tensor<float>::randn({7, cfg.queries, cfg.d_model}, rng);
    auto ctx = model.make_context();
    auto out = model.unifier.refine(st, ctx);
    EXPECT_EQ(out.values.shape(), (Shape{7, cfg.queries, cfg.d_model}));

    auto cfg1 = tiny_cfg();
    cfg1.queries = 1;
    Model<float> m1(cfg1, 21);
    LatentState<float> s1;
    s1.values = Tensor<float>::randn({7, 1, cfg1.d_model}, rng);
    auto ctx1 = m1.make_context();
    auto o1 = m1.unifier.refine(s1, ctx1);
    EXPECT_EQ(o1.values.shape(), (Shape{7, 1, cfg1.d_model}));
}

TEST(Unifier, QueryGradientMatchesFiniteDifferences) {
    auto cfg = tiny_cfg(16, 0);
    cfg.conv_ch1 = 2;
    cfg.conv_ch2 = 2;
    Model<double> model(cfg, 23);
    auto grid = random_grid<double>(2, 3, 24);
    Rng wrng(25);
    auto weights = Tensor<double>::randn({3, 4, 16}, wrng);
    auto loss_fn = [&]() {
        auto ctx = model.make_context();
        auto state = model.unifier.unify(model.tokens_for(grid, nullptr, ctx), ctx);
        return sum_all(mul(state.values, weights));
    };
    EXPECT_LT(oracles::gradient_check(loss_fn, {model.unifier.queries}), 1e-4);
}

TEST(Unifier, EmptyChannelSetThrows) {
    Model<float> model(tiny_cfg(), 27);
    auto ctx = model.make_context();
    EXPECT_THROW(model.unifier.unify(Tensor<float>::zeros({0, 4, 24}), ctx), Error);
}

// ----------------------------- temporal -----------------------------

TEST(Temporal, ShapePreserved) {
    auto cfg = tiny_cfg();
    Model<float> model(cfg, 29);
    Rng rng(30);
    auto x = Tensor<float>::randn({10, cfg.queries, cfg.d_model}, rng);
    auto ctx = model.make_context();
    EXPECT_EQ(model.temporal.forward(x, ctx).shape(), x.shape());
}

TEST(Temporal, ZeroLayersIsIdentity) {
    auto cfg = tiny_cfg(24, 0);
    Model<float> model(cfg, 31);
    Rng rng(32);
    auto x = Tensor<float>::randn({5, cfg.queries, cfg.d_model}, rng);
    auto ctx = model.make_context();
    auto y = model.temporal.forward(x, ctx);
    for (int64_t i = 0; i < x.numel(); ++i) EXPECT_EQ(y.data()[i], x.data()[i]);
}

TEST(Temporal, GlobalPositionShiftInvariance) {
    auto cfg = tiny_cfg();
    Model<float> model(cfg, 33);
    Rng rng(34);
    auto x = Tensor<float>::randn({6, cfg.queries, cfg.d_model}, rng);
    auto ctx = model.make_context();
    auto y0 = model.temporal.forward(x, ctx, 0);
    auto y3 = model.temporal.forward(x, ctx, 3);
    for (int64_t i = 0; i < x.numel(); ++i) {
        float a = y0.data()[i], b = y3.data()[i];
        EXPECT_NEAR(a, b, 1e-5 * std::max(1.0f, std::abs(a)));
    }
}

TEST(Temporal, EvalForwardIsDeterministic) {
    auto cfg = tiny_cfg();
    Model<float> model(cfg, 35);
    Rng rng(36);
    auto x = Tensor<float>::randn({4, cfg.queries, cfg.d_model}, rng);
    auto ctx = model.make_context();
    auto y1 = model.temporal.forward(x, ctx);
    auto y2 = model.temporal.forward(x, ctx);
    for (int64_t i = 0; i < y1.numel(); ++i) EXPECT_EQ(y1.data()[i], y2.data()[i]);
}
