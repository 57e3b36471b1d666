#include <gtest/gtest.h>

#include <random>
#include <set>

#include <nlohmann/json.hpp>

#include "scenecond/error.hpp"
#include "scenecond/spatial_metrics.hpp"
#include "synthetic.hpp"

using namespace scenecond;

namespace {

DetectionRecord record(std::string label, double cx, double depth) {
    return {std::move(label), {cx - 10, 0, cx + 10, 20}, depth};
}

ScoreOptions one_pixel() {
    ScoreOptions o;
    o.margin = 1.0;
    return o;
}

}  // namespace

TEST(Relations, Decompose) {
    using C = RelationComponent;
    EXPECT_EQ(decompose_relation(Relation::FrontLeft),
              (std::vector<C>{{Axis::Depth, Direction::Front}, {Axis::Horizontal, Direction::Left}}));
    EXPECT_EQ(decompose_relation(Relation::Behind), (std::vector<C>{{Axis::Depth, Direction::Back}}));
    EXPECT_EQ(decompose_relation(Relation::BackRight),
              (std::vector<C>{{Axis::Depth, Direction::Back}, {Axis::Horizontal, Direction::Right}}));
}

TEST(Relations, NamesAndParsing) {
    for (Relation r : kAllRelations) EXPECT_EQ(parse_relation(relation_name(r)), r);
    EXPECT_EQ(parse_relation("front-left"), Relation::FrontLeft);
    EXPECT_EQ(parse_relation("Back Right"), Relation::BackRight);
    EXPECT_EQ(parse_relation("back"), Relation::Behind);
    try {
        parse_relation("above");
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::UnknownRelation);
    }
    EXPECT_EQ(relation_phrase(Relation::Front), "in front of");
}

TEST(ScoreRelation, Examples) {
    const RelationSpec spec{"a", "b", Relation::FrontLeft, ""};
    EXPECT_EQ(score_relation(record("a", 100, 2), record("b", 300, 5), spec), 1.0);
    EXPECT_EQ(score_relation(record("a", 100, 7), record("b", 300, 5), spec), 0.5);
    EXPECT_EQ(score_relation(record("a", 200, 3), record("b", 200, 3), spec), 0.0);
}

TEST(ScoreRelation, MarginIsStrict) {
    const RelationSpec spec{"a", "b", Relation::Behind, ""};
    ScoreOptions o;
    o.margin = 1.0;
    EXPECT_EQ(score_relation(record("a", 0, 6), record("b", 0, 5), spec, o), 0.0);
    EXPECT_EQ(score_relation(record("a", 0, 6.5), record("b", 0, 5), spec, o), 1.0);
}

TEST(ScoreRelation, SwapAndFlipIsInvariant) {
    auto flip = [](Relation r) {
        switch (r) {
            case Relation::Front: return Relation::Behind;
            case Relation::Behind: return Relation::Front;
            case Relation::FrontLeft: return Relation::BackRight;
            case Relation::FrontRight: return Relation::BackLeft;
            case Relation::BackLeft: return Relation::FrontRight;
            case Relation::BackRight: return Relation::FrontLeft;
        }
        return r;
    };
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(0.0, 500.0);
    for (int i = 0; i < 500; ++i) {
        const auto s = record("s", u(rng), u(rng));
        const auto o = record("o", u(rng), u(rng));
        for (Relation r : kAllRelations) {
            EXPECT_EQ(score_relation(s, o, {"s", "o", r, ""}), score_relation(o, s, {"o", "s", flip(r), ""}));
        }
    }
}

TEST(ScoreRelation, SoftModeIsBoundedAndOrdered) {
    const RelationSpec spec{"a", "b", Relation::FrontLeft, ""};
    ScoreOptions soft;
    soft.soft = true;
    const double good = score_relation(record("a", 100, 2), record("b", 300, 5), spec, soft);
    const double bad = score_relation(record("a", 300, 5), record("b", 100, 2), spec, soft);
    EXPECT_GT(good, 0.5);
    EXPECT_LT(bad, 0.5);
    EXPECT_GT(good, 0.0);
    EXPECT_LT(good, 1.0);
}

TEST(ScorePrompt, MissingDetectionScoresZero) {
    const std::vector<DetectionRecord> dets{record("dog", 100, 2), record("cat", 300, 5)};
    EXPECT_EQ(score_prompt(dets, {{"dog", "cat", Relation::FrontLeft, ""}}), 1.0);
    EXPECT_EQ(score_prompt(dets, {{"dog", "horse", Relation::FrontLeft, ""}}), 0.0);
    EXPECT_EQ(score_prompt(dets, {{"dog", "cat", Relation::FrontLeft, ""}, {"dog", "horse", Relation::Front, ""}}),
              0.5);
}

TEST(Consistency, Examples) {
    EXPECT_EQ(consistency_3d(2, 2), 1.0);
    EXPECT_EQ(consistency_3d(1, 3), 0.5);
    EXPECT_EQ(consistency_3d(1, -1), 0.0);
    EXPECT_EQ(consistency_3d(0, 0), 1.0);
}

TEST(Consistency, Properties) {
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> u(-10.0, 10.0);
    for (int i = 0; i < 1000; ++i) {
        const double a = u(rng), b = u(rng);
        const double s = consistency_3d(a, b);
        EXPECT_GE(s, 0.0);
        EXPECT_LE(s, 1.0);
        EXPECT_EQ(s, consistency_3d(b, a));
        EXPECT_NEAR(consistency_3d(4.0 * a, 4.0 * b), s, 1e-15);
        EXPECT_NEAR(consistency_3d(0.37 * a, 0.37 * b), s, 1e-12);
    }
}

TEST(DetectionDepth, CenterAndFallback) {
    DepthMap d(8, 8);
    d.values[3 * 8 + 3] = 4.0f;
    d.values[1 * 8 + 1] = 2.0f;
    d.values[1 * 8 + 2] = 6.0f;
    EXPECT_EQ(detection_depth(d, {2, 2, 5, 5}), 4.0);
    // center (4,4) is background: mean of finite values inside the box
    EXPECT_EQ(detection_depth(d, {1, 1, 8, 8}), 4.0);
    EXPECT_EQ(detection_depth(d, {0, 0, 3, 3}, DepthStatistic::Mean), 4.0);
    EXPECT_FALSE(detection_depth(d, {5, 5, 8, 8}).has_value());
}

TEST(Detections, JsonRoundTripAndErrors) {
    const std::vector<DetectionRecord> dets{record("dog", 100, 2.5), record("cat", 40, 1)};
    const auto back = parse_detections(detections_to_json(dets));
    ASSERT_EQ(back.size(), 2u);
    EXPECT_EQ(back[0].label, "dog");
    EXPECT_EQ(back[0].bbox, dets[0].bbox);
    EXPECT_EQ(back[1].depth, 1.0);
    EXPECT_THROW(parse_detections(R"([{"label":"a","bbox":[5,0,1,4],"depth":1}])"), Error);
    EXPECT_THROW(parse_detections(R"([{"label":"a","bbox":[0,0,1,4]}])"), Error);
}

TEST(CategoryTable, MatchesPublishedTable) {
    const auto& t = builtin_category_table();
    ASSERT_EQ(t.categories.size(), 4u);
    EXPECT_EQ(t.categories[0].name, "Animals");
    EXPECT_EQ(t.categories[0].objects.size(), 15u);
    EXPECT_EQ(t.categories[1].objects.size(), 23u);
    EXPECT_EQ(t.categories[2].objects.size(), 7u);
    EXPECT_EQ(t.categories[3].objects, (std::vector<std::string>{"woman", "man", "boy", "girl"}));
    EXPECT_TRUE(t.categories[3].scenes.empty());
    std::set<std::string> all;
    for (const auto& c : t.categories) all.insert(c.objects.begin(), c.objects.end());
    EXPECT_EQ(all.size(), 49u);
    // desert is shared by animals and outdoor; person goes everywhere
    const auto desert = t.objects_for_scene("in the desert");
    EXPECT_EQ(desert.size(), 15u + 7u + 4u);
    EXPECT_EQ(t.objects_for_scene("in the library").size(), 23u + 4u);
    EXPECT_EQ(t.all_scenes().size(), 10u);
}

TEST(BenchPrompts, TemplateExample) {
    const RelationSpec spec{"dog", "cat", Relation::Front, "in the desert"};
    EXPECT_EQ(basic_prompt_text(spec), "a dog in front of a cat in the desert");
}

TEST(BenchPrompts, CombineTwo) {
    const RelationSpec a{"dog", "cat", Relation::Front, "in the desert"};
    const RelationSpec b{"car", "man", Relation::BackLeft, "in the desert"};
    const BenchPrompt p = combine_prompts({basic_prompt_text(a), {a}, a.scene, PromptKind::Basic},
                                          {basic_prompt_text(b), {b}, b.scene, PromptKind::Basic});
    EXPECT_EQ(p.prompt, "a dog in front of a cat, a car to the back left of a man in the desert");
    EXPECT_EQ(p.specs, (std::vector<RelationSpec>{a, b}));
    EXPECT_EQ(p.kind, PromptKind::Multi);
}

TEST(BenchPrompts, CountZeroIsEmpty) {
    BenchOptions o;
    o.count_per_relation = 0;
    EXPECT_TRUE(generate_bench_prompts(builtin_category_table(), {kAllRelations.begin(), kAllRelations.end()}, o)
                    .empty());
}

TEST(BenchPrompts, SeededUniqueAndValid) {
    BenchOptions o;
    o.count_per_relation = 200;
    o.multi_count = 200;
    o.seed = 17;
    const std::vector<Relation> rel(kAllRelations.begin(), kAllRelations.end());
    const auto& table = builtin_category_table();
    const auto a = generate_bench_prompts(table, rel, o);
    EXPECT_EQ(bench_to_jsonl(a), bench_to_jsonl(generate_bench_prompts(table, rel, o)));
    o.seed = 18;
    EXPECT_NE(bench_to_jsonl(a), bench_to_jsonl(generate_bench_prompts(table, rel, o)));

    ASSERT_EQ(a.size(), 6u * 200 + 200);
    std::set<std::string> texts;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const auto& p = a[i];
        EXPECT_TRUE(texts.insert(p.prompt).second) << p.prompt;
        EXPECT_EQ(p.kind, i < 1200 ? PromptKind::Basic : PromptKind::Multi);
        const auto allowed = table.objects_for_scene(p.scene);
        std::set<std::string> names;
        for (const auto& s : p.specs) {
            EXPECT_EQ(s.scene, p.scene);
            EXPECT_NE(std::find(allowed.begin(), allowed.end(), s.subject), allowed.end());
            EXPECT_NE(std::find(allowed.begin(), allowed.end(), s.object), allowed.end());
            names.insert(s.subject);
            names.insert(s.object);
        }
        EXPECT_EQ(names.size(), 2 * p.specs.size());
        if (p.kind == PromptKind::Basic) {
            EXPECT_EQ(p.specs[0].relation, rel[i / 200]);
            EXPECT_EQ(p.prompt, basic_prompt_text(p.specs[0]));
        }
    }
    const auto line = nlohmann::json::parse(bench_to_jsonl({a[0]}));
    EXPECT_EQ(line["specs"][0]["relation"], relation_name(a[0].specs[0].relation));
}

TEST(BenchPrompts, Exhausted) {
    CategoryTable tiny;
    tiny.categories.push_back({"x", {"here"}, {"a", "b"}});
    BenchOptions o;
    o.count_per_relation = 2;
    EXPECT_EQ(generate_bench_prompts(tiny, {Relation::Front}, o).size(), 2u);
    o.count_per_relation = 3;
    try {
        generate_bench_prompts(tiny, {Relation::Front}, o);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::ExhaustedCombinations);
    }
    o.count_per_relation = 2;
    o.multi_count = 1;
    EXPECT_THROW(generate_bench_prompts(tiny, {Relation::Front}, o), Error);
}

TEST(SyntheticScenes, TrueRelationScoresOne) {
    const auto cam = synthetic::scene_camera();
    for (Relation truth : kAllRelations) {
        const RelationSpec spec{"s", "o", truth, ""};
        const auto dets = synthetic::detect(cam, synthetic::place_pair(spec, {0, 0, 1}));
        for (Relation other : kAllRelations) {
            const double score = score_prompt(dets, {{"s", "o", other, ""}}, one_pixel());
            if (synthetic::components_within(other, truth)) {
                EXPECT_EQ(score, 1.0) << relation_name(truth) << " vs " << relation_name(other);
            } else {
                EXPECT_LE(score, 0.5) << relation_name(truth) << " vs " << relation_name(other);
            }
        }
    }
}
