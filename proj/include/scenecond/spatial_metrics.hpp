#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "scenecond/camera.hpp"
#include "scenecond/depth_renderer.hpp"

namespace scenecond {

struct DetectionRecord {
    std::string label;
    std::array<double, 4> bbox{};  // x1, y1, x2, y2 pixels
    double depth = 0.0;

    double center_x() const { return 0.5 * (bbox[0] + bbox[2]); }
    double center_y() const { return 0.5 * (bbox[1] + bbox[3]); }
};

enum class Relation { Front, Behind, FrontLeft, FrontRight, BackLeft, BackRight };

inline constexpr std::array<Relation, 6> kAllRelations{Relation::Front,     Relation::Behind,
                                                       Relation::FrontLeft, Relation::FrontRight,
                                                       Relation::BackLeft,  Relation::BackRight};

std::string_view relation_name(Relation relation);  // "front_left"
/// Accepts "front_left", "front-left" or "front left". Throws Error{UnknownRelation}.
Relation parse_relation(std::string_view name);
/// Phrase used in benchmark prompts, e.g. "in front of".
std::string_view relation_phrase(Relation relation);

struct RelationSpec {
    std::string subject;
    std::string object;
    Relation relation = Relation::Front;
    std::string scene;

    friend bool operator==(const RelationSpec&, const RelationSpec&) = default;
};

enum class Axis { Horizontal, Depth };
enum class Direction { Left, Right, Front, Back };

struct RelationComponent {
    Axis axis;
    Direction direction;

    friend bool operator==(const RelationComponent&, const RelationComponent&) = default;
};

/// Depth component first, then the horizontal one for diagonal relations.
std::vector<RelationComponent> decompose_relation(Relation relation);

struct ScoreOptions {
    double margin = 0.0;
    // Sigmoid of the signed margin (normalized by mean box width or mean
    // depth) instead of a 0/1 comparison. Diagnostics only.
    bool soft = false;
};

/// Mean of per-component scores. Horizontal compares bbox center x; depth
/// compares `depth` with smaller meaning closer ("front"). Strict inequality.
double score_relation(const DetectionRecord& subject, const DetectionRecord& object, const RelationSpec& spec,
                      const ScoreOptions& options = {});

/// Mean over specs; a spec whose subject or object label is not detected
/// scores 0. The first record with a matching label is used.
double score_prompt(const std::vector<DetectionRecord>& detections, const std::vector<RelationSpec>& specs,
                    const ScoreOptions& options = {});

/// 1 - |d1 - d2| / (|d1| + |d2|); 1 when both are zero.
double consistency_3d(double d1, double d2);

enum class DepthStatistic { Center, Mean };

/// Depth of a detection box from a depth map. Center falls back to the mean of
/// finite values in the box when the center pixel is background; nullopt when
/// the box holds no finite depth.
std::optional<double> detection_depth(const DepthMap& depth, const std::array<double, 4>& bbox,
                                      DepthStatistic statistic = DepthStatistic::Center);

std::vector<DetectionRecord> parse_detections(std::string_view json_text);
std::string detections_to_json(const std::vector<DetectionRecord>& records);

struct ObjectCategory {
    std::string name;
    std::vector<std::string> scenes;  // empty = every scene
    std::vector<std::string> objects;
};

struct CategoryTable {
    std::string version;
    std::vector<ObjectCategory> categories;

    /// Every distinct scene, in first-seen order.
    std::vector<std::string> all_scenes() const;
    /// Objects allowed in `scene`, in table order.
    std::vector<std::string> objects_for_scene(std::string_view scene) const;
};

CategoryTable parse_category_table(std::string_view json_text);
/// Object categories and scenes bundled with the library.
const CategoryTable& builtin_category_table();
std::string_view builtin_category_table_json();

enum class PromptKind { Basic, Multi };

struct BenchPrompt {
    std::string prompt;
    std::vector<RelationSpec> specs;
    std::string scene;
    PromptKind kind = PromptKind::Basic;
};

/// "a {object1} {relation} a {object2} {scene}".
std::string basic_prompt_text(const RelationSpec& spec);
/// Two same-scene basic prompts joined into one multi-relation prompt.
BenchPrompt combine_prompts(const BenchPrompt& first, const BenchPrompt& second);

struct BenchOptions {
    std::size_t count_per_relation = 100;
    std::size_t multi_count = 0;
    std::uint64_t seed = 0;
};

/// Seeded basic prompts (count_per_relation for each relation, without
/// duplicates) followed by multi-relation combinations.
/// Throws Error{ExhaustedCombinations}.
std::vector<BenchPrompt> generate_bench_prompts(const CategoryTable& table, const std::vector<Relation>& relations,
                                                const BenchOptions& options);

std::string bench_to_jsonl(const std::vector<BenchPrompt>& prompts);

}  // namespace scenecond
