#include "scenecond/spatial_metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <random>
#include <set>

#include <nlohmann/json.hpp>

#include "scenecond/category_table_data.hpp"
#include "scenecond/error.hpp"

namespace scenecond {

using json = nlohmann::json;

namespace {

struct RelationInfo {
    Relation relation;
    std::string_view name;
    std::string_view phrase;
};

constexpr std::array<RelationInfo, 6> kRelationInfo{{
    {Relation::Front, "front", "in front of"},
    {Relation::Behind, "behind", "behind"},
    {Relation::FrontLeft, "front_left", "to the front left of"},
    {Relation::FrontRight, "front_right", "to the front right of"},
    {Relation::BackLeft, "back_left", "to the back left of"},
    {Relation::BackRight, "back_right", "to the back right of"},
}};

const RelationInfo& info(Relation relation) {
    for (const auto& entry : kRelationInfo) {
        if (entry.relation == relation) return entry;
    }
    throw Error(ErrorCode::UnknownRelation, "relation out of range");
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Uniform index in [0, n) by rejection on the raw 64-bit draw.
std::size_t uniform_index(std::mt19937_64& rng, std::size_t n) {
    const std::uint64_t range = n;
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                std::numeric_limits<std::uint64_t>::max() % range;
    std::uint64_t draw = rng();
    while (draw >= limit) draw = rng();
    return static_cast<std::size_t>(draw % range);
}

// Partial Fisher-Yates: the first k items become a uniform sample.
template <typename T>
void sample_prefix(std::vector<T>& items, std::size_t k, std::mt19937_64& rng) {
    for (std::size_t i = 0; i < k; ++i) {
        const std::size_t j = i + uniform_index(rng, items.size() - i);
        std::swap(items[i], items[j]);
    }
}

}  // namespace

std::string_view relation_name(Relation relation) { return info(relation).name; }

std::string_view relation_phrase(Relation relation) { return info(relation).phrase; }

Relation parse_relation(std::string_view name) {
    std::string key(name);
    std::transform(key.begin(), key.end(), key.begin(), [](unsigned char c) {
        return c == '-' || c == ' ' ? '_' : static_cast<char>(std::tolower(c));
    });
    if (key == "back") key = "behind";
    for (const auto& entry : kRelationInfo) {
        if (entry.name == key) return entry.relation;
    }
    throw Error(ErrorCode::UnknownRelation, "unknown relation: " + std::string(name));
}

std::vector<RelationComponent> decompose_relation(Relation relation) {
    switch (relation) {
        case Relation::Front: return {{Axis::Depth, Direction::Front}};
        case Relation::Behind: return {{Axis::Depth, Direction::Back}};
        case Relation::FrontLeft: return {{Axis::Depth, Direction::Front}, {Axis::Horizontal, Direction::Left}};
        case Relation::FrontRight: return {{Axis::Depth, Direction::Front}, {Axis::Horizontal, Direction::Right}};
        case Relation::BackLeft: return {{Axis::Depth, Direction::Back}, {Axis::Horizontal, Direction::Left}};
        case Relation::BackRight: return {{Axis::Depth, Direction::Back}, {Axis::Horizontal, Direction::Right}};
    }
    throw Error(ErrorCode::UnknownRelation, "relation out of range");
}

double score_relation(const DetectionRecord& subject, const DetectionRecord& object, const RelationSpec& spec,
                      const ScoreOptions& options) {
    const auto components = decompose_relation(spec.relation);
    double total = 0.0;
    for (const auto& c : components) {
        // Signed amount by which the subject sits on the required side.
        double lead = 0.0;
        double scale = 1.0;
        switch (c.direction) {
            case Direction::Left: lead = object.center_x() - subject.center_x(); break;
            case Direction::Right: lead = subject.center_x() - object.center_x(); break;
            case Direction::Front: lead = object.depth - subject.depth; break;
            case Direction::Back: lead = subject.depth - object.depth; break;
        }
        if (options.soft) {
            if (c.axis == Axis::Horizontal) {
                scale = 0.5 * ((subject.bbox[2] - subject.bbox[0]) + (object.bbox[2] - object.bbox[0]));
            } else {
                scale = 0.5 * (std::abs(subject.depth) + std::abs(object.depth));
            }
            if (!(scale > 0.0)) scale = 1.0;
            total += sigmoid((lead - options.margin) / scale);
        } else {
            total += lead > options.margin ? 1.0 : 0.0;
        }
    }
    return total / static_cast<double>(components.size());
}

double score_prompt(const std::vector<DetectionRecord>& detections, const std::vector<RelationSpec>& specs,
                    const ScoreOptions& options) {
    if (specs.empty()) return 0.0;
    auto find = [&](const std::string& label) -> const DetectionRecord* {
        for (const auto& d : detections) {
            if (d.label == label) return &d;
        }
        return nullptr;
    };
    double total = 0.0;
    for (const auto& spec : specs) {
        const auto* s = find(spec.subject);
        const auto* o = find(spec.object);
        if (s && o) total += score_relation(*s, *o, spec, options);
    }
    return total / static_cast<double>(specs.size());
}

double consistency_3d(double d1, double d2) {
    const double denom = std::abs(d1) + std::abs(d2);
    if (denom == 0.0) return 1.0;
    return 1.0 - std::abs(d1 - d2) / denom;
}

std::optional<double> detection_depth(const DepthMap& depth, const std::array<double, 4>& bbox,
                                      DepthStatistic statistic) {
    if (depth.width <= 0 || depth.height <= 0) return std::nullopt;
    auto clamp_col = [&](double v) { return std::clamp(static_cast<int>(std::floor(v)), 0, depth.width - 1); };
    auto clamp_row = [&](double v) { return std::clamp(static_cast<int>(std::floor(v)), 0, depth.height - 1); };
    if (statistic == DepthStatistic::Center) {
        const float d = depth.at(clamp_col(0.5 * (bbox[0] + bbox[2])), clamp_row(0.5 * (bbox[1] + bbox[3])));
        if (std::isfinite(d)) return d;
    }
    const int x0 = clamp_col(bbox[0]);
    const int x1 = clamp_col(std::ceil(bbox[2]) - 1.0);
    const int y0 = clamp_row(bbox[1]);
    const int y1 = clamp_row(std::ceil(bbox[3]) - 1.0);
    double sum = 0.0;
    std::size_t n = 0;
    for (int y = y0; y <= y1; ++y) {
        for (int x = x0; x <= x1; ++x) {
            const float d = depth.at(x, y);
            if (std::isfinite(d)) {
                sum += d;
                ++n;
            }
        }
    }
    if (n == 0) return std::nullopt;
    return sum / static_cast<double>(n);
}

std::vector<DetectionRecord> parse_detections(std::string_view json_text) {
    const json j = json::parse(json_text, nullptr, false);
    if (j.is_discarded()) throw Error(ErrorCode::NoJsonFound, "detections file is not JSON");
    if (!j.is_array()) throw Error(ErrorCode::TypeMismatch, "detections: expected array");
    std::vector<DetectionRecord> out;
    for (const auto& item : j) {
        if (!item.is_object()) throw Error(ErrorCode::TypeMismatch, "detection: expected object");
        for (const char* key : {"label", "bbox", "depth"}) {
            if (!item.contains(key)) throw Error(ErrorCode::MissingKey, std::string(key) + " (in detection)");
        }
        DetectionRecord r;
        if (!item["label"].is_string()) throw Error(ErrorCode::TypeMismatch, "label: expected string");
        r.label = item["label"].get<std::string>();
        const auto& box = item["bbox"];
        if (!box.is_array() || box.size() != 4) throw Error(ErrorCode::TypeMismatch, "bbox: expected 4 numbers");
        for (std::size_t i = 0; i < 4; ++i) {
            if (!box[i].is_number()) throw Error(ErrorCode::TypeMismatch, "bbox: expected 4 numbers");
            r.bbox[i] = box[i].get<double>();
        }
        if (!item["depth"].is_number()) throw Error(ErrorCode::TypeMismatch, "depth: expected number");
        r.depth = item["depth"].get<double>();
        if (!(r.bbox[0] < r.bbox[2] && r.bbox[1] < r.bbox[3])) {
            throw Error(ErrorCode::InvalidArgument, "detection " + r.label + ": bbox must satisfy x1<x2, y1<y2");
        }
        if (!std::isfinite(r.depth)) throw Error(ErrorCode::InvalidArgument, "detection " + r.label + ": depth");
        out.push_back(std::move(r));
    }
    return out;
}

std::string detections_to_json(const std::vector<DetectionRecord>& records) {
    json j = json::array();
    for (const auto& r : records) {
        j.push_back({{"label", r.label}, {"bbox", r.bbox}, {"depth", r.depth}});
    }
    return j.dump(2);
}

std::vector<std::string> CategoryTable::all_scenes() const {
    std::vector<std::string> scenes;
    for (const auto& c : categories) {
        for (const auto& s : c.scenes) {
            if (std::find(scenes.begin(), scenes.end(), s) == scenes.end()) scenes.push_back(s);
        }
    }
    return scenes;
}

std::vector<std::string> CategoryTable::objects_for_scene(std::string_view scene) const {
    std::vector<std::string> objects;
    for (const auto& c : categories) {
        const bool allowed =
            c.scenes.empty() || std::find(c.scenes.begin(), c.scenes.end(), scene) != c.scenes.end();
        if (!allowed) continue;
        for (const auto& o : c.objects) {
            if (std::find(objects.begin(), objects.end(), o) == objects.end()) objects.push_back(o);
        }
    }
    return objects;
}

CategoryTable parse_category_table(std::string_view json_text) {
    const json j = json::parse(json_text, nullptr, false);
    if (!j.is_object()) throw Error(ErrorCode::NoJsonFound, "category table is not a JSON object");
    if (!j.contains("categories")) throw Error(ErrorCode::MissingKey, "categories");
    CategoryTable table;
    table.version = j.value("version", "");
    for (const auto& c : j["categories"]) {
        ObjectCategory cat;
        cat.name = c.at("name").get<std::string>();
        cat.scenes = c.value("scenes", std::vector<std::string>{});
        cat.objects = c.at("objects").get<std::vector<std::string>>();
        table.categories.push_back(std::move(cat));
    }
    return table;
}

std::string_view builtin_category_table_json() { return kCategoryTableJson; }

const CategoryTable& builtin_category_table() {
    static const CategoryTable table = parse_category_table(kCategoryTableJson);
    return table;
}

std::string basic_prompt_text(const RelationSpec& spec) {
    return "a " + spec.subject + " " + std::string(relation_phrase(spec.relation)) + " a " + spec.object + " " +
           spec.scene;
}

BenchPrompt combine_prompts(const BenchPrompt& first, const BenchPrompt& second) {
    if (first.scene != second.scene) {
        throw Error(ErrorCode::InvalidArgument, "combined prompts must share a scene");
    }
    BenchPrompt out;
    out.scene = first.scene;
    out.kind = PromptKind::Multi;
    std::string text;
    for (const auto* p : {&first, &second}) {
        for (const auto& spec : p->specs) {
            if (!text.empty()) text += ", ";
            text += "a " + spec.subject + " " + std::string(relation_phrase(spec.relation)) + " a " + spec.object;
            out.specs.push_back(spec);
        }
    }
    out.prompt = text + " " + out.scene;
    return out;
}

std::vector<BenchPrompt> generate_bench_prompts(const CategoryTable& table, const std::vector<Relation>& relations,
                                                const BenchOptions& options) {
    std::mt19937_64 rng(options.seed);
    const auto scenes = table.all_scenes();

    // Every (scene, subject, object) triple; identical for each relation.
    struct Triple {
        std::size_t scene;
        std::string subject;
        std::string object;
    };
    std::vector<Triple> triples;
    for (std::size_t s = 0; s < scenes.size(); ++s) {
        const auto objects = table.objects_for_scene(scenes[s]);
        for (const auto& a : objects) {
            for (const auto& b : objects) {
                if (a != b) triples.push_back({s, a, b});
            }
        }
    }

    std::vector<BenchPrompt> prompts;
    if (options.count_per_relation > 0) {
        if (options.count_per_relation > triples.size()) {
            throw Error(ErrorCode::ExhaustedCombinations,
                        "requested " + std::to_string(options.count_per_relation) + " prompts per relation but only " +
                            std::to_string(triples.size()) + " distinct object/scene combinations exist");
        }
        for (Relation relation : relations) {
            std::vector<Triple> pool = triples;
            sample_prefix(pool, options.count_per_relation, rng);
            for (std::size_t i = 0; i < options.count_per_relation; ++i) {
                RelationSpec spec{pool[i].subject, pool[i].object, relation, scenes[pool[i].scene]};
                prompts.push_back({basic_prompt_text(spec), {spec}, spec.scene, PromptKind::Basic});
            }
        }
    }

    if (options.multi_count > 0) {
        const std::size_t basic = prompts.size();
        std::vector<std::pair<std::size_t, std::size_t>> pairs;
        for (std::size_t i = 0; i < basic; ++i) {
            for (std::size_t j = 0; j < basic; ++j) {
                if (i == j || prompts[i].scene != prompts[j].scene) continue;
                const auto& a = prompts[i].specs.front();
                const auto& b = prompts[j].specs.front();
                const std::set<std::string> names{a.subject, a.object, b.subject, b.object};
                if (names.size() == 4) pairs.emplace_back(i, j);
            }
        }
        if (options.multi_count > pairs.size()) {
            throw Error(ErrorCode::ExhaustedCombinations,
                        "requested " + std::to_string(options.multi_count) + " multi-relation prompts but only " +
                            std::to_string(pairs.size()) + " combinable pairs exist");
        }
        sample_prefix(pairs, options.multi_count, rng);
        for (std::size_t k = 0; k < options.multi_count; ++k) {
            prompts.push_back(combine_prompts(prompts[pairs[k].first], prompts[pairs[k].second]));
        }
    }
    return prompts;
}

std::string bench_to_jsonl(const std::vector<BenchPrompt>& prompts) {
    std::string out;
    for (const auto& p : prompts) {
        json specs = json::array();
        for (const auto& s : p.specs) {
            specs.push_back({{"subject", s.subject},
                             {"object", s.object},
                             {"relation", relation_name(s.relation)},
                             {"scene", s.scene}});
        }
        const json line = {{"prompt", p.prompt},
                           {"specs", specs},
                           {"scene", p.scene},
                           {"kind", p.kind == PromptKind::Basic ? "basic" : "multi"}};
        out += line.dump() + "\n";
    }
    return out;
}

}  // namespace scenecond
