#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "scenecond/geometry.hpp"

namespace scenecond {

struct SceneParameters {
    double scene_size = 10.0;       // meters
    double camera_pitch_deg = 0.0;  // positive looks down

    friend bool operator==(const SceneParameters&, const SceneParameters&) = default;
};

// Planner size order: [X-length, Z-width, Y-height].
struct EntitySize {
    double length_x = 1.0;
    double width_z = 1.0;
    double height_y = 1.0;

    friend bool operator==(const EntitySize&, const EntitySize&) = default;
};

// `position` is the bottom-center of the box; it spans Y in [y, y + height].
struct EntitySpec {
    std::string name;
    std::string local_prompt;
    EntitySize size;
    Vec3 position;
    double yaw_deg = 0.0;

    friend bool operator==(const EntitySpec&, const EntitySpec&) = default;
};

struct ScenePlan {
    std::string global_prompt;
    SceneParameters params;
    std::vector<EntitySpec> entities;

    const EntitySpec* find(std::string_view name) const;

    friend bool operator==(const ScenePlan&, const ScenePlan&) = default;
};

/// Entity-only slice of a layout as returned by a refinement turn.
struct LayoutFragment {
    std::optional<SceneParameters> params;
    std::vector<EntitySpec> entities;
};

enum class Severity { Warning, Error };

struct Finding {
    Severity severity = Severity::Error;
    std::string entity;  // empty for plan-level findings
    std::string code;
    std::string message;

    friend bool operator==(const Finding&, const Finding&) = default;
};

struct ValidationReport {
    std::vector<Finding> findings;

    bool usable() const;
    std::size_t error_count() const;
    std::size_t warning_count() const;

    friend bool operator==(const ValidationReport&, const ValidationReport&) = default;
};

/// Parses a planner scene plan. Prose and markdown fences around the JSON are
/// tolerated: the first balanced top-level object is used.
/// Throws Error{NoJsonFound | MissingKey | TypeMismatch | InvalidPlan}.
ScenePlan parse_plan(std::string_view document);

/// Parses `{"entity_layout": [...]}`, a full plan object, or a bare entity
/// array. An empty layout is a legal (identity) fragment.
LayoutFragment parse_fragment(std::string_view document);

/// Keys in schema order; numbers with at most six fractional digits.
std::string serialize_plan(const ScenePlan& plan);
std::string serialize_fragment(const LayoutFragment& fragment);

ValidationReport validate_plan(const ScenePlan& plan);

/// Matched entities take the fragment's size, position and yaw. Scene
/// parameters in the fragment are ignored.
/// Throws Error{UnknownEntity}.
ScenePlan apply_refinement(const ScenePlan& plan, const LayoutFragment& fragment);

std::string serialize_report(const ValidationReport& report);

}  // namespace scenecond
