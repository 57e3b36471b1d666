#include "scenecond/scene_model.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "scenecond/error.hpp"
#include "scenecond/json_text.hpp"

namespace scenecond {

using json = nlohmann::json;

namespace {

const json& require(const json& obj, const char* key, std::string_view where) {
    auto it = obj.find(key);
    if (it == obj.end()) {
        throw Error(ErrorCode::MissingKey, std::string(key) + " (in " + std::string(where) + ")");
    }
    return *it;
}

double as_number(const json& value, std::string_view field) {
    if (!value.is_number()) throw Error(ErrorCode::TypeMismatch, std::string(field) + ": expected number");
    return value.get<double>();
}

std::string as_string(const json& value, std::string_view field) {
    if (!value.is_string()) throw Error(ErrorCode::TypeMismatch, std::string(field) + ": expected string");
    return value.get<std::string>();
}

std::array<double, 3> as_triple(const json& value, std::string_view field) {
    if (!value.is_array() || value.size() != 3) {
        throw Error(ErrorCode::TypeMismatch, std::string(field) + ": expected array of 3 numbers");
    }
    return {as_number(value[0], field), as_number(value[1], field), as_number(value[2], field)};
}

SceneParameters parse_params(const json& obj) {
    if (!obj.is_object()) throw Error(ErrorCode::TypeMismatch, "scene_parameters: expected object");
    SceneParameters params;
    params.scene_size = as_number(require(obj, "scene_size", "scene_parameters"), "scene_size");
    params.camera_pitch_deg =
        as_number(require(obj, "camera_pitch_angle", "scene_parameters"), "camera_pitch_angle");
    return params;
}

EntitySpec parse_entity(const json& obj, std::size_t index) {
    const std::string where = "entity_layout[" + std::to_string(index) + "]";
    if (!obj.is_object()) throw Error(ErrorCode::TypeMismatch, where + ": expected object");
    EntitySpec entity;
    entity.name = as_string(require(obj, "entity_name", where), "entity_name");
    const auto size = as_triple(require(obj, "size", where), "size");
    entity.size = {size[0], size[1], size[2]};
    const auto pos = as_triple(require(obj, "position", where), "position");
    entity.position = {pos[0], pos[1], pos[2]};
    if (auto it = obj.find("local_prompt"); it != obj.end()) {
        entity.local_prompt = as_string(*it, "local_prompt");
    } else {
        entity.local_prompt = entity.name;
    }
    if (auto it = obj.find("yaw"); it != obj.end()) entity.yaw_deg = as_number(*it, "yaw");
    return entity;
}

std::vector<EntitySpec> parse_entities(const json& layout) {
    if (!layout.is_array()) throw Error(ErrorCode::TypeMismatch, "entity_layout: expected array");
    std::vector<EntitySpec> entities;
    entities.reserve(layout.size());
    for (std::size_t i = 0; i < layout.size(); ++i) entities.push_back(parse_entity(layout[i], i));
    return entities;
}

// First balanced object that is valid JSON; prose may contain stray braces.
json first_json_object(std::string_view document) {
    for (auto candidate : balanced_objects(document)) {
        json parsed = json::parse(candidate, nullptr, /*allow_exceptions=*/false);
        if (parsed.is_object()) return parsed;
    }
    throw Error(ErrorCode::NoJsonFound, "no JSON object in planner text");
}

std::string quote(const std::string& s) { return json(s).dump(); }

std::string number(double v) { return std::isfinite(v) ? format_decimal(v) : "null"; }

void write_entity(std::ostringstream& out, const EntitySpec& e) {
    out << "{\"entity_name\":" << quote(e.name) << ",\"size\":[" << number(e.size.length_x) << ','
        << number(e.size.width_z) << ',' << number(e.size.height_y) << "],\"position\":["
        << number(e.position.x) << ',' << number(e.position.y) << ',' << number(e.position.z) << ']';
    if (e.local_prompt != e.name) out << ",\"local_prompt\":" << quote(e.local_prompt);
    if (e.yaw_deg != 0.0) out << ",\"yaw\":" << number(e.yaw_deg);
    out << '}';
}

void write_params(std::ostringstream& out, const SceneParameters& p) {
    out << "{\"scene_size\":" << number(p.scene_size) << ",\"camera_pitch_angle\":" << number(p.camera_pitch_deg)
        << '}';
}

void write_layout(std::ostringstream& out, const std::vector<EntitySpec>& entities) {
    out << '[';
    for (std::size_t i = 0; i < entities.size(); ++i) {
        if (i) out << ',';
        write_entity(out, entities[i]);
    }
    out << ']';
}

}  // namespace

const EntitySpec* ScenePlan::find(std::string_view name) const {
    auto it = std::find_if(entities.begin(), entities.end(), [&](const EntitySpec& e) { return e.name == name; });
    return it == entities.end() ? nullptr : &*it;
}

bool ValidationReport::usable() const { return error_count() == 0; }

std::size_t ValidationReport::error_count() const {
    return static_cast<std::size_t>(std::count_if(findings.begin(), findings.end(),
                                                  [](const Finding& f) { return f.severity == Severity::Error; }));
}

std::size_t ValidationReport::warning_count() const { return findings.size() - error_count(); }

ScenePlan parse_plan(std::string_view document) {
    const json root = first_json_object(document);
    ScenePlan plan;
    plan.params = parse_params(require(root, "scene_parameters", "plan"));
    plan.entities = parse_entities(require(root, "entity_layout", "plan"));
    if (plan.entities.empty()) throw Error(ErrorCode::InvalidPlan, "entity_layout is empty (k >= 1 required)");
    if (auto it = root.find("global_prompt"); it != root.end()) {
        plan.global_prompt = as_string(*it, "global_prompt");
    }
    return plan;
}

LayoutFragment parse_fragment(std::string_view document) {
    LayoutFragment fragment;
    const auto trimmed = document.find_first_not_of(" \t\r\n");
    if (trimmed != std::string_view::npos && document[trimmed] == '[') {
        json parsed = json::parse(document, nullptr, false);
        if (parsed.is_discarded()) throw Error(ErrorCode::NoJsonFound, "fragment is not valid JSON");
        fragment.entities = parse_entities(parsed);
        return fragment;
    }
    const json root = first_json_object(document);
    const json* layout = &root;
    if (auto it = root.find("optimized_layout"); it != root.end()) layout = &*it;
    if (layout->is_array()) {
        fragment.entities = parse_entities(*layout);
        return fragment;
    }
    if (!layout->is_object()) throw Error(ErrorCode::TypeMismatch, "layout: expected object or array");
    fragment.entities = parse_entities(require(*layout, "entity_layout", "layout"));
    if (auto it = layout->find("scene_parameters"); it != layout->end()) fragment.params = parse_params(*it);
    return fragment;
}

std::string serialize_plan(const ScenePlan& plan) {
    std::ostringstream out;
    out << "{\"scene_parameters\":";
    write_params(out, plan.params);
    out << ",\"entity_layout\":";
    write_layout(out, plan.entities);
    if (!plan.global_prompt.empty()) out << ",\"global_prompt\":" << quote(plan.global_prompt);
    out << '}';
    return out.str();
}

std::string serialize_fragment(const LayoutFragment& fragment) {
    std::ostringstream out;
    out << '{';
    if (fragment.params) {
        out << "\"scene_parameters\":";
        write_params(out, *fragment.params);
        out << ',';
    }
    out << "\"entity_layout\":";
    write_layout(out, fragment.entities);
    out << '}';
    return out.str();
}

ValidationReport validate_plan(const ScenePlan& plan) {
    ValidationReport report;
    auto add = [&](Severity sev, std::string entity, std::string code, std::string msg) {
        report.findings.push_back({sev, std::move(entity), std::move(code), std::move(msg)});
    };
    const double s = plan.params.scene_size;
    if (!(std::isfinite(s) && s > 0.0)) add(Severity::Error, "", "scene_size", "scene_size must be > 0");
    const double pitch = plan.params.camera_pitch_deg;
    if (!(pitch >= 0.0 && pitch <= 89.0)) {
        add(Severity::Error, "", "camera_pitch", "camera_pitch_angle must lie in [0, 89]");
    }
    if (plan.entities.empty()) add(Severity::Error, "", "no_entities", "plan has no entities");

    std::set<std::string> seen;
    for (const auto& e : plan.entities) {
        if (e.name.empty()) add(Severity::Error, e.name, "empty_name", "entity_name is empty");
        if (!seen.insert(e.name).second) add(Severity::Error, e.name, "duplicate_name", "entity_name repeats");

        const std::array<std::pair<const char*, double>, 3> dims{
            {{"length", e.size.length_x}, {"width", e.size.width_z}, {"height", e.size.height_y}}};
        for (const auto& [label, value] : dims) {
            if (!(std::isfinite(value) && value > 0.0)) {
                add(Severity::Error, e.name, "size", std::string(label) + " must be > 0");
            } else if (s > 0.0 && value <= s / 10.0) {
                add(Severity::Warning, e.name, "visibility", std::string(label) + " below scene_size/10");
            }
        }
        const Vec3 p = e.position;
        if (!(std::isfinite(p.x) && std::isfinite(p.y) && std::isfinite(p.z))) {
            add(Severity::Error, e.name, "position", "position must be finite");
        } else if (s > 0.0 && (std::abs(p.x) > s || std::abs(p.z) > s)) {
            add(Severity::Warning, e.name, "out_of_bounds", "position outside [-scene_size, scene_size] in X/Z");
        }
    }
    return report;
}

ScenePlan apply_refinement(const ScenePlan& plan, const LayoutFragment& fragment) {
    ScenePlan out = plan;
    for (const auto& update : fragment.entities) {
        auto it = std::find_if(out.entities.begin(), out.entities.end(),
                               [&](const EntitySpec& e) { return e.name == update.name; });
        if (it == out.entities.end()) throw Error(ErrorCode::UnknownEntity, update.name);
        it->size = update.size;
        it->position = update.position;
        it->yaw_deg = update.yaw_deg;
    }
    return out;
}

std::string serialize_report(const ValidationReport& report) {
    json findings = json::array();
    for (const auto& f : report.findings) {
        findings.push_back({{"severity", f.severity == Severity::Error ? "error" : "warning"},
                            {"entity", f.entity},
                            {"code", f.code},
                            {"message", f.message}});
    }
    json out = {{"usable", report.usable()},
                {"errors", report.error_count()},
                {"warnings", report.warning_count()},
                {"findings", findings}};
    return out.dump(2);
}

}  // namespace scenecond
