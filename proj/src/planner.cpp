#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include "scenecond/planner.hpp"

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <thread>

#include "scenecond/error.hpp"
#include "scenecond/image_io.hpp"
#include "scenecond/scene_model.hpp"

namespace scenecond {

using json = nlohmann::json;

namespace templates {

const std::string_view kKeyIdentityParsing =
    R"(You are tasked with identifying and extracting all the real object names from a caption.

An object name refers to any tangible or physical entity mentioned in the caption.
    Ensure not to include any adjectives or single-word descriptions that do not refer to a specific object, such as "background."

Please follow these instructions:
    Identify all object names in the caption in the order they appear.
    Maintain the exact wording of each object name as it is in the caption, including case consistency.
    Output the object names in a Python list format.

For example, consider the following caption:
    <In-context Examples>

Now, given the following caption, extract the object names in the same format:
    <caption>)";

const std::string_view kScenePlanning =
    R"(As a 3D scene layout planner, generate a quantitative 3D layout (size, position) for specified entities based on a text caption.

Input:
1. A text caption describing the scene.
2. A list of important entity names in the scene.

Output: a JSON object with two keys:
scene_parameters and entity_layout.

    - scene_parameters: Describe the overall scene.
        - scene_size (meters): Approximate scale of the main subject area.
        - camera_pitch_angle (degrees): Vertical camera angle (positive = downward).

    - entity_layout: A list of objects, each including:
        - entity_name: Name of the entity.
        - size: [length, width, height] in meters. Should be large enough to be visible in the scene (each dimension > scene_size/10).
        - position: [X, Y, Z] in meters, centered around the ground origin (Y = 0). Enforce explicit spatial relationships in the caption.

Coordinate System: Right-handed. Origin (0,0,0) is the ground center. +X = right, +Y = up, +Z = into the scene.)";

const std::string_view kLayoutOptimization =
    R"(System Role: You are an AI Layout Optimization Assistant. Your core mission is to iteratively refine 3D JSON layouts through multi-turn dialogue with the user.

Key Principles:
    1. Entity Focus: Evaluate and modify only the entity_list items for each turn.
    2. Viewer’s Perspective: Interpret all spatial terms (e.g., "left", "right") from the viewer of the generated_image.
    3. Iterative Learning: Improve layout step-by-step based on prior adjustments.
    4. Adhere to Task Definition: Strictly follow user-provided format and criteria.
    5. Historical Context: Consider past actions and outcomes to inform new proposals.

Task:
Iteratively optimize the 3D JSON layout to align the generated_image with the text_caption, improving the clarity and spatial correctness of entities in the entity_list.

Per-Iteration Inputs:
    - text_caption: (string) natural language description of the scene.
    - entity_list: (list of strings) entities to optimize.
    - current_layout: (JSON) 3D layout with size = [X_len, Z_width, Y_height] and position = [X, Y, Z], Y = 0 is ground.
    - generated_image: the image rendered from the current layout.

Step-by-Step Process:
Step 1: Parse Inputs
    Receive and acknowledge all inputs.

Step 2: Evaluate Alignment (for entity_list)
    2.1 Discernibility: Is each entity clearly visible?
    2.2 Verifiability: Are their described attributes verifiable?
    2.3 Spatial Accuracy: Are spatial relations correct from viewer’s perspective?
    2.4 Determine isaligned: Set to true if 2.1–2.3 pass; else false.

Step 3: Diagnose Misalignment (if isaligned = false)
    3.1 Identify which entities failed which checks.
    3.2 Classify each as Incorrect or Insufficient.
    3.3 Refer to previous adjustments and compare changes.

Step 4: Revise Layout
    4.1 Strategize updates to size, position, or orientation of problematic entities.
    4.2 Adjust other entities only if they cause conflicts.
    4.3 Ensure layout format is valid.

Step 5: Generate Output
    5.1 Text: Explain isaligned result and edits made.
    5.2 JSON:
        { "isaligned": <true/false>, "optimized_layout": <layout_object> }

User Prompt Format:
    text_caption: <caption>
    entity_list: <entities>
    current_layout: <layout>
    generated_image: <image>)";

namespace {

constexpr std::string_view kInContextExamples =
    R"(Caption: A cat sleeping on a sofa next to a lamp.
    Output: ["cat", "sofa", "lamp"]
    Caption: A red car parked behind a wooden bench on the street.
    Output: ["car", "bench"])";

void replace_all(std::string& s, std::string_view from, std::string_view to) {
    for (std::size_t pos = s.find(from); pos != std::string::npos; pos = s.find(from, pos + to.size())) {
        s.replace(pos, from.size(), to);
    }
}

std::string list_literal(const std::vector<std::string>& items) { return json(items).dump(); }

}  // namespace

std::string key_identity_request(std::string_view caption) {
    std::string text(kKeyIdentityParsing);
    replace_all(text, "<In-context Examples>", kInContextExamples);
    replace_all(text, "<caption>", caption);
    return text;
}

std::string planning_user_message(std::string_view caption, const std::vector<std::string>& entities) {
    return "Caption: " + std::string(caption) + "\nEntities: " + list_literal(entities);
}

std::string refine_user_message(const RefineRequest& request, std::string_view image_ref) {
    std::string text = "text_caption: " + request.prompt + "\n";
    text += "entity_list: " + list_literal(request.entity_list) + "\n";
    text += "current_layout: " + (request.plan ? serialize_plan(*request.plan) : std::string("{}")) + "\n";
    text += "generated_image: " + std::string(image_ref);
    return text;
}

}  // namespace templates

std::vector<std::string> parse_entity_list(std::string_view text) {
    const auto open = text.find('[');
    if (open == std::string_view::npos) throw Error(ErrorCode::NoJsonFound, "no list in entity response");
    std::vector<std::string> items;
    std::size_t pos = open + 1;
    while (pos < text.size() && text[pos] != ']') {
        const char c = text[pos];
        if (c == '"' || c == '\'') {
            std::string item;
            ++pos;
            while (pos < text.size() && text[pos] != c) {
                if (text[pos] == '\\' && pos + 1 < text.size()) ++pos;
                item.push_back(text[pos++]);
            }
            items.push_back(std::move(item));
        }
        ++pos;
    }
    if (pos >= text.size()) throw Error(ErrorCode::NoJsonFound, "unterminated entity list");
    return items;
}

ScriptedPlanner::ScriptedPlanner(std::string plan_response, std::vector<std::string> refine_responses)
    : plan_response_(std::move(plan_response)), refine_responses_(std::move(refine_responses)) {}

ScriptedPlanner ScriptedPlanner::from_json(std::string_view script) {
    const json j = json::parse(script, nullptr, false);
    if (!j.is_object()) throw Error(ErrorCode::NoJsonFound, "planner script is not a JSON object");
    if (!j.contains("plan")) throw Error(ErrorCode::MissingKey, "plan (in planner script)");
    auto text = [](const json& v) { return v.is_string() ? v.get<std::string>() : v.dump(); };
    std::vector<std::string> refine;
    if (auto it = j.find("refine"); it != j.end()) {
        if (!it->is_array()) throw Error(ErrorCode::TypeMismatch, "refine: expected array");
        for (const auto& r : *it) refine.push_back(text(r));
    }
    return ScriptedPlanner(text(j["plan"]), std::move(refine));
}

std::string ScriptedPlanner::plan(const std::string&) { return plan_response_; }

std::string ScriptedPlanner::refine(const RefineRequest& request) {
    requests_.push_back(request);
    if (refine_responses_.empty()) throw Error(ErrorCode::PortFailure, "planner script has no refine responses");
    const std::size_t index = std::min(refine_calls_, refine_responses_.size() - 1);
    ++refine_calls_;
    return refine_responses_[index];
}

HttpPlannerConfig HttpPlannerConfig::from_env() {
    HttpPlannerConfig config;
    if (const char* url = std::getenv("PLANNER_URL")) config.url = url;
    if (const char* key = std::getenv("PLANNER_KEY")) config.api_key = key;
    return config;
}

HttpPlanner::HttpPlanner(HttpPlannerConfig config, Sleeper sleeper)
    : config_(std::move(config)), sleeper_(std::move(sleeper)) {
    if (config_.url.empty()) throw Error(ErrorCode::PortFailure, "planner URL is not set (PLANNER_URL)");
    if (!sleeper_) sleeper_ = [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
}

namespace {

struct Endpoint {
    std::string origin;  // scheme://host[:port]
    std::string path;
};

Endpoint split_url(const std::string& url) {
    const auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) throw Error(ErrorCode::PortFailure, "planner URL lacks a scheme: " + url);
    const auto path_start = url.find('/', scheme_end + 3);
    if (path_start == std::string::npos) return {url, "/"};
    return {url.substr(0, path_start), url.substr(path_start)};
}

std::string message_text(const json& content) {
    if (content.is_string()) return content.get<std::string>();
    std::string text;
    if (content.is_array()) {
        for (const auto& part : content) {
            if (part.is_object() && part.value("type", "") == "text") text += part.value("text", "");
        }
    }
    return text;
}

}  // namespace

std::string HttpPlanner::complete(const json& messages) {
    const Endpoint endpoint = split_url(config_.url);
    const json body = {{"model", config_.model}, {"messages", messages}};
    const std::string payload = body.dump();

    httplib::Client client(endpoint.origin);
    const auto secs = std::chrono::duration_cast<std::chrono::seconds>(config_.timeout);
    const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(config_.timeout - secs);
    client.set_connection_timeout(secs.count(), usecs.count());
    client.set_read_timeout(secs.count(), usecs.count());
    client.set_write_timeout(secs.count(), usecs.count());
    httplib::Headers headers;
    if (!config_.api_key.empty()) headers.emplace("Authorization", "Bearer " + config_.api_key);

    std::string last_error;
    for (int attempt = 0; attempt <= config_.retries; ++attempt) {
        if (attempt > 0) sleeper_(config_.backoff * (1 << (attempt - 1)));
        ++attempts_;
        auto res = client.Post(endpoint.path, headers, payload, "application/json");
        if (!res) {
            last_error = "transport error: " + httplib::to_string(res.error());
            continue;
        }
        if (res->status == 429 || res->status >= 500) {
            last_error = "HTTP " + std::to_string(res->status);
            continue;
        }
        if (res->status >= 400) {
            throw Error(ErrorCode::PortFailure, "HTTP " + std::to_string(res->status) + ": " + res->body);
        }
        const json reply = json::parse(res->body, nullptr, false);
        if (!reply.is_object() || !reply.contains("choices") || reply["choices"].empty()) {
            throw Error(ErrorCode::PortFailure, "response lacks choices[0]");
        }
        const auto& message = reply["choices"][0].value("message", json::object());
        return message_text(message.value("content", json()));
    }
    throw Error(ErrorCode::PortFailure, "planner request failed after " + std::to_string(config_.retries + 1) +
                                            " attempts: " + last_error);
}

std::string HttpPlanner::plan(const std::string& prompt) {
    const json identify = json::array({{{"role", "user"}, {"content", templates::key_identity_request(prompt)}}});
    const auto entities = parse_entity_list(complete(identify));
    const json planning = json::array({{{"role", "system"}, {"content", templates::kScenePlanning}},
                                       {{"role", "user"}, {"content", templates::planning_user_message(prompt, entities)}}});
    return complete(planning);
}

std::string HttpPlanner::refine(const RefineRequest& request) {
    if (refine_history_.empty()) {
        refine_history_.push_back({{"role", "system"}, {"content", templates::kLayoutOptimization}});
    }
    const std::string png = request.image ? latent_to_png(*request.image) : std::string();
    json user;
    if (config_.attachment == ImageAttachment::FilePath) {
        const std::filesystem::path dir = config_.image_dir.empty() ? std::filesystem::temp_directory_path()
                                                                    : std::filesystem::path(config_.image_dir);
        std::filesystem::create_directories(dir);
        const auto path = dir / (request.image_id + ".png");
        std::ofstream(path, std::ios::binary) << png;
        user = {{"role", "user"}, {"content", templates::refine_user_message(request, path.string())}};
    } else {
        user = {{"role", "user"},
                {"content", json::array({{{"type", "text"},
                                          {"text", templates::refine_user_message(request, "<attached image>")}},
                                         {{"type", "image_url"},
                                          {"image_url", {{"url", "data:image/png;base64," + base64_encode(png)}}}}})}};
    }
    refine_history_.push_back(user);
    std::string reply = complete(refine_history_);
    refine_history_.push_back({{"role", "assistant"}, {"content", reply}});
    return reply;
}

std::string latent_to_png(const LatentGrid& grid) {
    std::vector<std::uint8_t> pixels(static_cast<std::size_t>(grid.width) * grid.height);
    const auto c = static_cast<std::size_t>(grid.channels);
    for (std::size_t i = 0; i < pixels.size(); ++i) {
        const double v = std::min(std::max(grid.values[i * c], 0.0), 1.0);
        pixels[i] = static_cast<std::uint8_t>(std::floor(v * 255.0 + 0.5));
    }
    return encode_png_gray8(grid.width, grid.height, pixels);
}

}  // namespace scenecond
