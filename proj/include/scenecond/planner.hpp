#pragma once

#include <chrono>
#include <cstddef>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "scenecond/refinement_loop.hpp"

namespace scenecond {

namespace templates {

extern const std::string_view kKeyIdentityParsing;
extern const std::string_view kScenePlanning;
extern const std::string_view kLayoutOptimization;

/// Entity-extraction request with the caption and in-context examples filled in.
std::string key_identity_request(std::string_view caption);
std::string planning_user_message(std::string_view caption, const std::vector<std::string>& entities);
std::string refine_user_message(const RefineRequest& request, std::string_view image_ref);

}  // namespace templates

/// Parses a Python/JSON style list of quoted names, e.g. `['dog', "cat"]`.
/// Throws Error{NoJsonFound} when no list is present.
std::vector<std::string> parse_entity_list(std::string_view text);

/// Replays canned responses. Script file:
///   {"plan": <text or object>, "refine": [<text or object>, ...]}
/// Refine responses are consumed in order; the last one repeats once the
/// list is exhausted.
class ScriptedPlanner final : public PlannerPort {
public:
    ScriptedPlanner(std::string plan_response, std::vector<std::string> refine_responses);
    static ScriptedPlanner from_json(std::string_view script);

    std::string plan(const std::string& prompt) override;
    std::string refine(const RefineRequest& request) override;

    std::size_t refine_calls() const { return refine_calls_; }
    const std::vector<RefineRequest>& requests() const { return requests_; }

private:
    std::string plan_response_;
    std::vector<std::string> refine_responses_;
    std::size_t refine_calls_ = 0;
    std::vector<RefineRequest> requests_;
};

enum class ImageAttachment { Base64Png, FilePath };

struct HttpPlannerConfig {
    std::string url;  // full chat-completions endpoint, e.g. http://host:8080/v1/chat/completions
    std::string api_key;
    std::string model = "planner";
    std::chrono::milliseconds timeout{60'000};
    int retries = 2;
    std::chrono::milliseconds backoff{1'000};  // doubled after every failed attempt
    ImageAttachment attachment = ImageAttachment::Base64Png;
    std::string image_dir;  // where FilePath attachments are written

    /// Reads PLANNER_URL and PLANNER_KEY.
    static HttpPlannerConfig from_env();
};

/// Chat-completions client speaking the three planner templates. Refinement
/// turns share one conversation so the planner sees its earlier edits.
class HttpPlanner final : public PlannerPort {
public:
    using Sleeper = std::function<void(std::chrono::milliseconds)>;

    explicit HttpPlanner(HttpPlannerConfig config, Sleeper sleeper = {});

    std::string plan(const std::string& prompt) override;
    std::string refine(const RefineRequest& request) override;

    /// Sends one chat payload; returns choices[0].message.content.
    /// Throws Error{PortFailure} after the retry budget is spent.
    std::string complete(const nlohmann::json& messages);

    std::size_t attempts() const { return attempts_; }

private:
    HttpPlannerConfig config_;
    Sleeper sleeper_;
    nlohmann::json refine_history_ = nlohmann::json::array();
    std::size_t attempts_ = 0;
};

/// 8-bit grayscale PNG of the first channel clamped to [0, 1].
std::string latent_to_png(const LatentGrid& grid);

}  // namespace scenecond
