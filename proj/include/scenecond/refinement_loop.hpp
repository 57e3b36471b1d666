#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "scenecond/attention_mask.hpp"
#include "scenecond/camera.hpp"
#include "scenecond/depth_renderer.hpp"
#include "scenecond/scene_model.hpp"

namespace scenecond {

struct LatentGrid {
    int width = 0;
    int height = 0;
    int channels = 1;
    std::vector<double> values;  // channel-interleaved, row-major

    LatentGrid() = default;
    LatentGrid(int w, int h, int c = 1, double fill = 0.0)
        : width(w), height(h), channels(c), values(static_cast<std::size_t>(w) * h * c, fill) {}

    bool same_shape(const LatentGrid& other) const {
        return width == other.width && height == other.height && channels == other.channels &&
               values.size() == other.values.size();
    }

    friend bool operator==(const LatentGrid&, const LatentGrid&) = default;
};

/// x0_hat = z_t - t * v_t. Throws Error{ShapeMismatch | InvalidArgument}.
LatentGrid predict_clean(const LatentGrid& z_t, const LatentGrid& v_t, double t);

/// Standard normal grid from a seeded mt19937_64 via Box-Muller.
LatentGrid gaussian_noise(int width, int height, int channels, std::uint64_t seed);

/// Short content id: `<prefix>-<first 16 hex of sha256(values)>`.
std::string artifact_id(std::string_view prefix, const LatentGrid& grid);

struct ConditionConfig {
    int image_width = 128;
    int image_height = 128;
    int patch_size = 16;
    CameraConfig camera;
    std::size_t n_global = 1;
    std::size_t n_local = 1;   // per entity
    std::size_t n_depth = 0;   // 0 = same as the image token count
    bool global_isolated = true;
    double min_coverage = 0.0;
};

struct Conditions {
    CameraModel camera;
    DepthRange range;
    DepthMap depth;
    std::vector<EntityMask2D> masks;
    AttentionMask attention;
};

/// Depth map D, per-entity masks m_j and the attention mask M for a plan.
Conditions render_conditions(const ScenePlan& plan, const ConditionConfig& config);

/// Depth map mapped to [0, 1] (near = 1, background = 0) at image resolution.
LatentGrid layout_preview(const Conditions& conditions);

class DenoiserPort {
public:
    virtual ~DenoiserPort() = default;
    /// Velocity v_t at time t given the current conditions.
    virtual LatentGrid step(const LatentGrid& z_t, double t, const Conditions& conditions) = 0;
};

/// Pulls the sample toward the layout preview x*: v = (z_t - x*) / t, so that
/// predict_clean returns x* exactly (v = 0 at t = 0).
class ToyDenoiser final : public DenoiserPort {
public:
    LatentGrid step(const LatentGrid& z_t, double t, const Conditions& conditions) override;
    std::size_t calls() const { return calls_; }

private:
    std::size_t calls_ = 0;
};

struct RefineRequest {
    std::string prompt;
    std::vector<std::string> entity_list;
    const ScenePlan* plan = nullptr;
    std::string image_id;
    const LatentGrid* image = nullptr;
};

class PlannerPort {
public:
    virtual ~PlannerPort() = default;
    /// Raw planner text holding a scene plan.
    virtual std::string plan(const std::string& prompt) = 0;
    /// Raw planner text holding an `isaligned` verdict.
    virtual std::string refine(const RefineRequest& request) = 0;
};

struct PlannerVerdict {
    bool isaligned = true;
    std::optional<LayoutFragment> optimized_layout;
    std::string rationale;
};

/// First balanced JSON object carrying "isaligned"; prose around it becomes
/// the rationale. Throws Error{NoVerdictFound | MalformedLayout}.
PlannerVerdict parse_planner_response(std::string_view text);

struct LoopConfig {
    int num_steps = 20;
    std::optional<std::vector<int>> eval_schedule;  // nullopt = every step
    int max_refinements = 5;
    int stability_window = 2;
    std::uint64_t seed = 0;
    int latent_channels = 1;

    void validate() const;
    bool scheduled(int step) const;
};

struct StepEvent {
    int step = 0;
    double t = 1.0;
    double t_next = 0.0;
    std::string predicted_id;
    std::optional<PlannerVerdict> verdict;
    std::optional<LayoutFragment> revision;
    bool rerendered = false;
    std::string reguided_id;  // set when the step was re-guided
};

struct RefinementTrace {
    std::string prompt;
    LoopConfig config;
    ScenePlan initial_plan;
    std::vector<StepEvent> steps;
    ScenePlan final_plan;
    std::string final_image_id;
    std::size_t denoiser_calls = 0;

    std::size_t revision_count() const;
    std::size_t rerender_count() const;
    std::size_t verdict_count() const;

    /// One JSON object per line: an `init` line, one `step` line per step and a
    /// closing `final` line.
    std::string to_jsonl() const;
};

using ArtifactSink = std::function<void(const std::string& id, const LatentGrid& grid)>;

/// Predict-evaluate-refine over a single denoising trajectory (Euler steps on
/// t from 1 to 0). Port exceptions are rethrown as Error{PortFailure} naming
/// the step (-1 for initial planning).
RefinementTrace run_refinement_loop(const std::string& prompt, DenoiserPort& denoiser, PlannerPort& planner,
                                    const LoopConfig& config, const ConditionConfig& conditions,
                                    const ArtifactSink& sink = {});

}  // namespace scenecond
