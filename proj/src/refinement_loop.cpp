#include "scenecond/refinement_loop.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <random>

#include <nlohmann/json.hpp>

#include "scenecond/error.hpp"
#include "scenecond/hashing.hpp"
#include "scenecond/json_text.hpp"
#include "scenecond/kernels.hpp"

namespace scenecond {

using ojson = nlohmann::ordered_json;

LatentGrid predict_clean(const LatentGrid& z_t, const LatentGrid& v_t, double t) {
    if (!z_t.same_shape(v_t)) throw Error(ErrorCode::ShapeMismatch, "z_t and v_t shapes differ");
    if (!(t >= 0.0 && t <= 1.0)) throw Error(ErrorCode::InvalidArgument, "t must lie in [0, 1]");
    LatentGrid out(z_t.width, z_t.height, z_t.channels);
    kernels::active().predict_clean(z_t.values, v_t.values, t, out.values);
    return out;
}

LatentGrid gaussian_noise(int width, int height, int channels, std::uint64_t seed) {
    LatentGrid out(width, height, channels);
    std::mt19937_64 rng(seed);
    constexpr double kUnit = 1.0 / 9007199254740992.0;  // 2^-53
    for (std::size_t i = 0; i < out.values.size(); i += 2) {
        const double u1 = (static_cast<double>(rng() >> 11) + 1.0) * kUnit;  // (0, 1]
        const double u2 = static_cast<double>(rng() >> 11) * kUnit;
        const double r = std::sqrt(-2.0 * std::log(u1));
        out.values[i] = r * std::cos(2.0 * std::numbers::pi * u2);
        if (i + 1 < out.values.size()) out.values[i + 1] = r * std::sin(2.0 * std::numbers::pi * u2);
    }
    return out;
}

std::string artifact_id(std::string_view prefix, const LatentGrid& grid) {
    const std::string_view bytes(reinterpret_cast<const char*>(grid.values.data()),
                                 grid.values.size() * sizeof(double));
    return std::string(prefix) + "-" + sha256_hex(bytes).substr(0, 16);
}

Conditions render_conditions(const ScenePlan& plan, const ConditionConfig& config) {
    CameraModel camera = derive_camera(plan.params, config.image_width, config.image_height, config.camera);
    const DepthRange range = default_depth_range(camera, plan.params);
    const auto boxes = boxes_from_plan(plan);
    DepthMap depth = render_depth(camera, boxes);

    std::vector<EntityMask2D> masks;
    std::vector<TokenBitset> bitsets;
    masks.reserve(boxes.size());
    for (const auto& box : boxes) {
        masks.push_back(project_box_mask(camera, box).mask);
        bitsets.push_back(patchify_mask(masks.back(), config.patch_size, config.min_coverage));
    }
    TokenLayout layout = TokenLayout::for_image(config.n_global, std::vector<std::size_t>(boxes.size(), config.n_local),
                                                1, config.image_width, config.image_height, config.patch_size);
    layout.n_depth = config.n_depth == 0 ? layout.n_image() : config.n_depth;
    AttentionMask attention = build_attention_mask(layout, bitsets, {config.global_isolated});
    return {camera, range, std::move(depth), std::move(masks), std::move(attention)};
}

LatentGrid layout_preview(const Conditions& conditions) {
    const auto& d = conditions.depth;
    LatentGrid out(d.width, d.height, 1);
    const double near = conditions.range.near_plane;
    const double far = conditions.range.far_plane;
    for (std::size_t i = 0; i < d.values.size(); ++i) {
        const double x = (far - static_cast<double>(d.values[i])) / (far - near);
        out.values[i] = std::min(std::max(x, 0.0), 1.0);
    }
    return out;
}

LatentGrid ToyDenoiser::step(const LatentGrid& z_t, double t, const Conditions& conditions) {
    ++calls_;
    const LatentGrid target = layout_preview(conditions);
    if (z_t.width != target.width || z_t.height != target.height) {
        throw Error(ErrorCode::ShapeMismatch, "latent grid does not match the condition resolution");
    }
    LatentGrid v(z_t.width, z_t.height, z_t.channels);
    if (t <= 0.0) return v;
    const auto c = static_cast<std::size_t>(z_t.channels);
    for (std::size_t i = 0; i < z_t.values.size(); ++i) v.values[i] = (z_t.values[i] - target.values[i / c]) / t;
    return v;
}

namespace {

std::string trim(std::string s) {
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string::npos) return {};
    const auto last = s.find_last_not_of(" \t\r\n");
    return s.substr(first, last - first + 1);
}

std::string strip_fences(std::string s) {
    std::size_t pos;
    while ((pos = s.find("```")) != std::string::npos) {
        auto end = s.find('\n', pos);
        // Opening fences may carry a language tag up to the end of the line.
        if (end != std::string::npos && s.find_first_of(" {}", pos + 3) > end) {
            s.erase(pos, end - pos);
        } else {
            s.erase(pos, 3);
        }
    }
    return s;
}

}  // namespace

PlannerVerdict parse_planner_response(std::string_view text) {
    for (auto candidate : balanced_objects(text)) {
        const auto parsed = nlohmann::json::parse(candidate, nullptr, false);
        if (!parsed.is_object() || !parsed.contains("isaligned")) continue;
        PlannerVerdict verdict;
        const auto& flag = parsed["isaligned"];
        if (flag.is_boolean()) {
            verdict.isaligned = flag.get<bool>();
        } else if (flag.is_string() && (flag == "true" || flag == "false")) {
            verdict.isaligned = flag == "true";
        } else {
            throw Error(ErrorCode::MalformedLayout, "isaligned is not a boolean");
        }
        if (!verdict.isaligned) {
            auto it = parsed.find("optimized_layout");
            if (it == parsed.end() || it->is_null()) {
                throw Error(ErrorCode::MalformedLayout, "misaligned verdict without optimized_layout");
            }
            try {
                verdict.optimized_layout = parse_fragment(it->dump());
            } catch (const Error& e) {
                throw Error(ErrorCode::MalformedLayout, e.what());
            }
        }
        std::string prose(text.substr(0, static_cast<std::size_t>(candidate.data() - text.data())));
        prose += text.substr(static_cast<std::size_t>(candidate.data() - text.data()) + candidate.size());
        verdict.rationale = trim(strip_fences(std::move(prose)));
        return verdict;
    }
    throw Error(ErrorCode::NoVerdictFound, "no JSON object with \"isaligned\" in planner response");
}

void LoopConfig::validate() const {
    if (num_steps < 1) throw Error(ErrorCode::InvalidArgument, "num_steps must be >= 1");
    if (max_refinements < 0) throw Error(ErrorCode::InvalidArgument, "max_refinements must be >= 0");
    if (stability_window < 1) throw Error(ErrorCode::InvalidArgument, "stability_window must be >= 1");
    if (latent_channels < 1) throw Error(ErrorCode::InvalidArgument, "latent_channels must be >= 1");
    if (eval_schedule) {
        for (int s : *eval_schedule) {
            if (s < 0 || s >= num_steps) throw Error(ErrorCode::InvalidArgument, "eval_schedule outside [0, num_steps)");
        }
    }
}

bool LoopConfig::scheduled(int step) const {
    return !eval_schedule || std::find(eval_schedule->begin(), eval_schedule->end(), step) != eval_schedule->end();
}

std::size_t RefinementTrace::revision_count() const {
    return static_cast<std::size_t>(
        std::count_if(steps.begin(), steps.end(), [](const StepEvent& e) { return e.revision.has_value(); }));
}

std::size_t RefinementTrace::rerender_count() const {
    return static_cast<std::size_t>(
        std::count_if(steps.begin(), steps.end(), [](const StepEvent& e) { return e.rerendered; }));
}

std::size_t RefinementTrace::verdict_count() const {
    return static_cast<std::size_t>(
        std::count_if(steps.begin(), steps.end(), [](const StepEvent& e) { return e.verdict.has_value(); }));
}

std::string RefinementTrace::to_jsonl() const {
    std::string out;
    ojson init;
    init["kind"] = "init";
    init["prompt"] = prompt;
    init["num_steps"] = config.num_steps;
    init["seed"] = config.seed;
    init["max_refinements"] = config.max_refinements;
    init["stability_window"] = config.stability_window;
    init["eval_schedule"] = config.eval_schedule ? ojson(*config.eval_schedule) : ojson("all");
    init["plan"] = ojson::parse(serialize_plan(initial_plan));
    out += init.dump() + "\n";
    for (const auto& e : steps) {
        ojson line;
        line["kind"] = "step";
        line["step"] = e.step;
        line["t"] = e.t;
        line["t_next"] = e.t_next;
        line["predicted"] = e.predicted_id;
        line["evaluated"] = e.verdict.has_value();
        line["isaligned"] = e.verdict ? ojson(e.verdict->isaligned) : ojson(nullptr);
        line["rationale"] = e.verdict ? ojson(e.verdict->rationale) : ojson(nullptr);
        line["revision"] = e.revision ? ojson::parse(serialize_fragment(*e.revision)) : ojson(nullptr);
        line["rerendered"] = e.rerendered;
        line["reguided"] = e.reguided_id.empty() ? ojson(nullptr) : ojson(e.reguided_id);
        out += line.dump() + "\n";
    }
    ojson fin;
    fin["kind"] = "final";
    fin["revisions"] = revision_count();
    fin["rerenders"] = rerender_count();
    fin["verdicts"] = verdict_count();
    fin["denoiser_calls"] = denoiser_calls;
    fin["final_image"] = final_image_id;
    fin["plan"] = ojson::parse(serialize_plan(final_plan));
    out += fin.dump() + "\n";
    return out;
}

namespace {

[[noreturn]] void port_failure(int step, const std::string& what) {
    throw Error(ErrorCode::PortFailure, "step " + std::to_string(step) + ": " + what);
}

template <typename F>
auto guarded(int step, F&& call) {
    try {
        return call();
    } catch (const std::exception& e) {
        port_failure(step, e.what());
    }
}

std::string step_prefix(const char* stem, int step) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%s-step%02d", stem, step);
    return buf;
}

}  // namespace

RefinementTrace run_refinement_loop(const std::string& prompt, DenoiserPort& denoiser, PlannerPort& planner,
                                    const LoopConfig& config, const ConditionConfig& conditions_config,
                                    const ArtifactSink& sink) {
    config.validate();
    RefinementTrace trace;
    trace.prompt = prompt;
    trace.config = config;

    ScenePlan plan = guarded(-1, [&] { return parse_plan(planner.plan(prompt)); });
    if (plan.global_prompt.empty()) plan.global_prompt = prompt;
    if (const auto report = validate_plan(plan); !report.usable()) {
        port_failure(-1, "planner returned an unusable plan: " + serialize_report(report));
    }
    trace.initial_plan = plan;

    std::vector<std::string> entity_names;
    for (const auto& e : plan.entities) entity_names.push_back(e.name);

    Conditions conditions = render_conditions(plan, conditions_config);
    LatentGrid z = gaussian_noise(conditions_config.image_width, conditions_config.image_height,
                                  config.latent_channels, config.seed);

    int aligned_streak = 0;
    int revisions = 0;
    bool evaluating = config.max_refinements > 0;
    const auto& kt = kernels::active();

    for (int i = 0; i < config.num_steps; ++i) {
        StepEvent event;
        event.step = i;
        event.t = 1.0 - static_cast<double>(i) / config.num_steps;
        event.t_next = 1.0 - static_cast<double>(i + 1) / config.num_steps;

        LatentGrid v = guarded(i, [&] { return denoiser.step(z, event.t, conditions); });
        ++trace.denoiser_calls;
        LatentGrid x0 = predict_clean(z, v, event.t);
        event.predicted_id = artifact_id(step_prefix("x0", i), x0);
        if (sink) sink(event.predicted_id, x0);

        if (evaluating && config.scheduled(i)) {
            const RefineRequest request{prompt, entity_names, &plan, event.predicted_id, &x0};
            PlannerVerdict verdict = guarded(i, [&] { return parse_planner_response(planner.refine(request)); });
            if (verdict.isaligned) {
                ++aligned_streak;
            } else {
                aligned_streak = 0;
                plan = guarded(i, [&] { return apply_refinement(plan, *verdict.optimized_layout); });
                conditions = render_conditions(plan, conditions_config);
                event.rerendered = true;
                event.revision = verdict.optimized_layout;
                ++revisions;
                // Re-guide the same timestep with the new conditions.
                v = guarded(i, [&] { return denoiser.step(z, event.t, conditions); });
                ++trace.denoiser_calls;
                x0 = predict_clean(z, v, event.t);
                event.reguided_id = artifact_id(step_prefix("x0r", i), x0);
                if (sink) sink(event.reguided_id, x0);
            }
            event.verdict = std::move(verdict);
            evaluating = aligned_streak < config.stability_window && revisions < config.max_refinements;
        }

        // Euler step from t to t_next: z <- z - (t - t_next) * v.
        LatentGrid next(z.width, z.height, z.channels);
        kt.predict_clean(z.values, v.values, event.t - event.t_next, next.values);
        z = std::move(next);
        trace.steps.push_back(std::move(event));
    }

    trace.final_plan = plan;
    trace.final_image_id = artifact_id("final", z);
    if (sink) sink(trace.final_image_id, z);
    return trace;
}

}  // namespace scenecond
