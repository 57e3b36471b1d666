#include <CLI11.hpp>

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "scenecond/attention_mask.hpp"
#include "scenecond/camera.hpp"
#include "scenecond/depth_renderer.hpp"
#include "scenecond/error.hpp"
#include "scenecond/hashing.hpp"
#include "scenecond/image_io.hpp"
#include "scenecond/obb.hpp"
#include "scenecond/planner.hpp"
#include "scenecond/refinement_loop.hpp"
#include "scenecond/scene_model.hpp"
#include "scenecond/spatial_metrics.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace scenecond;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInvalid = 1;
constexpr int kExitIo = 2;
constexpr int kExitUsage = 64;

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::Io, "cannot read " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

std::string shortest(double value) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, value);
    return std::string(buf, res.ptr);
}

// Collects everything that goes into meta.json and writes outputs.
class Run {
public:
    Run(std::string command, std::string out_dir) : command_(std::move(command)), out_(std::move(out_dir)) {}

    std::string input(const std::string& path) {
        std::string bytes = read_file(path);
        inputs_[path] = sha256_hex(bytes);
        return bytes;
    }

    json& config() { return config_; }

    void write(const std::string& name, std::string_view bytes) {
        const fs::path path = fs::path(out_) / name;
        std::error_code ec;
        fs::create_directories(path.parent_path(), ec);
        std::ofstream out(path, std::ios::binary);
        if (!out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()))) {
            throw Error(ErrorCode::Io, "cannot write " + path.string());
        }
        outputs_[name] = sha256_hex(bytes);
    }

    void finish() {
        if (out_.empty()) return;
        const json meta = {{"command", command_}, {"inputs", inputs_}, {"config", config_}, {"outputs", outputs_}};
        const std::string text = meta.dump(2) + "\n";
        const fs::path path = fs::path(out_) / "meta.json";
        fs::create_directories(out_);
        std::ofstream(path, std::ios::binary) << text;
    }

    bool has_out() const { return !out_.empty(); }

private:
    std::string command_;
    std::string out_;
    json inputs_ = json::object();
    json config_ = json::object();
    json outputs_ = json::object();
};

struct ImageOptions {
    int width = 1024;
    int height = 1024;
    int patch = 16;
    double distance_factor = 1.2;
    double vfov = 55.0;

    void add(CLI::App* cmd) {
        cmd->add_option("--width", width, "image width in pixels")->capture_default_str();
        cmd->add_option("--height", height, "image height in pixels")->capture_default_str();
        cmd->add_option("--patch", patch, "patch size in pixels")->capture_default_str();
        cmd->add_option("--distance-factor", distance_factor, "camera distance / scene_size")->capture_default_str();
        cmd->add_option("--vfov", vfov, "vertical field of view, degrees")->capture_default_str();
    }

    CameraConfig camera() const {
        CameraConfig c;
        c.distance_factor = distance_factor;
        c.vfov_deg = vfov;
        return c;
    }

    void echo(json& config) const {
        config["width"] = width;
        config["height"] = height;
        config["patch"] = patch;
        config["distance_factor"] = distance_factor;
        config["vfov"] = vfov;
    }
};

struct MaskOptions {
    std::size_t n_global = 1;
    std::size_t n_local = 1;
    std::size_t n_depth = 0;
    double min_coverage = 0.0;
    bool no_isolation = false;

    void add(CLI::App* cmd) {
        cmd->add_option("--n-global", n_global, "global prompt tokens")->capture_default_str();
        cmd->add_option("--n-local", n_local, "local prompt tokens per entity")->capture_default_str();
        cmd->add_option("--n-depth", n_depth, "depth condition tokens (0 = image token count)")
            ->capture_default_str();
        cmd->add_option("--min-coverage", min_coverage, "patch coverage needed to set a token")
            ->capture_default_str();
        cmd->add_flag("--no-global-isolation", no_isolation, "let the global prompt see entity and depth tokens");
    }

    void echo(json& config) const {
        config["n_global"] = n_global;
        config["n_local"] = n_local;
        config["n_depth"] = n_depth;
        config["min_coverage"] = min_coverage;
        config["global_isolated"] = !no_isolation;
    }
};

ConditionConfig condition_config(const ImageOptions& image, const MaskOptions& mask) {
    ConditionConfig c;
    c.image_width = image.width;
    c.image_height = image.height;
    c.patch_size = image.patch;
    c.camera = image.camera();
    c.n_global = mask.n_global;
    c.n_local = mask.n_local;
    c.n_depth = mask.n_depth;
    c.global_isolated = !mask.no_isolation;
    c.min_coverage = mask.min_coverage;
    return c;
}

// Validation findings stop a run before any geometry is produced.
ScenePlan load_usable_plan(Run& run, const std::string& path) {
    ScenePlan plan = parse_plan(run.input(path));
    const auto report = validate_plan(plan);
    if (!report.usable()) {
        std::cerr << serialize_report(report);
        throw Error(ErrorCode::InvalidPlan, path + " has " + std::to_string(report.error_count()) + " error(s)");
    }
    return plan;
}

PointCloud load_cloud(Run& run, const std::string& path) {
    const std::string bytes = run.input(path);
    const auto ext = fs::path(path).extension().string();
    if (ext == ".f32" || ext == ".bin") return read_f32_triplets(bytes);
    return read_xyz(bytes);
}

std::string obb_json(const OrientedBox3D& box, const std::string& name) {
    const json j = {
        {"center", {box.center.x, box.center.y, box.center.z}},
        {"half_extents", {box.half_extents.x, box.half_extents.y, box.half_extents.z}},
        {"yaw_deg", box.yaw_deg},
        {"volume", box.volume()},
    };
    LayoutFragment fragment;
    fragment.entities.push_back(box.to_entity(name));
    json out = j;
    out["entity_layout"] = json::parse(serialize_fragment(fragment))["entity_layout"];
    return out.dump(2) + "\n";
}

std::vector<int> parse_schedule(const std::string& text) {
    std::vector<int> steps;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        int step = 0;
        const auto res = std::from_chars(item.data(), item.data() + item.size(), step);
        if (res.ec != std::errc() || res.ptr != item.data() + item.size()) {
            throw CLI::ValidationError("--schedule", "not an integer: " + item);
        }
        steps.push_back(step);
    }
    return steps;
}

int exit_code_for(const Error& e) {
    switch (e.code()) {
        case ErrorCode::Io:
        case ErrorCode::PortFailure:
        case ErrorCode::NoVerdictFound:
        case ErrorCode::MalformedLayout:
            return kExitIo;
        default:
            return kExitInvalid;
    }
}

CLI::App* deepest_parsed(CLI::App* app) {
    for (auto* sub : app->get_subcommands()) {
        if (sub->parsed()) return deepest_parsed(sub);
    }
    return app;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Scene-plan conditioning toolkit: plans, depth and mask conditions, OBB fitting, refinement loop, "
                 "spatial metrics"};
    app.require_subcommand(1);
    std::string out_dir;
    std::function<int()> action;

    ImageOptions image;
    MaskOptions mask_opts;

    // plan
    auto* plan_cmd = app.add_subcommand("plan", "scene plan parsing and editing");
    plan_cmd->require_subcommand(1);
    std::string plan_path, fragment_path;

    auto* plan_validate = plan_cmd->add_subcommand("validate", "print the validation report; exit 1 on errors");
    plan_validate->add_option("--plan", plan_path, "planner output or plan JSON")->required();
    plan_validate->add_option("--out", out_dir, "output directory");
    plan_validate->callback([&] {
        action = [&] {
            Run run("plan validate", out_dir);
            const ScenePlan plan = parse_plan(run.input(plan_path));
            const auto report = validate_plan(plan);
            const std::string text = serialize_report(report);
            std::cout << text;
            if (run.has_out()) {
                run.write("report.json", text);
                run.write("plan.json", serialize_plan(plan));
            }
            run.finish();
            return report.usable() ? kExitOk : kExitInvalid;
        };
    });

    auto* plan_apply = plan_cmd->add_subcommand("apply", "apply a refinement fragment to a plan");
    plan_apply->add_option("--plan", plan_path, "plan JSON")->required();
    plan_apply->add_option("--fragment", fragment_path, "entity_layout fragment")->required();
    plan_apply->add_option("--out", out_dir, "output directory")->required();
    plan_apply->callback([&] {
        action = [&] {
            Run run("plan apply", out_dir);
            const ScenePlan plan = parse_plan(run.input(plan_path));
            const LayoutFragment fragment = parse_fragment(run.input(fragment_path));
            const ScenePlan updated = apply_refinement(plan, fragment);
            run.write("plan.json", serialize_plan(updated));
            run.finish();
            return kExitOk;
        };
    });

    // render
    auto* render_cmd = app.add_subcommand("render", "depth map and entity masks from a plan");
    render_cmd->require_subcommand(1);

    auto* render_depth_cmd = render_cmd->add_subcommand("depth", "depth.dpf1 and a 16-bit PGM preview");
    render_depth_cmd->add_option("--plan", plan_path, "plan JSON")->required();
    render_depth_cmd->add_option("--out", out_dir, "output directory")->required();
    image.add(render_depth_cmd);
    render_depth_cmd->callback([&] {
        action = [&] {
            Run run("render depth", out_dir);
            image.echo(run.config());
            const ScenePlan plan = load_usable_plan(run, plan_path);
            const auto cam = derive_camera(plan.params, image.width, image.height, image.camera());
            const auto boxes = boxes_from_plan(plan);
            const DepthMap depth = render_depth(cam, boxes);
            const DepthRange range = default_depth_range(cam, plan.params);
            const EncodedDepth encoded = encode_depth(depth, range.near_plane, range.far_plane);
            run.config()["near"] = range.near_plane;
            run.config()["far"] = range.far_plane;
            run.write("depth.dpf1", encoded.raw);
            run.write("depth.pgm", encoded.preview);
            run.finish();
            return kExitOk;
        };
    });

    auto* render_masks_cmd = render_cmd->add_subcommand("masks", "one PBM per entity plus masks.json");
    render_masks_cmd->add_option("--plan", plan_path, "plan JSON")->required();
    render_masks_cmd->add_option("--out", out_dir, "output directory")->required();
    image.add(render_masks_cmd);
    render_masks_cmd->callback([&] {
        action = [&] {
            Run run("render masks", out_dir);
            image.echo(run.config());
            const ScenePlan plan = load_usable_plan(run, plan_path);
            const auto cam = derive_camera(plan.params, image.width, image.height, image.camera());
            json index = json::array();
            for (std::size_t i = 0; i < plan.entities.size(); ++i) {
                const auto& entity = plan.entities[i];
                const ProjectedMask projected = project_box_mask(cam, box_from_entity(entity));
                const std::string name = "mask_" + std::to_string(i) + ".pbm";
                run.write(name, encode_pbm(projected.mask));
                if (projected.fully_behind) std::cerr << "warning: " << entity.name << " is behind the camera\n";
                index.push_back({{"entity", entity.name},
                                 {"file", name},
                                 {"area", projected.mask.area()},
                                 {"fully_behind", projected.fully_behind},
                                 {"mask", json::parse(mask_to_json(projected.mask))}});
            }
            run.write("masks.json", index.dump(2) + "\n");
            run.finish();
            return kExitOk;
        };
    });

    // mask
    auto* mask_cmd = app.add_subcommand("mask", "joint attention mask");
    mask_cmd->require_subcommand(1);
    std::string mask_path;

    auto* mask_build = mask_cmd->add_subcommand("build", "attention.json and attention.pbm for a plan");
    mask_build->add_option("--plan", plan_path, "plan JSON")->required();
    mask_build->add_option("--out", out_dir, "output directory")->required();
    image.add(mask_build);
    mask_opts.add(mask_build);
    mask_build->callback([&] {
        action = [&] {
            Run run("mask build", out_dir);
            image.echo(run.config());
            mask_opts.echo(run.config());
            const ScenePlan plan = load_usable_plan(run, plan_path);
            const Conditions cond = render_conditions(plan, condition_config(image, mask_opts));
            run.write("attention.json", attention_mask_to_json(cond.attention));
            run.write("attention.pbm", attention_mask_to_pbm(cond.attention));
            run.finish();
            return kExitOk;
        };
    });

    auto* mask_audit = mask_cmd->add_subcommand("audit", "re-derive every cell; exit 1 on violations");
    mask_audit->add_option("--mask", mask_path, "attention.json")->required();
    mask_audit->add_option("--out", out_dir, "output directory");
    mask_audit->callback([&] {
        action = [&] {
            Run run("mask audit", out_dir);
            const AttentionMask mask = attention_mask_from_json(run.input(mask_path));
            const AuditReport report = audit_mask(mask);
            const std::string text = serialize_audit(report);
            std::cout << text;
            if (run.has_out()) run.write("audit.json", text);
            run.finish();
            return report.ok() ? kExitOk : kExitInvalid;
        };
    });

    // fit
    auto* fit_cmd = app.add_subcommand("fit", "oriented bounding boxes from point clouds");
    fit_cmd->require_subcommand(1);
    std::string cloud_path;
    std::string entity_name = "entity";
    double oracle_step = 0.25;

    auto* fit_obb = fit_cmd->add_subcommand("obb", "minimum-volume gravity-aligned box");
    fit_obb->add_option("--cloud", cloud_path, "XYZ text, or .f32/.bin float triplets")->required();
    fit_obb->add_option("--name", entity_name, "entity name for the emitted layout")->capture_default_str();
    fit_obb->add_option("--out", out_dir, "output directory")->required();
    fit_obb->callback([&] {
        action = [&] {
            Run run("fit obb", out_dir);
            const OrientedBox3D box = fit_min_volume_obb(load_cloud(run, cloud_path));
            run.write("obb.json", obb_json(box, entity_name));
            run.finish();
            return kExitOk;
        };
    });

    auto* fit_oracle = fit_cmd->add_subcommand("oracle", "brute-force yaw sweep");
    fit_oracle->add_option("--cloud", cloud_path, "XYZ text, or .f32/.bin float triplets")->required();
    fit_oracle->add_option("--step", oracle_step, "yaw step, degrees")->capture_default_str();
    fit_oracle->add_option("--name", entity_name, "entity name for the emitted layout")->capture_default_str();
    fit_oracle->add_option("--out", out_dir, "output directory")->required();
    fit_oracle->callback([&] {
        action = [&] {
            Run run("fit oracle", out_dir);
            run.config()["step"] = oracle_step;
            const OrientedBox3D box = brute_force_obb_oracle(load_cloud(run, cloud_path), oracle_step);
            run.write("obb.json", obb_json(box, entity_name));
            run.finish();
            return kExitOk;
        };
    });

    // loop
    auto* loop_cmd = app.add_subcommand("loop", "predict-evaluate-refine loop");
    loop_cmd->require_subcommand(1);
    std::string prompt, planner_kind = "scripted", script_path, schedule;
    LoopConfig loop;
    HttpPlannerConfig http = HttpPlannerConfig::from_env();
    std::string attach = "base64";
    double timeout_s = 60.0;
    bool save_artifacts = false;

    auto* loop_run = loop_cmd->add_subcommand("run", "run the loop with the toy denoiser");
    loop_run->add_option("--prompt", prompt, "text prompt")->required();
    loop_run->add_option("--planner", planner_kind, "scripted or http")
        ->check(CLI::IsMember({"scripted", "http"}))
        ->capture_default_str();
    loop_run->add_option("--script", script_path, "scripted planner responses");
    loop_run->add_option("--steps", loop.num_steps, "denoising steps")->capture_default_str();
    loop_run->add_option("--schedule", schedule, "comma-separated evaluation steps (default: every step)");
    loop_run->add_option("--max-refinements", loop.max_refinements, "revision budget")->capture_default_str();
    loop_run->add_option("--window", loop.stability_window, "consecutive aligned verdicts that end evaluation")
        ->capture_default_str();
    loop_run->add_option("--seed", loop.seed, "noise seed")->capture_default_str();
    loop_run->add_option("--channels", loop.latent_channels, "latent channels")->capture_default_str();
    loop_run->add_option("--planner-url", http.url, "chat-completions endpoint (default PLANNER_URL)");
    loop_run->add_option("--planner-model", http.model, "model name")->capture_default_str();
    loop_run->add_option("--planner-timeout", timeout_s, "request timeout, seconds")->capture_default_str();
    loop_run->add_option("--planner-retries", http.retries, "retries after the first attempt")
        ->capture_default_str();
    loop_run->add_option("--attach", attach, "image attachment: base64 or file")
        ->check(CLI::IsMember({"base64", "file"}))
        ->capture_default_str();
    loop_run->add_flag("--save-artifacts", save_artifacts, "write every predicted image as PNG");
    loop_run->add_option("--out", out_dir, "output directory")->required();
    image.add(loop_run);
    mask_opts.add(loop_run);
    loop_run->callback([&] {
        action = [&] {
            Run run("loop run", out_dir);
            image.echo(run.config());
            mask_opts.echo(run.config());
            if (!schedule.empty()) loop.eval_schedule = parse_schedule(schedule);
            loop.validate();
            json& config = run.config();
            config["prompt"] = prompt;
            config["planner"] = planner_kind;
            config["steps"] = loop.num_steps;
            config["schedule"] = loop.eval_schedule ? json(*loop.eval_schedule) : json();
            config["max_refinements"] = loop.max_refinements;
            config["window"] = loop.stability_window;
            config["seed"] = loop.seed;
            config["channels"] = loop.latent_channels;

            std::unique_ptr<PlannerPort> planner;
            if (planner_kind == "scripted") {
                if (script_path.empty()) throw CLI::ValidationError("--script", "required with --planner scripted");
                planner = std::make_unique<ScriptedPlanner>(ScriptedPlanner::from_json(run.input(script_path)));
            } else {
                http.timeout = std::chrono::milliseconds(static_cast<long long>(timeout_s * 1000.0));
                http.attachment = attach == "file" ? ImageAttachment::FilePath : ImageAttachment::Base64Png;
                if (http.image_dir.empty()) http.image_dir = (fs::path(out_dir) / "attachments").string();
                config["planner_url"] = http.url;
                config["planner_model"] = http.model;
                planner = std::make_unique<HttpPlanner>(http);
            }

            ArtifactSink sink;
            if (save_artifacts) {
                sink = [&](const std::string& id, const LatentGrid& grid) {
                    run.write("artifacts/" + id + ".png", latent_to_png(grid));
                };
            }
            ToyDenoiser denoiser;
            const RefinementTrace trace =
                run_refinement_loop(prompt, denoiser, *planner, loop, condition_config(image, mask_opts), sink);
            run.write("trace.jsonl", trace.to_jsonl());
            run.write("plan_initial.json", serialize_plan(trace.initial_plan));
            run.write("plan_final.json", serialize_plan(trace.final_plan));
            std::cout << "revisions " << trace.revision_count() << " rerenders " << trace.rerender_count()
                      << " final " << trace.final_image_id << "\n";
            run.finish();
            return kExitOk;
        };
    });

    // score
    auto* score_cmd = app.add_subcommand("score", "spatial relation and 3D consistency metrics");
    score_cmd->require_subcommand(1);
    std::string detections_path, subject, object, relation;
    ScoreOptions score_opts;
    double d1 = 0.0, d2 = 0.0;

    auto* score_relation_cmd = score_cmd->add_subcommand("relation", "score one relation against detections");
    score_relation_cmd->add_option("--detections", detections_path, "JSON list of detections")->required();
    score_relation_cmd->add_option("--subject", subject, "subject label")->required();
    score_relation_cmd->add_option("--object", object, "object label")->required();
    score_relation_cmd->add_option("--relation", relation, "front, behind, front_left, ...")->required();
    score_relation_cmd->add_option("--margin", score_opts.margin, "strict margin")->capture_default_str();
    score_relation_cmd->add_flag("--soft", score_opts.soft, "sigmoid scores (diagnostics)");
    score_relation_cmd->callback([&] {
        action = [&] {
            const auto detections = parse_detections(read_file(detections_path));
            const RelationSpec spec{subject, object, parse_relation(relation), ""};
            std::cout << shortest(score_prompt(detections, {spec}, score_opts)) << "\n";
            return kExitOk;
        };
    });

    auto* score_consistency = score_cmd->add_subcommand("consistency", "1 - |d1 - d2| / (|d1| + |d2|)");
    score_consistency->add_option("--d1", d1, "intended depth difference")->required();
    score_consistency->add_option("--d2", d2, "measured depth difference")->required();
    score_consistency->callback([&] {
        action = [&] {
            std::cout << shortest(consistency_3d(d1, d2)) << "\n";
            return kExitOk;
        };
    });

    // bench
    auto* bench_cmd = app.add_subcommand("bench", "spatial relation benchmark prompts");
    bench_cmd->require_subcommand(1);
    BenchOptions bench;
    std::vector<std::string> relation_names;

    auto* bench_gen = bench_cmd->add_subcommand("gen", "seeded basic and multi-relation prompts");
    bench_gen->add_option("--count", bench.count_per_relation, "prompts per relation")->capture_default_str();
    bench_gen->add_option("--multi", bench.multi_count, "multi-relation prompts")->capture_default_str();
    bench_gen->add_option("--seed", bench.seed, "sampler seed")->capture_default_str();
    bench_gen->add_option("--relations", relation_names, "subset of relations (default: all six)");
    bench_gen->add_option("--out", out_dir, "output directory")->required();
    bench_gen->callback([&] {
        action = [&] {
            Run run("bench gen", out_dir);
            std::vector<Relation> relations;
            for (const auto& name : relation_names) relations.push_back(parse_relation(name));
            if (relations.empty()) relations.assign(kAllRelations.begin(), kAllRelations.end());
            json names = json::array();
            for (auto r : relations) names.push_back(relation_name(r));
            run.config() = {{"count", bench.count_per_relation},
                            {"multi", bench.multi_count},
                            {"seed", bench.seed},
                            {"relations", names},
                            {"table_sha256", sha256_hex(builtin_category_table_json())}};
            run.write("bench.jsonl", bench_to_jsonl(generate_bench_prompts(builtin_category_table(), relations, bench)));
            run.finish();
            return kExitOk;
        };
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: " << e.what() << "\n\n" << deepest_parsed(&app)->help();
        return kExitUsage;
    }

    try {
        return action ? action() : kExitUsage;
    } catch (const CLI::ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n\n" << deepest_parsed(&app)->help();
        return kExitUsage;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_code_for(e);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitIo;
    }
}
