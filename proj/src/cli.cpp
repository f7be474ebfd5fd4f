#include "msar/cli.hpp"

#include "msar/accounting.hpp"
#include "msar/calibration.hpp"
#include "msar/error.hpp"
#include "msar/generate.hpp"
#include "msar/precision.hpp"
#include "msar/random.hpp"
#include "msar/sparse_attention.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>

namespace msar {

std::vector<std::size_t> draw_labels(std::size_t count, std::size_t class_count, std::uint64_t seed)
{
    Rng rng(seed);
    std::vector<std::size_t> labels(count);
    for (auto& label : labels) {
        label = static_cast<std::size_t>(rng.below(class_count));
    }
    return labels;
}

namespace {

namespace fs = std::filesystem;

std::optional<int> qkv_option(int bits)
{
    return bits == 16 ? std::nullopt : std::optional<int>(bits);
}

std::string calibration_fingerprint(const ModelConfig& config, const std::vector<std::size_t>& labels,
                                    const QuantTarget& target, double cfg_scale)
{
    std::ostringstream text;
    text << config.fingerprint() << "|labels:";
    for (std::size_t label : labels) {
        text << label << ',';
    }
    text << "|W" << target.weight_bits.value_or(16) << "A" << target.act_bits.value_or(16) << "|cfg" << cfg_scale;
    return fnv1a_hex(text.str());
}

std::vector<std::size_t> parse_sides(const std::string& text)
{
    std::vector<std::size_t> sides;
    std::stringstream in(text);
    std::string item;
    while (std::getline(in, item, ',')) {
        try {
            sides.push_back(static_cast<std::size_t>(std::stoul(item)));
        } catch (const std::exception&) {
            throw InputError("bad schedule entry '" + item + "'");
        }
    }
    return sides;
}

struct InitArgs {
    std::string preset = "default";
    std::uint64_t seed = 0;
    std::size_t depth = 4;
    std::size_t heads = 4;
    std::size_t dim = 64;
    std::size_t vocab = 256;
    std::size_t classes = 10;
    double outlier_factor = 0.0;
    std::string out;
};

struct CalibrateArgs {
    std::string model;
    std::size_t labels = 0;
    std::uint64_t seed = 0;
    double cfg = 4.0;
    std::string out;
};

struct DesignArgs {
    std::string dump;
    double r0 = 0.95;
    std::size_t sink_parts = 3;
    std::string out;
};

struct PlanArgs {
    std::string model;
    std::size_t labels = 0;
    std::uint64_t seed = 0;
    int wbits = 8;
    int abits = 8;
    int qkv = 8;
    std::size_t protect = 1;
    double cfg = 4.0;
    std::string out;
};

struct GenerateArgs {
    std::string model;
    std::size_t label = 0;
    double cfg = 4.0;
    std::string pattern;
    bool asc = false;
    std::string plan;
    std::string reference;
    std::string out;
};

struct ReportArgs {
    std::string baseline;
    std::string compressed;
    std::string projection;
    std::string out;
};

int cmd_init(const InitArgs& args)
{
    ModelConfig config;
    if (args.preset == "var10") {
        config.schedule = var10_schedule();
    } else if (args.preset != "default") {
        throw InputError("unknown preset " + args.preset);
    }
    config.seed = args.seed;
    config.depth = args.depth;
    config.heads = args.heads;
    config.dim = args.dim;
    config.vocab = args.vocab;
    config.class_count = args.classes;
    if (args.outlier_factor > 0.0) {
        config.outliers = PlantedOutliers{LayerType::ffn_fc2, args.outlier_factor, 8};
    }
    config.validate();
    save_model_config(args.out, config);
    std::cout << "model " << config.fingerprint() << " written to " << args.out << '\n';
    return kExitOk;
}

int cmd_calibrate(const CalibrateArgs& args)
{
    if (args.labels == 0) {
        throw InputError("--labels must be at least 1");
    }
    const ModelConfig config = load_model_config(args.model);
    const Model model = build_model(config);
    const auto labels = draw_labels(args.labels, config.class_count, args.seed);
    const AttentionDump dump = record_dump(model, labels, SamplerConfig{args.cfg});
    write_dump(args.out, dump);
    std::cout << "samples " << dump.header().sample_count << ", " << fs::file_size(args.out) << " bytes -> "
              << args.out << '\n';
    return kExitOk;
}

int cmd_design(const DesignArgs& args)
{
    const AttentionDump dump = read_dump(args.dump);
    const WindowPattern pattern = design_pattern(dump, args.r0, args.sink_parts);
    save_pattern(args.out, pattern);
    const AttnFlops flops = attn_flops(pattern, 1);
    std::cout << "r0 " << args.r0 << ": predicted attention FLOPs saving " << flops.saving() * 100.0 << "% -> "
              << args.out << '\n';
    return kExitOk;
}

int cmd_plan(const PlanArgs& args)
{
    if (args.labels == 0) {
        throw InputError("--labels must be at least 1");
    }
    const ModelConfig config = load_model_config(args.model);
    const Model model = build_model(config);
    const auto labels = draw_labels(args.labels, config.class_count, args.seed);
    const QuantTarget target{args.wbits, args.abits, qkv_option(args.qkv)};
    if (args.protect > kLayerTypes.size()) {
        throw RangeError("--protect " + std::to_string(args.protect) + " exceeds the number of layer types");
    }
    const SamplerConfig sampler{args.cfg};
    const SensitivityScores scores = sensitivity_scan(model, labels, target, sampler);
    PrecisionPlan plan = plan_precision(scores, target, args.protect);
    plan.model_fingerprint = config.fingerprint();
    plan.calibration_fingerprint = calibration_fingerprint(config, labels, target, args.cfg);
    save_plan(args.out, plan);

    std::cout << "sensitivity (" << plan.bitwidth_label() << "):\n";
    for (LayerType type : kLayerTypes) {
        std::cout << "  " << layer_type_name(type) << ' ' << scores[layer_type_index(type)] << '\n';
    }
    std::cout << "protected:";
    for (LayerType type : plan.protected_layers) {
        std::cout << ' ' << layer_type_name(type);
    }
    std::cout << "\n-> " << args.out << '\n';
    return kExitOk;
}

int cmd_generate(const GenerateArgs& args)
{
    const ModelConfig config = load_model_config(args.model);
    std::optional<WindowPattern> pattern;
    std::optional<PrecisionPlan> plan;
    std::optional<RunRecord> reference;
    if (!args.pattern.empty()) {
        pattern = load_pattern(args.pattern);
        if (pattern->fingerprint() != config.schedule.fingerprint() || pattern->depth != config.depth ||
            pattern->heads != config.heads) {
            throw FingerprintError("pattern " + args.pattern + " was designed for a different schedule or model");
        }
    }
    if (!args.plan.empty()) {
        plan = load_plan(args.plan);
        if (!plan->model_fingerprint.empty() && plan->model_fingerprint != config.fingerprint()) {
            throw FingerprintError("plan " + args.plan + " was calibrated on a different model");
        }
    }
    if (!args.reference.empty()) {
        reference = run_record_from_json(read_json_file(args.reference));
        if (!(reference->config == config)) {
            throw FingerprintError("reference run " + args.reference + " used a different model");
        }
    }

    const Model model = build_model(config);
    GenerateOptions options;
    options.pattern = pattern ? &*pattern : nullptr;
    options.asc = args.asc;
    options.plan = plan ? &*plan : nullptr;
    options.forced_tokens = reference ? &reference->tokens : nullptr;
    const SamplerConfig sampler{args.cfg};
    GenerationResult result = generate(model, args.label, sampler, options);
    const RunStats stats = result.stats;
    const RunRecord record = make_run_record(config, args.label, sampler, std::move(result), reference.has_value());
    write_json_file(args.out, to_json(record));
    std::cout << "attention FLOPs " << stats.attention_flops() << ", linear FLOPs " << stats.linear_flops
              << ", weight bytes " << stats.weight_bytes << " -> " << args.out << '\n';
    return kExitOk;
}

int cmd_report(const ReportArgs& args)
{
    const RunRecord baseline = run_record_from_json(read_json_file(args.baseline));
    const RunRecord compressed = run_record_from_json(read_json_file(args.compressed));
    SavingsReport report = make_report(baseline, compressed);
    if (!args.projection.empty()) {
        report.projection = project(baseline.config, ScaleSchedule(parse_sides(args.projection)));
    }
    write_json_file(args.out, to_json(report));
    std::cout << "attention saving " << report.attention_saving * 100.0 << "%, logits rel-L2 "
              << report.logits_rel_l2 << ", token disagreement " << report.token_disagreement << " -> " << args.out
              << '\n';
    return kExitOk;
}

} // namespace

int run_cli(int argc, const char* const* argv)
{
    CLI::App app{"Multi-scale autoregressive inference with sparse attention, CFG sharing and PTQ"};
    app.require_subcommand(1);

    InitArgs init;
    auto* init_cmd = app.add_subcommand("init", "write a model config");
    init_cmd->add_option("--preset", init.preset, "default (1..6) or var10")->check(CLI::IsMember({"default", "var10"}));
    init_cmd->add_option("--seed", init.seed);
    init_cmd->add_option("--depth", init.depth);
    init_cmd->add_option("--heads", init.heads);
    init_cmd->add_option("--dim", init.dim);
    init_cmd->add_option("--vocab", init.vocab);
    init_cmd->add_option("--classes", init.classes);
    init_cmd->add_option("--plant-outliers", init.outlier_factor, "scale a few ffn.fc2 weights by this factor");
    init_cmd->add_option("--out", init.out)->required();

    CalibrateArgs calibrate;
    auto* calibrate_cmd = app.add_subcommand("calibrate", "record attention maps");
    calibrate_cmd->add_option("--model", calibrate.model)->required();
    calibrate_cmd->add_option("--labels", calibrate.labels, "number of calibration samples")->required();
    calibrate_cmd->add_option("--seed", calibrate.seed);
    calibrate_cmd->add_option("--cfg", calibrate.cfg)->check(CLI::NonNegativeNumber);
    calibrate_cmd->add_option("--out", calibrate.out)->required();

    DesignArgs design;
    auto* design_cmd = app.add_subcommand("design", "fit window widths to a dump");
    design_cmd->add_option("--dump", design.dump)->required();
    design_cmd->add_option("--r0", design.r0)->check(CLI::Validator(
        [](std::string& value) -> std::string {
            try {
                const double r0 = std::stod(value);
                return r0 > 0.0 && r0 <= 1.0 ? std::string{} : "r0 must lie in (0, 1]";
            } catch (const std::exception&) {
                return "r0 must be a number";
            }
        },
        "(0,1]"));
    design_cmd->add_option("--sink-parts", design.sink_parts);
    design_cmd->add_option("--out", design.out)->required();

    PlanArgs plan;
    auto* plan_cmd = app.add_subcommand("plan", "scan layer sensitivity and write a precision plan");
    plan_cmd->alias("scan");
    plan_cmd->add_option("--model", plan.model)->required();
    plan_cmd->add_option("--labels", plan.labels)->required();
    plan_cmd->add_option("--seed", plan.seed);
    plan_cmd->add_option("--wbits", plan.wbits)->check(CLI::IsMember({4, 6, 8}));
    plan_cmd->add_option("--abits", plan.abits)->check(CLI::IsMember({4, 6, 8}));
    plan_cmd->add_option("--qkv", plan.qkv, "8, or 16 for floating point")->check(CLI::IsMember({8, 16}));
    plan_cmd->add_option("--protect", plan.protect);
    plan_cmd->add_option("--cfg", plan.cfg)->check(CLI::NonNegativeNumber);
    plan_cmd->add_option("--out", plan.out)->required();

    GenerateArgs gen;
    auto* gen_cmd = app.add_subcommand("generate", "run the pipeline with any technique combination");
    gen_cmd->add_option("--model", gen.model)->required();
    gen_cmd->add_option("--label", gen.label)->required();
    gen_cmd->add_option("--cfg", gen.cfg)->check(CLI::NonNegativeNumber);
    gen_cmd->add_option("--pattern", gen.pattern);
    gen_cmd->add_flag("--asc", gen.asc, "share the conditional attention output with the unconditional stream");
    gen_cmd->add_option("--plan", gen.plan);
    gen_cmd->add_option("--reference", gen.reference, "feed this run's tokens to every next scale");
    gen_cmd->add_option("--out", gen.out)->required();

    ReportArgs report;
    auto* report_cmd = app.add_subcommand("report", "compare a compressed run with a baseline run");
    report_cmd->add_option("--baseline", report.baseline)->required();
    report_cmd->add_option("--compressed", report.compressed)->required();
    report_cmd->add_option("--project-schedule", report.projection, "comma-separated sides for a projection");
    report_cmd->add_option("--out", report.out)->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }

    try {
        if (init_cmd->parsed()) {
            return cmd_init(init);
        }
        if (calibrate_cmd->parsed()) {
            return cmd_calibrate(calibrate);
        }
        if (design_cmd->parsed()) {
            return cmd_design(design);
        }
        if (plan_cmd->parsed()) {
            return cmd_plan(plan);
        }
        if (gen_cmd->parsed()) {
            return cmd_generate(gen);
        }
        if (report_cmd->parsed()) {
            return cmd_report(report);
        }
    } catch (const FingerprintError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitFingerprint;
    } catch (const IoError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitIo;
    } catch (const fs::filesystem_error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitIo;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitUsage;
    }
    return kExitUsage;
}

} // namespace msar
