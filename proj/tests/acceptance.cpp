// Acceptance suite: one line per criterion, non-zero exit if any fails.

#include "support.hpp"

#include "msar/accounting.hpp"
#include "msar/asc.hpp"
#include "msar/calibration.hpp"
#include "msar/cli.hpp"
#include "msar/generate.hpp"
#include "msar/io.hpp"
#include "msar/model.hpp"
#include "msar/pattern.hpp"
#include "msar/precision.hpp"
#include "msar/quant.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>
#include <tuple>

using namespace msar;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = true;
    std::ostringstream detail;

    void require(bool ok, const std::string& what)
    {
        if (!ok && pass) {
            detail << "FAILED: " << what << "; ";
        }
        pass = pass && ok;
    }
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0)
{
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

// ---------------------------------------------------------------------------

void fallback(Outcome& out)
{
    const auto t0 = Clock::now();
    std::size_t identical = 0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        ModelConfig c;
        c.seed = seed;
        const Model m = build_model(c);
        const auto labels = draw_labels(2, c.class_count, seed);
        const WindowPattern p = design_pattern(record_dump(m, labels, {}), 1.0);
        out.require(p.all_full(), "R0=1 pattern has a windowed entry");
        GenerateOptions opts;
        opts.pattern = &p;
        const std::size_t label = seed % c.class_count;
        if (generate(m, label, {}, opts).tokens == generate(m, label, {}).tokens) {
            ++identical;
        }
    }
    const double elapsed = seconds_since(t0);
    out.require(identical == 20, "token maps differ from baseline");
    out.require(elapsed < 10.0, "runtime >= 10 s");
    out.detail << identical << "/20 runs token-identical, " << elapsed << " s";
}

AttentionDump random_placement_dump(Rng& rng, const ScaleSchedule& s, std::size_t depth, std::size_t heads,
                                    std::size_t samples)
{
    AttentionDump dump(DumpHeader{s, depth, heads, samples});
    for (std::size_t n = 0; n < samples; ++n) {
        for (std::size_t b = 0; b < depth; ++b) {
            for (std::size_t h = 0; h < heads; ++h) {
                for (std::size_t k = 1; k <= s.scale_count(); ++k) {
                    auto map = dump.map(n, b, h, k);
                    const std::size_t cols = s.cum_tokens(k);
                    for (std::size_t r = 0; r < s.token_count(k); ++r) {
                        // A few random spikes plus optional background mass.
                        const std::size_t spikes = 1 + rng.below(4);
                        const bool background = rng.uniform() < 0.5;
                        float sum = 0.0f;
                        for (std::size_t c = 0; c < cols; ++c) {
                            map[r * cols + c] = background ? static_cast<float>(0.02 * rng.uniform()) : 0.0f;
                        }
                        for (std::size_t i = 0; i < spikes; ++i) {
                            map[r * cols + rng.below(cols)] += static_cast<float>(rng.uniform());
                        }
                        for (std::size_t c = 0; c < cols; ++c) {
                            sum += map[r * cols + c];
                        }
                        for (std::size_t c = 0; c < cols; ++c) {
                            map[r * cols + c] /= sum;
                        }
                    }
                }
            }
        }
    }
    return dump;
}

void threshold_minimality(Outcome& out)
{
    Rng rng(2024);
    const double grid[] = {0.95, 0.9, 0.85, 0.8, 0.7, 0.6, 0.5};
    std::size_t checked = 0;
    std::size_t violations = 0;
    for (int trial = 0; trial < 100; ++trial) {
        const ScaleSchedule s = trial % 2 == 0 ? default_schedule() : ScaleSchedule({1, 2, 3, 4, 5, 6, 8});
        const AttentionDump dump = random_placement_dump(rng, s, 1 + rng.below(2), 1 + rng.below(2), 1 + rng.below(3));
        const double r0 = grid[rng.below(std::size(grid))];
        const std::size_t sinks = 1 + rng.below(3);
        const AggregatedMaps maps = aggregate(dump);
        const WindowPattern p = design_pattern(maps, r0, sinks);
        for (const auto& [key, width] : p.entries) {
            if (!width) {
                continue;
            }
            const Part part = partition(s, key.scale).parts[key.part - 1];
            const Matrix slice =
                column_slice(maps.map(key.block, key.head, key.scale), part.key_start, part.width());
            const auto centers = part_centers(s, key.scale, part);
            ++checked;
            if (!(window_ratio(slice, *width, centers) >= r0)) {
                ++violations;
            }
            if (*width > 0 && !(window_ratio(slice, *width - 1, centers) < r0)) {
                ++violations;
            }
        }
    }
    out.require(checked > 0, "no windowed entries were produced");
    out.require(violations == 0, "threshold or minimality violated");
    out.detail << checked << " windowed entries over 100 dumps, " << violations << " violations";
}

void monotonicity(Outcome& out)
{
    const ModelConfig c;
    const Model m = build_model(c);
    const auto labels = draw_labels(8, c.class_count, 0);
    const AttentionDump dump = record_dump(m, labels, {});
    double previous = -1.0;
    for (double r0 : {0.95, 0.9, 0.85, 0.8, 0.7, 0.6}) {
        const double saving = attn_flops(design_pattern(dump, r0), c.head_dim()).saving();
        out.require(saving >= previous, "saving decreased as R0 decreased");
        out.detail << r0 << "->" << std::round(saving * 10000.0) / 100.0 << "% ";
        previous = saving;
    }
    out.require(previous > 0.0, "no saving at R0=0.6");
}

void oracle_equivalence(Outcome& out)
{
    Rng rng(50);
    double worst = 0.0;
    std::size_t single_rows = 0;
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t n = trial == 0 ? 9 : 1 + rng.below(16);
        const std::size_t m = trial == 0 ? 14 : 1 + rng.below(30);
        const std::size_t d = 1 + rng.below(16);
        const Matrix q = msar::test::random_matrix(rng, n, d, 2.0);
        const Matrix k = msar::test::random_matrix(rng, m, d, 2.0);
        const Matrix v = msar::test::random_matrix(rng, m, d);
        AttnMask mask(n, m, false);
        for (std::size_t r = 0; r < n; ++r) {
            if (rng.uniform() < 0.25) {
                mask.set(r, rng.below(m), true);
                ++single_rows;
                continue;
            }
            for (std::size_t j = 0; j < m; ++j) {
                mask.set(r, j, rng.uniform() < 0.6);
            }
            mask.set(r, rng.below(m), true);
        }
        const double scale = 1.0 / std::sqrt(static_cast<double>(d));
        worst = std::max(worst, max_abs_diff(masked_attention(q, k, v, mask, scale),
                                             msar::test::oracle_masked_attention(q, k, v, mask, scale)));
    }
    out.require(single_rows > 0, "no single-visible-key rows generated");
    out.require(worst <= 1e-6, "max-abs difference above 1e-6");
    out.detail << "50 instances, " << single_rows << " single-key rows, max-abs " << worst;
}

void asc_exactness(Outcome& out)
{
    const ModelConfig c;
    const Model m = build_model(c);

    // (a)
    std::map<std::tuple<std::size_t, std::size_t, int>, Matrix> seen;
    GenerateOptions shared;
    shared.asc = true;
    shared.on_attention_output = [&](Stream stream, std::size_t k, std::size_t b, const Matrix& o) {
        seen[{k, b, stream == Stream::cond ? 0 : 1}] = o;
    };
    generate(m, 7, {}, shared);
    std::size_t equal = 0;
    for (std::size_t k = 1; k <= c.schedule.scale_count(); ++k) {
        for (std::size_t b = 0; b < c.depth; ++b) {
            equal += seen.at({k, b, 0}) == seen.at({k, b, 1}) ? 1 : 0;
        }
    }
    const std::size_t sites = c.schedule.scale_count() * c.depth;
    out.require(equal == sites, "(a) sub-outputs differ between streams");

    // (b)
    double worst = 0.0;
    bool tokens_equal = true;
    GenerateOptions on;
    on.asc = true;
    for (std::size_t cls : {std::size_t{2}, c.null_label()}) {
        const auto plain = generate_with_conditions(m, cls, cls, {});
        const auto with = generate_with_conditions(m, cls, cls, {}, on);
        tokens_equal = tokens_equal && plain.tokens == with.tokens;
        for (std::size_t k = 0; k < plain.logits.size(); ++k) {
            worst = std::max(worst, max_abs_diff(plain.logits[k], with.logits[k]));
        }
    }
    out.require(tokens_equal && worst <= 1e-6, "(b) equal-input run differs with sharing");

    // (c)
    const auto base_flops = generate(m, 7, {}).stats.attention_flops();
    const auto asc_flops = generate(m, 7, {}, on).stats.attention_flops();
    const double composed = compose_asc_saving(0.7034);
    const double rounded = std::round(composed * 1e4) / 1e4;
    out.require(2 * asc_flops == base_flops, "(c) ASC FLOPs not exactly half");
    out.require(rounded == 0.8517, "(c) composition does not round to 0.8517");
    out.require(std::round(composed * 1000.0) / 10.0 == 85.2, "(c) composition is not 85.2%");

    out.detail << "(a) " << equal << "/" << sites << " bit-equal; (b) max-abs " << worst << "; (c) " << asc_flops
               << "*2 == " << base_flops << ", 1-(1-0.7034)/2 = " << rounded;
}

void quant_round_trip(Outcome& out)
{
    Rng rng(1000);
    std::size_t elements = 0;
    double worst_excess = -1.0;
    bool in_range = true;
    bool constants_exact = true;
    for (int bits : {4, 6, 8}) {
        for (int t = 0; t < 1000; ++t) {
            const std::size_t n = 1 + rng.below(128);
            std::vector<double> x(n);
            const double offset = 5.0 * rng.normal();
            const double spread = std::exp(2.0 * rng.normal());
            for (double& v : x) {
                v = offset + spread * (rng.uniform() < 0.1 ? 10.0 : 1.0) * rng.normal();
            }
            const QuantParams p = calc_params(x, bits);
            const QuantTensor q = quantize(x, p);
            const auto back = dequantize(q);
            for (std::size_t i = 0; i < n; ++i) {
                in_range = in_range && std::abs(q.values[i]) <= p.qmax();
                worst_excess = std::max(worst_excess, std::abs(x[i] - back[i]) - (p.scale / 2 + 1e-9));
            }
            elements += n;

            const std::vector<double> constant(n, offset);
            constants_exact = constants_exact && dequantize(quantize(constant, calc_params(constant, bits))) == constant;
        }
    }
    out.require(worst_excess <= 0.0, "round-trip error above s/2 + 1e-9");
    out.require(in_range, "integer outside +-(2^(B-1)-1)");
    out.require(constants_exact, "constant tensor not reconstructed exactly");
    out.detail << "3000 tensors, " << elements << " elements, worst |x-x^|-(s/2) = " << worst_excess + 1e-9;
}

void bitwidth_ordering(Outcome& out)
{
    const ModelConfig c;
    const Model m = build_model(c);
    const auto labels = draw_labels(10, c.class_count, 10);
    const SamplerConfig sampler;
    const QuantTarget w4{4, 8, 8};
    const QuantTarget w8{8, 8, 8};
    const SensitivityScores scores = sensitivity_scan(m, labels, QuantTarget{4, 8, std::nullopt}, sampler);

    auto err = [&](const PrecisionPlan& plan) {
        GenerateOptions opts;
        opts.plan = &plan;
        return proxy_logits_error(m, labels, sampler, opts);
    };
    const PrecisionPlan p8 = uniform_plan(w8);
    const PrecisionPlan p4 = uniform_plan(w4);
    const PrecisionPlan mp = plan_precision(scores, w4, 1);
    const double e8 = err(p8);
    const double e4 = err(p4);
    const double emp = err(mp);
    out.require(e8 <= e4, "err(W8A8QKV8) > err(W4A8QKV8)");
    out.require(emp <= e4, "protection increased the error");
    out.detail << "W8A8QKV8 " << e8 << ", W4A8QKV8 " << e4 << ", +MP(" << layer_type_name(mp.protected_layers[0])
               << ") " << emp;
}

void planner_recovery(Outcome& out)
{
    ModelConfig c;
    c.outliers = PlantedOutliers{LayerType::ffn_fc2, 100.0, 8};
    const Model m = build_model(c);
    const auto labels = draw_labels(4, c.class_count, 8);
    const QuantTarget target{4, 8, 8};
    const SensitivityScores scores = sensitivity_scan(m, labels, target);
    const auto top = static_cast<std::size_t>(std::max_element(scores.begin(), scores.end()) - scores.begin());
    const PrecisionPlan plan = plan_precision(scores, target, 1);
    out.require(kLayerTypes[top] == LayerType::ffn_fc2, "ffn.fc2 is not ranked first");
    out.require(plan.protected_layers == std::vector<LayerType>{LayerType::ffn_fc2}, "plan does not protect ffn.fc2");
    std::size_t fp_layers = 0;
    for (LayerType t : kLayerTypes) {
        fp_layers += plan.at(t).is_fp() ? 1 : 0;
    }
    out.require(fp_layers == 1, "more than one layer type left in FP");
    out.detail << "top " << layer_type_name(kLayerTypes[top]) << " (" << scores[top] << "), protected:";
    for (LayerType t : plan.protected_layers) {
        out.detail << ' ' << layer_type_name(t);
    }
}

void memory_accounting(Outcome& out)
{
    const ModelConfig c;
    const PrecisionPlan w8 = uniform_plan(QuantTarget{8, 8, 8});
    const double ratio = weight_bytes(c, &w8) / weight_bytes(c, nullptr);
    out.require(ratio == 0.5, "W8/FP16 weight bytes ratio is not 0.5");

    bool closed_form = true;
    for (const ScaleSchedule& s : {default_schedule(), var10_schedule(), ScaleSchedule({1, 2})}) {
        std::uint64_t expected = 0;
        for (std::size_t k = 1; k <= s.scale_count(); ++k) {
            expected += static_cast<std::uint64_t>(s.side(k) * s.side(k)) *
                        msar::test::oracle_cum_tokens({s.sides().begin(), s.sides().end()}, k) * c.depth * c.heads * 4;
        }
        closed_form = closed_form && attn_map_bytes(s, c.depth, c.heads, 4) == expected;
    }
    out.require(closed_form, "attn_map_bytes differs from the closed form");
    out.detail << "W8/FP16 = " << ratio << ", attn_map_bytes(default) = " << attn_map_bytes(c.schedule, c.depth, c.heads, 4);
}

int cli(const std::vector<std::string>& args)
{
    std::vector<const char*> argv{"msar"};
    for (const auto& a : args) {
        argv.push_back(a.c_str());
    }
    // Keep the tool's own progress lines out of the acceptance output.
    std::streambuf* saved = std::cout.rdbuf();
    std::ostringstream sink;
    std::cout.rdbuf(sink.rdbuf());
    const int rc = run_cli(static_cast<int>(argv.size()), argv.data());
    std::cout.rdbuf(saved);
    return rc;
}

void ablation(Outcome& out)
{
    const fs::path dir = msar::test::scratch_dir("acceptance_ablation");
    auto at = [&](const std::string& f) { return (dir / f).string(); };
    const std::string label = "3";

    bool ok = cli({"init", "--out", at("model.json")}) == 0 &&
              cli({"calibrate", "--model", at("model.json"), "--labels", "8", "--out", at("dump.lvad")}) == 0 &&
              cli({"design", "--dump", at("dump.lvad"), "--r0", "0.8", "--out", at("pattern.json")}) == 0 &&
              cli({"plan", "--model", at("model.json"), "--labels", "8", "--wbits", "4", "--abits", "8", "--qkv", "8",
                   "--protect", "0", "--out", at("w4a8.json")}) == 0 &&
              cli({"plan", "--model", at("model.json"), "--labels", "8", "--wbits", "4", "--abits", "8", "--qkv", "8",
                   "--protect", "1", "--out", at("w4a8mp.json")}) == 0 &&
              cli({"generate", "--model", at("model.json"), "--label", label, "--out", at("baseline.json")}) == 0;
    out.require(ok, "pipeline setup failed");
    if (!ok) {
        return;
    }

    struct Row {
        std::string name;
        std::vector<std::string> flags;
        json report;
    };
    std::vector<Row> rows{
        {"baseline", {}, {}},
        {"+MDWA", {"--pattern", at("pattern.json")}, {}},
        {"+MDWA+ASC", {"--pattern", at("pattern.json"), "--asc"}, {}},
        {"+MDWA+ASC+W4A8", {"--pattern", at("pattern.json"), "--asc", "--plan", at("w4a8.json")}, {}},
        {"+MDWA+ASC+W4A8+MP", {"--pattern", at("pattern.json"), "--asc", "--plan", at("w4a8mp.json")}, {}},
    };
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const std::string run = at("run" + std::to_string(i) + ".json");
        const std::string report = at("report" + std::to_string(i) + ".json");
        std::vector<std::string> args{"generate", "--model", at("model.json"), "--label", label,
                                      "--reference", at("baseline.json"), "--out", run};
        args.insert(args.end(), rows[i].flags.begin(), rows[i].flags.end());
        const bool row_ok =
            cli(args) == 0 && cli({"report", "--baseline", at("baseline.json"), "--compressed", run, "--out", report}) == 0;
        out.require(row_ok, rows[i].name + " failed to run");
        if (!row_ok) {
            return;
        }
        rows[i].report = read_json_file(report);
    }

    auto saving = [&](std::size_t i) { return rows[i].report["flops"]["attention_saving"].get<double>(); };
    auto error = [&](std::size_t i) { return rows[i].report["proxy_errors"]["logits_rel_l2"].get<double>(); };

    out.require(saving(0) == 0.0 && error(0) == 0.0, "baseline row is not zero");
    out.require(saving(1) > 0.0, "MDWA row shows no saving");
    out.require(std::abs(saving(2) - compose_asc_saving(saving(1))) <= 1e-12, "MDWA+ASC saving not composed");
    out.require(saving(3) == saving(2) && saving(4) == saving(2), "quantization changed attention FLOPs");
    std::size_t largest = 0;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        out.require(std::isfinite(error(i)), rows[i].name + " error not finite");
        if (error(i) > error(largest)) {
            largest = i;
        }
    }
    out.require(largest == 3, "uniform W4A8 is not the largest-error row");
    const double w0 = rows[0].report["bytes"]["weight_baseline"].get<double>();
    out.require(rows[3].report["bytes"]["weight_compressed"].get<double>() * 4.0 == w0, "W4 weight bytes not 1/4");

    for (std::size_t i = 0; i < rows.size(); ++i) {
        out.detail << "\n      " << rows[i].name << ": attn saving " << saving(i) * 100.0 << "%, logits rel-L2 "
                   << error(i) << ", weight bytes " << rows[i].report["bytes"]["weight_compressed"].get<double>();
    }
}

} // namespace

int main()
{
    const std::vector<std::pair<std::string, std::function<void(Outcome&)>>> criteria{
        {"full-attention fallback", fallback},
        {"threshold satisfaction and minimality", threshold_minimality},
        {"monotonicity in R0", monotonicity},
        {"sparse attention oracle equivalence", oracle_equivalence},
        {"ASC exactness", asc_exactness},
        {"quantization round trip", quant_round_trip},
        {"bit-width and mixed-precision ordering", bitwidth_ordering},
        {"planner recovery", planner_recovery},
        {"memory accounting", memory_accounting},
        {"end-to-end ablation harness", ablation},
    };
    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        Outcome out;
        const auto t0 = Clock::now();
        try {
            criteria[i].second(out);
        } catch (const std::exception& e) {
            out.require(false, std::string("exception: ") + e.what());
        }
        std::printf("[%s] %2zu %s (%.2f s): %s\n", out.pass ? "PASS" : "FAIL", i + 1, criteria[i].first.c_str(),
                    seconds_since(t0), out.detail.str().c_str());
        failed += out.pass ? 0 : 1;
    }
    std::printf("%zu/%zu criteria passed\n", criteria.size() - static_cast<std::size_t>(failed), criteria.size());
    return failed == 0 ? 0 : 1;
}
