#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "kpshift/checkpoint.hpp"
#include "kpshift/errors.hpp"
#include "kpshift/gradcheck.hpp"
#include "kpshift/runconfig.hpp"
#include "kpshift/svg.hpp"
#include "kpshift/synth.hpp"
#include "kpshift/tensor_io.hpp"
#include "kpshift/threads.hpp"
#include "kpshift/train.hpp"

using namespace kpshift;

namespace {

double seconds_since(const std::chrono::steady_clock::time_point& t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError("cannot write " + path, 0);
    out << text;
}

std::string shape_string(const Tensor& t) {
    std::string s;
    for (std::size_t d = 0; d < t.rank(); ++d) {
        if (d) s += 'x';
        s += std::to_string(t.extent(d));
    }
    return s;
}

std::vector<std::string> split_csv(const std::string& csv) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (start <= csv.size()) {
        const std::size_t comma = csv.find(',', start);
        const std::size_t end = comma == std::string::npos ? csv.size() : comma;
        const std::string item = csv.substr(start, end - start);
        if (!item.empty()) out.push_back(item);
        if (comma == std::string::npos) break;
        start = comma + 1;
    }
    return out;
}

std::size_t parse_index(const std::string& s, const std::string& what) {
    std::size_t used = 0;
    unsigned long long v = 0;
    try {
        v = std::stoull(s, &used);
    } catch (const std::exception&) {
        throw ConfigError("invalid " + what + ": '" + s + "'");
    }
    if (used != s.size()) throw ConfigError("invalid " + what + ": '" + s + "'");
    return static_cast<std::size_t>(v);
}

struct CommonFlags {
    std::string config_path;
    int threads = 1;
};

void add_common(CLI::App* cmd, CommonFlags& flags) {
    cmd->add_option("--config", flags.config_path, "key=value config file");
    cmd->add_option("--threads", flags.threads, "worker threads (KPSHIFT_THREADS overrides)");
}

RunConfig resolve_config(const CommonFlags& flags) {
    RunConfig cfg;
    if (!flags.config_path.empty()) cfg = load_run_config(flags.config_path);
    validate_run_config(cfg);
    return cfg;
}

// Checkpoint echo wins for the shift-module shape; otherwise parameters are
// seeded fresh for the input's channel count.
KpsemParams resolve_params(const std::string& params_dir, std::size_t channels,
                           RunConfig& cfg) {
    if (!params_dir.empty()) {
        RunConfig stored;
        KpsemParams p = load_kpsem_checkpoint(params_dir, &stored);
        cfg.K = stored.K;
        cfg.G = stored.G;
        cfg.embed_dim = stored.embed_dim;
        cfg.epsilon = stored.epsilon;
        cfg.normalize_shifts = stored.normalize_shifts;
        return p;
    }
    return init_kpsem_params(channels, kpsem_config(cfg), cfg.seed);
}

int cmd_forward(const CommonFlags& flags, const std::string& input, const std::string& params_dir,
                const std::string& out_path) {
    apply_thread_count(flags.threads);
    RunConfig cfg = resolve_config(flags);
    const Tensor x = tensor_read(input);
    if (x.rank() != 4)
        throw ShapeError("expected rank 4 input tensor, got rank " + std::to_string(x.rank()));
    const KpsemParams params = resolve_params(params_dir, x.extent(0), cfg);
    const auto t0 = std::chrono::steady_clock::now();
    const Tensor y = kpsem_forward(x, params, kpsem_config(cfg));
    const double secs = seconds_since(t0);
    tensor_write(y.astype(x.dtype()), out_path);
    std::printf("input %s -> output %zu\n", shape_string(x).c_str(), y.extent(0));
    std::fprintf(stderr, "forward took %.1f ms\n", secs * 1e3);
    return 0;
}

int cmd_gradcheck(const CommonFlags& flags, const std::string& mode_name, std::uint64_t seed,
                  double eps, double tol, const std::string& out_path) {
    apply_thread_count(flags.threads);
    const RunConfig cfg = resolve_config(flags);
    if (mode_name != "hard" && mode_name != "soft")
        throw ConfigError("mode must be hard or soft");
    const Mode mode = mode_name == "soft" ? Mode::Soft : Mode::Hard;
    if (eps <= 0.0) throw ConfigError("eps must be positive");
    if (tol < 0.0) throw ConfigError("tol must be non-negative");
    GradCheckOptions opt;
    opt.h = eps;
    opt.tol = tol;
    const GradCheckReport report =
        gradcheck_kpsem(kpsem_config(cfg), mode, soft_config(cfg), seed, opt);
    const std::string text = report.to_text();
    std::fputs(text.c_str(), stdout);
    if (!out_path.empty()) write_text(out_path, text);
    return report.all_pass() ? 0 : 1;
}

int cmd_train(const CommonFlags& flags, const std::string& out_dir,
              const std::string& metrics_path) {
    apply_thread_count(flags.threads);
    const RunConfig cfg = resolve_config(flags);
    SyntheticSpec spec;
    spec.noise = cfg.noise;
    const SyntheticSplits splits =
        generate_splits(spec, cfg.train_samples, cfg.test_samples, cfg.seed);
    const auto t0 = std::chrono::steady_clock::now();
    const TrainResult result = train(splits.train, splits.test, train_config(cfg));
    const double secs = seconds_since(t0);
    const std::string csv = metrics_csv(result.trace);
    if (metrics_path.empty()) std::fputs(csv.c_str(), stdout);
    else write_text(metrics_path, csv);
    const double final_acc = result.trace.empty() ? 0.0 : result.trace.back().test_acc;
    std::printf("final_test_accuracy=%.6f param_count=%zu\n", final_acc,
                result.model.param_count());
    std::fprintf(stderr, "training took %.1f s\n", secs);
    if (!out_dir.empty()) save_model_checkpoint(out_dir, result.model, cfg);
    return 0;
}

int cmd_sweep(const CommonFlags& flags, const std::string& param, const std::string& values_csv,
              const std::string& out_path) {
    apply_thread_count(flags.threads);
    const RunConfig base = resolve_config(flags);
    if (param != "K" && param != "G" && param != "embed_dim" && param != "position")
        throw ConfigError("param must be one of K, G, embed_dim, position");
    const std::vector<std::string> values = split_csv(values_csv);
    if (values.empty()) throw ConfigError("values list is empty");

    SyntheticSpec spec;
    spec.noise = base.noise;
    const SyntheticSplits splits =
        generate_splits(spec, base.train_samples, base.test_samples, base.seed);

    std::string csv = "value,test_acc,param_count,wall_s\n";
    for (const std::string& value : values) {
        RunConfig cfg = base;
        try {
            const std::size_t v = parse_index(value, "sweep value");
            if (param == "K") cfg.K = v;
            else if (param == "G") cfg.G = v;
            else if (param == "embed_dim") cfg.embed_dim = v;
            else cfg.position = v;
            validate_run_config(cfg);
            const auto t0 = std::chrono::steady_clock::now();
            const TrainResult result = train(splits.train, splits.test, train_config(cfg));
            const double secs = seconds_since(t0);
            const double acc = result.trace.empty() ? 0.0 : result.trace.back().test_acc;
            char row[128];
            std::snprintf(row, sizeof row, "%s,%.6f,%zu,%.3f\n", value.c_str(), acc,
                          result.model.param_count(), secs);
            csv += row;
        } catch (const ConfigError& e) {
            std::fprintf(stderr, "warning: skipping %s=%s (%s)\n", param.c_str(),
                         value.c_str(), e.what());
            csv += value + ",skipped,,\n";
        }
    }
    std::fputs(csv.c_str(), stdout);
    if (!out_path.empty()) write_text(out_path, csv);
    return 0;
}

int cmd_viz(const CommonFlags& flags, const std::string& video, const std::string& params_dir,
            const std::string& channels_csv, std::size_t set_index, double cell,
            const std::string& out_path) {
    apply_thread_count(flags.threads);
    RunConfig cfg = resolve_config(flags);
    const Tensor x = tensor_read(video);
    if (x.rank() != 4)
        throw ShapeError("expected rank 4 video tensor, got rank " + std::to_string(x.rank()));
    SeparationNet net;
    if (params_dir.empty()) {
        // Without a checkpoint the zero-initialized net yields the uniform
        // grid, which is well defined for any channel count.
        if (set_index >= static_cast<std::size_t>(cfg.G))
            throw ConfigError("set index " + std::to_string(set_index) + " out of range, config has " +
                              std::to_string(cfg.G) + " sets");
        net = make_separation_net(x.extent(0), k_from_regions(cfg.K));
    } else {
        const KpsemParams params = load_kpsem_checkpoint(params_dir, &cfg);
        if (set_index >= params.nets.size())
            throw ConfigError("set index " + std::to_string(set_index) + " out of range, checkpoint has " +
                              std::to_string(params.nets.size()) + " sets");
        net = params.nets[set_index];
    }
    VizOptions opt;
    opt.channels.clear();
    for (const std::string& c : split_csv(channels_csv))
        opt.channels.push_back(parse_index(c, "channel"));
    opt.cell = cell;
    AreseConfig acfg;
    acfg.k = k_from_regions(cfg.K);
    acfg.epsilon = cfg.epsilon;
    acfg.normalize_shifts = cfg.normalize_shifts;
    const std::string svg = render_svg(x, net, acfg, opt);
    if (out_path.empty()) std::fputs(svg.c_str(), stdout);
    else write_text(out_path, svg);
    return 0;
}

int cmd_synth(const CommonFlags& flags, const std::string& label_name, std::uint64_t seed,
              double noise, const std::string& out_path) {
    apply_thread_count(flags.threads);
    int label = -1;
    for (int c = 0; c < 4; ++c)
        if (label_name == kClassNames[c]) label = c;
    if (label < 0)
        throw ConfigError("class must be one of up, down, left, right");
    SyntheticSpec spec;
    if (noise >= 0.0) spec.noise = noise;
    Rng rng(seed);
    const VideoSample sample = synth_sample(spec, label, rng);
    tensor_write(sample.clip, out_path);
    std::printf("wrote %s label=%s\n", shape_string(sample.clip).c_str(), label_name.c_str());
    return 0;
}

template <typename Fn>
int run_guarded(Fn&& fn) {
    try {
        return fn();
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 3;
    } catch (const FormatError& e) {
        std::fprintf(stderr, "format error: %s\n", e.what());
        return 2;
    } catch (const ShapeError& e) {
        std::fprintf(stderr, "shape error: %s\n", e.what());
        return 2;
    } catch (const DivergenceError& e) {
        std::fprintf(stderr, "divergence: %s\n", e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"key point shift embedding toolkit"};
    app.require_subcommand(1);
    int rc = 0;

    CommonFlags fwd_flags;
    std::string fwd_input, fwd_params, fwd_out;
    CLI::App* fwd = app.add_subcommand("forward", "temporal feature from a KPST tensor");
    add_common(fwd, fwd_flags);
    fwd->add_option("--input", fwd_input, "rank-4 KPST tensor (CxTxHxW)")->required();
    fwd->add_option("--params", fwd_params, "checkpoint directory");
    fwd->add_option("--out", fwd_out, "output KPST path")->required();
    fwd->callback([&] { rc = run_guarded([&] { return cmd_forward(fwd_flags, fwd_input, fwd_params, fwd_out); }); });

    CommonFlags gc_flags;
    std::string gc_mode = "soft", gc_out;
    std::uint64_t gc_seed = 1;
    double gc_eps = 1e-5, gc_tol = 1e-4;
    CLI::App* gc = app.add_subcommand("gradcheck", "finite-difference gradient check");
    add_common(gc, gc_flags);
    gc->add_option("--mode", gc_mode, "hard or soft");
    gc->add_option("--seed", gc_seed, "instance seed");
    gc->add_option("--eps", gc_eps, "finite-difference step");
    gc->add_option("--tol", gc_tol, "relative error tolerance");
    gc->add_option("--out", gc_out, "also write the report here");
    gc->callback([&] { rc = run_guarded([&] { return cmd_gradcheck(gc_flags, gc_mode, gc_seed, gc_eps, gc_tol, gc_out); }); });

    CommonFlags tr_flags;
    std::string tr_out, tr_metrics;
    CLI::App* tr = app.add_subcommand("train", "train on the synthetic motion dataset");
    add_common(tr, tr_flags);
    tr->add_option("--out", tr_out, "model checkpoint directory");
    tr->add_option("--metrics", tr_metrics, "metrics CSV path (default stdout)");
    tr->callback([&] { rc = run_guarded([&] { return cmd_train(tr_flags, tr_out, tr_metrics); }); });

    CommonFlags sw_flags;
    std::string sw_param, sw_values, sw_out;
    CLI::App* sw = app.add_subcommand("sweep", "train once per parameter value");
    add_common(sw, sw_flags);
    sw->add_option("--param", sw_param, "K, G, embed_dim or position")->required();
    sw->add_option("--values", sw_values, "comma-separated values")->required();
    sw->add_option("--out", sw_out, "results CSV path");
    sw->callback([&] { rc = run_guarded([&] { return cmd_sweep(sw_flags, sw_param, sw_values, sw_out); }); });

    CommonFlags vz_flags;
    std::string vz_video, vz_params, vz_channels = "0", vz_out;
    std::size_t vz_set = 0;
    double vz_cell = 20.0;
    CLI::App* vz = app.add_subcommand("viz", "SVG of key points and shifts");
    add_common(vz, vz_flags);
    vz->add_option("--video", vz_video, "rank-4 KPST tensor")->required();
    vz->add_option("--params", vz_params, "checkpoint directory");
    vz->add_option("--channels", vz_channels, "comma-separated channel indices");
    vz->add_option("--set", vz_set, "extractor set to draw");
    vz->add_option("--cell", vz_cell, "pixels per feature cell");
    vz->add_option("--out", vz_out, "SVG path (default stdout)");
    vz->callback([&] { rc = run_guarded([&] { return cmd_viz(vz_flags, vz_video, vz_params, vz_channels, vz_set, vz_cell, vz_out); }); });

    CommonFlags sy_flags;
    std::string sy_class = "right", sy_out;
    std::uint64_t sy_seed = 1;
    double sy_noise = -1.0;
    CLI::App* sy = app.add_subcommand("synth", "write one synthetic motion clip");
    add_common(sy, sy_flags);
    sy->add_option("--class", sy_class, "up, down, left or right");
    sy->add_option("--seed", sy_seed, "sample seed");
    sy->add_option("--noise", sy_noise, "noise amplitude (default from spec)");
    sy->add_option("--out", sy_out, "output KPST path")->required();
    sy->callback([&] { rc = run_guarded([&] { return cmd_synth(sy_flags, sy_class, sy_seed, sy_noise, sy_out); }); });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 3;
    }
    return rc;
}
